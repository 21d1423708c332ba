#include <bsdelab/parallel.hpp>
#include <bsdelab/rng.hpp>

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace bsdelab;

TEST_CASE("philox4x32-10 known-answer vectors")
{
	using A4 = std::array<std::uint32_t, 4>;
	CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
	CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
		  A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
	CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
		  A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("normals are addressable and stream-separated")
{
	const CounterNormal rng(7);
	std::vector<double> seq(10);
	rng.fill(Stream::Primary, 3, 0, seq);
	for (std::uint32_t i = 0; i < seq.size(); ++i)
		CHECK(seq[i] == rng.normal(Stream::Primary, 3, 0, i));
	CHECK(rng.normal(Stream::Primary, 3, 0, 0) != rng.normal(Stream::Copy, 3, 0, 0));
	CHECK(rng.normal(Stream::Primary, 3, 0, 0) != rng.normal(Stream::Primary, 4, 0, 0));
	CHECK(rng.normal(Stream::Primary, 3, 0, 0) != rng.normal(Stream::Primary, 3, 1, 0));
	CHECK(CounterNormal(8).normal(Stream::Primary, 3, 0, 0) != rng.normal(Stream::Primary, 3, 0, 0));
}

TEST_CASE("normal moments")
{
	const CounterNormal rng(11);
	const int n = 200000;
	double s1 = 0, s2 = 0, s4 = 0;
	for (int i = 0; i < n; ++i)
	{
		const double x = rng.normal(Stream::Auxiliary, static_cast<std::uint64_t>(i), 0, 0);
		s1 += x;
		s2 += x * x;
		s4 += x * x * x * x;
	}
	CHECK(std::abs(s1 / n) < 3.0 / std::sqrt(n));
	CHECK(std::abs(s2 / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
	CHECK(std::abs(s4 / n - 3.0) < 3.0 * std::sqrt(96.0 / n));
}

TEST_CASE("uniforms lie in [0, 1)")
{
	const CounterNormal rng(3);
	double mean = 0;
	for (std::uint32_t i = 0; i < 10000; ++i)
	{
		const double u = rng.uniform(Stream::Auxiliary, 0, 0, i);
		REQUIRE(u >= 0.0);
		REQUIRE(u < 1.0);
		mean += u / 10000;
	}
	CHECK(std::abs(mean - 0.5) < 3.0 * std::sqrt(1.0 / 12 / 10000));
}

TEST_CASE("parallel_for covers every index once for any thread cap")
{
	for (unsigned threads : {1u, 2u, 8u})
	{
		set_max_threads(threads);
		std::vector<int> hits(1001, 0);
		parallel_for(hits.size(), 17, [&](std::size_t b, std::size_t e) {
			for (std::size_t i = b; i < e; ++i)
				++hits[i];
		});
		for (int h : hits)
			REQUIRE(h == 1);
	}
	set_max_threads(0);
}

TEST_CASE("nested parallel_for runs inline")
{
	std::vector<int> hits(64, 0);
	parallel_for(8, 1, [&](std::size_t b, std::size_t e) {
		for (std::size_t i = b; i < e; ++i)
			parallel_for(8, 1, [&](std::size_t b2, std::size_t e2) {
				for (std::size_t j = b2; j < e2; ++j)
					++hits[i * 8 + j];
			});
	});
	for (int h : hits)
		CHECK(h == 1);
}
