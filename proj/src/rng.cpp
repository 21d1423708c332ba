#include <bsdelab/rng.hpp>

#include <cmath>
#include <numbers>

namespace bsdelab
{
	namespace
	{
		constexpr std::uint32_t kMul0 = 0xD2511F53u;
		constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
		constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
		constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

		inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t &hi, std::uint32_t &lo)
		{
			const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
			hi = static_cast<std::uint32_t>(product >> 32);
			lo = static_cast<std::uint32_t>(product);
		}

		inline std::array<std::uint32_t, 4> block(const std::array<std::uint32_t, 2> &key, Stream stream,
												  std::uint64_t path, std::uint32_t redraw, std::uint32_t index)
		{
			// path is limited to 2^32 rows per stream; the stream id rides in the high bits of word 2
			const std::array<std::uint32_t, 4> counter = {
				index,
				static_cast<std::uint32_t>(path),
				static_cast<std::uint32_t>(path >> 32) ^ (static_cast<std::uint32_t>(stream) << 24),
				redraw};
			return philox4x32(counter, key);
		}

		inline double to_unit_open_closed(std::uint32_t hi, std::uint32_t lo)
		{
			const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
			return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
		}

		inline double to_unit_closed_open(std::uint32_t hi, std::uint32_t lo)
		{
			const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
			return static_cast<double>(bits) * 0x1.0p-53;
		}
	} // namespace

	std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key)
	{
		for (int round = 0; round < 10; ++round)
		{
			std::uint32_t hi0, lo0, hi1, lo1;
			mulhilo(kMul0, ctr[0], hi0, lo0);
			mulhilo(kMul1, ctr[2], hi1, lo1);
			ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
			key[0] += kWeyl0;
			key[1] += kWeyl1;
		}
		return ctr;
	}

	CounterNormal::CounterNormal(std::uint64_t seed)
		: seed_(seed), key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}
	{
	}

	std::array<double, 2> CounterNormal::pair(Stream stream, std::uint64_t path, std::uint32_t redraw, std::uint32_t index) const
	{
		const auto words = block(key_, stream, path, redraw, index);
		const double u1 = to_unit_open_closed(words[0], words[1]);
		const double u2 = to_unit_closed_open(words[2], words[3]);
		const double radius = std::sqrt(-2.0 * std::log(u1));
		const double angle = 2.0 * std::numbers::pi * u2;
		return {radius * std::cos(angle), radius * std::sin(angle)};
	}

	void CounterNormal::fill(Stream stream, std::uint64_t path, std::uint32_t redraw, std::span<double> out) const
	{
		const std::size_t n = out.size();
		for (std::size_t i = 0; i < n; i += 2)
		{
			const auto z = pair(stream, path, redraw, static_cast<std::uint32_t>(i / 2));
			out[i] = z[0];
			if (i + 1 < n)
				out[i + 1] = z[1];
		}
	}

	double CounterNormal::uniform(Stream stream, std::uint64_t path, std::uint32_t redraw, std::uint32_t index) const
	{
		const auto words = block(key_, stream, path, redraw, index);
		return to_unit_closed_open(words[0], words[1]);
	}
} // namespace bsdelab
