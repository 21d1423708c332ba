#include <bsdelab/bmo.hpp>

#include <doctest.h>

#include <cmath>

using namespace bsdelab;

namespace
{
	double phi_direct(double q) { return std::sqrt(1 + std::log(1 + 1 / (2 * q - 2)) / (q * q)) - 1; }

	double psi_direct(double g, double p)
	{
		return std::pow(2 / (1 - (2 * p - 2) / (2 * p - 1) * std::exp(p * p * (g * g + 2 * g))), 1 / p);
	}

	/// Bisection of the direct formula, independent of the library inverse.
	double phi_inverse_bisect(double y)
	{
		double lo = 1 + 1e-12, hi = 1e6;
		for (int i = 0; i < 200; ++i)
		{
			const double mid = std::sqrt(lo * hi);
			(phi_direct(mid) > y ? lo : hi) = mid;
		}
		return std::sqrt(lo * hi);
	}

	ProcessSample deterministic(const TimeGrid &grid, const std::function<double(double)> &c)
	{
		ProcessSample s = ProcessSample::constant(grid, 0.0);
		for (int k = 0; k < grid.intervals(); ++k)
			s.values(0, k) = c(grid.node(k));
		return s;
	}
} // namespace

TEST_CASE("Phi values and limits")
{
	CHECK(phi(2.0) == doctest::Approx(std::sqrt(1 + 0.25 * std::log(1.5)) - 1).epsilon(1e-14));
	CHECK(std::abs(phi(2.0) - 0.0494604) < 1e-6);
	CHECK(phi(1e6) < 1e-6);
	CHECK(phi(1 + 1e-8) == doctest::Approx(std::sqrt(1 + std::log(1 + 0.5e8) / std::pow(1 + 1e-8, 2)) - 1));
	CHECK(phi_log_excess(-150.0) > 10);
	CHECK_THROWS_AS(phi(1.0), InvalidArgument);
	double prev = phi(1.01);
	for (double q = 1.02; q < 100; q *= 1.1)
	{
		CHECK(phi(q) < prev);
		CHECK(phi(q) == doctest::Approx(phi_direct(q)).epsilon(1e-12));
		prev = phi(q);
	}
}

TEST_CASE("Psi values, domain and monotonicity")
{
	CHECK(std::abs(psi(0.0, 2.0) - std::sqrt(6.0)) <= 1e-12);
	CHECK(std::abs(psi(0.0, 1000.0) - 1.0) <= 1e-2);
	CHECK(psi(std::nextafter(phi(2.0), 0.0), 2.0) > 1e3);
	CHECK_THROWS_AS(psi(phi(2.0), 2.0), InvalidArgument);
	CHECK_THROWS_AS(psi(-0.1, 2.0), InvalidArgument);
	for (double p : {1.5, 2.0, 3.0, 6.0})
	{
		double prev = 0;
		for (double f = 0; f < 0.95; f += 0.05)
		{
			const double g = f * phi(p);
			CHECK(psi(g, p) > prev);
			CHECK(psi(g, p) == doctest::Approx(psi_direct(g, p)).epsilon(1e-9));
			prev = psi(g, p);
		}
	}
}

TEST_CASE("Phi inverse")
{
	CHECK(std::abs(phi_inverse(phi(2.0)) - 2.0) <= 1e-8);
	CHECK(phi_inverse(1e-6) == doctest::Approx(phi_inverse_bisect(1e-6)).epsilon(1e-9));
	CHECK(phi_inverse(1e-12) > 1e3);
	CHECK(phi_inverse(10.0) < 1 + 1e-2);
	for (double q = 1.01; q <= 100; q *= 1.07)
		CHECK(std::abs(phi_inverse(phi(q)) - q) <= 1e-8 * q);
	for (double y : {1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0})
		CHECK(std::abs(phi_log_excess(phi_inverse_log_excess(y)) - y) <= 1e-10);
	for (double y : {1e-3, 0.05, 0.5})
		CHECK(phi_inverse(y) == doctest::Approx(phi_inverse_bisect(y)).epsilon(1e-9));
}

TEST_CASE("exponent threshold")
{
	CHECK_FALSE(c8_min_p(1.0, 0.0).has_value());
	CHECK_FALSE(c8_min_p(0.0, 0.3).has_value());
	const double q = phi_inverse_bisect(0.02 * std::sqrt(2.0));
	const auto v = c8_min_p(1.0, 0.01);
	REQUIRE(v.has_value());
	CHECK(*v == doctest::Approx(q / (q - 1)).epsilon(1e-8));
}

TEST_CASE("BMO norm of deterministic processes")
{
	const TimeGrid g = make_grid(1.0, 50);
	CHECK(bmo_s2_norm(ProcessSample::constant(g, 1.0)) == doctest::Approx(1.0));
	CHECK(bmo_s2_norm(ProcessSample::constant(make_grid(2.0, 50), 1.0)) == doctest::Approx(std::sqrt(2.0)));
	CHECK(bmo_s2_norm(ProcessSample::constant(g, 0.0)) == 0.0);
	const ProcessSample z = deterministic(g, [](double t) { return 2.0 - t; });
	double sum = 0;
	for (int k = 0; k < 50; ++k)
		sum += std::pow(2.0 - k / 50.0, 2) / 50;
	CHECK(bmo_s2_norm(z) == doctest::Approx(std::sqrt(sum)).epsilon(1e-12));
	CHECK(std::abs(bmo_s2_norm(z) * bmo_s2_norm(z) - 7.0 / 3) <= 4.0 / 50);
	CHECK(bmo_s2_norm(scaled(z, -2.5)) == doctest::Approx(2.5 * bmo_s2_norm(z)).epsilon(1e-14));
}

TEST_CASE("BMO norm of a Brownian integrand")
{
	const TimeGrid g = make_grid(1.0, 20);
	const PathBundle b = sample_paths(g, 1, 4000, 3);
	const PathMatrix w = brownian_paths(g, 1, b.increments());
	const ProcessSample c{g, 1, w.leftCols(20), 1, w};
	BmoOptions opt;
	opt.linf_quantile = 0.5;
	const double median_norm = bmo_s2_norm(c, opt);
	opt.linf_quantile = 1.0;
	const double max_norm = bmo_s2_norm(c, opt);
	CHECK(median_norm <= max_norm);
	CHECK(max_norm > std::sqrt(0.5));
}

TEST_CASE("sliceable numbers")
{
	const TimeGrid g = make_grid(1.0, 840);
	const auto est = sliceable_numbers(ProcessSample::constant(g, 1.0), 8);
	REQUIRE(est.size() == 8);
	for (const auto &e : est)
	{
		CHECK(std::abs(e.value - std::sqrt(1.0 / e.n)) <= 1e-12);
		CHECK(e.partition.front() == 0);
		CHECK(e.partition.back() == 840);
		CHECK(e.partition.size() == static_cast<std::size_t>(e.n) + 1);
	}
	const TimeGrid h = make_grid(1.0, 60);
	const ProcessSample c1 = deterministic(h, [](double t) { return 2.0 - t; });
	const ProcessSample c2 = deterministic(h, [](double t) { return 1.0 + std::sin(6 * t); });
	const auto e1 = sliceable_numbers(c1, 5), e2 = sliceable_numbers(c2, 5), e12 = sliceable_numbers(sum(c1, c2), 9);
	CHECK(e1.front().value == bmo_s2_norm(c1));
	for (std::size_t i = 1; i < e1.size(); ++i)
		CHECK(e1[i].value <= e1[i - 1].value);
	for (int n1 = 1; n1 <= 5; ++n1)
		for (int n2 = 1; n2 <= 5; ++n2)
			CHECK(e12[static_cast<std::size_t>(n1 + n2 - 2)].value <=
				  e1[static_cast<std::size_t>(n1 - 1)].value + e2[static_cast<std::size_t>(n2 - 1)].value + 1e-12);
	for (const auto &e : e1)
		for (std::size_t j = 0; j < e.slice_norms.size(); ++j)
			CHECK(e.slice_norms[j] == doctest::Approx(slice_norm(c1, e.partition[j], e.partition[j + 1])));
}

TEST_CASE("reverse Hoelder bound")
{
	CHECK(rh_bound(0.0, 2.0, 1).bound == doctest::Approx(std::sqrt(6.0)));
	CHECK(rh_bound(0.0, 3.0, 3).bound == doctest::Approx(std::pow(psi(0.0, 3.0), 3)));
	CHECK(rh_bound(phi(2.0), 2.0, 1).infinite);
	CHECK(rh_bound(1.0, 2.0, 4).infinite);
}

TEST_CASE("Fefferman on constants and the example")
{
	const TimeGrid g = make_grid(1.0, 50);
	const FeffermanReport one = fefferman_check(ProcessSample::constant(g, 1.0), ProcessSample::constant(g, 1.0), 2.0);
	CHECK(one.lhs == doctest::Approx(1.0));
	CHECK(one.rhs == doctest::Approx(2 * std::sqrt(2.0)));
	CHECK(one.pass);
	const ProcessSample z = deterministic(g, [](double t) { return 2.0 - t; });
	double energy = 0;
	for (int k = 0; k < 50; ++k)
		energy += std::pow(2.0 - k / 50.0, 2) / 50;
	for (double p : {2.0, 3.0})
	{
		const FeffermanReport r = fefferman_check(z, z, p);
		CHECK(r.lhs == doctest::Approx(energy));
		CHECK(r.rhs == doctest::Approx(std::sqrt(2.0) * p * energy));
		CHECK(r.pass);
	}
}

TEST_CASE("Fefferman on a diffusion and the conditional form")
{
	const TimeGrid g = make_grid(1.0, 20);
	const PathBundle b = sample_paths(g, 1, 5000, 4);
	const ForwardSolution f = euler_forward(presets::capped_linear(), Vector::Ones(1), b);
	PathMatrix sig(5000, 20), x(5000, 20);
	for (Index i = 0; i < 5000; ++i)
		for (int k = 0; k < 20; ++k)
		{
			x(i, k) = f.state(i, k);
			sig(i, k) = std::min(std::abs(x(i, k)), 2.0);
		}
	const ProcessSample xs{g, 1, sig, 1, f.states}, ys{g, 1, x, 1, f.states};
	for (double p : {2.0, 3.0})
	{
		CHECK(fefferman_check(xs, ys, p).pass);
		const ConditionalFeffermanReport c = fefferman_conditional_check(xs, ys, p, 5, 15, 10);
		CHECK(c.c_p == doctest::Approx(std::pow(std::sqrt(2.0) * p, p)));
		CHECK(c.strata.size() == 10);
		CHECK(c.pass);
	}
}
