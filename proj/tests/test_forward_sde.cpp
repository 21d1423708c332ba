#include <bsdelab/forward_sde.hpp>
#include <bsdelab/parallel.hpp>

#include <doctest.h>

#include <cmath>

using namespace bsdelab;

TEST_CASE("Euler is exact for Brownian motion")
{
	const TimeGrid g = make_grid(1.0, 16);
	const PathBundle b = sample_paths(g, 2, 50, 1);
	Vector x0(2);
	x0 << 1.0, -2.0;
	const ForwardSolution f = euler_forward(presets::brownian(2), x0, b);
	const PathMatrix w = brownian_paths(g, 2, b.increments());
	for (Index i = 0; i < 50; ++i)
		for (int k = 0; k <= 16; ++k)
			for (int c = 0; c < 2; ++c)
				CHECK(f.state(i, k, c) == doctest::Approx(x0(c) + w(i, k * 2 + c)).epsilon(1e-13));
	CHECK(f.driver_tag == Driver::original().tag());
}

TEST_CASE("decoupled linear solution")
{
	const TimeGrid g = make_grid(1.0, 16);
	const PathBundle b = sample_paths(g, 1, 50, 2);
	const DecoupleWindow w = DecoupleWindow::nodes(g, 4, 10);
	const ForwardSolution x = euler_forward(presets::brownian(), Vector::Zero(1), b);
	const ForwardSolution y = euler_forward(presets::brownian(), Vector::Zero(1), b, Driver::decoupled(w));
	const PathMatrix wo = brownian_paths(g, 1, b.increments()), wc = brownian_paths(g, 1, b.copy());
	for (Index i = 0; i < 50; ++i)
		for (int k = 0; k <= 16; ++k)
		{
			const int r = std::min(k, 10);
			const double expected = k <= 4 ? 0.0 : (wc(i, r) - wc(i, 4)) - (wo(i, r) - wo(i, 4));
			CHECK(y.state(i, k) - x.state(i, k) == doctest::Approx(expected).epsilon(1e-12).scale(1));
		}
	const ForwardSolution z = euler_forward(presets::capped_linear(), Vector::Ones(1), b, Driver::decoupled(w));
	const ForwardSolution zo = euler_forward(presets::capped_linear(), Vector::Ones(1), b);
	CHECK(z.states.leftCols(5) == zo.states.leftCols(5));
}

TEST_CASE("strong order one half on the capped coefficient")
{
	const double horizon = 1.0;
	const Index m = 4000;
	const SdeCoefficients c = presets::capped_geometric(2.0);
	auto strong_error = [&](int n) {
		const TimeGrid fine = make_grid(horizon, 2 * n), coarse = make_grid(horizon, n);
		const PathBundle bf = sample_paths(fine, 1, m, 3);
		PathMatrix inc(m, n);
		for (int k = 0; k < n; ++k)
			inc.col(k) = bf.increments().col(2 * k) + bf.increments().col(2 * k + 1);
		const ForwardSolution xf = euler_forward(c, Vector::Ones(1), bf);
		const ForwardSolution xc =
			euler_forward(c, Vector::Ones(1), coarse, std::make_shared<const PathMatrix>(inc));
		return std::sqrt((xf.at_node(2 * n) - xc.at_node(n)).squaredNorm() / m);
	};
	const double e1 = strong_error(16), e2 = strong_error(64);
	const double order = std::log(e1 / e2) / std::log(4.0);
	CHECK(order > 0.35);
	CHECK(order < 1.1);
}

TEST_CASE("Doob bound on bounded diffusion")
{
	const TimeGrid g = make_grid(1.0, 64);
	const Index m = 20000;
	const SdeCoefficients c = presets::capped_geometric(2.0);
	const ForwardSolution f = euler_forward(c, Vector::Ones(1), sample_paths(g, 1, m, 4));
	double mean = 0;
	for (Index i = 0; i < m; ++i)
	{
		double sup = 0;
		for (int k = 0; k <= 64; ++k)
			sup = std::max(sup, std::pow(f.state(i, k) - 1.0, 2));
		mean += sup / m;
	}
	CHECK(mean <= 1.05 * 4 * c.sigma_bound * c.sigma_bound * 1.0);
	CHECK(sigma_bound_holds(c, g, f.states));
}

TEST_CASE("coupling slopes on the linear preset")
{
	const TimeGrid g = make_grid(1.0, 256);
	const auto tables = coupling_distance_ensemble(presets::brownian(), Vector::Zero(1), g, 20000, 5, 0.5,
												   {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4}, {2.0, 4.0}, 4096);
	REQUIRE(tables.size() == 2);
	CHECK(std::abs(tables[0].slope - 1.0) <= 0.1);
	CHECK(std::abs(tables[1].slope - 2.0) <= 0.15);
	for (const auto &row : tables[0].rows)
		CHECK(row.estimate >= 2 * row.span - 3 * row.se);
}

TEST_CASE("coupling slopes on Lipschitz presets are no slower than p/2")
{
	const TimeGrid g = make_grid(1.0, 256);
	for (const char *name : {"capped_linear", "capped_geometric"})
	{
		const auto tables = coupling_distance_ensemble(presets::by_name(name), Vector::Ones(1), g, 10000, 6, 0.5,
													   {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4}, {2.0}, 4096);
		CHECK(tables[0].slope >= 1.0 - 0.15);
	}
}

TEST_CASE("ensemble equals the bundle version and ignores thread count")
{
	const TimeGrid g = make_grid(1.0, 32);
	const std::vector<double> spans{0.0625, 0.125, 0.25};
	set_max_threads(1);
	const auto one = coupling_distance_ensemble(presets::capped_linear(), Vector::Ones(1), g, 3000, 7, 0.5, spans, {2.0}, 512);
	set_max_threads(8);
	const auto many = coupling_distance_ensemble(presets::capped_linear(), Vector::Ones(1), g, 3000, 7, 0.5, spans, {2.0}, 512);
	set_max_threads(0);
	for (std::size_t r = 0; r < spans.size(); ++r)
		CHECK(one[0].rows[r].estimate == many[0].rows[r].estimate);
	const CouplingTable direct =
		coupling_distance_experiment(presets::capped_linear(), Vector::Ones(1), sample_paths(g, 1, 3000, 7), 0.5, spans, 2.0);
	for (std::size_t r = 0; r < spans.size(); ++r)
		CHECK(direct.rows[r].estimate == doctest::Approx(one[0].rows[r].estimate).epsilon(1e-12));
}

TEST_CASE("presets and line fit")
{
	CHECK(presets::names().size() >= 3);
	CHECK_THROWS_AS(presets::by_name("nope"), InvalidArgument);
	const auto [slope, intercept] = fit_line({0, 1, 2}, {1, 3, 5});
	CHECK(slope == doctest::Approx(2));
	CHECK(intercept == doctest::Approx(1));
}
