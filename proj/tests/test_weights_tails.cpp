#include <bsdelab/weights_tails.hpp>

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace bsdelab;

namespace
{
	/// E|U||V| for centred jointly Gaussian U, V.
	double folded_product(double vu, double vv, double cov)
	{
		if (vu <= 0 || vv <= 0)
			return 0.0;
		const double rho = std::clamp(cov / std::sqrt(vu * vv), -1.0, 1.0);
		return 2 / std::numbers::pi * std::sqrt(vu * vv) * (std::sqrt(1 - rho * rho) + rho * std::asin(rho));
	}

	FbsdeContext example_context()
	{
		return {presets::brownian(1), Vector::Zero(1), presets::example_generator()};
	}

	GridFunctional terminal_value()
	{
		return {[](const PathView &p) { return p.value(p.intervals()); }, std::nullopt};
	}
} // namespace

TEST_CASE("closed-form weight")
{
	CHECK(fbsde_weight(2, 0, 0.5, 0.5, 1).xi == 0.0);
	const WeightComponents w = fbsde_weight(2, 0, 0.25, 0.5, 1);
	CHECK(w.xi == doctest::Approx(0.25));
	CHECK(w.f == doctest::Approx(0.25));
	for (double p : {2.0, 3.0, 4.0})
		CHECK(fbsde_weight(p, 0, 0.0, 0.5, 1.3).xi ==
			  doctest::Approx(std::pow(2.0, p / 2) * fbsde_weight(p, 0, 0.25, 0.5, 1.3).xi));
	double prev = std::numeric_limits<double>::infinity();
	for (double u = 0; u <= 1.0; u += 0.125)
	{
		const WeightComponents c = fbsde_weight(3, 0, u, 1, 2);
		CHECK(c.xi + c.f <= prev);
		prev = c.xi + c.f;
	}
	CHECK_THROWS_AS(fbsde_weight(1.5, 0, 0.2, 0.5, 1), InvalidArgument);
	CHECK_THROWS_AS(fbsde_weight(2, 0, 0.7, 0.5, 1), InvalidArgument);
}

TEST_CASE("assembled weight with constant data")
{
	const TimeGrid g = make_grid(1.0, 16);
	const PathBundle b = sample_paths(g, 1, 50, 1);
	const FbsdeContext ctx{presets::brownian(1), Vector::Zero(1), presets::linear_decay_generator(1.0)};
	for (double u : {0.25, 0.5})
	{
		const WeightComponents c = fbsde_weight(2, 0, u, 0.75, 1);
		const WeightSample w = assemble_weight(ctx, b, c, 2, 0, u, 0.75);
		CHECK((w.w_p.array() - (c.xi + c.f + std::pow(0.75 - u, 2))).abs().maxCoeff() < 1e-12);
		CHECK((w.w.array() - w.w_p.array().sqrt()).abs().maxCoeff() < 1e-12);
	}
	const WeightComponents c = fbsde_weight(2, 0, 0.75, 0.75, 1);
	const WeightSample at_t = assemble_weight(example_context(), b, c, 2, 0, 0.75, 0.75);
	CHECK((at_t.w_p.array() == c.xi + c.f).all());
}

TEST_CASE("assembled weight on the example matches Gaussian integration")
{
	const TimeGrid g = make_grid(1.0, 16);
	const PathBundle b = sample_paths(g, 1, 400, 2);
	const double t = 0.5;
	const int kt = 8;
	const WeightComponents c = fbsde_weight(2, 0, 0, t, 1);
	const WeightSample w = assemble_weight(example_context(), b, c, 2, 0, 0, t, AssemblyConfig{64, 3});
	double drift = 0, terminal = 1.0;
	for (int j = 0; j < kt; ++j)
		for (int k = 0; k < kt; ++k)
			drift += g.dt(j) * g.dt(k) * folded_product(g.node(j), g.node(k), std::min(g.node(j), g.node(k)));
	for (int k = kt; k < 16; ++k)
	{
		terminal += 2 * g.dt(k) * folded_product(1.0, g.node(k), g.node(k));
		for (int j = kt; j < 16; ++j)
			terminal += g.dt(j) * g.dt(k) * folded_product(g.node(j), g.node(k), std::min(g.node(j), g.node(k)));
	}
	const double expected = c.xi + c.f + drift + t * t * terminal;
	const MeanSe ms = mean_se(w.w_p);
	CHECK(std::abs(ms.mean - expected) <= 3 * std::hypot(ms.se, w.drift_se.mean() + w.terminal_se.mean()));
}

TEST_CASE("data variation estimators")
{
	const TimeGrid g = make_grid(1.0, 16);
	const PathBundle b = sample_paths(g, 1, 400, 4);
	const C6Report c6 = c6_estimate(terminal_value(), b, 0.25, 0.5, 2, C6Config{32, 64, 5});
	CHECK(std::abs(c6.direct_mean - 0.25) <= 3 * c6.direct_mean_se);
	CHECK(std::abs(c6.decoupled_mean - 0.5) <= 3 * c6.decoupled_mean_se);
	CHECK(c6.sandwich_pass);

	const GridFunctional outside{[](const PathView &p) { return p.value(4) + p.value(16) - p.value(8); }, std::nullopt};
	const C6Report zero = c6_estimate(outside, b, 0.25, 0.5, 2, C6Config{8, 8, 6});
	CHECK(zero.direct_mean < 1e-20);
	CHECK(zero.decoupled_mean < 1e-20);

	const C7Report c7 = c7_estimate(example_context(), b, 0.25, 0.5, 2, {ProbePoint{0.0, Vector::Zero(1)}}, C6Config{64, 8, 7});
	double reference = 0;
	auto var = [&](int k) { return 2 * (g.node(std::min(k, 8)) - 0.25); };
	for (int j = 4; j < 16; ++j)
		for (int k = 4; k < 16; ++k)
			reference += g.dt(j) * g.dt(k) * folded_product(var(j), var(k), std::min(var(j), var(k)));
	CHECK(std::abs(c7.mean - reference) <= 3 * c7.mean_se);
	CHECK(c7.probe_violations == 0);
	const double bound = std::pow(1.0, 2) * 1.0 * 2.0 * 0.25;
	CHECK(c7.mean <= bound * 4);

	const FbsdeContext flat{presets::brownian(1), Vector::Zero(1), presets::martingale_generator()};
	const C7Report none = c7_estimate(flat, b, 0.25, 0.5, 2, {}, C6Config{4, 4, 8});
	CHECK(none.mean == 0.0);
}

TEST_CASE("weighted ratio on the example")
{
	const TimeGrid g = make_grid(1.0, 50);
	const PathBundle b = sample_paths(g, 1, 100000, 9);
	const ForwardSolution f = euler_forward(presets::brownian(1), Vector::Zero(1), b);
	const BsdeGridSolution y = closed_form_example(b);
	const double c2 = std::pow(1.0 + 1.0 - 0.9, 2);
	const WeightedRatioReport r = weighted_bmo_ratio(y, f, 2, StoppingRule::at(0.5), 0.9);
	CHECK(r.lower_bound_holds);
	for (const auto &st : r.strata)
		if (st.count >= 30)
		{
			const double key = (st.lo + st.hi) / 2;
			CHECK(st.weighted <= c2 + 3 * st.weighted_se);
			CHECK(st.weighted >= 1.0 - 3 * st.weighted_se);
			CHECK(st.unweighted >= c2 + key * key * 0.4 * 0.5 - 3 * st.unweighted_se);
		}
	CHECK(r.unweighted_top_bottom > 2);
	CHECK(r.weighted_spread < 1.3);

	const WeightedRatioReport zero = weighted_bmo_ratio(y, f, 2, StoppingRule::at(0.9), 0.9);
	CHECK(zero.c_strata == 0.0);
	const WeightedRatioReport hit = weighted_bmo_ratio(y, f, 2, StoppingRule::hitting(0.2, 1.0), 0.9);
	CHECK(hit.lower_bound_holds);
}

TEST_CASE("good-lambda constants")
{
	const GoodLambdaConstants e = good_lambda_constants(std::exp(-1.0) / 2);
	CHECK(e.b == doctest::Approx(1.0));
	CHECK(e.a == doctest::Approx(3.0));
	CHECK(e.alpha == doctest::Approx(2 / (1 - std::exp(-1.0))));
	const GoodLambdaConstants f = good_lambda_constants(0.05);
	CHECK(f.eta == doctest::Approx(0.1));
	CHECK(f.a == 3.0);
	CHECK(f.alpha == doctest::Approx(2 / 0.9));
	CHECK(good_lambda_constants(0.4999999).alpha > 1e6);
	CHECK(good_lambda_constants(0.3).b == doctest::Approx(-1 / std::log(0.6)));
	CHECK_THROWS_AS(good_lambda_constants(0.5), InvalidArgument);
}

TEST_CASE("tail check")
{
	const Index m = 4000;
	std::vector<char> all(static_cast<std::size_t>(m), 1);
	const TailReport flat = tail_check(PathMatrix::Zero(m, 5), PathMatrix::Ones(m, 5), all, "all", 0.05);
	for (const auto &row : flat.rows)
		CHECK(row.lhs == 0.0);
	CHECK(flat.pass);

	const TimeGrid g = make_grid(1.0, 32);
	const PathBundle b = sample_paths(g, 1, m, 10);
	const PathMatrix w = brownian_paths(g, 1, b.increments());
	const double theta = 0.05;
	PathMatrix a(m, 25), psi(m, 25);
	std::vector<char> event(static_cast<std::size_t>(m));
	for (Index i = 0; i < m; ++i)
	{
		event[static_cast<std::size_t>(i)] = w(i, 8) > 0;
		for (Index j = 0; j < 25; ++j)
		{
			a(i, j) = w(i, 8 + j) - w(i, 8);
			psi(i, j) = std::max(std::sqrt((1.0 - g.node(8 + static_cast<int>(j))) / theta), 1e-9);
		}
	}
	const TailReport r = tail_check(a, psi, event, "W_s > 0", theta);
	CHECK(r.p_event == doctest::Approx(0.5).epsilon(0.05));
	CHECK(r.hypothesis_holds);
	CHECK(r.pass);
	CHECK(r.rows.size() == r.lambdas.size() * r.mus.size() * r.nus.size());
}

TEST_CASE("tail bound monotonicity")
{
	for (double pl : {0.1, 0.5})
		for (double wp : {0.0, 0.2})
		{
			CHECK(tail_rhs(1.0, 3.0, pl, wp) >= tail_rhs(1.0, 2.0, pl, wp));
			CHECK(tail_rhs(2.0, 2.0, pl, wp) <= tail_rhs(1.0, 2.0, pl, wp));
		}
	const Index m = 1000;
	PathMatrix a(m, 3), psi(m, 3);
	for (Index i = 0; i < m; ++i)
		for (Index j = 0; j < 3; ++j)
		{
			a(i, j) = std::sin(static_cast<double>(i * 3 + j));
			psi(i, j) = 1.0 + std::cos(static_cast<double>(i + j)) * 0.5;
		}
	const TailReport r = tail_check(a, psi, std::vector<char>(m, 1), "all", 0.1);
	for (std::size_t i = 1; i < r.rows.size(); ++i)
		if (r.rows[i].lambda == r.rows[i - 1].lambda && r.rows[i].mu == r.rows[i - 1].mu)
			CHECK(r.rows[i].w_psi <= r.rows[i - 1].w_psi);
}
