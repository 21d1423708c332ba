#include <bsdelab/parallel.hpp>
#include <bsdelab/weights_tails.hpp>

#include <algorithm>
#include <cmath>

namespace bsdelab
{
	WeightComponents fbsde_weight(double p, double s, double u, double t, double c)
	{
		require(p >= 2, "fbsde_weight: p must be >= 2");
		require(s <= u && u <= t, "fbsde_weight: need s <= u <= t");
		require(c > 0, "fbsde_weight: c must be positive");
		const double v = std::pow(c, p) * std::pow(t - u, p / 2);
		return {v, v};
	}

	namespace
	{
		/// Euler states of one path, (N+1)*d entries.
		void forward_states(const SdeCoefficients &coeffs, const Vector &x0, const TimeGrid &grid, const double *inc,
							std::vector<double> &states)
		{
			const int d = coeffs.dim;
			states.assign(static_cast<std::size_t>(grid.intervals() + 1) * static_cast<std::size_t>(d), 0.0);
			std::copy_n(x0.data(), d, states.begin());
			EulerStepper stepper(coeffs);
			stepper.run(grid, inc, 0, grid.intervals(), states.data());
		}

		Eigen::Map<const Vector> state_at(const std::vector<double> &states, int k, int d)
		{
			return Eigen::Map<const Vector>(states.data() + static_cast<std::ptrdiff_t>(k) * d, d);
		}

		/// Left Riemann sum of |f(r, X_r, 0, 0)| over nodes [from, to).
		double drift_integral(const FbsdeContext &ctx, const TimeGrid &grid, const std::vector<double> &states, int from,
							  int to)
		{
			const int d = ctx.coeffs.dim;
			const Vector zero = Vector::Zero(d);
			double total = 0.0;
			for (int k = from; k < to; ++k)
				total += std::abs(ctx.generator.f(grid.node(k), state_at(states, k, d), 0.0, zero)) * grid.dt(k);
			return total;
		}

		double terminal_value(const FbsdeContext &ctx, const TimeGrid &grid, const double *inc,
							  const std::vector<double> &states)
		{
			if (ctx.generator.terminal.of_path)
				return ctx.generator.terminal.of_path->evaluate(PathView(grid, ctx.coeffs.dim, inc));
			return ctx.generator.terminal.of_state(state_at(states, grid.intervals(), ctx.coeffs.dim));
		}

		void check_context(const FbsdeContext &ctx, const PathBundle &bundle)
		{
			require(ctx.coeffs.dim == bundle.dim(), "fbsde context: dimension differs from the bundle");
			require(ctx.x0.size() == ctx.coeffs.dim, "fbsde context: x0 has the wrong dimension");
			require(static_cast<bool>(ctx.generator.f), "fbsde context: generator f is not set");
			require(ctx.generator.terminal.of_path || ctx.generator.terminal.of_state,
					"fbsde context: terminal condition is not set");
		}

		double sample_mean(const std::vector<double> &v)
		{
			double m = 0.0;
			for (std::size_t i = 0; i < v.size(); ++i)
				m += (v[i] - m) / static_cast<double>(i + 1);
			return m;
		}
	} // namespace

	WeightSample assemble_weight(const FbsdeContext &ctx, const PathBundle &bundle, const WeightComponents &components,
								 double p, double s, double u, double t, const AssemblyConfig &config)
	{
		const Index m = bundle.paths();
		return assemble_weight(ctx, bundle, Vector::Constant(m, components.xi), Vector::Constant(m, components.f), p, s,
							   u, t, config);
	}

	WeightSample assemble_weight(const FbsdeContext &ctx, const PathBundle &bundle, const Vector &w_xi,
								 const Vector &w_f, double p, double s, double u, double t, const AssemblyConfig &config)
	{
		check_context(ctx, bundle);
		require(p >= 1, "assemble_weight: p must be >= 1");
		require(config.outer_samples >= 1, "assemble_weight: need at least one outer sample");
		const Index m = bundle.paths();
		require(w_xi.size() == m && w_f.size() == m, "assemble_weight: missing weight components");
		require((w_xi.array() >= 0).all() && (w_f.array() >= 0).all(), "assemble_weight: components must be >= 0");
		const TimeGrid &grid = bundle.grid();
		const int ks = grid.snap(s), ku = grid.snap(u), kt = grid.snap(t);
		require(ks <= ku && ku <= kt, "assemble_weight: need s <= u <= t");
		const int n = grid.intervals();
		const double span = grid.node(kt) - grid.node(ku);

		WeightSample w;
		w.p = p;
		w.s = grid.node(ks);
		w.u = grid.node(ku);
		w.t = grid.node(kt);
		w.tag = "assembled";
		w.w_xi = w_xi;
		w.w_f = w_f;
		w.drift_term = Vector::Zero(m);
		w.terminal_term = Vector::Zero(m);
		w.drift_se = Vector::Zero(m);
		w.terminal_se = Vector::Zero(m);

		if (ku < n && ku < kt)
		{
			const FbsdeContext c = ctx;
			GridFunctional drift;
			drift.evaluate = [c, ku, kt, p](const PathView &path) {
				std::vector<double> states;
				forward_states(c.coeffs, c.x0, path.grid(), path.data(), states);
				return std::pow(drift_integral(c, path.grid(), states, ku, kt), p);
			};
			GridFunctional terminal;
			terminal.evaluate = [c, kt, n, p](const PathView &path) {
				std::vector<double> states;
				forward_states(c.coeffs, c.x0, path.grid(), path.data(), states);
				return std::pow(std::abs(terminal_value(c, path.grid(), path.data(), states)) +
									drift_integral(c, path.grid(), states, kt, n),
								p);
			};
			const DecoupleWindow window = DecoupleWindow::nodes(grid, ku, n);
			const ConditionalSample a = conditional_over_window(drift, bundle, window, config.outer_samples, config.seed);
			const ConditionalSample b =
				conditional_over_window(terminal, bundle, window, config.outer_samples, config.seed + 1);
			const double factor = std::pow(span, p);
			w.drift_term = a.value;
			w.drift_se = a.se;
			w.terminal_term = factor * b.value;
			w.terminal_se = factor * b.se;
		}
		w.w_p = w.w_xi + w.w_f + w.drift_term + w.terminal_term;
		w.w = w.w_p.array().pow(1.0 / p).matrix();
		return w;
	}

	C6Report c6_estimate(const GridFunctional &xi, const PathBundle &bundle, double u, double t, double p,
						 const C6Config &config)
	{
		require(p >= 1, "c6_estimate: p must be >= 1");
		require(config.outer_samples >= 2 && config.inner_samples >= 2, "c6_estimate: need at least two samples");
		const TimeGrid &grid = bundle.grid();
		const int ku = grid.snap(u), kt = grid.snap(t), n = grid.intervals();
		require(ku < kt, "c6_estimate: need u < t on the grid");
		const int d = bundle.dim();
		const Index m = bundle.paths();
		const int outer = config.outer_samples, inner = config.inner_samples;
		const CounterNormal normals(config.seed);
		const DecoupleWindow after = DecoupleWindow::nodes(grid, ku, n);
		const DecoupleWindow window = DecoupleWindow::nodes(grid, ku, kt);

		C6Report r;
		r.p = p;
		r.u = ku;
		r.t = kt;
		r.bias_corrected = p == 2.0;
		r.direct = Vector(m);
		r.direct_se = Vector(m);
		r.decoupled = Vector(m);
		r.decoupled_se = Vector(m);
		std::vector<double> inner_noise(static_cast<std::size_t>(m));

		parallel_for(static_cast<std::size_t>(m), 64, [&](std::size_t begin, std::size_t end) {
			std::vector<double> base(static_cast<std::size_t>(bundle.increments().cols()));
			std::vector<double> scratch(base.size());
			std::vector<double> dir(static_cast<std::size_t>(outer)), dec(static_cast<std::size_t>(outer));
			for (std::size_t row = begin; row < end; ++row)
			{
				const auto path = static_cast<Index>(row);
				const std::uint64_t global = bundle.first_path() + row;
				double noise = 0.0;
				for (int o = 0; o < outer; ++o)
				{
					std::copy_n(bundle.increments().row(path).data(), base.size(), base.begin());
					redraw_window(grid, d, after, normals, Stream::OuterRedraw, global, static_cast<std::uint32_t>(o),
								  base.data());
					const double value = xi.evaluate(PathView(grid, d, base.data()));

					double mean = 0.0, m2 = 0.0;
					for (int i = 0; i < inner; ++i)
					{
						scratch = base;
						redraw_window(grid, d, window, normals, Stream::InnerRedraw, global,
									  static_cast<std::uint32_t>(o * inner + i), scratch.data());
						const double v = xi.evaluate(PathView(grid, d, scratch.data()));
						const double delta = v - mean;
						mean += delta / (i + 1);
						m2 += delta * (v - mean);
					}
					const double var_mean = m2 / (inner - 1) / inner;
					noise += std::sqrt(var_mean);
					double term = std::pow(std::abs(value - mean), p);
					if (r.bias_corrected)
						term -= var_mean;
					dir[static_cast<std::size_t>(o)] = term;

					scratch = base;
					redraw_window(grid, d, window, normals, Stream::WindowRedraw, global, static_cast<std::uint32_t>(o),
								  scratch.data());
					dec[static_cast<std::size_t>(o)] =
						std::pow(std::abs(value - xi.evaluate(PathView(grid, d, scratch.data()))), p);
				}
				const MeanSe a = mean_se(dir), b = mean_se(dec);
				r.direct(path) = a.mean;
				r.direct_se(path) = a.se;
				r.decoupled(path) = b.mean;
				r.decoupled_se(path) = b.se;
				inner_noise[row] = noise / outer;
			}
		});

		const MeanSe a = mean_se(r.direct), b = mean_se(r.decoupled);
		r.direct_mean = a.mean;
		r.direct_mean_se = a.se;
		r.decoupled_mean = b.mean;
		r.decoupled_mean_se = b.se;
		const double tol_low = 3.0 * std::hypot(a.se, b.se);
		const double factor = std::pow(2.0, p);
		const double tol_high = 3.0 * std::hypot(b.se, factor * a.se);
		r.sandwich_pass = a.mean <= b.mean + tol_low && b.mean <= factor * a.mean + tol_high;
		r.inner_too_small = sample_mean(inner_noise) > 0.2 * std::pow(std::max(a.mean, 0.0), 1.0 / p);
		return r;
	}

	C7Report c7_estimate(const FbsdeContext &ctx, const PathBundle &bundle, double u, double t, double p,
						 const std::vector<ProbePoint> &probes, const C6Config &config)
	{
		check_context(ctx, bundle);
		require(p >= 1, "c7_estimate: p must be >= 1");
		require(std::isfinite(ctx.generator.lipschitz_x) && ctx.generator.lipschitz_x >= 0,
				"c7_estimate: generator needs a finite Lipschitz constant in the state (FBSDE form)");
		require(config.outer_samples >= 2, "c7_estimate: need at least two outer samples");
		const TimeGrid &grid = bundle.grid();
		const int ku = grid.snap(u), kt = grid.snap(t), n = grid.intervals();
		require(ku < kt, "c7_estimate: need u < t on the grid");
		const int d = bundle.dim();
		for (const auto &probe : probes)
			require(probe.z.size() == d, "c7_estimate: probe z has the wrong dimension");
		const Index m = bundle.paths();
		const int outer = config.outer_samples;
		const double lh = ctx.generator.lipschitz_x;
		const CounterNormal normals(config.seed);
		const DecoupleWindow after = DecoupleWindow::nodes(grid, ku, n);
		const DecoupleWindow window = DecoupleWindow::nodes(grid, ku, kt);

		C7Report r;
		r.p = p;
		r.u = ku;
		r.t = kt;
		r.lipschitz_h = lh;
		r.estimate = Vector(m);
		r.estimate_se = Vector(m);
		r.probe_estimate = Vector(m);
		std::vector<Index> violations(static_cast<std::size_t>(m), 0);

		parallel_for(static_cast<std::size_t>(m), 64, [&](std::size_t begin, std::size_t end) {
			std::vector<double> inc_a(static_cast<std::size_t>(bundle.increments().cols())), inc_b(inc_a.size());
			std::vector<double> xa, xb;
			std::vector<double> bound(static_cast<std::size_t>(outer)), probe(static_cast<std::size_t>(outer));
			for (std::size_t row = begin; row < end; ++row)
			{
				const auto path = static_cast<Index>(row);
				const std::uint64_t global = bundle.first_path() + row;
				for (int o = 0; o < outer; ++o)
				{
					std::copy_n(bundle.increments().row(path).data(), inc_a.size(), inc_a.begin());
					redraw_window(grid, d, after, normals, Stream::OuterRedraw, global, static_cast<std::uint32_t>(o),
								  inc_a.data());
					inc_b = inc_a;
					redraw_window(grid, d, window, normals, Stream::WindowRedraw, global, static_cast<std::uint32_t>(o),
								  inc_b.data());
					forward_states(ctx.coeffs, ctx.x0, grid, inc_a.data(), xa);
					forward_states(ctx.coeffs, ctx.x0, grid, inc_b.data(), xb);
					double lip = 0.0, sup = 0.0;
					for (int k = ku; k < n; ++k)
					{
						const auto a = state_at(xa, k, d);
						const auto b = state_at(xb, k, d);
						const double dt = grid.dt(k);
						lip += lh * (a - b).norm() * dt;
						double best = 0.0;
						for (const auto &pr : probes)
							best = std::max(best, std::abs(ctx.generator.f(grid.node(k), a, pr.y, pr.z) -
														   ctx.generator.f(grid.node(k), b, pr.y, pr.z)));
						sup += best * dt;
					}
					if (sup > lip * (1.0 + 1e-12) + 1e-14)
						++violations[row];
					bound[static_cast<std::size_t>(o)] = std::pow(lip, p);
					probe[static_cast<std::size_t>(o)] = std::pow(sup, p);
				}
				const MeanSe a = mean_se(bound);
				r.estimate(path) = a.mean;
				r.estimate_se(path) = a.se;
				r.probe_estimate(path) = sample_mean(probe);
			}
		});
		const MeanSe a = mean_se(r.estimate);
		r.mean = a.mean;
		r.mean_se = a.se;
		r.probe_mean = r.probe_estimate.mean();
		for (Index v : violations)
			r.probe_violations += v;
		return r;
	}

	namespace
	{
		struct StratumStats
		{
			std::vector<double> weighted, unweighted, gap;
		};

		std::vector<RatioStratum> summarize(const Vector &key, const Vector &weighted, const Vector &unweighted,
											const Vector &gap, int bins, double bin_max, Index min_count, Index &empty)
		{
			const auto bin = equal_width_bins(key, 0.0, bin_max, bins);
			std::vector<StratumStats> stats(static_cast<std::size_t>(bins));
			for (Index i = 0; i < key.size(); ++i)
			{
				const int b = bin[static_cast<std::size_t>(i)];
				if (b < 0)
					continue;
				auto &s = stats[static_cast<std::size_t>(b)];
				s.weighted.push_back(weighted(i));
				s.unweighted.push_back(unweighted(i));
				s.gap.push_back(gap(i));
			}
			std::vector<RatioStratum> out;
			empty = 0;
			for (int b = 0; b < bins; ++b)
			{
				const auto &s = stats[static_cast<std::size_t>(b)];
				RatioStratum st;
				st.bin = b;
				st.lo = bin_max * b / bins;
				st.hi = bin_max * (b + 1) / bins;
				st.count = static_cast<Index>(s.weighted.size());
				if (st.count == 0)
				{
					++empty;
					out.push_back(st);
					continue;
				}
				const MeanSe w = mean_se(s.weighted), u = mean_se(s.unweighted), g = mean_se(s.gap);
				st.weighted = w.mean;
				st.weighted_se = w.se;
				st.unweighted = u.mean;
				st.unweighted_se = u.se;
				st.lower_gap = g.mean;
				st.lower_gap_se = g.se;
				st.lower_ok = st.count < min_count || g.mean >= -3.0 * g.se;
				out.push_back(st);
			}
			return out;
		}
	} // namespace

	WeightedRatioReport weighted_bmo_ratio(const BsdeGridSolution &solution, const ForwardSolution &forward, double p,
										   const StoppingRule &tau, double t, const RatioConfig &config)
	{
		require(p >= 2, "weighted_bmo_ratio: p must be >= 2");
		require(solution.grid == forward.grid && solution.paths() == forward.paths(),
				"weighted_bmo_ratio: solution and forward solution differ");
		require(config.bins >= 1 && config.bin_max > 0, "weighted_bmo_ratio: bad strata");
		require(tau.time.has_value() != tau.threshold.has_value(), "weighted_bmo_ratio: give a time or a threshold");
		const TimeGrid &grid = solution.grid;
		const int kt = grid.snap(t);
		const int d = forward.dim;
		const Index m = solution.paths();

		std::vector<int> stop(static_cast<std::size_t>(m));
		if (tau.time)
		{
			const int k = grid.snap(*tau.time);
			require(k <= kt, "weighted_bmo_ratio: need tau <= t");
			std::fill(stop.begin(), stop.end(), k);
		}
		else
		{
			const int k0 = grid.snap(tau.start);
			require(k0 <= kt, "weighted_bmo_ratio: need start <= t");
			for (Index i = 0; i < m; ++i)
			{
				int k = k0;
				while (k < kt && std::abs(forward.state(i, k)) < *tau.threshold)
					++k;
				stop[static_cast<std::size_t>(i)] = k;
			}
		}

		Vector key(m), weighted(m), unweighted(m), gap(m);
		Matrix at_tau(m, d);
		for (Index i = 0; i < m; ++i)
		{
			const int k = stop[static_cast<std::size_t>(i)];
			const double span = grid.node(kt) - grid.node(k);
			const double moment = std::pow(std::abs(solution.y(i, kt) - solution.y(i, k)), p);
			const double xnorm = std::abs(forward.state(i, k));
			for (int j = 0; j < d; ++j)
				at_tau(i, j) = forward.state(i, k, j);
			const double scale = std::pow(span, p / 2);
			const double weight = 1.0 + std::pow(xnorm, p) * scale;
			key(i) = span > 0 ? xnorm : std::numeric_limits<double>::quiet_NaN();
			weighted(i) = span > 0 ? moment / weight / scale : 0.0;
			unweighted(i) = span > 0 ? moment / scale : 0.0;
			gap(i) = moment - scale * weight;
		}

		WeightedRatioReport r;
		r.p = p;
		r.t = grid.node(kt);
		r.strata = summarize(key, weighted, unweighted, gap, config.bins, config.bin_max, config.min_count,
							 r.empty_strata);
		double wmax = 0, wmin = std::numeric_limits<double>::infinity(), cmax_se = 0;
		const RatioStratum *bottom = nullptr, *top = nullptr;
		double umax = 0, umin = std::numeric_limits<double>::infinity();
		for (const auto &st : r.strata)
		{
			if (st.count < std::max<Index>(1, config.min_count))
			{
				r.sparse_strata += st.count > 0 ? 1 : 0;
				continue;
			}
			if (!bottom)
				bottom = &st;
			top = &st;
			if (st.weighted > wmax)
			{
				wmax = st.weighted;
				cmax_se = st.weighted_se;
			}
			wmin = std::min(wmin, st.weighted);
			umax = std::max(umax, st.unweighted);
			umin = std::min(umin, st.unweighted);
			r.lower_bound_holds = r.lower_bound_holds && st.lower_ok;
		}
		r.c_strata = wmax;
		r.weighted_spread = wmin > 0 ? wmax / wmin : std::numeric_limits<double>::infinity();
		r.unweighted_spread = umin > 0 ? umax / umin : std::numeric_limits<double>::infinity();
		r.unweighted_top_bottom =
			bottom && bottom->unweighted > 0 ? top->unweighted / bottom->unweighted : std::numeric_limits<double>::infinity();

		Index refined_empty = 0;
		for (const auto &st : summarize(key, weighted, unweighted, gap, 2 * config.bins, config.bin_max,
											  config.min_count, refined_empty))
			if (st.count >= config.min_count)
			r.c_refined = std::max(r.c_refined, st.weighted);

		std::vector<Index> live;
		for (Index i = 0; i < m; ++i)
			if (std::isfinite(key(i)))
				live.push_back(i);
		if (live.size() >= 2)
			r.c_regression = cond_expect(weighted(live), at_tau(live, Eigen::all), config.estimator).value.maxCoeff();
		r.pass = std::isfinite(r.c_strata) && std::isfinite(r.c_regression) &&
				 std::abs(r.c_refined - r.c_strata) <= 0.25 * r.c_strata + 3.0 * cmax_se;
		return r;
	}

	GoodLambdaConstants good_lambda_constants(double theta)
	{
		require(theta > 0 && theta < 0.5, "good_lambda_constants: theta must lie in (0, 1/2)");
		GoodLambdaConstants c;
		c.theta = theta;
		c.eta = 2.0 * theta;
		c.b = std::max(1.0, -1.0 / std::log(c.eta));
		c.a = 3.0 * c.b;
		c.alpha = 2.0 / (1.0 - c.eta);
		return c;
	}

	namespace
	{
		double positive(double v) { return v > 0 ? v : 1e-12; }

		double fraction_above(const std::vector<double> &values, double level)
		{
			std::size_t hits = 0;
			for (double v : values)
				hits += v > level ? 1 : 0;
			return values.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(values.size());
		}

		double binomial_se(double prob, std::size_t n) { return std::sqrt(prob * (1.0 - prob) / static_cast<double>(n)); }
	} // namespace

	TailReport tail_check(const PathMatrix &a, const PathMatrix &psi, const std::vector<char> &event,
						  const std::string &event_name, double theta, const TailGrids &grids)
	{
		require(a.rows() == psi.rows() && a.cols() == psi.cols(), "tail_check: A and Psi shapes differ");
		require(a.cols() >= 2, "tail_check: need at least two nodes");
		require(static_cast<Index>(event.size()) == a.rows(), "tail_check: event mask length differs");
		require((psi.array() > 0).all(), "tail_check: Psi must be strictly positive");
		TailReport r;
		r.constants = good_lambda_constants(theta);
		r.event = event_name;

		std::vector<double> g, last, sup_psi;
		for (Index i = 0; i < a.rows(); ++i)
		{
			if (!event[static_cast<std::size_t>(i)])
				continue;
			g.push_back((a.row(i).array() - a(i, 0)).abs().maxCoeff());
			last.push_back(std::abs(a(i, a.cols() - 1) - a(i, 0)));
			sup_psi.push_back(psi.row(i).maxCoeff());
		}
		const std::size_t nb = g.size();
		require(nb > 0, "tail_check: the event B has probability zero");
		r.event_paths = static_cast<Index>(nb);
		r.p_event = static_cast<double>(nb) / static_cast<double>(a.rows());

		for (double q : grids.lambda_quantiles)
			r.lambdas.push_back(positive(linf_proxy(g, q)));
		r.mus = grids.mu;
		for (double q : grids.nu_quantiles)
			r.nus.push_back(positive(linf_proxy(last, q)));

		r.hypothesis_holds = true;
		for (double nu : r.nus)
		{
			HypothesisRow h;
			h.nu = nu;
			h.lhs = fraction_above(last, nu);
			h.lhs_se = binomial_se(h.lhs, nb);
			h.rhs = theta + fraction_above(sup_psi, nu);
			h.pass = h.lhs <= h.rhs + 3.0 * h.lhs_se;
			r.hypothesis_holds = r.hypothesis_holds && h.pass;
			r.hypothesis.push_back(h);
		}

		r.pass = true;
		const auto &c = r.constants;
		for (double lambda : r.lambdas)
			for (double mu : r.mus)
				for (double nu : r.nus)
				{
					TailRow row;
					row.lambda = lambda;
					row.mu = mu;
					row.nu = nu;
					row.lhs = fraction_above(g, lambda + c.a * mu * nu);
					row.lhs_se = binomial_se(row.lhs, nb);
					row.p_lambda = fraction_above(g, lambda);
					row.w_psi = fraction_above(sup_psi, nu);
					row.rhs = tail_rhs(mu, c.alpha, row.p_lambda, row.w_psi);
					row.rhs_se = std::hypot(std::exp(1.0 - mu) * binomial_se(row.p_lambda, nb),
											c.alpha * binomial_se(row.w_psi, nb));
					row.pass = row.lhs <= row.rhs + 3.0 * std::hypot(row.lhs_se, row.rhs_se);
					r.pass = r.pass && row.pass;
					r.rows.push_back(row);
				}
		return r;
	}
} // namespace bsdelab
