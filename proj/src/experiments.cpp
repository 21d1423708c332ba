#include <bsdelab/bmo.hpp>
#include <bsdelab/bsde_solver.hpp>
#include <bsdelab/decouple.hpp>
#include <bsdelab/experiments.hpp>
#include <bsdelab/forward_sde.hpp>
#include <bsdelab/weights_tails.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#ifndef BSDELAB_VERSION
#define BSDELAB_VERSION "0.0.0"
#endif

namespace bsdelab
{
	namespace fs = std::filesystem;

	std::string code_version() { return BSDELAB_VERSION; }

	namespace
	{
		const std::vector<ExperimentInfo> kRegistry = {
			{"paths-sanity", "W^phi = int sqrt(1 - phi^2) dW + int phi dW', E[(W^phi_t)^2] = t",
			 "moments of W, W' and W^phi against t", 2},
			{"decouple-sandwich", "2^-p E|xi - xi^(s,t]|^p <= E|xi - E[xi | G_s^t]|^p <= E|xi - xi^(s,t]|^p",
			 "2^-p E|xi - xi^(s,t]|^p <= E|xi - E[xi|G_s^t]|^p <= E|xi - xi^(s,t]|^p over seeded runs", 20},
			{"sde-coupling-scaling", "E sup_r |X_r^(s,t] - X_r|^p <= C^p (t - s)^(p/2)",
			 "log-log slope of E sup |X^(s,t] - X|^p against t - s", 120},
			{"bsde-oracle", "Y_r = W_r (1 + T - r), Z_r = 1 + T - r; backward Euler scheme",
			 "closed-form moments and regression solver error against the closed form", 60},
			{"bmo-functions", "Phi(q), Psi(gamma, p) and p > Phi^-1(y) / (Phi^-1(y) - 1)",
			 "tabulation and inversion of Phi, Psi and the exponent threshold", 1},
			{"sliceable", "sl_N = inf over N-slice partitions of the max slice BMO norm; RH_p <= Psi(sl_N, p)^N",
			 "sliceable numbers over grid partitions and reverse Hoelder bounds", 5},
			{"fefferman", "E(int |X||Y| dr)^p <= (sqrt(2) p)^p ||X||_{H^p}^p ||Y||_{BMO}^p",
			 "Fefferman inequality on deterministic and stochastic processes", 30},
			{"fbsde-weighted-bmo", "E[|Y_t - Y_tau|^p | F_tau] <= c^p (t - tau)^(p/2) (1 + |X_tau|^p (t - tau)^(p/2))",
			 "weighted and unweighted conditional moment ratios by |W_tau| strata", 30},
			{"weight-assembly", "w^p = w^xi + w^f + drift and terminal terms; data variation bounds",
			 "closed-form and assembled weights, data variation estimators", 60},
			{"tail-goodlambda", "P_B(g > lambda + a mu nu) <= e^(1 - mu) P_B(g > lambda) + alpha P_B(sup Psi > nu)",
			 "good-lambda tail inequality on the Example and on Brownian motion", 60},
		};

		std::vector<double> log_spaced(double lo, double hi, int count)
		{
			std::vector<double> out;
			for (int i = 0; i < count; ++i)
				out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
			return out;
		}

		template <typename T>
		T get(const Json &params, const char *key)
		{
			require(params.contains(key), std::string("config: missing parameter '") + key + "'");
			return params.at(key).get<T>();
		}

		TimeGrid grid_of(const Json &params) { return make_grid(get<double>(params, "T"), get<int>(params, "N")); }

		/// Node index of a time that must lie on the grid.
		int node_of(const TimeGrid &grid, double time, const std::string &name)
		{
			const int k = grid.snap(time);
			require(std::abs(grid.node(k) - time) <= 1e-9 * std::max(1.0, grid.horizon()),
					"config: " + name + " = " + format_number(time) + " is not a grid node");
			return k;
		}

		std::string join(const std::vector<int> &v)
		{
			std::string out;
			for (std::size_t i = 0; i < v.size(); ++i)
				out += (i ? ";" : "") + std::to_string(v[i]);
			return out;
		}

		std::string flag(bool b) { return b ? "1" : "0"; }

		GridFunctional terminal_value_functional()
		{
			GridFunctional xi;
			xi.evaluate = [](const PathView &path) {
				double w = 0.0;
				for (int k = 0; k < path.intervals(); ++k)
					w += path.increment(k);
				return w;
			};
			return xi;
		}

		/// E|U||V| for centred Gaussians with the given variances and covariance.
		double abs_product_moment(double var_u, double var_v, double cov)
		{
			if (var_u <= 0 || var_v <= 0)
				return 0.0;
			const double su = std::sqrt(var_u), sv = std::sqrt(var_v);
			const double rho = std::clamp(cov / (su * sv), -1.0, 1.0);
			return 2.0 / std::numbers::pi * su * sv * (std::sqrt(1.0 - rho * rho) + rho * std::asin(rho));
		}

		class Outputs
		{
		public:
			Outputs(std::string dir, RunManifest &manifest) : dir_(std::move(dir)), manifest_(manifest) {}

			void table(const std::string &stem, const CsvTable &table, const std::string &ref,
					   const std::optional<PlotSpec> &plot = std::nullopt)
			{
				table.write(path(stem + ".csv"));
				manifest_.files.push_back({stem + ".csv", "csv", ref});
				if (plot)
				{
					write_text(path(stem + ".svg"), render_svg(*plot));
					manifest_.files.push_back({stem + ".svg", "svg", ref});
				}
			}

			void json(const std::string &stem, const Json &value, const std::string &ref)
			{
				write_text(path(stem + ".json"), value.dump(2) + "\n");
				manifest_.files.push_back({stem + ".json", "json", ref});
			}

		private:
			std::string path(const std::string &name) const { return (fs::path(dir_) / name).string(); }
			std::string dir_;
			RunManifest &manifest_;
		};

		PlotSeries series_from(const CsvTable &table, std::size_t xcol, std::size_t ycol, const std::string &label,
							   std::optional<std::pair<std::size_t, std::string>> filter = std::nullopt)
		{
			PlotSeries s{label, {}, {}};
			for (std::size_t r = 0; r < table.rows().size(); ++r)
			{
				if (filter && table.rows()[r][filter->first] != filter->second)
					continue;
				s.x.push_back(table.number(r, xcol));
				s.y.push_back(table.number(r, ycol));
			}
			return s;
		}

		// ---------------------------------------------------------------- experiments

		bool paths_sanity(const Json &params, Outputs &out, Json &summary)
		{
			const TimeGrid grid = grid_of(params);
			const auto m = get<Index>(params, "paths");
			const PathBundle bundle = sample_paths(grid, 1, m, get<std::uint64_t>(params, "seed"));
			const PathMatrix w = brownian_paths(grid, 1, bundle.increments());
			const PathMatrix w_copy = brownian_paths(grid, 1, bundle.copy());
			const PathMatrix mixed =
				brownian_paths(grid, 1, mixed_driver(bundle, MixingFunction::constant(grid, get<double>(params, "phi"))));

			CsvTable table({"node", "t", "mean", "mean_se", "var", "var_se", "copy_var", "mixed_var", "expected_var",
							"cross_cov"});
			auto second = [](const Vector &a, const Vector &b) {
				const Vector prod = a.cwiseProduct(b);
				return mean_se(prod);
			};
			bool pass = true;
			for (int k = 0; k <= grid.intervals(); ++k)
			{
				const Vector x = w.col(k), y = w_copy.col(k), z = mixed.col(k);
				const MeanSe mean = mean_se(x);
				const MeanSe var = second(x, x);
				const MeanSe cv = second(y, y), mv = second(z, z), cross = second(x, y);
				table.add_row(std::vector<double>{static_cast<double>(k), grid.node(k), mean.mean, mean.se, var.mean,
												  var.se, cv.mean, mv.mean, grid.node(k), cross.mean});
				if (k == grid.intervals())
				{
					const double t = grid.node(k);
					const bool ok = std::abs(mean.mean) <= 3 * mean.se && std::abs(var.mean - t) <= 3 * var.se &&
									std::abs(cv.mean - t) <= 3 * cv.se && std::abs(mv.mean - t) <= 3 * mv.se &&
									std::abs(cross.mean) <= 3 * cross.se;
					pass = pass && ok;
					summary["terminal"] = {{"mean", mean.mean}, {"var", var.mean}, {"copy_var", cv.mean},
										   {"mixed_var", mv.mean}, {"cross_cov", cross.mean}, {"expected_var", t}};
				}
			}
			PlotSpec plot{"Second moments of W, W' and W^phi", "t", "E[W_t^2]", false, false,
						  {series_from(table, 1, 4, "W"), series_from(table, 1, 7, "W^phi"),
						   series_from(table, 1, 8, "t")}};
			out.table("moments", table, "E[(W^phi_t)^2] = t", plot);
			return pass;
		}

		bool decouple_sandwich(const Json &params, Outputs &out, Json &summary)
		{
			const TimeGrid grid = grid_of(params);
			const auto m = get<Index>(params, "paths");
			const double p = get<double>(params, "p");
			const auto seed = get<std::uint64_t>(params, "seed");
			const int runs = get<int>(params, "runs");
			const DecoupleWindow window = DecoupleWindow::nodes(grid, node_of(grid, get<double>(params, "s"), "s"),
																node_of(grid, get<double>(params, "t"), "t"));
			const GridFunctional xi = terminal_value_functional();

			CsvTable table({"run", "lhs", "lhs_se", "mid", "mid_se", "rhs", "rhs_se", "ordering", "mid_matches",
							"lhs_matches"});
			bool ordering = true, lhs_all = true;
			int mid_matches = 0;
			double mid_sum = 0, half_rhs_sum = 0, var_sum = 0;
			for (int r = 0; r < runs; ++r)
			{
				const PathBundle bundle = sample_paths(grid, 1, m, seed + static_cast<std::uint64_t>(r));
				SandwichConfig cfg;
				cfg.inner_samples = get<int>(params, "inner_samples");
				cfg.seed = seed + 100000 + static_cast<std::uint64_t>(r);
				const SandwichReport rep = sandwich_check(xi, bundle, window, p, cfg);
				const bool order = rep.lhs <= rep.mid && rep.mid <= rep.rhs;
				const double scale = std::pow(2.0, p - 1);
				const bool mid_ok = std::abs(rep.mid - rep.rhs / scale) <= 3 * std::hypot(rep.mid_se, rep.rhs_se / scale);
				const bool lhs_ok = std::abs(rep.lhs - rep.rhs / std::pow(2.0, p)) <= 1e-12 * rep.rhs;
				ordering = ordering && order;
				lhs_all = lhs_all && lhs_ok;
				mid_matches += mid_ok ? 1 : 0;
				mid_sum += rep.mid;
				half_rhs_sum += rep.rhs / scale;
				var_sum += rep.mid_se * rep.mid_se + rep.rhs_se * rep.rhs_se / (scale * scale);
				table.add_row({std::to_string(r), format_number(rep.lhs), format_number(rep.lhs_se),
							   format_number(rep.mid), format_number(rep.mid_se), format_number(rep.rhs),
							   format_number(rep.rhs_se), flag(order), flag(mid_ok), flag(lhs_ok)});
			}
			const double pooled_gap = (mid_sum - half_rhs_sum) / runs;
			const double pooled_se = std::sqrt(var_sum) / runs;
			const bool pooled_ok = std::abs(pooled_gap) <= 3 * pooled_se;
			summary["runs"] = runs;
			summary["ordering_runs"] = ordering ? runs : -1;
			summary["ordering_all"] = ordering;
			summary["mid_matches_half_rhs_runs"] = mid_matches;
			summary["pooled_mid_minus_half_rhs"] = pooled_gap;
			summary["pooled_se"] = pooled_se;
			summary["pooled_match"] = pooled_ok;
			summary["lhs_equals_quarter_rhs"] = lhs_all;
			PlotSpec plot{"Sandwich terms per run", "run", "estimate", false, false,
						  {series_from(table, 0, 1, "lhs"), series_from(table, 0, 3, "mid"), series_from(table, 0, 5, "rhs")}};
			out.table("sandwich", table, "2^-p E|xi - xi^(s,t]|^p <= E|xi - E[xi | G_s^t]|^p <= E|xi - xi^(s,t]|^p", plot);
			return ordering && lhs_all && pooled_ok;
		}

		bool sde_coupling(const Json &params, Outputs &out, Json &summary)
		{
			const TimeGrid grid = grid_of(params);
			const SdeCoefficients coeffs = presets::by_name(get<std::string>(params, "preset"));
			const Vector x0 = Vector::Constant(coeffs.dim, get<double>(params, "x0"));
			const auto spans = get<std::vector<double>>(params, "spans");
			const auto powers = get<std::vector<double>>(params, "powers");
			const double s = get<double>(params, "s");
			node_of(grid, s, "s");
			for (double span : spans)
				node_of(grid, s + span, "s + span");
			const auto tables = coupling_distance_ensemble(coeffs, x0, grid, get<Index>(params, "paths"),
														   get<std::uint64_t>(params, "seed"), s, spans, powers,
														   get<Index>(params, "chunk"));
			CsvTable table({"p", "span", "estimate", "se", "negative_stratum", "positive_stratum"});
			CsvTable fits({"p", "slope", "intercept", "expected_slope", "tolerance", "pass"});
			bool pass = true;
			PlotSpec plot{"Coupling distance", "t - s", "E sup |X^(s,t] - X|^p", true, true, {}};
			for (const auto &t : tables)
			{
				PlotSeries series{"p = " + format_number(t.p), {}, {}};
				for (const auto &row : t.rows)
				{
					table.add_row(std::vector<double>{t.p, row.span, row.estimate, row.se, row.negative_stratum,
													  row.positive_stratum});
					series.x.push_back(row.span);
					series.y.push_back(row.estimate);
				}
				plot.series.push_back(series);
				const double expected = t.p / 2;
				const double tol = t.p == 2.0 ? 0.1 : 0.15;
				const bool ok = std::abs(t.slope - expected) <= tol;
				pass = pass && ok;
				fits.add_row({format_number(t.p), format_number(t.slope), format_number(t.intercept),
							  format_number(expected), format_number(tol), flag(ok)});
				summary["slope_p" + format_number(t.p)] = t.slope;
			}
			out.table("coupling", table, "E sup_r |X_r^(s,t] - X_r|^p <= C^p (t - s)^(p/2)", plot);
			out.table("slopes", fits, "E sup_r |X_r^(s,t] - X_r|^p <= C^p (t - s)^(p/2)");
			return pass;
		}

		bool bsde_oracle(const Json &params, Outputs &out, Json &summary)
		{
			const auto m = get<Index>(params, "paths");
			const auto seed = get<std::uint64_t>(params, "seed");
			const double horizon = get<double>(params, "T");
			bool pass = true;

			// closed-form moments
			{
				const TimeGrid grid = grid_of(params);
				const PathBundle bundle = sample_paths(grid, 1, m, seed);
				const BsdeGridSolution exact = closed_form_example(bundle);
				CsvTable moments({"tau", "t", "estimate", "se", "exact", "z", "pass"});
				for (double tau : get<std::vector<double>>(params, "taus"))
					for (double t : get<std::vector<double>>(params, "ts"))
					{
						const int a = node_of(grid, tau, "tau"), b = node_of(grid, t, "t");
						const Vector diff = (exact.y.col(b) - exact.y.col(a)).array().square().matrix();
						const MeanSe ms = mean_se(diff);
						const double tt = grid.node(b), ta = grid.node(a);
						const double ref = (tt - ta) * std::pow(1 + horizon - tt, 2) + ta * (tt - ta) * (tt - ta);
						const double z = (ms.mean - ref) / ms.se;
						const bool ok = std::abs(z) <= 3;
						pass = pass && ok;
						moments.add_row({format_number(ta), format_number(tt), format_number(ms.mean),
										 format_number(ms.se), format_number(ref), format_number(z), flag(ok)});
					}
				out.table("moments", moments, "E|Y_t - Y_tau|^2 = (t - tau)(1 + T - t)^2 + tau (t - tau)^2");
			}

			// regression solver against the closed form
			const double tolerance = get<double>(params, "rms_tolerance") * (1 + horizon);
			RegressionConfig cfg;
			cfg.basis.degree = get<int>(params, "degree");
			cfg.picard_iterations = get<int>(params, "picard_iterations");
			cfg.martingale_control = get<bool>(params, "martingale_control");
			CsvTable rms({"N", "node", "t", "rms"});
			CsvTable refine({"N", "max_rms", "overall_rms", "max_z_var", "ridge_fallbacks", "truncations"});
			std::vector<double> levels;
			const int n_main = get<int>(params, "N");
			double main_rms = std::numeric_limits<double>::quiet_NaN(), main_zvar = 0;
			PlotSpec plot{"Regression scheme error", "t", "RMS(Y - Y_exact)", false, false, {}};
			for (int n : get<std::vector<int>>(params, "refinement"))
			{
				const TimeGrid grid = make_grid(horizon, n);
				const PathBundle bundle = sample_paths(grid, 1, m, seed + static_cast<std::uint64_t>(n));
				const ForwardSolution fwd = euler_forward(presets::brownian(1), Vector::Zero(1), bundle);
				const BsdeGridSolution sol = regression_backward_euler(presets::example_generator(), fwd, cfg);
				const BsdeGridSolution exact = closed_form_example(bundle);
				const auto err = node_rms_error(sol, exact);
				double overall = 0;
				PlotSeries series{"N = " + std::to_string(n), {}, {}};
				for (int k = 0; k <= n; ++k)
				{
					rms.add_row(std::vector<double>{static_cast<double>(n), static_cast<double>(k), grid.node(k),
													err[static_cast<std::size_t>(k)]});
					overall += err[static_cast<std::size_t>(k)] * err[static_cast<std::size_t>(k)];
					series.x.push_back(grid.node(k));
					series.y.push_back(err[static_cast<std::size_t>(k)]);
				}
				plot.series.push_back(series);
				overall = std::sqrt(overall / (n + 1));
				double zvar = 0;
				for (int k = 0; k < n; ++k)
				{
					const Vector z = sol.z.col(k);
					zvar = std::max(zvar, (z.array() - z.mean()).square().mean());
				}
				const double max_rms = *std::max_element(err.begin(), err.end());
				refine.add_row(std::vector<double>{static_cast<double>(n), max_rms, overall, zvar,
												   static_cast<double>(sol.diagnostics.ridge_fallbacks),
												   static_cast<double>(sol.diagnostics.truncations)});
				levels.push_back(overall);
				if (n == n_main)
				{
					main_rms = max_rms;
					main_zvar = zvar;
				}
			}
			bool monotone = true;
			for (std::size_t i = 1; i < levels.size(); ++i)
				monotone = monotone && levels[i] < levels[i - 1];
			const bool rms_ok = main_rms <= tolerance;
			const bool zvar_ok = main_zvar <= 1e-3;
			summary["max_node_rms"] = main_rms;
			summary["rms_tolerance"] = tolerance;
			summary["rms_pass"] = rms_ok;
			summary["refinement_overall_rms"] = levels;
			summary["monotone"] = monotone;
			summary["max_z_variance"] = main_zvar;
			out.table("rms", rms, "backward Euler scheme vs Y_r = W_r (1 + T - r)", plot);
			out.table("refinement", refine, "backward Euler scheme vs Y_r = W_r (1 + T - r)");
			return pass && rms_ok && monotone && zvar_ok;
		}

		bool bmo_functions(const Json &params, Outputs &out, Json &summary)
		{
			bool pass = true;
			CsvTable phis({"q", "phi"});
			double previous = std::numeric_limits<double>::infinity();
			bool decreasing = true;
			for (double q : get<std::vector<double>>(params, "q_grid"))
			{
				const double v = phi(q);
				decreasing = decreasing && v < previous;
				previous = v;
				phis.add_row(std::vector<double>{q, v});
			}
			pass = pass && decreasing;

			CsvTable psis({"p", "gamma", "gamma_over_phi", "psi"});
			bool rejects = true;
			for (double p : get<std::vector<double>>(params, "p_list"))
			{
				for (double f : get<std::vector<double>>(params, "gamma_fractions"))
				{
					const double g = f * phi(p);
					psis.add_row(std::vector<double>{p, g, f, psi(g, p)});
				}
				bool threw = false;
				try
				{
					psi(phi(p), p);
				}
				catch (const InvalidArgument &)
				{
					threw = true;
				}
				const double below = psi(std::nextafter(phi(p), 0.0), p);
				rejects = rejects && threw && std::isfinite(below) && below > 0;
			}
			const double psi0 = psi(0.0, 2.0);
			const bool psi_ok = std::abs(psi0 - std::sqrt(6.0)) <= 1e-12;
			pass = pass && rejects && psi_ok;

			CsvTable inv({"y", "log_excess", "q", "roundtrip_error"});
			double worst = 0;
			for (double y : get<std::vector<double>>(params, "y_list"))
			{
				const double l = phi_inverse_log_excess(y);
				const double err = std::abs(phi_log_excess(l) - y);
				worst = std::max(worst, err);
				inv.add_row(std::vector<double>{y, l, phi_inverse(y), err});
			}
			pass = pass && worst <= 1e-10;

			CsvTable c8({"lz", "s_inf", "min_p"});
			for (double lz : get<std::vector<double>>(params, "lz_list"))
				for (double s : get<std::vector<double>>(params, "s_inf_list"))
				{
					const auto v = c8_min_p(lz, s);
					c8.add_row({format_number(lz), format_number(s), v ? format_number(*v) : "none"});
				}

			summary["phi_decreasing"] = decreasing;
			summary["psi_0_2"] = psi0;
			summary["psi_0_2_error"] = std::abs(psi0 - std::sqrt(6.0));
			summary["psi_domain_rejection"] = rejects;
			summary["max_roundtrip_error"] = worst;
			out.table("phi", phis, "Phi(q) = (1 + q^-2 log(1 + 1/(2q - 2)))^(1/2) - 1",
					  PlotSpec{"Phi", "q", "Phi(q)", true, true, {series_from(phis, 0, 1, "Phi")}});
			PlotSpec psi_plot{"Psi", "gamma / Phi(p)", "Psi(gamma, p)", false, true, {}};
			for (double p : get<std::vector<double>>(params, "p_list"))
				psi_plot.series.push_back(series_from(psis, 2, 3, "p = " + format_number(p),
													  std::make_pair(std::size_t{0}, format_number(p))));
			out.table("psi", psis, "Psi(gamma, p) = (2 / (1 - (2p-2)/(2p-1) e^(p^2 (gamma^2 + 2 gamma))))^(1/p)", psi_plot);
			out.table("phi_inverse", inv, "Phi(Phi^-1(y)) = y",
					  PlotSpec{"Phi inverse", "y", "log(q - 1)", true, false, {series_from(inv, 0, 1, "log(q-1)")}});
			out.table("c8", c8, "p > Phi^-1(2 sqrt(2) L_z s_inf) / (Phi^-1(2 sqrt(2) L_z s_inf) - 1)");
			return pass;
		}

		bool sliceable(const Json &params, Outputs &out, Json &summary)
		{
			const TimeGrid grid = grid_of(params);
			const int n_max = get<int>(params, "n_max");
			const double p_rh = get<double>(params, "rh_p");
			CsvTable table({"process", "n", "value", "reference", "partition", "rh_bound", "rh_infinite"});
			bool pass = true;
			PlotSpec plot{"Sliceable numbers", "n", "sl_n (upper estimate)", false, true, {}};

			auto record = [&](const std::string &name, const ProcessSample &c, const BmoOptions &opt,
							  const std::function<double(int)> &reference) {
				const auto est = sliceable_numbers(c, n_max, opt);
				const double norm = bmo_s2_norm(c, opt);
				bool monotone = true, ref_ok = true;
				PlotSeries series{name, {}, {}};
				for (std::size_t i = 0; i < est.size(); ++i)
				{
					const auto &e = est[i];
					if (i > 0)
						monotone = monotone && e.value <= est[i - 1].value;
					const double ref = reference ? reference(e.n) : std::numeric_limits<double>::quiet_NaN();
					if (reference)
						ref_ok = ref_ok && std::abs(e.value - ref) <= 1e-12;
					const RHBound rh = rh_bound(e.value, p_rh, e.n);
					table.add_row({name, std::to_string(e.n), format_number(e.value), format_number(ref),
								   join(e.partition), format_number(rh.bound), flag(rh.infinite)});
					series.x.push_back(e.n);
					series.y.push_back(e.value);
				}
				plot.series.push_back(series);
				const bool first_ok = est.front().value == norm;
				summary[name] = {{"monotone", monotone}, {"reference_match", ref_ok}, {"sl1_equals_norm", first_ok},
								 {"bmo_norm", norm}};
				pass = pass && monotone && ref_ok && first_ok;
			};

			const double horizon = grid.horizon();
			record("constant", ProcessSample::constant(grid, 1.0), BmoOptions{},
				   [horizon](int n) { return std::sqrt(horizon / n); });

			ProcessSample z = ProcessSample::constant(grid, 1.0);
			for (int k = 0; k < grid.intervals(); ++k)
				z.values(0, k) = 1.0 + horizon - grid.node(k);
			record("example_z", z, BmoOptions{}, nullptr);

			const TimeGrid coarse = make_grid(horizon, get<int>(params, "stochastic_N"));
			const PathBundle bundle = sample_paths(coarse, 1, get<Index>(params, "paths"),
												   get<std::uint64_t>(params, "seed"));
			const PathMatrix w = brownian_paths(coarse, 1, bundle.increments());
			ProcessSample bm{coarse, 1, w.leftCols(coarse.intervals()), 1, w};
			BmoOptions opt;
			opt.estimator = RegressionEstimator{BasisSpec{get<int>(params, "degree"), true}, 0.0};
			opt.linf_quantile = get<double>(params, "linf_quantile");
			record("brownian", bm, opt, nullptr);
			summary["linf_quantile"] = opt.linf_quantile;
			out.table("sliceable", table, "sl_N over N-slice partitions; RH_p <= Psi(sl_N, p)^N", plot);
			return pass;
		}

		struct FeffermanCase
		{
			std::string name;
			ProcessSample x, y;
		};

		std::vector<FeffermanCase> fefferman_cases(const Json &params)
		{
			const TimeGrid grid = grid_of(params);
			const double horizon = grid.horizon();
			std::vector<FeffermanCase> cases;
			cases.push_back({"constant", ProcessSample::constant(grid, 1.0), ProcessSample::constant(grid, 1.0)});
			ProcessSample z = ProcessSample::constant(grid, 1.0);
			for (int k = 0; k < grid.intervals(); ++k)
				z.values(0, k) = std::abs(1.0 + horizon - grid.node(k));
			cases.push_back({"example_abs_z", z, z});

			const auto m = get<Index>(params, "paths");
			const auto seed = get<std::uint64_t>(params, "seed");
			const PathBundle bundle = sample_paths(grid, 1, m, seed);
			for (const auto &preset : get<std::vector<std::string>>(params, "presets"))
			{
				const SdeCoefficients coeffs = presets::by_name(preset);
				const Vector x0 = Vector::Constant(1, preset == "brownian" || preset == "example" ? 0.0 : 1.0);
				const ForwardSolution fwd = euler_forward(coeffs, x0, bundle);
				const int n = grid.intervals();
				PathMatrix sig(m, n), state(m, n);
				Matrix s(1, 1);
				for (Index i = 0; i < m; ++i)
					for (int k = 0; k < n; ++k)
					{
						const Vector x = Vector::Constant(1, fwd.state(i, k));
						coeffs.diffusion(grid.node(k), x, s);
						sig(i, k) = std::abs(s(0, 0));
						state(i, k) = fwd.state(i, k);
					}
				cases.push_back({preset, ProcessSample{grid, 1, sig, 1, fwd.states},
								 ProcessSample{grid, 1, state, 1, fwd.states}});
			}
			return cases;
		}

		bool fefferman(const Json &params, Outputs &out, Json &summary)
		{
			const auto cases = fefferman_cases(params);
			const TimeGrid grid = grid_of(params);
			const int s = node_of(grid, get<double>(params, "s"), "s");
			const int t = node_of(grid, get<double>(params, "t"), "t");
			const int bins = get<int>(params, "bins");
			BmoOptions opt;
			opt.estimator = RegressionEstimator{BasisSpec{get<int>(params, "degree"), true}, 0.0};
			CsvTable table({"case", "p", "lhs", "lhs_se", "hp", "hp_se", "bmo", "rhs", "ratio", "pass"});
			CsvTable cond({"case", "p", "bin", "count", "lhs", "lhs_se", "rhs", "rhs_se", "pass"});
			bool pass = true;
			PlotSpec plot{"Fefferman ratio lhs / rhs", "p", "ratio", false, false, {}};
			for (const auto &c : cases)
			{
				PlotSeries series{c.name, {}, {}};
				for (double p : get<std::vector<double>>(params, "powers"))
				{
					const FeffermanReport r = fefferman_check(c.x, c.y, p, opt);
					pass = pass && r.pass;
					table.add_row({c.name, format_number(p), format_number(r.lhs), format_number(r.lhs_se),
								   format_number(r.hp), format_number(r.hp_se), format_number(r.bmo),
								   format_number(r.rhs), format_number(r.ratio), flag(r.pass)});
					series.x.push_back(p);
					series.y.push_back(r.ratio);
					const ConditionalFeffermanReport cr = fefferman_conditional_check(
						c.x, c.y, p, s, t, c.x.paths() > 1 ? bins : 1, opt);
					pass = pass && cr.pass;
					for (const auto &st : cr.strata)
						cond.add_row({c.name, format_number(p), std::to_string(st.bin), std::to_string(st.count),
									  format_number(st.lhs), format_number(st.lhs_se), format_number(st.rhs),
									  format_number(st.rhs_se), flag(st.pass)});
					summary[c.name + "_p" + format_number(p)] = {{"ratio", r.ratio}, {"pass", r.pass},
																 {"conditional_pass", cr.pass}};
				}
				plot.series.push_back(series);
			}
			out.table("fefferman", table, "E(int |X||Y| dr)^p <= (sqrt(2) p)^p ||X||_{H^p}^p ||Y||_{BMO}^p", plot);
			out.table("fefferman_conditional", cond, "conditional Fefferman bound on (s, t] by strata of X_s");
			return pass;
		}

		bool weighted_bmo(const Json &params, Outputs &out, Json &summary)
		{
			const TimeGrid grid = grid_of(params);
			const auto m = get<Index>(params, "paths");
			const double p = get<double>(params, "p");
			const double horizon = grid.horizon();
			const PathBundle bundle = sample_paths(grid, 1, m, get<std::uint64_t>(params, "seed"));
			const ForwardSolution fwd = euler_forward(presets::brownian(1), Vector::Zero(1), bundle);
			const std::string solver = get<std::string>(params, "solver");
			require(solver == "closed_form" || solver == "regression", "config: solver must be closed_form or regression");
			const BsdeGridSolution sol = solver == "closed_form"
											 ? closed_form_example(bundle)
											 : regression_backward_euler(presets::example_generator(), fwd);
			RatioConfig cfg;
			cfg.bins = get<int>(params, "bins");
			cfg.bin_max = get<double>(params, "bin_max");
			cfg.min_count = get<Index>(params, "min_count");
			const double tau = get<double>(params, "tau");
			const double t = get<double>(params, "t");
			node_of(grid, tau, "tau");
			node_of(grid, t, "t");

			const WeightedRatioReport det = weighted_bmo_ratio(sol, fwd, p, StoppingRule::at(tau), t, cfg);
			const WeightedRatioReport hit = weighted_bmo_ratio(
				sol, fwd, p, StoppingRule::hitting(get<double>(params, "hitting_start"), get<double>(params, "threshold")),
				t, cfg);

			CsvTable table({"tau_rule", "bin", "lo", "hi", "count", "weighted", "weighted_se", "unweighted",
							"unweighted_se", "lower_gap", "lower_gap_se", "lower_ok"});
			auto add = [&](const std::string &rule, const WeightedRatioReport &r) {
				for (const auto &st : r.strata)
					table.add_row({rule, std::to_string(st.bin), format_number(st.lo), format_number(st.hi),
								   std::to_string(st.count), format_number(st.weighted), format_number(st.weighted_se),
								   format_number(st.unweighted), format_number(st.unweighted_se),
								   format_number(st.lower_gap), format_number(st.lower_gap_se), flag(st.lower_ok)});
			};
			add("deterministic", det);
			add("hitting", hit);

			const double weighted_limit = get<double>(params, "weighted_spread_limit");
			const double unweighted_min = get<double>(params, "unweighted_ratio_min");
			const bool bounded = det.weighted_spread < weighted_limit;
			const bool sharp = det.unweighted_top_bottom > unweighted_min;
			// (t - tau)^{p/2} times the exact unweighted top/bottom ratio at the bin centres
			const double span = t - tau;
			const double c2 = std::pow(1 + horizon - t, 2);
			const double top_centre = cfg.bin_max * (cfg.bins - 0.5) / cfg.bins, bottom_centre = 0.5 * cfg.bin_max / cfg.bins;
			const double exact_ratio = p == 2.0 ? (c2 + top_centre * top_centre * span) / (c2 + bottom_centre * bottom_centre * span)
												: std::numeric_limits<double>::quiet_NaN();
			summary["weighted_spread"] = det.weighted_spread;
			summary["weighted_spread_limit"] = weighted_limit;
			summary["weighted_bounded"] = bounded;
			summary["unweighted_top_bottom"] = det.unweighted_top_bottom;
			summary["unweighted_ratio_min"] = unweighted_min;
			summary["unweighted_exceeds"] = sharp;
			summary["unweighted_top_bottom_exact_at_bin_centres"] = exact_ratio;
			summary["c_strata"] = det.c_strata;
			summary["c_refined"] = det.c_refined;
			summary["c_regression"] = det.c_regression;
			summary["lower_bound_holds"] = det.lower_bound_holds && hit.lower_bound_holds;
			summary["stable"] = det.pass;
			summary["hitting_c_strata"] = hit.c_strata;
			summary["empty_strata"] = det.empty_strata;
			summary["sparse_strata"] = det.sparse_strata;

			PlotSpec plot{"Conditional moment ratios by |W_tau| stratum", "stratum", "ratio", false, true, {}};
			PlotSeries wser{"weighted", {}, {}}, user{"unweighted", {}, {}};
			for (const auto &st : det.strata)
				if (st.count > 0)
				{
					wser.x.push_back(st.bin);
					wser.y.push_back(st.weighted);
					user.x.push_back(st.bin);
					user.y.push_back(st.unweighted);
				}
			plot.series = {wser, user};
			out.table("strata", table, "E[|Y_t - Y_tau|^p | F_tau] <= c^p (t - tau)^(p/2) (1 + |X_tau|^p (t - tau)^(p/2))", plot);
			return bounded && sharp && det.lower_bound_holds && hit.lower_bound_holds && det.pass;
		}

		bool weight_assembly(const Json &params, Outputs &out, Json &summary)
		{
			const TimeGrid grid = grid_of(params);
			const double horizon = grid.horizon();
			const double p = get<double>(params, "p");
			const double s = get<double>(params, "s");
			const double t = get<double>(params, "t");
			const double c = get<double>(params, "c");
			const auto m = get<Index>(params, "paths");
			const auto seed = get<std::uint64_t>(params, "seed");
			bool pass = true;

			CsvTable closed({"u", "w_xi", "w_f", "w_sum"});
			double previous = std::numeric_limits<double>::infinity();
			bool nonincreasing = true;
			const auto us = get<std::vector<double>>(params, "u_list");
			for (double u : us)
			{
				node_of(grid, u, "u");
				const WeightComponents w = fbsde_weight(p, s, u, t, c);
				nonincreasing = nonincreasing && w.xi + w.f <= previous;
				previous = w.xi + w.f;
				closed.add_row(std::vector<double>{u, w.xi, w.f, w.xi + w.f});
			}
			pass = pass && nonincreasing;

			const PathBundle bundle = sample_paths(grid, 1, m, seed);
			FbsdeContext ctx{presets::brownian(1), Vector::Zero(1), presets::example_generator()};
			AssemblyConfig acfg;
			acfg.outer_samples = get<int>(params, "outer_samples");
			acfg.seed = seed + 1;
			CsvTable assembled({"u", "w_p_mean", "w_p_se", "drift_term_mean", "terminal_term_mean", "reference", "pass"});
			const int kt = node_of(grid, t, "t");
			for (double u : us)
			{
				const WeightSample w = assemble_weight(ctx, bundle, fbsde_weight(p, s, u, t, c), p, s, u, t, acfg);
				const MeanSe ms = mean_se(w.w_p);
				double ref = std::numeric_limits<double>::quiet_NaN();
				bool ok = (w.w_p.array() > 0).all() || u == t;
				if (u == 0.0 && p == 2.0)
				{
					// X = W from 0: Gaussian bookkeeping for both conditional terms
					const int n = grid.intervals();
					double drift = 0, terminal = horizon;
					for (int j = 0; j < kt; ++j)
						for (int k = 0; k < kt; ++k)
							drift += grid.dt(j) * grid.dt(k) *
									 abs_product_moment(grid.node(j), grid.node(k), std::min(grid.node(j), grid.node(k)));
					for (int k = kt; k < n; ++k)
					{
						terminal += 2 * grid.dt(k) * abs_product_moment(horizon, grid.node(k), grid.node(k));
						for (int j = kt; j < n; ++j)
							terminal += grid.dt(j) * grid.dt(k) *
										abs_product_moment(grid.node(j), grid.node(k), std::min(grid.node(j), grid.node(k)));
					}
					const WeightComponents wc = fbsde_weight(p, s, u, t, c);
					ref = wc.xi + wc.f + drift + std::pow(grid.node(kt) - u, p) * terminal;
					const double se = std::hypot(w.drift_se.mean(), w.terminal_se.mean());
					ok = ok && std::abs(ms.mean - ref) <= 3 * std::max(se, ms.se) + 1e-12;
				}
				pass = pass && ok;
				assembled.add_row({format_number(u), format_number(ms.mean), format_number(ms.se),
								   format_number(w.drift_term.mean()), format_number(w.terminal_term.mean()),
								   format_number(ref), flag(ok)});
			}

			C6Config c6cfg;
			c6cfg.outer_samples = get<int>(params, "c6_outer");
			c6cfg.inner_samples = get<int>(params, "c6_inner");
			c6cfg.seed = seed + 2;
			const double cu = get<double>(params, "c6_u"), ct = get<double>(params, "c6_t");
			node_of(grid, cu, "c6_u");
			node_of(grid, ct, "c6_t");
			const C6Report c6 = c6_estimate(terminal_value_functional(), bundle, cu, ct, p, c6cfg);
			const C7Report c7 = c7_estimate(ctx, bundle, cu, ct, p, {ProbePoint{0.0, Vector::Zero(1)}, ProbePoint{1.0, Vector::Ones(1)}}, c6cfg);
			CsvTable est({"quantity", "estimate", "se", "reference", "pass"});
			const double span = grid.node(grid.snap(ct)) - grid.node(grid.snap(cu));
			auto check = [&](const std::string &name, double value, double se, double ref) {
				const bool ok = std::isnan(ref) || std::abs(value - ref) <= 3 * se;
				pass = pass && ok;
				est.add_row({name, format_number(value), format_number(se), format_number(ref), flag(ok)});
			};
			const double nan = std::numeric_limits<double>::quiet_NaN();
			check("c6_direct", c6.direct_mean, c6.direct_mean_se, p == 2.0 ? span : nan);
			check("c6_decoupled", c6.decoupled_mean, c6.decoupled_mean_se, p == 2.0 ? 2 * span : nan);
			double c7_ref = nan;
			if (p == 2.0)
			{
				// D_k = (W - W')(u, min(t_k, t)] has variance 2 (min(t_k, t) - u)
				const int ku = grid.snap(cu), kc = grid.snap(ct), n = grid.intervals();
				c7_ref = 0;
				auto var = [&](int k) { return 2 * (grid.node(std::min(k, kc)) - grid.node(ku)); };
				for (int j = ku; j < n; ++j)
					for (int k = ku; k < n; ++k)
						c7_ref += grid.dt(j) * grid.dt(k) * abs_product_moment(var(j), var(k), std::min(var(j), var(k)));
			}
			check("c7_lipschitz", c7.mean, c7.mean_se, c7_ref);
			est.add_row({"c7_probe", format_number(c7.probe_mean), "", "", flag(c7.probe_violations == 0)});
			pass = pass && c6.sandwich_pass && c7.probe_violations == 0;
			summary["closed_form_nonincreasing"] = nonincreasing;
			summary["c6_sandwich"] = c6.sandwich_pass;
			summary["c6_inner_too_small"] = c6.inner_too_small;
			summary["c7_probe_violations"] = c7.probe_violations;

			out.table("fbsde_weight", closed, "w^xi = w^f = c^p (t - u)^(p/2)",
					  PlotSpec{"Closed-form weight", "u", "w^xi + w^f", false, false, {series_from(closed, 0, 3, "w")}});
			out.table("assembled", assembled, "w^p = w^xi + w^f + E(int_u^t |f(r,0,0)| dr)^p + (t - u)^p E(|xi| + int_t^T |f(r,0,0)| dr)^p",
					  PlotSpec{"Assembled weight", "u", "E w^p", false, false, {series_from(assembled, 0, 1, "w^p")}});
			out.table("c6_c7", est, "E|xi - E[xi | G_u^t]|^p and E(int L_h |X - X^(u,t]| dr)^p");
			return pass;
		}

		bool tail_goodlambda(const Json &params, Outputs &out, Json &summary)
		{
			const TimeGrid grid = grid_of(params);
			const double horizon = grid.horizon();
			const auto m = get<Index>(params, "paths");
			const auto seed = get<std::uint64_t>(params, "seed");
			const int runs = get<int>(params, "runs");
			const double theta = get<double>(params, "theta");
			const double p = get<double>(params, "p");
			const int ks = node_of(grid, get<double>(params, "s"), "s");
			const int kt = node_of(grid, get<double>(params, "t"), "t");
			require(ks < kt, "config: need s < t");
			TailGrids grids;
			grids.lambda_quantiles = get<std::vector<double>>(params, "lambda_quantiles");
			grids.mu = get<std::vector<double>>(params, "mu");
			grids.nu_quantiles = get<std::vector<double>>(params, "nu_quantiles");
			const GoodLambdaConstants constants = good_lambda_constants(theta);

			CsvTable rows({"run", "case", "lambda", "mu", "nu", "lhs", "lhs_se", "rhs", "rhs_se", "pass"});
			CsvTable hyp({"run", "case", "nu", "lhs", "lhs_se", "rhs", "pass"});
			bool pass = true, hypothesis = true;
			int passing_runs = 0;
			const Index width = kt - ks + 1;
			const double t = grid.node(kt), s = grid.node(ks);
			const double cst = 1.0 + horizon - t;
			for (int r = 0; r < runs; ++r)
			{
				const PathBundle bundle = sample_paths(grid, 1, m, seed + static_cast<std::uint64_t>(r));
				const BsdeGridSolution y = closed_form_example(bundle);
				const PathMatrix w = brownian_paths(grid, 1, bundle.increments());
				std::vector<char> event(static_cast<std::size_t>(m));
				PathMatrix a_ex(m, width), psi_ex(m, width), a_bm(m, width), psi_bm(m, width);
				const double scale = std::pow(theta, 1.0 / p) / (cst * std::sqrt(t - s));
				for (Index i = 0; i < m; ++i)
				{
					event[static_cast<std::size_t>(i)] = w(i, ks) > 0;
					for (Index j = 0; j < width; ++j)
					{
						const int k = ks + static_cast<int>(j);
						const double rest = t - grid.node(k);
						a_ex(i, j) = (y.y(i, k) - y.y(i, ks)) * scale;
						psi_ex(i, j) = std::pow(1.0 + std::pow(std::abs(w(i, k)), p) * std::pow(rest, p / 2), 1.0 / p);
						a_bm(i, j) = w(i, k) - w(i, ks);
						psi_bm(i, j) = std::max(std::sqrt(rest / theta), 1e-9);
					}
				}
				bool run_ok = true;
				for (const auto &[name, a, psi] : {std::tuple{"example", &a_ex, &psi_ex}, std::tuple{"brownian", &a_bm, &psi_bm}})
				{
					const TailReport rep = tail_check(*a, *psi, event, "W_s > 0", theta, grids);
					run_ok = run_ok && rep.pass;
					hypothesis = hypothesis && rep.hypothesis_holds;
					for (const auto &row : rep.rows)
						rows.add_row({std::to_string(r), name, format_number(row.lambda), format_number(row.mu),
									  format_number(row.nu), format_number(row.lhs), format_number(row.lhs_se),
									  format_number(row.rhs), format_number(row.rhs_se), flag(row.pass)});
					for (const auto &h : rep.hypothesis)
						hyp.add_row({std::to_string(r), name, format_number(h.nu), format_number(h.lhs),
									 format_number(h.lhs_se), format_number(h.rhs), flag(h.pass)});
				}
				passing_runs += run_ok ? 1 : 0;
				pass = pass && run_ok;
			}
			summary["theta"] = theta;
			summary["a"] = constants.a;
			summary["alpha"] = constants.alpha;
			summary["runs"] = runs;
			summary["passing_runs"] = passing_runs;
			summary["hypothesis_holds"] = hypothesis;
			PlotSpec plot{"Good-lambda tail (run 0, example)", "lambda + a mu nu", "probability", false, false, {}};
			PlotSeries lhs{"lhs", {}, {}}, rhs{"rhs", {}, {}};
			for (std::size_t i = 0; i < rows.rows().size(); ++i)
				if (rows.rows()[i][0] == "0" && rows.rows()[i][1] == "example")
				{
					const double x = rows.number(i, 2) + constants.a * rows.number(i, 3) * rows.number(i, 4);
					lhs.x.push_back(x);
					lhs.y.push_back(rows.number(i, 5));
					rhs.x.push_back(x);
					rhs.y.push_back(rows.number(i, 7));
				}
			plot.series = {lhs, rhs};
			out.table("tail", rows, "P_B(g > lambda + a mu nu) <= e^(1 - mu) P_B(g > lambda) + alpha P_B(sup Psi > nu)", plot);
			out.table("hypothesis", hyp, "P_B(|A_R - A_sigma| > nu) <= theta + P_B(sup Psi > nu)");
			return pass && hypothesis;
		}

		using ExperimentFn = bool (*)(const Json &, Outputs &, Json &);

		ExperimentFn lookup(const std::string &name)
		{
			if (name == "paths-sanity")
				return paths_sanity;
			if (name == "decouple-sandwich")
				return decouple_sandwich;
			if (name == "sde-coupling-scaling")
				return sde_coupling;
			if (name == "bsde-oracle")
				return bsde_oracle;
			if (name == "bmo-functions")
				return bmo_functions;
			if (name == "sliceable")
				return sliceable;
			if (name == "fefferman")
				return fefferman;
			if (name == "fbsde-weighted-bmo")
				return weighted_bmo;
			if (name == "weight-assembly")
				return weight_assembly;
			if (name == "tail-goodlambda")
				return tail_goodlambda;
			throw InvalidArgument("unknown experiment '" + name + "'");
		}
	} // namespace

	const std::vector<ExperimentInfo> &list_experiments() { return kRegistry; }

	const ExperimentInfo &experiment_info(const std::string &name)
	{
		for (const auto &e : kRegistry)
			if (e.name == name)
				return e;
		throw InvalidArgument("unknown experiment '" + name + "'");
	}

	Json default_parameters(const std::string &name)
	{
		experiment_info(name);
		Json j;
		if (name == "paths-sanity")
			j = {{"T", 1.0}, {"N", 64}, {"paths", 10000}, {"seed", 1}, {"phi", 0.5}};
		else if (name == "decouple-sandwich")
			j = {{"T", 1.0}, {"N", 64}, {"paths", 10000}, {"seed", 1}, {"p", 2.0}, {"s", 0.25}, {"t", 0.5},
				 {"inner_samples", 64}, {"runs", 50}};
		else if (name == "sde-coupling-scaling")
			j = {{"T", 1.0}, {"N", 1024}, {"paths", 100000}, {"seed", 1}, {"preset", "brownian"}, {"x0", 0.0},
				 {"s", 0.5}, {"spans", {0.03125, 0.0625, 0.125, 0.25}}, {"powers", {2.0, 4.0}}, {"chunk", 4096}};
		else if (name == "bsde-oracle")
			j = {{"T", 1.0}, {"N", 50}, {"paths", 100000}, {"seed", 1}, {"degree", 3}, {"picard_iterations", 3},
				 {"martingale_control", true}, {"refinement", {25, 50, 100}}, {"rms_tolerance", 0.02},
				 {"taus", {0.2, 0.5}}, {"ts", {0.6, 0.9}}};
		else if (name == "bmo-functions")
			j = {{"q_grid", log_spaced(1.01, 100.0, 30)}, {"p_list", {1.5, 2.0, 3.0, 5.0}},
				 {"gamma_fractions", {0.0, 0.25, 0.5, 0.75, 0.9, 0.99}},
				 {"y_list", {1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0}}, {"lz_list", {0.0, 0.5, 1.0, 2.0}},
				 {"s_inf_list", {0.0, 0.01, 0.1}}};
		else if (name == "sliceable")
			j = {{"T", 1.0}, {"N", 840}, {"n_max", 8}, {"rh_p", 2.0}, {"stochastic_N", 48}, {"paths", 4000}, {"degree", 2}, {"linf_quantile", 1.0}, {"seed", 1}};
		else if (name == "fefferman")
			j = {{"T", 1.0}, {"N", 50}, {"paths", 20000}, {"seed", 1}, {"powers", {2.0, 3.0}},
				 {"presets", {"brownian", "capped_linear", "capped_geometric"}}, {"s", 0.26}, {"t", 0.76},
				 {"bins", 10}, {"degree", 3}};
		else if (name == "fbsde-weighted-bmo")
			j = {{"T", 1.0}, {"N", 50}, {"paths", 100000}, {"seed", 1}, {"p", 2.0}, {"tau", 0.5}, {"t", 1.0},
				 {"bins", 10}, {"bin_max", 3.0}, {"min_count", 30}, {"solver", "closed_form"}, {"hitting_start", 0.26},
				 {"threshold", 1.0}, {"weighted_spread_limit", 3.0}, {"unweighted_ratio_min", 10.0}};
		else if (name == "weight-assembly")
			j = {{"T", 1.0}, {"N", 32}, {"paths", 2000}, {"seed", 1}, {"p", 2.0}, {"s", 0.0}, {"t", 1.0},
				 {"c", 1.0}, {"u_list", {0.0, 0.25, 0.5, 0.75, 1.0}}, {"outer_samples", 64}, {"c6_outer", 32},
				 {"c6_inner", 32}, {"c6_u", 0.25}, {"c6_t", 0.5}};
		else if (name == "tail-goodlambda")
			j = {{"T", 1.0}, {"N", 64}, {"paths", 20000}, {"seed", 1}, {"runs", 20}, {"theta", 0.05}, {"p", 2.0},
				 {"s", 0.25}, {"t", 1.0}, {"lambda_quantiles", {0.25, 0.5, 0.75, 0.9}}, {"mu", {0.5, 1.0, 2.0, 4.0}},
				 {"nu_quantiles", {0.5, 0.75, 0.9, 0.95, 0.99}}};
		return j;
	}

	ExperimentConfig make_config(const std::string &experiment, const Json &overrides)
	{
		ExperimentConfig cfg;
		cfg.experiment = experiment;
		cfg.parameters = default_parameters(experiment);
		for (const auto &[key, value] : overrides.items())
		{
			require(cfg.parameters.contains(key) || key == "generator",
					"config: unknown parameter '" + key + "' for " + experiment);
			cfg.parameters[key] = value;
		}
		return cfg;
	}

	ExperimentConfig load_config(const std::string &path_or_name)
	{
		if (!fs::exists(path_or_name))
		{
			for (const auto &e : kRegistry)
				if (e.name == path_or_name)
					return make_config(path_or_name);
			throw InvalidArgument("'" + path_or_name + "' is neither a config file nor an experiment name");
		}
		std::ifstream in(path_or_name);
		Json j;
		try
		{
			j = Json::parse(in);
		}
		catch (const Json::parse_error &e)
		{
			throw InvalidArgument(std::string("config: ") + e.what());
		}
		require(j.contains("experiment"), "config: missing 'experiment'");
		ExperimentConfig cfg = make_config(j.at("experiment").get<std::string>(), j.value("parameters", Json::object()));
		if (j.contains("out"))
			cfg.out_dir = j.at("out").get<std::string>();
		return cfg;
	}

	void validate(const ExperimentConfig &config)
	{
		lookup(config.experiment);
		const Json &p = config.parameters;
		if (p.contains("paths"))
			require(p.at("paths").get<Index>() >= 2, "config: paths must be >= 2");
		if (p.contains("T") && p.contains("N"))
		{
			const TimeGrid grid = grid_of(p);
			for (const char *key : {"s", "t", "tau", "c6_u", "c6_t", "hitting_start"})
				if (p.contains(key))
					node_of(grid, p.at(key).get<double>(), key);
			for (const char *key : {"u_list", "taus", "ts"})
				if (p.contains(key))
					for (double v : p.at(key).get<std::vector<double>>())
						node_of(grid, v, key);
		}
		if (p.contains("p") && config.experiment != "bmo-functions")
			require(p.at("p").get<double>() >= 2, "config: p must be >= 2");
		if (p.contains("generator"))
		{
			const Json &g = p.at("generator");
			const double theta = g.value("theta", 0.0), s_inf = g.value("s_inf", 0.0), lz = g.value("lz", 0.0);
			if (theta > 0 && s_inf > 0)
			{
				const auto min_p = c8_min_p(lz, s_inf);
				const double pv = p.value("p", 2.0);
				require(!min_p || pv > *min_p,
						"config: p = " + format_number(pv) + " violates the exponent threshold p > " +
							format_number(min_p.value_or(0)));
			}
		}
	}

	Json to_json(const RunManifest &m)
	{
		Json files = Json::array();
		for (const auto &f : m.files)
			files.push_back({{"path", f.path}, {"kind", f.kind}, {"statement", f.statement}});
		return {{"schema_version", kSchemaVersion}, {"code_version", m.code_version}, {"config", m.config},
				{"status", m.status}, {"error", m.error}, {"wall_seconds", m.wall_seconds},
				{"summary", m.summary}, {"files", files}};
	}

	RunManifest manifest_from_json(const Json &j)
	{
		RunManifest m;
		m.config = j.at("config");
		m.code_version = j.at("code_version").get<std::string>();
		m.status = j.at("status").get<std::string>();
		m.error = j.value("error", "");
		m.wall_seconds = j.at("wall_seconds").get<double>();
		m.summary = j.value("summary", Json::object());
		for (const auto &f : j.at("files"))
			m.files.push_back({f.at("path").get<std::string>(), f.at("kind").get<std::string>(),
							   f.at("statement").get<std::string>()});
		return m;
	}

	RunManifest load_manifest(const std::string &dir)
	{
		const fs::path path = fs::path(dir) / kManifestName;
		std::ifstream in(path);
		if (!in)
			throw std::runtime_error("no manifest at " + path.string());
		return manifest_from_json(Json::parse(in));
	}

	int exit_code(const RunManifest &m)
	{
		if (m.status == "pass")
			return 0;
		if (m.status == "fail")
			return 2;
		return 1;
	}

	RunManifest run(const ExperimentConfig &config)
	{
		const auto start = std::chrono::steady_clock::now();
		RunManifest manifest;
		manifest.code_version = code_version();
		manifest.config = {{"experiment", config.experiment}, {"out", config.out_dir}, {"parameters", config.parameters}};
		fs::create_directories(config.out_dir);
		Outputs outputs(config.out_dir, manifest);
		try
		{
			validate(config);
			const ExperimentInfo &info = experiment_info(config.experiment);
			Json summary = {{"schema_version", kSchemaVersion}, {"experiment", config.experiment},
							{"statement", info.statement}};
			Json metrics = Json::object();
			const bool pass = lookup(config.experiment)(config.parameters, outputs, metrics);
			summary["metrics"] = metrics;
			summary["pass"] = pass;
			outputs.json("summary", summary, info.statement);
			manifest.summary = summary;
			manifest.status = pass ? "pass" : "fail";
		}
		catch (const std::exception &e)
		{
			manifest.status = "error";
			manifest.error = e.what();
		}
		manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		manifest.files.push_back({kManifestName, "json", "run manifest"});
		write_text((fs::path(config.out_dir) / kManifestName).string(), to_json(manifest).dump(2) + "\n");
		return manifest;
	}
} // namespace bsdelab
