#include <bsdelab/bmo.hpp>
#include <bsdelab/bsde_solver.hpp>
#include <bsdelab/decouple.hpp>
#include <bsdelab/experiments.hpp>
#include <bsdelab/forward_sde.hpp>
#include <bsdelab/weights_tails.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace bsdelab;
namespace fs = std::filesystem;

namespace
{
	struct Outcome
	{
		bool pass = false;
		std::string detail;
	};

	std::string num(double v) { return format_number(v); }

	GridFunctional terminal_value()
	{
		return {[](const PathView &p) { return p.value(p.intervals()); }, std::nullopt};
	}

	Outcome closed_form_moments()
	{
		const TimeGrid grid = make_grid(1.0, 50);
		const PathBundle bundle = sample_paths(grid, 1, 100000, 1);
		const BsdeGridSolution y = closed_form_example(bundle);
		Outcome o{true, ""};
		for (double tau : {0.2, 0.5})
			for (double t : {0.6, 0.9})
			{
				const int a = grid.snap(tau), b = grid.snap(t);
				const MeanSe ms = mean_se(Vector((y.y.col(b) - y.y.col(a)).array().square()));
				const double exact = (t - tau) * std::pow(2.0 - t, 2) + tau * (t - tau) * (t - tau);
				const double z = (ms.mean - exact) / ms.se;
				o.pass = o.pass && std::abs(z) <= 3;
				o.detail += "(" + num(tau) + "," + num(t) + ") z=" + num(std::round(z * 100) / 100) + " ";
			}
		return o;
	}

	Outcome sandwich()
	{
		const TimeGrid grid = make_grid(1.0, 64);
		const DecoupleWindow window = DecoupleWindow::on(grid, 0.25, 0.5);
		int ordered = 0, matched = 0;
		bool quarter = true;
		double gap = 0, var = 0;
		const int runs = 50;
		for (int r = 0; r < runs; ++r)
		{
			const PathBundle bundle = sample_paths(grid, 1, 10000, 1 + static_cast<std::uint64_t>(r));
			const SandwichReport s =
				sandwich_check(terminal_value(), bundle, window, 2.0, SandwichConfig{64, 100001 + static_cast<std::uint64_t>(r), 3.0});
			ordered += s.lhs <= s.mid && s.mid <= s.rhs ? 1 : 0;
			quarter = quarter && std::abs(s.lhs - s.rhs / 4) <= 1e-12 * s.rhs;
			const double se = std::hypot(s.mid_se, s.rhs_se / 2);
			matched += std::abs(s.mid - s.rhs / 2) <= 3 * se ? 1 : 0;
			gap += (s.mid - s.rhs / 2) / runs;
			var += se * se / (runs * runs);
		}
		const bool pooled = std::abs(gap) <= 3 * std::sqrt(var);
		return {ordered == runs && quarter && pooled,
				"ordering " + std::to_string(ordered) + "/50, lhs=rhs/4 " + (quarter ? "yes" : "no") +
					", mid=rhs/2 per-run " + std::to_string(matched) + "/50, pooled gap " + num(gap) + " (3 SE " +
					num(3 * std::sqrt(var)) + ")"};
	}

	Outcome coupling_scaling()
	{
		const auto tables = coupling_distance_ensemble(presets::brownian(), Vector::Zero(1), make_grid(1.0, 1024), 100000,
													   1, 0.5, {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4}, {2.0, 4.0}, 4096);
		const double s2 = tables[0].slope, s4 = tables[1].slope;
		return {std::abs(s2 - 1) <= 0.1 && std::abs(s4 - 2) <= 0.15,
				"slope p=2 " + num(s2) + " (1 +- 0.1), p=4 " + num(s4) + " (2 +- 0.15)"};
	}

	Outcome weighted_ratio()
	{
		const TimeGrid grid = make_grid(1.0, 50);
		const PathBundle bundle = sample_paths(grid, 1, 100000, 1);
		const ForwardSolution fwd = euler_forward(presets::brownian(1), Vector::Zero(1), bundle);
		RatioConfig cfg;
		cfg.bins = 10;
		cfg.bin_max = 3.0;
		const WeightedRatioReport r = weighted_bmo_ratio(closed_form_example(bundle), fwd, 2.0, StoppingRule::at(0.5), 1.0, cfg);
		const bool bounded = r.weighted_spread < 3;
		const bool sharp = r.unweighted_top_bottom > 10;
		return {bounded && sharp, "weighted max/min " + num(r.weighted_spread) + " (< 3: " + (bounded ? "yes" : "no") +
									  "), unweighted top/bottom " + num(r.unweighted_top_bottom) + " (> 10: " +
									  (sharp ? "yes" : "no") + ")"};
	}

	Outcome good_lambda()
	{
		const TimeGrid grid = make_grid(1.0, 64);
		const double theta = 0.05, p = 2.0;
		const int ks = grid.snap(0.25), kt = grid.intervals();
		const Index m = 20000, width = kt - ks + 1;
		const GoodLambdaConstants c = good_lambda_constants(theta);
		int passing = 0;
		for (int r = 0; r < 20; ++r)
		{
			const PathBundle bundle = sample_paths(grid, 1, m, 1 + static_cast<std::uint64_t>(r));
			const BsdeGridSolution y = closed_form_example(bundle);
			const PathMatrix w = brownian_paths(grid, 1, bundle.increments());
			PathMatrix a1(m, width), p1(m, width), a2(m, width), p2(m, width);
			std::vector<char> event(static_cast<std::size_t>(m));
			const double scale = std::pow(theta, 1 / p) / std::sqrt(1.0 - 0.25);
			for (Index i = 0; i < m; ++i)
			{
				event[static_cast<std::size_t>(i)] = w(i, ks) > 0;
				for (Index j = 0; j < width; ++j)
				{
					const int k = ks + static_cast<int>(j);
					const double rest = 1.0 - grid.node(k);
					a1(i, j) = (y.y(i, k) - y.y(i, ks)) * scale;
					p1(i, j) = std::sqrt(1 + w(i, k) * w(i, k) * rest);
					a2(i, j) = w(i, k) - w(i, ks);
					p2(i, j) = std::max(std::sqrt(rest / theta), 1e-9);
				}
			}
			const TailReport e = tail_check(a1, p1, event, "W_s > 0", theta);
			const TailReport b = tail_check(a2, p2, event, "W_s > 0", theta);
			passing += e.pass && b.pass ? 1 : 0;
		}
		return {passing == 20 && c.a == 3.0 && std::abs(c.alpha - 2 / 0.9) < 1e-15,
				"a=" + num(c.a) + " alpha=" + num(c.alpha) + ", runs passing " + std::to_string(passing) + "/20"};
	}

	Outcome bmo_functions()
	{
		double worst = 0;
		for (double y : {1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0})
			worst = std::max(worst, std::abs(phi_log_excess(phi_inverse_log_excess(y)) - y));
		const double psi_err = std::abs(psi(0.0, 2.0) - std::sqrt(6.0));
		bool rejects = true;
		for (double p : {1.5, 2.0, 3.0, 5.0})
		{
			bool threw = false;
			try
			{
				psi(phi(p), p);
			}
			catch (const InvalidArgument &)
			{
				threw = true;
			}
			rejects = rejects && threw && std::isfinite(psi(std::nextafter(phi(p), 0.0), p));
		}
		const TimeGrid grid = make_grid(1.0, 840);
		double sl_err = 0;
		for (const auto &e : sliceable_numbers(ProcessSample::constant(grid, 1.0), 8))
			sl_err = std::max(sl_err, std::abs(e.value - std::sqrt(1.0 / e.n)));
		return {worst <= 1e-10 && psi_err <= 1e-12 && rejects && sl_err <= 1e-12,
				"round trip " + num(worst) + ", |Psi(0,2)-sqrt6| " + num(psi_err) + ", rejection " +
					(rejects ? "exact" : "wrong") + ", max |sl_n - sqrt(T/n)| " + num(sl_err)};
	}

	Outcome fefferman()
	{
		const TimeGrid grid = make_grid(1.0, 50);
		std::vector<std::pair<std::string, std::pair<ProcessSample, ProcessSample>>> cases;
		cases.push_back({"constant", {ProcessSample::constant(grid, 1.0), ProcessSample::constant(grid, 1.0)}});
		ProcessSample z = ProcessSample::constant(grid, 1.0);
		for (int k = 0; k < 50; ++k)
			z.values(0, k) = 2.0 - grid.node(k);
		cases.push_back({"example", {z, z}});
		const Index m = 20000;
		const PathBundle bundle = sample_paths(grid, 1, m, 1);
		for (const auto &name : presets::names())
		{
			const SdeCoefficients c = presets::by_name(name);
			if (c.dim != 1)
				continue;
			const ForwardSolution f = euler_forward(c, Vector::Constant(1, name == "brownian" ? 0.0 : 1.0), bundle);
			PathMatrix sig(m, 50), x(m, 50);
			Matrix s(1, 1);
			for (Index i = 0; i < m; ++i)
				for (int k = 0; k < 50; ++k)
				{
					c.diffusion(grid.node(k), Vector::Constant(1, f.state(i, k)), s);
					sig(i, k) = std::abs(s(0, 0));
					x(i, k) = f.state(i, k);
				}
			cases.push_back({name, {ProcessSample{grid, 1, sig, 1, f.states}, ProcessSample{grid, 1, x, 1, f.states}}});
		}
		Outcome o{true, ""};
		for (const auto &[name, xy] : cases)
			for (double p : {2.0, 3.0})
			{
				const FeffermanReport r = fefferman_check(xy.first, xy.second, p);
				o.pass = o.pass && r.pass;
				o.detail += name + "/p" + num(p) + " ratio " + num(std::round(r.ratio * 1000) / 1000) + " ";
			}
		return o;
	}

	Outcome regression_solver()
	{
		RegressionConfig cfg;
		cfg.basis.degree = 3;
		std::vector<double> levels;
		double main_rms = 0;
		for (int n : {25, 50, 100})
		{
			const PathBundle bundle = sample_paths(make_grid(1.0, n), 1, 100000, 1 + static_cast<std::uint64_t>(n));
			const ForwardSolution fwd = euler_forward(presets::brownian(1), Vector::Zero(1), bundle);
			const auto err =
				node_rms_error(regression_backward_euler(presets::example_generator(), fwd, cfg), closed_form_example(bundle));
			double sq = 0;
			for (double e : err)
				sq += e * e;
			levels.push_back(std::sqrt(sq / static_cast<double>(err.size())));
			if (n == 50)
				main_rms = *std::max_element(err.begin(), err.end());
		}
		const bool rms_ok = main_rms <= 0.02 * 2.0;
		const bool monotone = levels[1] < levels[0] && levels[2] < levels[1];
		return {rms_ok && monotone, "max node RMS at N=50 " + num(main_rms) + " (<= 0.04: " + (rms_ok ? "yes" : "no") +
										"), RMS over N=25/50/100 " + num(levels[0]) + " / " + num(levels[1]) + " / " +
										num(levels[2]) + " (decreasing: " + (monotone ? "yes" : "no") + ")"};
	}

	std::map<std::string, std::string> csv_contents(const fs::path &dir)
	{
		std::map<std::string, std::string> out;
		if (!fs::is_directory(dir))
			return out;
		for (const auto &entry : fs::directory_iterator(dir))
			if (entry.path().extension() == ".csv")
			{
				std::ifstream in(entry.path(), std::ios::binary);
				std::stringstream ss;
				ss << in.rdbuf();
				out[entry.path().filename().string()] = ss.str();
			}
		return out;
	}

	Outcome reproducibility()
	{
		const char *cli = std::getenv("BSDELAB_CLI");
		if (!cli)
			return {false, "BSDELAB_CLI is not set"};
		const fs::path root = fs::temp_directory_path() / "bsdelab_acceptance_9";
		fs::remove_all(root);
		int identical = 0, total = 0;
		std::string mismatched;
		for (const auto &e : list_experiments())
		{
			std::map<std::string, std::string> first;
			bool same = true;
			for (int threads : {1, 8})
			{
				const fs::path dir = root / (e.name + "_" + std::to_string(threads));
				const std::string cmd = std::string("\"") + cli + "\" run " + e.name + " --paths 2000 --threads " +
										std::to_string(threads) + " --out \"" + dir.string() + "\" > /dev/null 2>&1";
				const int rc = std::system(cmd.c_str());
				if (rc == -1 || (WIFEXITED(rc) && WEXITSTATUS(rc) == 1))
					same = false;
				const auto contents = csv_contents(dir);
				if (contents.empty())
					same = false;
				if (threads == 1)
					first = contents;
				else
					same = same && contents == first;
			}
			++total;
			identical += same ? 1 : 0;
			if (!same)
				mismatched += e.name + " ";
		}
		fs::remove_all(root);
		return {identical == total, "experiments with identical CSVs (1 vs 8 threads) " + std::to_string(identical) + "/" +
										std::to_string(total) + (mismatched.empty() ? "" : ", differing: " + mismatched)};
	}

	struct Criterion
	{
		std::string name;
		double limit_seconds;
		std::function<Outcome()> check;
	};
} // namespace

int main(int argc, char **argv)
{
	CLI::App app{"Acceptance criteria"};
	std::vector<int> selected;
	app.add_option("--criterion", selected, "Criterion numbers to run (default: all)")->check(CLI::Range(1, 9));
	CLI11_PARSE(app, argc, argv);

	const std::vector<Criterion> criteria = {
		{"closed-form oracle moments", 60, closed_form_moments},
		{"sandwich inequality", 120, sandwich},
		{"coupling scaling", 180, coupling_scaling},
		{"weighted vs unweighted ratio", 120, weighted_ratio},
		{"good-lambda tail inequality", 180, good_lambda},
		{"Phi/Psi machinery", 1, bmo_functions},
		{"Fefferman inequality", 60, fefferman},
		{"regression solver vs oracle", 300, regression_solver},
		{"reproducibility", 600, reproducibility},
	};
	if (selected.empty())
		for (int i = 1; i <= 9; ++i)
			selected.push_back(i);

	bool all = true;
	for (int id : selected)
	{
		const Criterion &c = criteria[static_cast<std::size_t>(id - 1)];
		const auto start = std::chrono::steady_clock::now();
		Outcome o;
		try
		{
			o = c.check();
		}
		catch (const std::exception &e)
		{
			o = {false, std::string("error: ") + e.what()};
		}
		const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		const bool in_time = seconds < c.limit_seconds;
		const bool pass = o.pass && in_time;
		all = all && pass;
		std::cout << "AC" << id << " " << (pass ? "PASS" : "FAIL") << " " << c.name << ": " << o.detail << " ["
				  << num(std::round(seconds * 100) / 100) << " s, limit " << num(c.limit_seconds) << " s]" << std::endl;
	}
	return all ? 0 : 1;
}
