#include <bsdelab/bsde_solver.hpp>
#include <bsdelab/parallel.hpp>
#include <bsdelab/report.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace bsdelab
{
	int growth_template_violations(const GeneratorSpec &gen, int dim, double horizon, int samples, std::uint64_t seed)
	{
		require(static_cast<bool>(gen.f), "generator: f is not set");
		require(dim >= 1 && samples >= 0, "generator check: bad arguments");
		const CounterNormal rng(seed);
		int violations = 0;
		Vector x(dim), z0(dim), z1(dim);
		for (int n = 0; n < samples; ++n)
		{
			const auto path = static_cast<std::uint64_t>(n);
			std::uint32_t idx = 0;
			auto draw = [&](double scale) { return scale * rng.normal(Stream::Auxiliary, path, 0, idx++); };
			const double t = horizon * rng.uniform(Stream::Auxiliary, path, 1, 0);
			for (int i = 0; i < dim; ++i)
				x(i) = draw(2.0);
			const double y0 = draw(3.0), y1 = draw(3.0);
			for (int i = 0; i < dim; ++i)
			{
				z0(i) = draw(3.0);
				z1(i) = draw(3.0);
			}
			const double lhs = std::abs(gen.f(t, x, y0, z0) - gen.f(t, x, y1, z1));
			const double rhs = gen.lipschitz_y * std::abs(y0 - y1) +
							   gen.lipschitz_z * std::pow(1.0 + z0.norm() + z1.norm(), gen.theta) * (z0 - z1).norm();
			if (lhs > rhs * (1.0 + 1e-12) + 1e-12)
				++violations;
		}
		return violations;
	}

	namespace presets
	{
		GeneratorSpec example_generator()
		{
			GeneratorSpec g;
			g.name = "example";
			g.f = [](double, const ConstVectorRef &x, double, const ConstVectorRef &) { return x(0); };
			g.lipschitz_x = 1.0;
			g.terminal.of_state = [](const ConstVectorRef &x) { return x(0); };
			g.lipschitz_terminal = 1.0;
			return g;
		}

		GeneratorSpec martingale_generator()
		{
			GeneratorSpec g;
			g.name = "martingale";
			g.f = [](double, const ConstVectorRef &, double, const ConstVectorRef &) { return 0.0; };
			g.terminal.of_state = [](const ConstVectorRef &x) { return x(0); };
			g.lipschitz_terminal = 1.0;
			return g;
		}

		GeneratorSpec linear_decay_generator(double rate)
		{
			require(rate >= 0, "linear decay: rate must be >= 0");
			GeneratorSpec g;
			g.name = "linear_decay";
			g.f = [rate](double, const ConstVectorRef &, double y, const ConstVectorRef &) { return -rate * y; };
			g.lipschitz_y = rate;
			g.terminal.of_state = [](const ConstVectorRef &) { return 1.0; };
			return g;
		}
	} // namespace presets

	BsdeGridSolution closed_form_example(const PathBundle &bundle)
	{
		require(bundle.dim() == 1, "closed form example: needs d = 1");
		const TimeGrid &grid = bundle.grid();
		const int n = grid.intervals();
		const double horizon = grid.horizon();
		BsdeGridSolution sol{grid, 1, PathMatrix(bundle.paths(), n + 1), PathMatrix(bundle.paths(), n), "closed_form", {}};
		for (Index m = 0; m < bundle.paths(); ++m)
		{
			double w = 0.0;
			sol.y(m, 0) = 0.0;
			for (int k = 0; k < n; ++k)
			{
				sol.z(m, k) = 1.0 + horizon - grid.node(k);
				w += bundle.increment(m, k);
				sol.y(m, k + 1) = w * (1.0 + horizon - grid.node(k + 1));
			}
		}
		return sol;
	}

	namespace
	{
		Vector terminal_values(const GeneratorSpec &gen, const ForwardSolution &forward)
		{
			const Index m = forward.paths();
			if (gen.terminal.of_path)
			{
				require(forward.increments != nullptr, "terminal functional needs the driving increments");
				return evaluate(*gen.terminal.of_path, forward.grid, forward.dim, *forward.increments);
			}
			require(static_cast<bool>(gen.terminal.of_state), "generator: terminal condition is not set");
			const Matrix xt = forward.node_states(forward.grid.intervals());
			Vector out(m);
			for (Index i = 0; i < m; ++i)
				out(i) = gen.terminal.of_state(xt.row(i).transpose());
			return out;
		}
	} // namespace

	BsdeGridSolution regression_backward_euler(const GeneratorSpec &gen, const ForwardSolution &forward,
											   const RegressionConfig &config)
	{
		require(gen.theta == 0.0, "regression scheme: generators with theta > 0 are representable but not solvable by "
								  "the shipped scheme (Lipschitz-only by design)");
		require(static_cast<bool>(gen.f), "generator: f is not set");
		require(config.picard_iterations >= 1, "regression scheme: picard_iterations must be >= 1");
		require(config.truncation > 0, "regression scheme: truncation must be positive");
		require(forward.aborted.empty(), "regression scheme: forward solution has aborted paths");
		require(forward.increments != nullptr, "regression scheme: forward solution carries no increments");
		const TimeGrid &grid = forward.grid;
		const int n = grid.intervals();
		const int d = forward.dim;
		for (int k = 0; k < n; ++k)
			require(grid.dt(k) * gen.lipschitz_y < 1.0, "regression scheme: grid too coarse, need dt * L_y < 1");

		const Index m = forward.paths();
		const PathMatrix &dw = *forward.increments;
		BsdeGridSolution sol{grid, d, PathMatrix(m, n + 1), PathMatrix(m, static_cast<Index>(n) * d), "regression", {}};
		sol.diagnostics.condition_numbers.assign(static_cast<std::size_t>(n), 1.0);

		sol.y.col(n) = terminal_values(gen, forward);
		const std::size_t grain = 4096;
		for (int k = n - 1; k >= 0; --k)
		{
			const double t = grid.node(k);
			const double dt = grid.dt(k);
			const Matrix x = forward.node_states(k);
			const Vector next = sol.y.col(k + 1);
			const PolynomialRegression reg(x, next, config.basis);
			sol.diagnostics.condition_numbers[static_cast<std::size_t>(k)] = reg.diagnostics().condition_number;
			if (reg.diagnostics().ridge_fallback)
				++sol.diagnostics.ridge_fallbacks;

			const Vector centred = config.martingale_control ? Vector(next - reg.fitted()) : next;
			Matrix z(m, d);
			for (int i = 0; i < d; ++i)
			{
				const Vector target = centred.cwiseProduct(dw.col(static_cast<Index>(k) * d + i)) / dt;
				z.col(i) = reg.project(target);
			}
			Vector target = next;
			if (config.martingale_control)
				for (int i = 0; i < d; ++i)
					target -= z.col(i).cwiseProduct(dw.col(static_cast<Index>(k) * d + i));
			const Vector expected = config.martingale_control ? reg.project(target) : reg.fitted();

			Vector y = expected;
			std::vector<char> clipped(static_cast<std::size_t>(m), 0);
			parallel_for(static_cast<std::size_t>(m), grain, [&](std::size_t begin, std::size_t end) {
				for (std::size_t p = begin; p < end; ++p)
				{
					const auto row = static_cast<Index>(p);
					const Vector xr = x.row(row).transpose();
					const Vector zr = z.row(row).transpose();
					double value = expected(row);
					for (int it = 0; it < config.picard_iterations; ++it)
						value = expected(row) + dt * gen.f(t, xr, value, zr);
					if (!(std::abs(value) <= config.truncation))
					{
						value = std::isnan(value) ? 0.0 : std::clamp(value, -config.truncation, config.truncation);
						clipped[p] = 1;
					}
					y(row) = value;
				}
			});
			sol.diagnostics.truncations += std::count(clipped.begin(), clipped.end(), 1);
			sol.y.col(k) = y;
			sol.z.middleCols(static_cast<Index>(k) * d, d) = z;
		}
		return sol;
	}

	PathMatrix zpi_aggregate(const BsdeGridSolution &solution, const ForwardSolution &forward, const TimeGrid &coarse,
							 const ConditionalEstimator &estimator)
	{
		const TimeGrid &fine = solution.grid;
		require(fine.refines(coarse), "zpi: coarse grid nodes must be fine grid nodes");
		require(forward.grid == fine, "zpi: forward and backward grids differ");
		require(forward.paths() == solution.paths(), "zpi: path counts differ");
		const int d = solution.dim;
		const Index m = solution.paths();
		const int nc = coarse.intervals();
		PathMatrix out(m, static_cast<Index>(nc) * d);
		int j = 0;
		for (int kc = 0; kc < nc; ++kc)
		{
			const int a = fine.snap(coarse.node(kc));
			const int b = fine.snap(coarse.node(kc + 1));
			const double width = fine.node(b) - fine.node(a);
			const Matrix x = forward.node_states(a);
			for (int i = 0; i < d; ++i)
			{
				Vector avg = Vector::Zero(m);
				for (j = a; j < b; ++j)
					avg += solution.z.col(static_cast<Index>(j) * d + i) * fine.dt(j);
				avg /= width;
				out.col(static_cast<Index>(kc) * d + i) = cond_expect(avg, x, estimator).value;
			}
		}
		return out;
	}

	std::vector<double> node_rms_error(const BsdeGridSolution &solution, const BsdeGridSolution &reference)
	{
		require(solution.y.rows() == reference.y.rows() && solution.y.cols() == reference.y.cols(),
				"rms error: solution shapes differ");
		std::vector<double> out(static_cast<std::size_t>(solution.y.cols()));
		for (Index k = 0; k < solution.y.cols(); ++k)
			out[static_cast<std::size_t>(k)] = std::sqrt((solution.y.col(k) - reference.y.col(k)).squaredNorm() /
														 static_cast<double>(solution.y.rows()));
		return out;
	}

	void write_solution_csv(std::ostream &out, const BsdeGridSolution &solution)
	{
		out << "path,node,t,Y";
		for (int i = 0; i < solution.dim; ++i)
			out << ",Z_" << i + 1;
		out << '\n';
		const int n = solution.grid.intervals();
		for (Index m = 0; m < solution.paths(); ++m)
			for (int k = 0; k <= n; ++k)
			{
				out << m << ',' << k << ',' << format_number(solution.grid.node(k)) << ','
					<< format_number(solution.y(m, k));
				for (int i = 0; i < solution.dim; ++i)
				{
					out << ',';
					if (k < n)
						out << format_number(solution.z(m, static_cast<Index>(k) * solution.dim + i));
				}
				out << '\n';
			}
	}
} // namespace bsdelab
