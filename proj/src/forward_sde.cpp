#include <bsdelab/cond_estimators.hpp>
#include <bsdelab/forward_sde.hpp>
#include <bsdelab/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace bsdelab
{
	bool sigma_bound_holds(const SdeCoefficients &coeffs, const TimeGrid &grid, const PathMatrix &states)
	{
		const int d = coeffs.dim;
		Matrix sigma(d, d);
		for (Index m = 0; m < states.rows(); ++m)
			for (int k = 0; k <= grid.intervals(); ++k)
			{
				const Eigen::Map<const Vector> x(states.row(m).data() + static_cast<Index>(k) * d, d);
				if (!x.allFinite())
					continue;
				coeffs.diffusion(grid.node(k), x, sigma);
				if (sigma.norm() > coeffs.sigma_bound * (1 + 1e-12))
					return false;
			}
		return true;
	}

	namespace presets
	{
		SdeCoefficients brownian(int dim)
		{
			SdeCoefficients c;
			c.name = "brownian";
			c.dim = dim;
			c.drift = [](double, const ConstVectorRef &, VectorRef out) { out.setZero(); };
			c.diffusion = [](double, const ConstVectorRef &, MatrixRef out) { out.setIdentity(); };
			c.lipschitz = 0.0;
			c.sigma_bound = std::sqrt(static_cast<double>(dim));
			c.drift_growth = 0.0;
			return c;
		}

		SdeCoefficients capped_linear()
		{
			SdeCoefficients c;
			c.name = "capped_linear";
			c.dim = 1;
			c.drift = [](double, const ConstVectorRef &x, VectorRef out) { out(0) = -0.5 * x(0); };
			c.diffusion = [](double, const ConstVectorRef &x, MatrixRef out) { out(0, 0) = std::clamp(x(0), -2.0, 2.0); };
			c.lipschitz = 1.5;
			c.sigma_bound = 2.0;
			c.drift_growth = 0.5;
			return c;
		}

		SdeCoefficients capped_geometric(double cap)
		{
			SdeCoefficients c;
			c.name = "capped_geometric";
			c.dim = 1;
			c.drift = [](double, const ConstVectorRef &, VectorRef out) { out.setZero(); };
			c.diffusion = [cap](double, const ConstVectorRef &x, MatrixRef out) { out(0, 0) = std::min(x(0), cap); };
			c.lipschitz = 1.0;
			// unbounded below; the cap only binds from above
			c.sigma_bound = std::numeric_limits<double>::infinity();
			c.drift_growth = 0.0;
			return c;
		}

		std::vector<std::string> names() { return {"brownian", "capped_linear", "capped_geometric", "example"}; }

		SdeCoefficients by_name(const std::string &name)
		{
			if (name == "brownian" || name == "example")
				return brownian(1);
			if (name == "capped_linear")
				return capped_linear();
			if (name == "capped_geometric")
				return capped_geometric();
			throw InvalidArgument("unknown SDE preset '" + name + "'");
		}
	} // namespace presets

	std::string Driver::tag() const
	{
		if (!window)
			return "original";
		return "decoupled(" + std::to_string(window->s) + "," + std::to_string(window->t) + "]";
	}

	EulerStepper::EulerStepper(const SdeCoefficients &coeffs)
		: coeffs_(&coeffs), drift_(coeffs.dim), dw_(coeffs.dim), sigma_(coeffs.dim, coeffs.dim)
	{
		require(coeffs.dim >= 1 && coeffs.drift && coeffs.diffusion, "SDE coefficients incomplete");
	}

	bool EulerStepper::run(const TimeGrid &grid, const double *increments, int from, int to, double *states)
	{
		const int d = coeffs_->dim;
		for (int k = from; k < to; ++k)
		{
			const Eigen::Map<const Vector> x(states + static_cast<std::ptrdiff_t>(k) * d, d);
			Eigen::Map<Vector> next(states + static_cast<std::ptrdiff_t>(k + 1) * d, d);
			const Eigen::Map<const Vector> dw(increments + static_cast<std::ptrdiff_t>(k) * d, d);
			const double t = grid.node(k);
			coeffs_->drift(t, x, drift_);
			coeffs_->diffusion(t, x, sigma_);
			if (d == 1)
				next(0) = x(0) + drift_(0) * grid.dt(k) + sigma_(0, 0) * dw(0);
			else
				next = x + drift_ * grid.dt(k) + sigma_ * dw;
			if (!next.allFinite())
			{
				std::fill(states + static_cast<std::ptrdiff_t>(k + 1) * d,
						  states + static_cast<std::ptrdiff_t>(to + 1) * d, std::numeric_limits<double>::quiet_NaN());
				return false;
			}
		}
		return true;
	}

	ForwardSolution euler_forward(const SdeCoefficients &coeffs, const Vector &x0, const TimeGrid &grid,
								  std::shared_ptr<const PathMatrix> increments, std::string tag)
	{
		const int d = coeffs.dim;
		const int n = grid.intervals();
		require(x0.size() == d, "euler_forward: initial state dimension mismatch");
		require(increments && increments->cols() == static_cast<Index>(n) * d, "euler_forward: increment shape mismatch");
		ForwardSolution out{grid, d, PathMatrix(increments->rows(), static_cast<Index>(n + 1) * d), std::move(tag),
							increments, {}};
		std::vector<char> failed(static_cast<std::size_t>(increments->rows()), 0);
		parallel_for(static_cast<std::size_t>(increments->rows()), 1024, [&](std::size_t begin, std::size_t end) {
			EulerStepper stepper(coeffs);
			for (std::size_t m = begin; m < end; ++m)
			{
				const auto row = static_cast<Index>(m);
				double *states = out.states.row(row).data();
				std::copy_n(x0.data(), d, states);
				if (!stepper.run(grid, increments->row(row).data(), 0, n, states))
					failed[m] = 1;
			}
		});
		for (std::size_t m = 0; m < failed.size(); ++m)
			if (failed[m])
				out.aborted.push_back(static_cast<Index>(m));
		return out;
	}

	ForwardSolution euler_forward(const SdeCoefficients &coeffs, const Vector &x0, const PathBundle &bundle,
								  const Driver &driver)
	{
		require(bundle.dim() == coeffs.dim, "euler_forward: bundle and coefficient dimensions differ");
		std::shared_ptr<const PathMatrix> inc;
		if (driver.window)
			inc = std::make_shared<const PathMatrix>(decoupled_driver(bundle, *driver.window));
		else
			inc = std::make_shared<const PathMatrix>(bundle.increments());
		return euler_forward(coeffs, x0, bundle.grid(), std::move(inc), driver.tag());
	}

	GridFunctional terminal_functional(const SdeCoefficients &coeffs, const Vector &x0,
									   std::function<double(const ConstVectorRef &)> g)
	{
		GridFunctional xi;
		xi.evaluate = [coeffs, x0, g = std::move(g)](const PathView &path) {
			const int d = coeffs.dim;
			const int n = path.intervals();
			std::vector<double> states(static_cast<std::size_t>(n + 1) * static_cast<std::size_t>(d));
			std::copy_n(x0.data(), d, states.begin());
			EulerStepper stepper(coeffs);
			stepper.run(path.grid(), path.data(), 0, n, states.data());
			return g(Eigen::Map<const Vector>(states.data() + static_cast<std::ptrdiff_t>(n) * d, d));
		};
		return xi;
	}

	std::pair<double, double> fit_line(const std::vector<double> &x, const std::vector<double> &y)
	{
		require(x.size() == y.size() && x.size() >= 2, "fit_line: need at least two points");
		Matrix a(static_cast<Index>(x.size()), 2);
		Vector b(static_cast<Index>(x.size()));
		for (std::size_t i = 0; i < x.size(); ++i)
		{
			a(static_cast<Index>(i), 0) = x[i];
			a(static_cast<Index>(i), 1) = 1.0;
			b(static_cast<Index>(i)) = y[i];
		}
		const Vector coef = a.colPivHouseholderQr().solve(b);
		return {coef(0), coef(1)};
	}

	namespace
	{
		struct CouplingSums
		{
			// indexed [power][span]
			std::vector<std::vector<double>> sum, sum_sq, neg_sum, pos_sum;
			std::vector<Index> neg_count, pos_count;
			Index count = 0;

			CouplingSums(std::size_t powers, std::size_t spans)
				: sum(powers, std::vector<double>(spans, 0.0)), sum_sq(sum), neg_sum(sum), pos_sum(sum),
				  neg_count(spans, 0), pos_count(spans, 0)
			{
			}

			void merge(const CouplingSums &o)
			{
				for (std::size_t a = 0; a < sum.size(); ++a)
					for (std::size_t b = 0; b < sum[a].size(); ++b)
					{
						sum[a][b] += o.sum[a][b];
						sum_sq[a][b] += o.sum_sq[a][b];
						neg_sum[a][b] += o.neg_sum[a][b];
						pos_sum[a][b] += o.pos_sum[a][b];
					}
				for (std::size_t b = 0; b < neg_count.size(); ++b)
				{
					neg_count[b] += o.neg_count[b];
					pos_count[b] += o.pos_count[b];
				}
				count += o.count;
			}
		};

		std::vector<int> span_nodes(const TimeGrid &grid, int s_node, const std::vector<double> &spans)
		{
			std::vector<int> out;
			for (double span : spans)
			{
				require(span > 0, "coupling experiment: spans must be positive");
				const double t = grid.node(s_node) + span;
				const int node = grid.snap(t);
				require(std::abs(grid.node(node) - t) <= 1e-9 * grid.horizon(),
						"coupling experiment: span " + std::to_string(span) + " does not align with the grid");
				require(node > s_node, "coupling experiment: empty window");
				out.push_back(node);
			}
			return out;
		}

		CouplingSums accumulate(const SdeCoefficients &coeffs, const Vector &x0, const TimeGrid &grid, int dim,
								const PathMatrix &w, const PathMatrix &w_copy, int s_node, const std::vector<int> &t_nodes,
								const std::vector<double> &powers, std::size_t begin, std::size_t end)
		{
			const int n = grid.intervals();
			const std::size_t width = static_cast<std::size_t>(n) * static_cast<std::size_t>(dim);
			CouplingSums sums(powers.size(), t_nodes.size());
			EulerStepper stepper(coeffs);
			std::vector<double> x(static_cast<std::size_t>(n + 1) * static_cast<std::size_t>(dim));
			std::vector<double> xd(x.size());
			std::vector<double> inc(width);
			for (std::size_t m = begin; m < end; ++m)
			{
				const auto row = static_cast<Index>(m);
				std::copy_n(x0.data(), dim, x.begin());
				stepper.run(grid, w.row(row).data(), 0, n, x.data());
				double w_s = 0.0;
				for (int k = 0; k < s_node; ++k)
					w_s += w(row, k * dim);
				const bool positive = w_s > 0.0;
				for (std::size_t j = 0; j < t_nodes.size(); ++j)
				{
					std::copy_n(w.row(row).data(), width, inc.begin());
					const int t_node = t_nodes[j];
					std::copy_n(w_copy.row(row).data() + static_cast<std::ptrdiff_t>(s_node) * dim,
								static_cast<std::size_t>(t_node - s_node) * static_cast<std::size_t>(dim),
								inc.begin() + static_cast<std::ptrdiff_t>(s_node) * dim);
					std::copy_n(x.begin(), static_cast<std::size_t>(s_node + 1) * static_cast<std::size_t>(dim), xd.begin());
					stepper.run(grid, inc.data(), s_node, n, xd.data());
					double sup = 0.0;
					for (int r = s_node; r <= n; ++r)
					{
						double sq = 0.0;
						for (int i = 0; i < dim; ++i)
						{
							const double diff = xd[static_cast<std::size_t>(r * dim + i)] - x[static_cast<std::size_t>(r * dim + i)];
							sq += diff * diff;
						}
						sup = std::max(sup, std::sqrt(sq));
					}
					for (std::size_t a = 0; a < powers.size(); ++a)
					{
						const double v = std::pow(sup, powers[a]);
						sums.sum[a][j] += v;
						sums.sum_sq[a][j] += v * v;
						(positive ? sums.pos_sum : sums.neg_sum)[a][j] += v;
					}
					++(positive ? sums.pos_count : sums.neg_count)[j];
				}
				++sums.count;
			}
			return sums;
		}

		std::vector<CouplingTable> finish(const CouplingSums &sums, const TimeGrid &grid, int s_node,
										  const std::vector<double> &spans, const std::vector<double> &powers)
		{
			std::vector<CouplingTable> out;
			const double n = static_cast<double>(sums.count);
			for (std::size_t a = 0; a < powers.size(); ++a)
			{
				CouplingTable table;
				table.s = grid.node(s_node);
				table.p = powers[a];
				table.paths = sums.count;
				std::vector<double> lx, ly;
				for (std::size_t j = 0; j < spans.size(); ++j)
				{
					CouplingRow row;
					row.span = spans[j];
					row.estimate = sums.sum[a][j] / n;
					const double var = n > 1 ? std::max(0.0, (sums.sum_sq[a][j] - n * row.estimate * row.estimate) / (n - 1)) : 0.0;
					row.se = std::sqrt(var / n);
					const auto nn = static_cast<double>(sums.neg_count[j]);
					const auto np = static_cast<double>(sums.pos_count[j]);
					row.negative_stratum = nn > 0 ? sums.neg_sum[a][j] / nn : std::numeric_limits<double>::quiet_NaN();
					row.positive_stratum = np > 0 ? sums.pos_sum[a][j] / np : std::numeric_limits<double>::quiet_NaN();
					table.rows.push_back(row);
					lx.push_back(std::log(row.span));
					ly.push_back(row.estimate > 0 ? std::log(row.estimate) : std::numeric_limits<double>::quiet_NaN());
				}
				std::tie(table.slope, table.intercept) = fit_line(lx, ly);
				out.push_back(std::move(table));
			}
			return out;
		}

		void check_coupling_args(const std::vector<double> &spans, const std::vector<double> &powers)
		{
			require(spans.size() >= 3, "coupling experiment: need at least 3 spans to fit a slope");
			for (double p : powers)
				require(p >= 2, "coupling experiment: need p >= 2");
		}
	} // namespace

	CouplingTable coupling_distance_experiment(const SdeCoefficients &coeffs, const Vector &x0, const PathBundle &bundle,
											   double s, const std::vector<double> &spans, double p)
	{
		check_coupling_args(spans, {p});
		require(bundle.dim() == coeffs.dim && x0.size() == coeffs.dim, "coupling experiment: dimension mismatch");
		const TimeGrid &grid = bundle.grid();
		const int s_node = grid.snap(s);
		const auto t_nodes = span_nodes(grid, s_node, spans);
		const auto paths = static_cast<std::size_t>(bundle.paths());
		const std::size_t grain = 1024;
		const std::size_t blocks = (paths + grain - 1) / grain;
		std::vector<CouplingSums> partial(blocks, CouplingSums(1, spans.size()));
		parallel_for(blocks, 1, [&](std::size_t b0, std::size_t b1) {
			for (std::size_t b = b0; b < b1; ++b)
				partial[b] = accumulate(coeffs, x0, grid, bundle.dim(), bundle.increments(), bundle.copy(), s_node, t_nodes,
										{p}, b * grain, std::min(paths, (b + 1) * grain));
		});
		CouplingSums total(1, spans.size());
		for (const auto &part : partial)
			total.merge(part);
		return finish(total, grid, s_node, spans, {p}).front();
	}

	std::vector<CouplingTable> coupling_distance_ensemble(const SdeCoefficients &coeffs, const Vector &x0,
														  const TimeGrid &grid, Index paths, std::uint64_t seed, double s,
														  const std::vector<double> &spans,
														  const std::vector<double> &powers, Index chunk)
	{
		check_coupling_args(spans, powers);
		require(!powers.empty(), "coupling experiment: no powers requested");
		require(paths >= 1 && chunk >= 1, "coupling experiment: need paths >= 1");
		require(x0.size() == coeffs.dim, "coupling experiment: dimension mismatch");
		const int s_node = grid.snap(s);
		const auto t_nodes = span_nodes(grid, s_node, spans);
		const auto blocks = static_cast<std::size_t>((paths + chunk - 1) / chunk);
		std::vector<CouplingSums> partial(blocks, CouplingSums(powers.size(), spans.size()));
		// one block per task; each block samples its own paths
		parallel_for(blocks, 1, [&](std::size_t b0, std::size_t b1) {
			for (std::size_t b = b0; b < b1; ++b)
			{
				const auto first = static_cast<Index>(b) * chunk;
				const Index count = std::min(chunk, paths - first);
				const PathBundle part = sample_paths(grid, coeffs.dim, count, seed, static_cast<std::uint64_t>(first));
				partial[b] = accumulate(coeffs, x0, grid, coeffs.dim, part.increments(), part.copy(), s_node, t_nodes,
										powers, 0, static_cast<std::size_t>(count));
			}
		});
		CouplingSums total(powers.size(), spans.size());
		for (const auto &part : partial)
			total.merge(part);
		return finish(total, grid, s_node, spans, powers);
	}

	void save_forward(const std::string &path, const PathBundle &bundle, const ForwardSolution &solution)
	{
		require(solution.paths() == bundle.paths(), "save_forward: path count mismatch");
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot open " + path + " for writing");
		write_bundle(out, bundle);
		detail::write_u64(out, static_cast<std::uint64_t>(solution.dim));
		for (Index m = 0; m < solution.states.rows(); ++m)
			for (Index c = 0; c < solution.states.cols(); ++c)
				detail::write_f64(out, solution.states(m, c));
	}
} // namespace bsdelab
