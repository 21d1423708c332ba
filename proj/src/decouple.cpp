#include <bsdelab/cond_estimators.hpp>
#include <bsdelab/decouple.hpp>
#include <bsdelab/parallel.hpp>

#include <algorithm>
#include <cmath>

namespace bsdelab
{
	double PathView::value(int node, int coord) const
	{
		double w = 0.0;
		for (int k = 0; k < node; ++k)
			w += increments_[k * dim_ + coord];
		return w;
	}

	std::vector<double> PathView::values() const
	{
		std::vector<double> out(static_cast<std::size_t>(intervals() + 1) * static_cast<std::size_t>(dim_));
		cumulate(increments_, intervals(), dim_, out.data());
		return out;
	}

	DecoupleWindow DecoupleWindow::on(const TimeGrid &grid, double s, double t)
	{
		return nodes(grid, grid.snap(s), grid.snap(t));
	}

	DecoupleWindow DecoupleWindow::nodes(const TimeGrid &grid, int s, int t)
	{
		require(s >= 0 && t <= grid.intervals(), "decouple window: nodes outside the grid");
		require(s < t, "decouple window: need s < t");
		return DecoupleWindow{s, t};
	}

	namespace
	{
		bool reads_window(const GridFunctional &xi, const DecoupleWindow &window)
		{
			if (!xi.reads)
				return true;
			return std::any_of(xi.reads->begin(), xi.reads->end(), [&](int k) { return window.contains_interval(k); });
		}

		void check_window(const TimeGrid &grid, const DecoupleWindow &window)
		{
			require(window.s >= 0 && window.s < window.t && window.t <= grid.intervals(),
					"decouple window: not a nonempty window on this grid");
		}
	} // namespace

	PathMatrix mixed_driver(const PathBundle &bundle, const MixingFunction &phi)
	{
		const int n = bundle.grid().intervals();
		const int d = bundle.dim();
		require(static_cast<int>(phi.values().size()) == n, "mixed_driver: phi must be defined on every interval");
		PathMatrix out(bundle.paths(), static_cast<Index>(n) * d);
		for (int k = 0; k < n; ++k)
		{
			const double a = phi[k];
			for (int i = 0; i < d; ++i)
			{
				const Index c = k * d + i;
				if (a == 0.0)
					out.col(c) = bundle.increments().col(c);
				else if (a == 1.0)
					out.col(c) = bundle.copy().col(c);
				else
					out.col(c) = std::sqrt(1.0 - a * a) * bundle.increments().col(c) + a * bundle.copy().col(c);
			}
		}
		return out;
	}

	PathMatrix substitute_window(const PathMatrix &primary, const PathMatrix &replacement, int dim,
								 const DecoupleWindow &window)
	{
		require(primary.rows() == replacement.rows() && primary.cols() == replacement.cols(),
				"substitute_window: shape mismatch");
		require(window.s >= 0 && window.s < window.t && static_cast<Index>(window.t) * dim <= primary.cols(),
				"substitute_window: window off-grid");
		PathMatrix out = primary;
		const Index first = static_cast<Index>(window.s) * dim;
		const Index width = static_cast<Index>(window.t - window.s) * dim;
		out.middleCols(first, width) = replacement.middleCols(first, width);
		return out;
	}

	PathMatrix decoupled_driver(const PathBundle &bundle, const DecoupleWindow &window)
	{
		check_window(bundle.grid(), window);
		return substitute_window(bundle.increments(), bundle.copy(), bundle.dim(), window);
	}

	Vector evaluate(const GridFunctional &xi, const TimeGrid &grid, int dim, const PathMatrix &increments)
	{
		require(increments.cols() == static_cast<Index>(grid.intervals()) * dim, "evaluate: increment shape mismatch");
		Vector out(increments.rows());
		parallel_for(static_cast<std::size_t>(increments.rows()), 512, [&](std::size_t begin, std::size_t end) {
			for (std::size_t m = begin; m < end; ++m)
			{
				const auto row = static_cast<Index>(m);
				out(row) = xi.evaluate(PathView(grid, dim, increments.row(row).data()));
			}
		});
		return out;
	}

	Vector decouple_functional(const GridFunctional &xi, const PathBundle &bundle, const DecoupleWindow &window)
	{
		check_window(bundle.grid(), window);
		if (!reads_window(xi, window))
			return evaluate(xi, bundle);
		return evaluate(xi, bundle.grid(), bundle.dim(), decoupled_driver(bundle, window));
	}

	void redraw_window(const TimeGrid &grid, int dim, const DecoupleWindow &window, const CounterNormal &normals,
					   Stream stream, std::uint64_t path, std::uint32_t redraw, double *increments)
	{
		for (int k = window.s; k < window.t; ++k)
		{
			const double scale = std::sqrt(grid.dt(k));
			for (int i = 0; i < dim; ++i)
			{
				const auto index = static_cast<std::uint32_t>(k * dim + i);
				increments[k * dim + i] = scale * normals.normal(stream, path, redraw, index);
			}
		}
	}

	ConditionalSample conditional_over_window(const GridFunctional &xi, const PathBundle &bundle,
											  const DecoupleWindow &window, int inner_samples, std::uint64_t seed)
	{
		require(inner_samples >= 1, "conditional_over_window: need K >= 1");
		check_window(bundle.grid(), window);
		const Index paths = bundle.paths();
		ConditionalSample out{Vector(paths), Vector::Zero(paths)};
		if (!reads_window(xi, window))
		{
			out.value = evaluate(xi, bundle);
			return out;
		}

		const TimeGrid &grid = bundle.grid();
		const int d = bundle.dim();
		const CounterNormal normals(seed);
		parallel_for(static_cast<std::size_t>(paths), 64, [&](std::size_t begin, std::size_t end) {
			std::vector<double> scratch(static_cast<std::size_t>(bundle.increments().cols()));
			for (std::size_t m = begin; m < end; ++m)
			{
				const auto row = static_cast<Index>(m);
				std::copy_n(bundle.increments().row(row).data(), scratch.size(), scratch.begin());
				const std::uint64_t global = bundle.first_path() + m;
				// Welford: a constant integrand reproduces itself exactly
				double mean = 0.0, m2 = 0.0;
				for (int r = 0; r < inner_samples; ++r)
				{
					redraw_window(grid, d, window, normals, Stream::WindowRedraw, global, static_cast<std::uint32_t>(r),
								  scratch.data());
					const double v = xi.evaluate(PathView(grid, d, scratch.data()));
					const double delta = v - mean;
					mean += delta / (r + 1);
					m2 += delta * (v - mean);
				}
				out.value(row) = mean;
				out.se(row) = inner_samples > 1 ? std::sqrt(m2 / (inner_samples - 1) / inner_samples) : 0.0;
			}
		});
		return out;
	}

	SandwichReport sandwich_check(const GridFunctional &xi, const PathBundle &bundle, const DecoupleWindow &window,
								  double p, const SandwichConfig &config)
	{
		require(p >= 1, "sandwich_check: need p >= 1");
		const Vector base = evaluate(xi, bundle);
		const Vector decoupled = decouple_functional(xi, bundle, window);
		const ConditionalSample cond = conditional_over_window(xi, bundle, window, config.inner_samples, config.seed);

		const Vector rhs_terms = (base - decoupled).array().abs().pow(p).matrix();
		Vector mid_terms = (base - cond.value).array().abs().pow(p).matrix();

		SandwichReport report;
		report.p = p;
		report.inner_samples = config.inner_samples;
		// base is independent of the K redraws given G_s^t, so for p = 2
		// E|xi - mean_K|^2 = (1 + 1/K) E|xi - E[xi|G]|^2 exactly.
		if (p == 2.0)
		{
			mid_terms *= static_cast<double>(config.inner_samples) / (config.inner_samples + 1.0);
			report.mid_bias_corrected = true;
		}
		const MeanSe r = mean_se(rhs_terms);
		const MeanSe mid = mean_se(mid_terms);
		const double shrink = std::pow(2.0, -p);
		report.rhs = r.mean;
		report.rhs_se = r.se;
		report.mid = mid.mean;
		report.mid_se = mid.se;
		report.lhs = shrink * r.mean;
		report.lhs_se = shrink * r.se;

		const double tol = config.tolerance_se;
		const bool lower = report.lhs <= report.mid + tol * std::hypot(report.lhs_se, report.mid_se);
		const bool upper = report.mid <= report.rhs + tol * std::hypot(report.mid_se, report.rhs_se);
		report.pass = lower && upper;
		return report;
	}
} // namespace bsdelab
