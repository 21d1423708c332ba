#pragma once

#include <bsdelab/grid_paths.hpp>

#include <functional>
#include <optional>
#include <vector>

namespace bsdelab
{
	/// Read-only view of one path's increments on a grid.
	class PathView
	{
	public:
		PathView(const TimeGrid &grid, int dim, const double *increments)
			: grid_(&grid), dim_(dim), increments_(increments)
		{
		}

		const TimeGrid &grid() const { return *grid_; }
		int dim() const { return dim_; }
		int intervals() const { return grid_->intervals(); }
		const double *data() const { return increments_; }

		double increment(int k, int coord = 0) const { return increments_[k * dim_ + coord]; }
		/// W at a node (prefix sum).
		double value(int node, int coord = 0) const;
		/// W at every node, node-major, (N+1)*d entries.
		std::vector<double> values() const;

	private:
		const TimeGrid *grid_;
		int dim_;
		const double *increments_;
	};

	/// A Borel function of finitely many grid increments standing in for a
	/// random variable on Wiener space.
	struct GridFunctional
	{
		std::function<double(const PathView &)> evaluate;
		/// Interval indices the functional reads, when known. Used to skip work
		/// and checked by the test harness.
		std::optional<std::vector<int>> reads;
	};

	/// The window (s, t] between two grid nodes, s < t.
	struct DecoupleWindow
	{
		int s = 0;
		int t = 0;

		/// Snaps s and t to grid nodes; rejects empty windows.
		static DecoupleWindow on(const TimeGrid &grid, double s, double t);
		static DecoupleWindow nodes(const TimeGrid &grid, int s, int t);

		bool contains_interval(int k) const { return k >= s && k < t; }
	};

	/// Increments of W^phi: sqrt(1 - phi_k^2) dW_k + phi_k dW'_k.
	PathMatrix mixed_driver(const PathBundle &bundle, const MixingFunction &phi);

	/// Increments of W^{(s,t]}: dW outside the window, dW' inside.
	PathMatrix decoupled_driver(const PathBundle &bundle, const DecoupleWindow &window);

	/// Same substitution on raw increment arrays.
	PathMatrix substitute_window(const PathMatrix &primary, const PathMatrix &replacement, int dim,
								 const DecoupleWindow &window);

	/// xi evaluated on every row of an increment array.
	Vector evaluate(const GridFunctional &xi, const TimeGrid &grid, int dim, const PathMatrix &increments);
	inline Vector evaluate(const GridFunctional &xi, const PathBundle &bundle)
	{
		return evaluate(xi, bundle.grid(), bundle.dim(), bundle.increments());
	}

	/// xi^{(s,t]} path by path.
	Vector decouple_functional(const GridFunctional &xi, const PathBundle &bundle, const DecoupleWindow &window);

	struct ConditionalSample
	{
		Vector value;
		Vector se;
	};

	/// Estimates E[xi | G_s^t] per path by averaging xi over K redraws of the
	/// increments inside (s, t], all other increments held fixed. Redraw r of
	/// path m uses the stream keyed by (seed, m, r).
	ConditionalSample conditional_over_window(const GridFunctional &xi, const PathBundle &bundle,
											  const DecoupleWindow &window, int inner_samples, std::uint64_t seed);

	/// Redraws the window increments of one path in place.
	void redraw_window(const TimeGrid &grid, int dim, const DecoupleWindow &window, const CounterNormal &normals,
					   Stream stream, std::uint64_t path, std::uint32_t redraw, double *increments);

	struct SandwichConfig
	{
		int inner_samples = 64;
		std::uint64_t seed = 1;
		/// Pass threshold in combined standard errors.
		double tolerance_se = 3.0;
	};

	/// Unconditional estimates of the three terms of
	///   2^-p E|xi - xi^(s,t]|^p <= E|xi - E[xi|G_s^t]|^p <= E|xi - xi^(s,t]|^p.
	struct SandwichReport
	{
		double p = 2;
		double lhs = 0, lhs_se = 0;
		double mid = 0, mid_se = 0;
		double rhs = 0, rhs_se = 0;
		/// true when mid was corrected for the O(1/K) inner-sampling bias (p = 2)
		bool mid_bias_corrected = false;
		int inner_samples = 0;
		bool pass = false;
	};

	SandwichReport sandwich_check(const GridFunctional &xi, const PathBundle &bundle, const DecoupleWindow &window,
								  double p, const SandwichConfig &config = {});
} // namespace bsdelab
