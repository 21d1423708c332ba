#pragma once

#include <bsdelab/rng.hpp>
#include <bsdelab/types.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace bsdelab
{
	/// Partition 0 = t_0 < t_1 < ... < t_N = T.
	class TimeGrid
	{
	public:
		enum class Scheme
		{
			Uniform
		};

		/// Uniform nodes t_k = kT/N.
		static TimeGrid uniform(double horizon, int intervals);

		double horizon() const { return nodes_.back(); }
		int intervals() const { return static_cast<int>(nodes_.size()) - 1; }
		double node(int k) const { return nodes_.at(static_cast<std::size_t>(k)); }
		double dt(int k) const { return nodes_.at(static_cast<std::size_t>(k) + 1) - nodes_.at(static_cast<std::size_t>(k)); }
		const std::vector<double> &nodes() const { return nodes_; }

		/// Index of the node nearest to t. Throws when t is farther than half a
		/// step from every node.
		int snap(double t) const;

		/// True when every node of `coarse` is also a node of this grid.
		bool refines(const TimeGrid &coarse) const;

		bool operator==(const TimeGrid &other) const { return nodes_ == other.nodes_; }

	private:
		explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {}
		std::vector<double> nodes_;
	};

	TimeGrid make_grid(double horizon, int intervals, TimeGrid::Scheme scheme = TimeGrid::Scheme::Uniform);

	/// M paths of d-dimensional Brownian increments on a grid together with an
	/// independent copy (W and W'). Increments are stored path-major: row m,
	/// column k*d + i holds the i-th coordinate of W_{t_{k+1}} - W_{t_k}.
	///
	/// Every increment is a pure function of (seed, stream, global path index,
	/// step, coordinate), so a bundle over paths [first, first + M) is
	/// bit-identical to the corresponding rows of a larger bundle.
	class PathBundle
	{
	public:
		PathBundle(TimeGrid grid, int dim, PathMatrix increments, PathMatrix copy, std::uint64_t seed,
				   std::uint64_t first_path = 0);

		const TimeGrid &grid() const { return grid_; }
		int dim() const { return dim_; }
		Index paths() const { return increments_.rows(); }
		std::uint64_t seed() const { return seed_; }
		std::uint64_t first_path() const { return first_path_; }

		const PathMatrix &increments() const { return increments_; }
		const PathMatrix &copy() const { return copy_; }

		double increment(Index path, int step, int coord = 0) const { return increments_(path, step * dim_ + coord); }
		double copy_increment(Index path, int step, int coord = 0) const { return copy_(path, step * dim_ + coord); }

	private:
		TimeGrid grid_;
		int dim_;
		PathMatrix increments_;
		PathMatrix copy_;
		std::uint64_t seed_;
		std::uint64_t first_path_;
	};

	/// Samples paths [first_path, first_path + paths) of the ensemble keyed by seed.
	PathBundle sample_paths(const TimeGrid &grid, int dim, Index paths, std::uint64_t seed, std::uint64_t first_path = 0);

	/// W at a node: prefix sum of increments (zero at node 0).
	Vector brownian_at(const PathBundle &bundle, Index path, int node);

	/// Prefix sums of one increment row; result has (N+1)*d entries, node-major.
	void cumulate(const double *increments, int intervals, int dim, double *out);

	/// W for every path and node, shape M x (N+1)*d.
	PathMatrix brownian_paths(const TimeGrid &grid, int dim, const PathMatrix &increments);

	/// Per-interval mixing weights phi_k in [0, 1].
	class MixingFunction
	{
	public:
		static MixingFunction constant(const TimeGrid &grid, double value);
		static MixingFunction per_interval(std::vector<double> values);
		/// Indicator of (s, t]; s and t must be grid nodes.
		static MixingFunction window(const TimeGrid &grid, double s, double t);

		const std::vector<double> &values() const { return values_; }
		double operator[](int k) const { return values_.at(static_cast<std::size_t>(k)); }

	private:
		explicit MixingFunction(std::vector<double> values);
		std::vector<double> values_;
	};

	// Binary bundle format (little-endian):
	//   u64 version, f64 T, u64 N, u64 d, u64 M, u64 seed, f64[M*N*d] dW, f64[M*N*d] dW'
	inline constexpr std::uint64_t kBundleFormatVersion = 1;

	void write_bundle(std::ostream &out, const PathBundle &bundle);
	PathBundle read_bundle(std::istream &in);
	void save_bundle(const std::string &path, const PathBundle &bundle);
	PathBundle load_bundle(const std::string &path);

	namespace detail
	{
		void write_u64(std::ostream &out, std::uint64_t value);
		void write_f64(std::ostream &out, double value);
		std::uint64_t read_u64(std::istream &in);
		double read_f64(std::istream &in);
	} // namespace detail
} // namespace bsdelab
