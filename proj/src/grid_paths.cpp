#include <bsdelab/grid_paths.hpp>
#include <bsdelab/parallel.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace bsdelab
{
	TimeGrid TimeGrid::uniform(double horizon, int intervals)
	{
		require(std::isfinite(horizon) && horizon > 0, "time grid: horizon must be positive");
		require(intervals >= 1, "time grid: need at least one interval");
		std::vector<double> nodes(static_cast<std::size_t>(intervals) + 1);
		for (int k = 0; k <= intervals; ++k)
			nodes[static_cast<std::size_t>(k)] = k * horizon / intervals;
		nodes.back() = horizon;
		return TimeGrid(std::move(nodes));
	}

	int TimeGrid::snap(double t) const
	{
		const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
		int best;
		if (it == nodes_.end())
			best = intervals();
		else if (it == nodes_.begin())
			best = 0;
		else
		{
			const int hi = static_cast<int>(it - nodes_.begin());
			best = (t - nodes_[hi - 1] <= nodes_[hi] - t) ? hi - 1 : hi;
		}
		const int neighbour = best < intervals() ? best : best - 1;
		const double half_step = 0.5 * dt(neighbour);
		const double tol = half_step * (1 + 1e-12);
		if (!(std::abs(t - node(best)) <= tol))
			throw InvalidArgument("time " + std::to_string(t) + " is more than half a step away from the grid");
		return best;
	}

	bool TimeGrid::refines(const TimeGrid &coarse) const
	{
		const double tol = 1e-12 * horizon();
		if (std::abs(coarse.horizon() - horizon()) > tol)
			return false;
		for (double t : coarse.nodes())
		{
			const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
			if (it == nodes_.end() || std::abs(*it - t) > tol)
				return false;
		}
		return true;
	}

	TimeGrid make_grid(double horizon, int intervals, TimeGrid::Scheme scheme)
	{
		switch (scheme)
		{
		case TimeGrid::Scheme::Uniform:
			return TimeGrid::uniform(horizon, intervals);
		}
		throw InvalidArgument("time grid: unknown scheme");
	}

	PathBundle::PathBundle(TimeGrid grid, int dim, PathMatrix increments, PathMatrix copy, std::uint64_t seed,
						   std::uint64_t first_path)
		: grid_(std::move(grid)), dim_(dim), increments_(std::move(increments)), copy_(std::move(copy)), seed_(seed),
		  first_path_(first_path)
	{
		require(dim_ >= 1, "path bundle: dimension must be positive");
		const Index cols = static_cast<Index>(grid_.intervals()) * dim_;
		require(increments_.cols() == cols && copy_.cols() == cols, "path bundle: increment columns must equal N*d");
		require(increments_.rows() == copy_.rows() && increments_.rows() >= 1, "path bundle: need matching, nonempty rows");
	}

	PathBundle sample_paths(const TimeGrid &grid, int dim, Index paths, std::uint64_t seed, std::uint64_t first_path)
	{
		require(dim >= 1, "sample_paths: dimension must be positive");
		require(paths >= 1, "sample_paths: need at least one path");
		const int n = grid.intervals();
		const Index cols = static_cast<Index>(n) * dim;
		std::vector<double> scale(static_cast<std::size_t>(n));
		for (int k = 0; k < n; ++k)
			scale[static_cast<std::size_t>(k)] = std::sqrt(grid.dt(k));

		PathMatrix w(paths, cols), w_copy(paths, cols);
		const CounterNormal normals(seed);
		parallel_for(static_cast<std::size_t>(paths), 1024, [&](std::size_t begin, std::size_t end) {
			for (std::size_t m = begin; m < end; ++m)
			{
				const auto row = static_cast<Index>(m);
				const std::uint64_t global = first_path + m;
				normals.fill(Stream::Primary, global, 0, std::span<double>(w.row(row).data(), static_cast<std::size_t>(cols)));
				normals.fill(Stream::Copy, global, 0, std::span<double>(w_copy.row(row).data(), static_cast<std::size_t>(cols)));
				for (int k = 0; k < n; ++k)
					for (int i = 0; i < dim; ++i)
					{
						w(row, k * dim + i) *= scale[static_cast<std::size_t>(k)];
						w_copy(row, k * dim + i) *= scale[static_cast<std::size_t>(k)];
					}
			}
		});
		return PathBundle(grid, dim, std::move(w), std::move(w_copy), seed, first_path);
	}

	Vector brownian_at(const PathBundle &bundle, Index path, int node)
	{
		require(path >= 0 && path < bundle.paths(), "brownian_at: path index out of range");
		require(node >= 0 && node <= bundle.grid().intervals(), "brownian_at: node index out of range");
		Vector w = Vector::Zero(bundle.dim());
		for (int k = 0; k < node; ++k)
			for (int i = 0; i < bundle.dim(); ++i)
				w(i) += bundle.increment(path, k, i);
		return w;
	}

	void cumulate(const double *increments, int intervals, int dim, double *out)
	{
		for (int i = 0; i < dim; ++i)
			out[i] = 0.0;
		for (int k = 0; k < intervals; ++k)
			for (int i = 0; i < dim; ++i)
				out[(k + 1) * dim + i] = out[k * dim + i] + increments[k * dim + i];
	}

	PathMatrix brownian_paths(const TimeGrid &grid, int dim, const PathMatrix &increments)
	{
		const int n = grid.intervals();
		require(increments.cols() == static_cast<Index>(n) * dim, "brownian_paths: column mismatch");
		PathMatrix w(increments.rows(), static_cast<Index>(n + 1) * dim);
		for (Index m = 0; m < increments.rows(); ++m)
			cumulate(increments.row(m).data(), n, dim, w.row(m).data());
		return w;
	}

	MixingFunction::MixingFunction(std::vector<double> values) : values_(std::move(values))
	{
		require(!values_.empty(), "mixing function: no intervals");
		for (double v : values_)
			require(v >= 0.0 && v <= 1.0, "mixing function: values must lie in [0, 1]");
	}

	MixingFunction MixingFunction::constant(const TimeGrid &grid, double value)
	{
		return MixingFunction(std::vector<double>(static_cast<std::size_t>(grid.intervals()), value));
	}

	MixingFunction MixingFunction::per_interval(std::vector<double> values) { return MixingFunction(std::move(values)); }

	MixingFunction MixingFunction::window(const TimeGrid &grid, double s, double t)
	{
		const int a = grid.snap(s);
		const int b = grid.snap(t);
		require(a < b, "mixing window: need s < t");
		std::vector<double> values(static_cast<std::size_t>(grid.intervals()), 0.0);
		for (int k = a; k < b; ++k)
			values[static_cast<std::size_t>(k)] = 1.0;
		return MixingFunction(std::move(values));
	}

	namespace detail
	{
		void write_u64(std::ostream &out, std::uint64_t value)
		{
			unsigned char bytes[8];
			for (int i = 0; i < 8; ++i)
				bytes[i] = static_cast<unsigned char>(value >> (8 * i));
			out.write(reinterpret_cast<const char *>(bytes), 8);
		}

		void write_f64(std::ostream &out, double value) { write_u64(out, std::bit_cast<std::uint64_t>(value)); }

		std::uint64_t read_u64(std::istream &in)
		{
			unsigned char bytes[8];
			in.read(reinterpret_cast<char *>(bytes), 8);
			if (!in)
				throw std::runtime_error("bundle: truncated input");
			std::uint64_t value = 0;
			for (int i = 0; i < 8; ++i)
				value |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
			return value;
		}

		double read_f64(std::istream &in) { return std::bit_cast<double>(read_u64(in)); }
	} // namespace detail

	void write_bundle(std::ostream &out, const PathBundle &bundle)
	{
		detail::write_u64(out, kBundleFormatVersion);
		detail::write_f64(out, bundle.grid().horizon());
		detail::write_u64(out, static_cast<std::uint64_t>(bundle.grid().intervals()));
		detail::write_u64(out, static_cast<std::uint64_t>(bundle.dim()));
		detail::write_u64(out, static_cast<std::uint64_t>(bundle.paths()));
		detail::write_u64(out, bundle.seed());
		for (const PathMatrix *payload : {&bundle.increments(), &bundle.copy()})
			for (Index m = 0; m < payload->rows(); ++m)
				for (Index c = 0; c < payload->cols(); ++c)
					detail::write_f64(out, (*payload)(m, c));
	}

	PathBundle read_bundle(std::istream &in)
	{
		const std::uint64_t version = detail::read_u64(in);
		if (version != kBundleFormatVersion)
			throw std::runtime_error("bundle: unsupported format version " + std::to_string(version));
		const double horizon = detail::read_f64(in);
		const auto intervals = static_cast<int>(detail::read_u64(in));
		const auto dim = static_cast<int>(detail::read_u64(in));
		const auto paths = static_cast<Index>(detail::read_u64(in));
		const std::uint64_t seed = detail::read_u64(in);
		TimeGrid grid = TimeGrid::uniform(horizon, intervals);
		const Index cols = static_cast<Index>(intervals) * dim;
		PathMatrix w(paths, cols), w_copy(paths, cols);
		for (PathMatrix *payload : {&w, &w_copy})
			for (Index m = 0; m < paths; ++m)
				for (Index c = 0; c < cols; ++c)
					(*payload)(m, c) = detail::read_f64(in);
		return PathBundle(std::move(grid), dim, std::move(w), std::move(w_copy), seed);
	}

	void save_bundle(const std::string &path, const PathBundle &bundle)
	{
		std::ofstream out(path, std::ios::binary);
		if (!out)
			throw std::runtime_error("cannot open " + path + " for writing");
		write_bundle(out, bundle);
	}

	PathBundle load_bundle(const std::string &path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw std::runtime_error("cannot open " + path);
		return read_bundle(in);
	}
} // namespace bsdelab
