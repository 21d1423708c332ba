#include <bsdelab/bmo.hpp>
#include <bsdelab/parallel.hpp>

#include <algorithm>
#include <memory>

namespace bsdelab
{
	double phi_inverse_log_excess(double y)
	{
		require(y > 0 && std::isfinite(y), "phi_inverse: y must be positive and finite");
		// phi_log_excess is decreasing in l; bracket then bisect.
		double lo = -1.0, hi = 1.0;
		while (phi_log_excess(lo) < y)
			lo *= 2.0;
		while (phi_log_excess(hi) > y)
			hi *= 2.0;
		for (int it = 0; it < 400; ++it)
		{
			const double mid = 0.5 * (lo + hi);
			if (mid <= lo || mid >= hi)
				break;
			if (phi_log_excess(mid) > y)
				lo = mid;
			else
				hi = mid;
		}
		return std::abs(phi_log_excess(lo) - y) <= std::abs(phi_log_excess(hi) - y) ? lo : hi;
	}

	double phi_inverse_excess(double y) { return std::exp(phi_inverse_log_excess(y)); }

	double phi_inverse(double y) { return 1.0 + phi_inverse_excess(y); }

	std::optional<double> c8_min_p(double lz, double s_inf)
	{
		require(lz >= 0 && s_inf >= 0, "c8_min_p: arguments must be >= 0");
		if (lz == 0 || s_inf == 0)
			return std::nullopt;
		// q*/(q* - 1) = 1 + 1/(q* - 1)
		return 1.0 + std::exp(-phi_inverse_log_excess(2.0 * std::sqrt(2.0) * lz * s_inf));
	}

	double ProcessSample::squared_norm(Index path, int k) const
	{
		return values.row(path).segment(static_cast<Index>(k) * m, m).squaredNorm();
	}

	Vector ProcessSample::squared_norms(int k) const
	{
		return values.middleCols(static_cast<Index>(k) * m, m).rowwise().squaredNorm();
	}

	Matrix ProcessSample::conditioning(int node) const
	{
		if (state_dim == 0 || states.size() == 0)
			return Matrix::Zero(paths(), 1);
		return states.middleCols(static_cast<Index>(node) * state_dim, state_dim);
	}

	ProcessSample ProcessSample::constant(const TimeGrid &grid, double value, Index paths, int m)
	{
		require(paths >= 1 && m >= 1, "process: need at least one path and one coordinate");
		ProcessSample c{grid, m, PathMatrix::Constant(paths, static_cast<Index>(grid.intervals()) * m, value), 0, {}};
		return c;
	}

	ProcessSample z_process(const BsdeGridSolution &solution, const ForwardSolution &forward)
	{
		require(solution.grid == forward.grid && solution.paths() == forward.paths(),
				"z_process: solution and forward solution differ in grid or paths");
		return ProcessSample{solution.grid, solution.dim, solution.z, forward.dim, forward.states};
	}

	ProcessSample abs_process(const ProcessSample &c)
	{
		ProcessSample out = c;
		out.values = c.values.cwiseAbs();
		return out;
	}

	ProcessSample scaled(const ProcessSample &c, double factor)
	{
		ProcessSample out = c;
		out.values *= factor;
		return out;
	}

	ProcessSample sum(const ProcessSample &a, const ProcessSample &b)
	{
		require(a.grid == b.grid && a.m == b.m && a.paths() == b.paths(), "process sum: shapes differ");
		ProcessSample out = a;
		out.values += b.values;
		return out;
	}

	namespace
	{
		bool all_equal(const Vector &v)
		{
			for (Index i = 1; i < v.size(); ++i)
				if (v(i) != v(0))
					return false;
			return true;
		}

		/// Conditional expectation given the state at one node, reusing the
		/// regression design across targets.
		class NodeConditioner
		{
		public:
			NodeConditioner(Matrix inputs, const ConditionalEstimator &est) : inputs_(std::move(inputs)), est_(est)
			{
				require(!std::holds_alternative<NestedEstimator>(est),
						"bmo: the nested estimator needs a generative handle; use regression or stratified");
			}

			Vector operator()(const Vector &target)
			{
				if (all_equal(target))
					return target;
				if (const auto *reg = std::get_if<RegressionEstimator>(&est_))
				{
					if (!fit_)
						fit_ = std::make_unique<PolynomialRegression>(inputs_, target, reg->basis, reg->ridge);
					return fit_->project(target);
				}
				return cond_expect(target, inputs_, est_).value;
			}

		private:
			Matrix inputs_;
			ConditionalEstimator est_;
			std::unique_ptr<PolynomialRegression> fit_;
		};

		double linf(const Vector &v, double q)
		{
			return linf_proxy(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())), q);
		}

		/// table[k][b - k - 1] = linf(E[sum_{k<=j<b} |c_j|^2 dt_j | state at k]) for k < b <= last.
		std::vector<std::vector<double>> tail_table(const ProcessSample &c, int first, int last,
													const BmoOptions &options)
		{
			const int count = last - first;
			std::vector<std::vector<double>> table(static_cast<std::size_t>(std::max(count, 0)));
			parallel_for(static_cast<std::size_t>(std::max(count, 0)), 1, [&](std::size_t begin, std::size_t end) {
				for (std::size_t i = begin; i < end; ++i)
				{
					const int k = first + static_cast<int>(i);
					NodeConditioner cond(c.conditioning(k), options.estimator);
					Vector target = Vector::Zero(c.paths());
					auto &row = table[i];
					row.reserve(static_cast<std::size_t>(last - k));
					for (int b = k + 1; b <= last; ++b)
					{
						target += c.squared_norms(b - 1) * c.grid.dt(b - 1);
						row.push_back(std::max(0.0, linf(cond(target), options.linf_quantile)));
					}
				}
			});
			return table;
		}

		void check_options(const ProcessSample &c, const BmoOptions &options)
		{
			require(options.linf_quantile > 0 && options.linf_quantile <= 1, "bmo: linf quantile must be in (0, 1]");
			require(c.values.cols() == static_cast<Index>(c.grid.intervals()) * c.m, "bmo: process shape mismatch");
			require(c.values.allFinite(), "bmo: process has non-finite entries");
			validate(options.estimator);
		}
	} // namespace

	double slice_norm(const ProcessSample &c, int a, int b, const BmoOptions &options)
	{
		check_options(c, options);
		require(0 <= a && a <= b && b <= c.grid.intervals(), "slice_norm: nodes out of range");
		if (a == b)
			return 0.0;
		const auto table = tail_table(c, a, b, options);
		double best = 0.0;
		for (const auto &row : table)
			best = std::max(best, row.back());
		return std::sqrt(best);
	}

	double bmo_s2_norm(const ProcessSample &c, const BmoOptions &options)
	{
		return slice_norm(c, 0, c.grid.intervals(), options);
	}

	std::vector<SliceableEstimate> sliceable_numbers(const ProcessSample &c, int n_max, const BmoOptions &options)
	{
		check_options(c, options);
		const int n = c.grid.intervals();
		require(n_max >= 1, "sliceable_numbers: n_max must be >= 1");
		require(n_max <= n, "sliceable_numbers: n_max exceeds the number of grid intervals");
		const auto table = tail_table(c, 0, n, options);

		// slice[a][b] = squared norm of the slice (t_a, t_b]; empty slices are 0.
		std::vector<std::vector<double>> slice(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
		for (int b = 1; b <= n; ++b)
		{
			double running = 0.0;
			for (int a = b - 1; a >= 0; --a)
			{
				running = std::max(running, table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b - a - 1)]);
				slice[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = running;
			}
		}

		// best[j][a]: minimal maximal squared slice norm covering [a, n] with j slices.
		std::vector<std::vector<double>> best(static_cast<std::size_t>(n_max + 1), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
		for (int a = 0; a <= n; ++a)
			best[1][static_cast<std::size_t>(a)] = slice[static_cast<std::size_t>(a)][static_cast<std::size_t>(n)];
		for (int j = 2; j <= n_max; ++j)
			for (int a = 0; a <= n; ++a)
			{
				double value = std::numeric_limits<double>::infinity();
				for (int b = a; b <= n; ++b)
					value = std::min(value, std::max(slice[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)],
													  best[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(b)]));
				best[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] = value;
			}

		std::vector<SliceableEstimate> out;
		for (int j = 1; j <= n_max; ++j)
		{
			SliceableEstimate est;
			est.n = j;
			est.partition.push_back(0);
			int a = 0;
			for (int left = j; left > 1; --left)
			{
				const double target = best[static_cast<std::size_t>(left)][static_cast<std::size_t>(a)];
				int next = n;
				for (int b = a; b <= n; ++b)
					if (std::max(slice[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)],
								 best[static_cast<std::size_t>(left - 1)][static_cast<std::size_t>(b)]) == target)
					{
						next = b;
						break;
					}
				est.slice_norms.push_back(std::sqrt(slice[static_cast<std::size_t>(a)][static_cast<std::size_t>(next)]));
				est.partition.push_back(next);
				a = next;
			}
			est.slice_norms.push_back(std::sqrt(slice[static_cast<std::size_t>(a)][static_cast<std::size_t>(n)]));
			est.partition.push_back(n);
			est.value = std::sqrt(best[static_cast<std::size_t>(j)][0]);
			out.push_back(std::move(est));
		}
		return out;
	}

	RHBound rh_bound(double s_n, double p, int n)
	{
		require(p > 1 && n >= 1 && s_n >= 0, "rh_bound: need p > 1, n >= 1, s_n >= 0");
		RHBound r{p, n, s_n, std::numeric_limits<double>::infinity(), true};
		if (s_n < phi(p))
		{
			r.bound = std::pow(psi(s_n, p), n);
			r.infinite = !std::isfinite(r.bound);
		}
		return r;
	}

	namespace
	{
		/// (mean v)^{1/p} with a delta-method standard error.
		std::pair<double, double> root_mean(const Vector &v, double p)
		{
			const MeanSe ms = mean_se(v);
			if (ms.mean <= 0)
				return {0.0, 0.0};
			const double value = std::pow(ms.mean, 1.0 / p);
			return {value, value * ms.se / (p * ms.mean)};
		}

		void check_pair(const ProcessSample &x, const ProcessSample &y)
		{
			require(x.grid == y.grid, "fefferman: processes live on different grids");
			require(x.paths() == y.paths(), "fefferman: path counts differ");
		}
	} // namespace

	FeffermanReport fefferman_check(const ProcessSample &x, const ProcessSample &y, double p, const BmoOptions &options)
	{
		check_pair(x, y);
		require(p >= 1, "fefferman: p must be >= 1");
		const int n = x.grid.intervals();
		const Index m = x.paths();
		Vector cross = Vector::Zero(m), energy = Vector::Zero(m);
		for (int k = 0; k < n; ++k)
		{
			const double dt = x.grid.dt(k);
			cross += (x.squared_norms(k).cwiseSqrt().cwiseProduct(y.squared_norms(k).cwiseSqrt())) * dt;
			energy += y.squared_norms(k) * dt;
		}
		FeffermanReport r;
		r.p = p;
		std::tie(r.lhs, r.lhs_se) = root_mean(cross.array().pow(p).matrix(), p);
		std::tie(r.hp, r.hp_se) = root_mean(energy.array().pow(p / 2).matrix(), p);
		r.bmo = bmo_s2_norm(x, options);
		r.rhs = std::sqrt(2.0) * p * r.hp * r.bmo;
		r.ratio = r.rhs > 0 ? r.lhs / r.rhs : std::numeric_limits<double>::infinity();
		const double rel = (r.lhs > 0 ? r.lhs_se / r.lhs : 0.0) + (r.hp > 0 ? r.hp_se / r.hp : 0.0);
		r.pass = r.lhs <= r.rhs * (1.0 + 3.0 * rel);
		return r;
	}

	ConditionalFeffermanReport fefferman_conditional_check(const ProcessSample &x, const ProcessSample &y, double p,
															int s, int t, int bins, const BmoOptions &options)
	{
		check_pair(x, y);
		check_options(x, options);
		require(p >= 1, "fefferman: p must be >= 1");
		require(0 <= s && s < t && t <= x.grid.intervals(), "fefferman: need 0 <= s < t <= N");
		require(bins >= 1, "fefferman: bins must be >= 1");
		ConditionalFeffermanReport r;
		r.p = p;
		r.s = s;
		r.t = t;
		r.c_p = std::pow(std::sqrt(2.0) * p, p);
		for (const auto &row : tail_table(x, s, t, options))
			r.window_bmo_squared = std::max(r.window_bmo_squared, row.back());

		const Index m = x.paths();
		Vector cross = Vector::Zero(m), energy = Vector::Zero(m);
		for (int k = s; k < t; ++k)
		{
			const double dt = x.grid.dt(k);
			cross += (x.squared_norms(k).cwiseSqrt().cwiseProduct(y.squared_norms(k).cwiseSqrt())) * dt;
			energy += y.squared_norms(k) * dt;
		}
		const Vector lhs_v = cross.array().pow(p).matrix();
		const Vector rhs_v = (energy.array().pow(p / 2) * (r.c_p * std::pow(r.window_bmo_squared, p / 2))).matrix();
		const Vector key = x.conditioning(s).col(0);
		const int used = static_cast<int>(std::min<Index>(bins, m));
		const auto bin = equal_count_bins(key, used);
		r.pass = true;
		for (int b = 0; b < used; ++b)
		{
			std::vector<double> l, h;
			for (Index i = 0; i < m; ++i)
				if (bin[static_cast<std::size_t>(i)] == b)
				{
					l.push_back(lhs_v(i));
					h.push_back(rhs_v(i));
				}
			const MeanSe ml = mean_se(l), mh = mean_se(h);
			FeffermanStratum st{b, static_cast<Index>(l.size()), ml.mean, ml.se, mh.mean, mh.se, false};
			st.pass = st.lhs <= st.rhs + 3.0 * std::hypot(st.lhs_se, st.rhs_se);
			r.pass = r.pass && st.pass;
			r.strata.push_back(st);
		}
		return r;
	}
} // namespace bsdelab
