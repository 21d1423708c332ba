#include <bsdelab/cond_estimators.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bsdelab
{
	namespace
	{
		void monomials(int vars, int degree, std::vector<int> &current, int var, int remaining,
					   std::vector<std::vector<int>> &out)
		{
			if (var == vars)
			{
				out.push_back(current);
				return;
			}
			for (int e = 0; e <= remaining; ++e)
			{
				current[static_cast<std::size_t>(var)] = e;
				monomials(vars, degree, current, var + 1, remaining - e, out);
			}
			current[static_cast<std::size_t>(var)] = 0;
		}

		std::vector<std::vector<int>> graded_exponents(int vars, int degree)
		{
			std::vector<std::vector<int>> out;
			std::vector<int> current(static_cast<std::size_t>(vars), 0);
			monomials(vars, degree, current, 0, degree, out);
			std::stable_sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
				return std::accumulate(a.begin(), a.end(), 0) < std::accumulate(b.begin(), b.end(), 0);
			});
			return out;
		}

		bool all_equal(const Vector &v)
		{
			for (Index i = 1; i < v.size(); ++i)
				if (v(i) != v(0))
					return false;
			return true;
		}
	} // namespace

	Index basis_size(int inputs, int degree)
	{
		// C(inputs + degree, degree)
		double n = 1;
		for (int k = 1; k <= degree; ++k)
			n = n * (inputs + k) / k;
		return static_cast<Index>(std::llround(n));
	}

	void validate(const ConditionalEstimator &est)
	{
		std::visit(
			[](const auto &e) {
				using T = std::decay_t<decltype(e)>;
				if constexpr (std::is_same_v<T, NestedEstimator>)
					require(e.inner_samples >= 1, "nested estimator: need K >= 1");
				else if constexpr (std::is_same_v<T, RegressionEstimator>)
				{
					require(e.basis.degree >= 0, "regression estimator: degree must be >= 0");
					require(e.ridge >= 0, "regression estimator: ridge must be >= 0");
				}
				else
					require(e.bins >= 2, "stratified estimator: need at least 2 bins");
			},
			est);
	}

	std::string describe(const ConditionalEstimator &est)
	{
		std::ostringstream os;
		std::visit(
			[&](const auto &e) {
				using T = std::decay_t<decltype(e)>;
				if constexpr (std::is_same_v<T, NestedEstimator>)
					os << "nested(K=" << e.inner_samples << ")";
				else if constexpr (std::is_same_v<T, RegressionEstimator>)
					os << "regression(degree=" << e.basis.degree << ",ridge=" << e.ridge
					   << ",standardize=" << (e.basis.standardize ? "true" : "false") << ")";
				else
					os << "stratified(bins=" << e.bins << ")";
			},
			est);
		return os.str();
	}

	PolynomialRegression::PolynomialRegression(const Matrix &inputs, const Vector &target, BasisSpec basis, double ridge)
		: basis_(basis)
	{
		require(basis.degree >= 0, "regression: degree must be >= 0");
		require(inputs.rows() == target.size(), "regression: input and target path counts differ");
		const Index m = inputs.rows();
		const auto q = static_cast<int>(inputs.cols());
		require(m >= 1, "regression: no samples");

		mean_ = inputs.colwise().mean().transpose();
		scale_ = Vector::Ones(q);
		active_.assign(static_cast<std::size_t>(q), true);
		for (int j = 0; j < q; ++j)
		{
			const double var = (inputs.col(j).array() - mean_(j)).square().mean();
			const double sd = std::sqrt(var);
			if (!(sd > 1e-13 * (1.0 + std::abs(mean_(j)))))
				active_[static_cast<std::size_t>(j)] = false;
			else if (basis.standardize)
				scale_(j) = sd;
			if (!basis.standardize)
				mean_(j) = 0.0;
		}
		const int active = static_cast<int>(std::count(active_.begin(), active_.end(), true));
		const auto reduced = graded_exponents(active, basis.degree);
		exponents_.clear();
		for (const auto &r : reduced)
		{
			std::vector<int> full(static_cast<std::size_t>(q), 0);
			int a = 0;
			for (int j = 0; j < q; ++j)
				if (active_[static_cast<std::size_t>(j)])
					full[static_cast<std::size_t>(j)] = r[static_cast<std::size_t>(a++)];
			exponents_.push_back(std::move(full));
		}
		const auto nb = static_cast<Index>(exponents_.size());
		require(nb == 1 || nb * 10 < m, "regression: basis size must stay below M/10 (" + std::to_string(nb) +
											" functions, " + std::to_string(m) + " paths)");

		phi_ = design(inputs);
		const Matrix &phi = phi_;
		const Matrix gram = (phi.transpose() * phi) / static_cast<double>(m);
		const Vector rhs = (phi.transpose() * target) / static_cast<double>(m);

		Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
		const double lo = eig.eigenvalues().minCoeff();
		const double hi = eig.eigenvalues().maxCoeff();
		diag_.condition_number = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
		double lambda = ridge;
		if (!(diag_.condition_number < 1e12))
		{
			diag_.ridge_fallback = true;
			lambda += 1e-8 * gram.trace() / static_cast<double>(nb);
		}
		diag_.ridge = lambda;
		const Matrix regularized = gram + lambda * Matrix::Identity(nb, nb);
		Eigen::LDLT<Matrix> ldlt(regularized);
		diag_.coefficients = ldlt.solve(rhs);
		gram_inverse_ = ldlt.solve(Matrix::Identity(nb, nb));

		const Vector residual = target - phi * diag_.coefficients;
		const double dof = std::max<double>(1.0, static_cast<double>(m - nb));
		diag_.residual_sd = std::sqrt(residual.squaredNorm() / dof);
		gram_inverse_ /= static_cast<double>(m);
	}

	Matrix PolynomialRegression::design(const Matrix &inputs) const
	{
		const Index m = inputs.rows();
		const auto q = static_cast<int>(inputs.cols());
		require(q == mean_.size(), "regression: input dimension mismatch");
		Matrix z(m, q);
		for (int j = 0; j < q; ++j)
			z.col(j) = (inputs.col(j).array() - mean_(j)) / scale_(j);
		Matrix phi(m, static_cast<Index>(exponents_.size()));
		for (std::size_t b = 0; b < exponents_.size(); ++b)
		{
			auto col = phi.col(static_cast<Index>(b));
			col.setOnes();
			for (int j = 0; j < q; ++j)
				for (int e = 0; e < exponents_[b][static_cast<std::size_t>(j)]; ++e)
					col.array() *= z.col(j).array();
		}
		return phi;
	}

	Vector PolynomialRegression::predict(const Matrix &inputs) const { return design(inputs) * diag_.coefficients; }

	Vector PolynomialRegression::project(const Vector &target) const
	{
		require(target.size() == phi_.rows(), "regression: target length differs from the fitted sample");
		const Vector coef = gram_inverse_ * (phi_.transpose() * target);
		return phi_ * coef;
	}

	Vector PolynomialRegression::standard_error(const Matrix &inputs) const
	{
		const Matrix phi = design(inputs);
		const Vector quad = ((phi * gram_inverse_).array() * phi.array()).rowwise().sum();
		return (quad.array().max(0.0).sqrt() * diag_.residual_sd).matrix();
	}

	Vector PolynomialRegression::raw_linear_coefficients() const
	{
		require(basis_.degree <= 1, "raw coefficients need a degree <= 1 basis");
		const auto q = static_cast<int>(mean_.size());
		Vector raw = Vector::Zero(q + 1);
		raw(0) = diag_.coefficients(0);
		Index b = 1;
		for (int j = 0; j < q; ++j)
		{
			if (!active_[static_cast<std::size_t>(j)] || basis_.degree == 0)
				continue;
			const double beta = diag_.coefficients(b++);
			raw(j + 1) = beta / scale_(j);
			raw(0) -= beta * mean_(j) / scale_(j);
		}
		return raw;
	}

	Vector PolynomialRegression::raw_linear_standard_errors() const
	{
		require(basis_.degree <= 1, "raw coefficients need a degree <= 1 basis");
		const auto q = static_cast<int>(mean_.size());
		const auto nb = static_cast<Index>(exponents_.size());
		Matrix a = Matrix::Zero(q + 1, nb);
		a(0, 0) = 1.0;
		Index b = 1;
		for (int j = 0; j < q; ++j)
		{
			if (!active_[static_cast<std::size_t>(j)] || basis_.degree == 0)
				continue;
			a(j + 1, b) = 1.0 / scale_(j);
			a(0, b) = -mean_(j) / scale_(j);
			++b;
		}
		const Matrix cov = a * gram_inverse_ * a.transpose() * (diag_.residual_sd * diag_.residual_sd);
		return cov.diagonal().array().max(0.0).sqrt().matrix();
	}

	CondResult cond_expect(const Vector &target, const Matrix &conditioning, const ConditionalEstimator &est)
	{
		validate(est);
		require(target.size() == conditioning.rows(), "cond_expect: target and conditioning path counts differ");
		require(target.size() >= 1, "cond_expect: no paths");
		CondResult out;
		if (std::holds_alternative<NestedEstimator>(est))
			throw InvalidArgument("cond_expect: nested estimation needs a generative handle; use conditional_over_window");

		if (all_equal(target))
		{
			out.value = target;
			out.se = Vector::Zero(target.size());
			out.diagnostics.coefficients = Vector::Constant(1, target(0));
			return out;
		}

		if (const auto *reg = std::get_if<RegressionEstimator>(&est))
		{
			const PolynomialRegression fit(conditioning, target, reg->basis, reg->ridge);
			out.value = fit.fitted();
			out.se = fit.standard_error(conditioning);
			out.diagnostics = fit.diagnostics();
			return out;
		}

		const auto &strat = std::get<StratifiedEstimator>(est);
		require(conditioning.cols() >= 1, "stratified estimator: need a conditioning variable");
		const Vector key = conditioning.col(0);
		const auto bin = equal_count_bins(key, strat.bins);
		std::vector<double> sum(static_cast<std::size_t>(strat.bins), 0.0), sq(static_cast<std::size_t>(strat.bins), 0.0);
		std::vector<Index> count(static_cast<std::size_t>(strat.bins), 0);
		for (Index i = 0; i < target.size(); ++i)
		{
			const auto b = static_cast<std::size_t>(bin[static_cast<std::size_t>(i)]);
			sum[b] += target(i);
			sq[b] += target(i) * target(i);
			++count[b];
		}
		out.value.resize(target.size());
		out.se.resize(target.size());
		for (Index i = 0; i < target.size(); ++i)
		{
			const auto b = static_cast<std::size_t>(bin[static_cast<std::size_t>(i)]);
			const double n = static_cast<double>(count[b]);
			const double mean = sum[b] / n;
			const double var = n > 1 ? std::max(0.0, (sq[b] - n * mean * mean) / (n - 1)) : 0.0;
			out.value(i) = mean;
			out.se(i) = std::sqrt(var / n);
		}
		return out;
	}

	double linf_proxy(std::span<const double> values, double quantile)
	{
		require(!values.empty(), "linf_proxy: empty input");
		require(quantile > 0.0 && quantile <= 1.0, "linf_proxy: quantile must lie in (0, 1]");
		std::vector<double> v(values.begin(), values.end());
		const auto n = v.size();
		auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(n)));
		rank = std::clamp<std::size_t>(rank, 1, n) - 1;
		std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank), v.end());
		return v[rank];
	}

	MeanSe mean_se(std::span<const double> values)
	{
		require(!values.empty(), "mean_se: empty input");
		const double n = static_cast<double>(values.size());
		double mean = 0.0;
		for (double x : values)
			mean += x;
		mean /= n;
		double ss = 0.0;
		for (double x : values)
			ss += (x - mean) * (x - mean);
		const double var = values.size() > 1 ? ss / (n - 1) : 0.0;
		return {mean, std::sqrt(var / n)};
	}

	std::vector<int> equal_width_bins(const Vector &values, double lo, double hi, int bins)
	{
		require(bins >= 1 && hi > lo, "equal_width_bins: invalid range");
		std::vector<int> out(static_cast<std::size_t>(values.size()), -1);
		const double width = (hi - lo) / bins;
		for (Index i = 0; i < values.size(); ++i)
		{
			const double v = values(i);
			if (v < lo || v >= hi || !std::isfinite(v))
				continue;
			out[static_cast<std::size_t>(i)] = std::min(bins - 1, static_cast<int>((v - lo) / width));
		}
		return out;
	}

	std::vector<int> equal_count_bins(const Vector &values, int bins)
	{
		require(bins >= 1, "equal_count_bins: need bins >= 1");
		const auto n = static_cast<std::size_t>(values.size());
		std::vector<std::size_t> order(n);
		std::iota(order.begin(), order.end(), 0);
		std::stable_sort(order.begin(), order.end(),
						 [&](std::size_t a, std::size_t b) { return values(static_cast<Index>(a)) < values(static_cast<Index>(b)); });
		std::vector<int> out(n);
		for (std::size_t r = 0; r < n; ++r)
			out[order[r]] = static_cast<int>(r * static_cast<std::size_t>(bins) / n);
		return out;
	}
} // namespace bsdelab
