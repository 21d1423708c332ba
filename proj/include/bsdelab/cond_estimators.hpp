#pragma once

#include <bsdelab/types.hpp>

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bsdelab
{
	/// Global polynomials of total degree <= degree in the conditioning inputs.
	struct BasisSpec
	{
		int degree = 3;
		bool standardize = true;
	};

	/// Number of monomials of total degree <= degree in `inputs` variables.
	Index basis_size(int inputs, int degree);

	/// Inner resampling; needs a generative handle, so it is served by
	/// decouple::conditional_over_window rather than cond_expect.
	struct NestedEstimator
	{
		int inner_samples = 256;
	};

	struct RegressionEstimator
	{
		BasisSpec basis{};
		/// Extra ridge added to the normal equations (0 = plain least squares).
		double ridge = 0.0;
	};

	/// Equal-count bins of the first conditioning coordinate.
	struct StratifiedEstimator
	{
		int bins = 10;
	};

	using ConditionalEstimator = std::variant<NestedEstimator, RegressionEstimator, StratifiedEstimator>;

	void validate(const ConditionalEstimator &est);
	std::string describe(const ConditionalEstimator &est);

	struct CondDiagnostics
	{
		double condition_number = 1.0;
		bool ridge_fallback = false;
		double ridge = 0.0;
		/// Regression coefficients on the (standardized) monomial basis.
		Vector coefficients;
		/// Residual standard deviation.
		double residual_sd = 0.0;
	};

	struct CondResult
	{
		Vector value;
		Vector se;
		CondDiagnostics diagnostics;
	};

	/// Estimates E[target | conditioning] path by path. conditioning is M x q.
	CondResult cond_expect(const Vector &target, const Matrix &conditioning, const ConditionalEstimator &est);

	/// Fitted least-squares model; reusable for prediction at new inputs.
	class PolynomialRegression
	{
	public:
		PolynomialRegression(const Matrix &inputs, const Vector &target, BasisSpec basis, double ridge = 0.0);

		Vector predict(const Matrix &inputs) const;
		/// In-sample fitted values of another target on the same design.
		Vector project(const Vector &target) const;
		/// In-sample fitted values of the original target.
		Vector fitted() const { return phi_ * diag_.coefficients; }
		/// Standard error of the fitted mean at each input row.
		Vector standard_error(const Matrix &inputs) const;
		Matrix design(const Matrix &inputs) const;

		const CondDiagnostics &diagnostics() const { return diag_; }
		/// Coefficients expressed in the raw (unstandardized) inputs; only
		/// available for degree <= 1.
		Vector raw_linear_coefficients() const;
		/// Standard errors of raw_linear_coefficients.
		Vector raw_linear_standard_errors() const;

	private:
		BasisSpec basis_;
		Vector mean_, scale_;
		std::vector<bool> active_;
		std::vector<std::vector<int>> exponents_;
		Matrix phi_;
		Matrix gram_inverse_;
		CondDiagnostics diag_;
	};

	/// Empirical q-quantile (q = 1 gives the maximum); proxy for an L-infinity norm.
	double linf_proxy(std::span<const double> values, double quantile = 1.0);

	/// Sample mean and its standard error.
	struct MeanSe
	{
		double mean = 0.0;
		double se = 0.0;
	};
	MeanSe mean_se(std::span<const double> values);
	inline MeanSe mean_se(const Vector &v) { return mean_se(std::span<const double>(v.data(), static_cast<std::size_t>(v.size()))); }

	/// Equal-width bin index of each value in [lo, hi); -1 outside.
	std::vector<int> equal_width_bins(const Vector &values, double lo, double hi, int bins);
	/// Equal-count bin index of each value (ties broken by path order).
	std::vector<int> equal_count_bins(const Vector &values, int bins);
} // namespace bsdelab
