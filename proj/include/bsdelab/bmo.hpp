#pragma once

#include <bsdelab/bsde_solver.hpp>
#include <bsdelab/cond_estimators.hpp>
#include <bsdelab/grid_paths.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace bsdelab
{
	namespace detail
	{
		/// log(1 + e^{-l}/2) without overflow for very negative l.
		template <typename Scalar>
		Scalar log_one_plus_half_exp_neg(Scalar l)
		{
			using std::exp;
			using std::log;
			using std::log1p;
			if (l < Scalar(-30))
				return -l - log(Scalar(2)) + log1p(Scalar(2) * exp(l));
			return log1p(exp(-l) / Scalar(2));
		}
	} // namespace detail

	/// Phi evaluated at q = 1 + e^l. Accurate for q arbitrarily close to 1.
	template <typename Scalar>
	Scalar phi_log_excess(Scalar l)
	{
		using std::exp;
		using std::sqrt;
		const Scalar q = Scalar(1) + exp(l);
		const Scalar x = detail::log_one_plus_half_exp_neg(l) / (q * q);
		return x / (sqrt(Scalar(1) + x) + Scalar(1));
	}

	/// Phi(q) = (1 + q^-2 log(1 + 1/(2q - 2)))^{1/2} - 1 for q > 1.
	template <typename Scalar>
	Scalar phi(Scalar q)
	{
		using std::log;
		require(q > Scalar(1), "phi: q must be > 1");
		return phi_log_excess(log(q - Scalar(1)));
	}

	/// Psi(gamma, p) = (2 / (1 - (2p-2)/(2p-1) e^{p^2(gamma^2 + 2 gamma)}))^{1/p} on 0 <= gamma < Phi(p).
	template <typename Scalar>
	Scalar psi(Scalar gamma, Scalar p)
	{
		using std::expm1;
		using std::log1p;
		using std::pow;
		require(p > Scalar(1), "psi: p must be > 1");
		require(gamma >= Scalar(0), "psi: gamma must be >= 0");
		require(gamma < phi(p), "psi: gamma must be < phi(p)");
		const Scalar exponent = p * p * (gamma * gamma + Scalar(2) * gamma) - log1p(Scalar(1) / (Scalar(2) * p - Scalar(2)));
		Scalar denominator = -expm1(exponent);
		if (!(denominator > Scalar(0)))
			denominator = std::numeric_limits<Scalar>::min();
		return pow(Scalar(2) / denominator, Scalar(1) / p);
	}

	/// l = log(q - 1) for the q > 1 with Phi(q) = y.
	double phi_inverse_log_excess(double y);
	/// q - 1 for the q with Phi(q) = y (may underflow to 0 for y above ~25).
	double phi_inverse_excess(double y);
	/// The q > 1 with Phi(q) = y; rounds to 1 when q - 1 is below machine epsilon.
	double phi_inverse(double y);

	/// Smallest admissible exponent q*/(q* - 1), q* = Phi^-1(2 sqrt(2) L_z s_inf); empty when unconstrained.
	std::optional<double> c8_min_p(double lz, double s_inf);

	/// Predictable m-dimensional process on grid intervals with the
	/// conditioning state at every node.
	struct ProcessSample
	{
		TimeGrid grid;
		int m = 1;
		/// M x N*m, value on (t_k, t_{k+1}] in columns k*m .. k*m + m - 1.
		PathMatrix values;
		int state_dim = 0;
		/// M x (N+1)*state_dim; empty when the filtration carries no state.
		PathMatrix states;

		Index paths() const { return values.rows(); }
		double squared_norm(Index path, int k) const;
		/// |c_k|^2 over paths.
		Vector squared_norms(int k) const;
		/// M x state_dim (or M x 1 zeros without states).
		Matrix conditioning(int node) const;

		static ProcessSample constant(const TimeGrid &grid, double value, Index paths = 1, int m = 1);
	};

	/// Z of a backward solution, conditioned on the forward states.
	ProcessSample z_process(const BsdeGridSolution &solution, const ForwardSolution &forward);
	/// Componentwise absolute value.
	ProcessSample abs_process(const ProcessSample &c);
	ProcessSample scaled(const ProcessSample &c, double factor);
	ProcessSample sum(const ProcessSample &a, const ProcessSample &b);

	struct BmoOptions
	{
		ConditionalEstimator estimator = RegressionEstimator{};
		/// Quantile used as the L-infinity proxy (1 = maximum over paths).
		double linf_quantile = 1.0;
	};

	/// sup_k linf(E[sum_{j>=k} |c_j|^2 dt_j | state at t_k])^{1/2}.
	double bmo_s2_norm(const ProcessSample &c, const BmoOptions &options = {});

	/// Norm of c restricted to the nodes [a, b].
	double slice_norm(const ProcessSample &c, int a, int b, const BmoOptions &options = {});

	struct SliceableEstimate
	{
		int n = 1;
		/// Node indices 0 = k_0 <= k_1 <= ... <= k_n = N.
		std::vector<int> partition;
		std::vector<double> slice_norms;
		/// Upper estimate of sl_n over deterministic grid partitions.
		double value = 0.0;
	};

	/// Estimates for n = 1..n_max, each minimizing the maximal slice norm over
	/// grid-node partitions (lexicographically earliest among ties).
	std::vector<SliceableEstimate> sliceable_numbers(const ProcessSample &c, int n_max, const BmoOptions &options = {});

	struct RHBound
	{
		double p = 2;
		int n = 1;
		double s_n = 0;
		double bound = 0;
		bool infinite = false;
	};

	/// [Psi(s_n, p)]^n when s_n < Phi(p), otherwise flagged infinite.
	RHBound rh_bound(double s_n, double p, int n);

	struct FeffermanReport
	{
		double p = 2;
		double lhs = 0, lhs_se = 0;
		double hp = 0, hp_se = 0;
		double bmo = 0;
		double rhs = 0;
		double ratio = 0;
		bool pass = false;
	};

	/// ||sum |X_j||Y_j| dt_j||_{L_p} against sqrt(2) p ||Y||_{H_p} ||X||_BMO.
	FeffermanReport fefferman_check(const ProcessSample &x, const ProcessSample &y, double p,
									const BmoOptions &options = {});

	struct FeffermanStratum
	{
		int bin = 0;
		Index count = 0;
		double lhs = 0, lhs_se = 0;
		double rhs = 0, rhs_se = 0;
		bool pass = false;
	};

	struct ConditionalFeffermanReport
	{
		double p = 2;
		int s = 0, t = 0;
		double c_p = 0;
		/// sup_{r in [s,t]} linf(E[sum_{r<=j<t} |X_j|^2 dt_j | state at r]).
		double window_bmo_squared = 0;
		std::vector<FeffermanStratum> strata;
		bool pass = false;
	};

	/// Conditional form on the nodes [s, t] with c_p = (sqrt(2) p)^p; the
	/// conditioning on H_s is realized by equal-count bins of the first state
	/// coordinate at s.
	ConditionalFeffermanReport fefferman_conditional_check(const ProcessSample &x, const ProcessSample &y, double p,
															int s, int t, int bins = 10, const BmoOptions &options = {});
} // namespace bsdelab
