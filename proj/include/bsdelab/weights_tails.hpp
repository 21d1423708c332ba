#pragma once

#include <bsdelab/bsde_solver.hpp>
#include <bsdelab/decouple.hpp>
#include <bsdelab/forward_sde.hpp>

#include <optional>
#include <string>
#include <vector>

namespace bsdelab
{
	/// Deterministic weight components w^xi and w^f.
	struct WeightComponents
	{
		double xi = 0.0;
		double f = 0.0;
	};

	/// Closed-form FBSDE weight: w^xi = w^f = c^p (t - u)^{p/2}.
	WeightComponents fbsde_weight(double p, double s, double u, double t, double c);

	struct WeightSample
	{
		double p = 2;
		double s = 0, u = 0, t = 0;
		std::string tag;
		Vector w_xi, w_f;
		/// Conditional terms given F_u.
		Vector drift_term, terminal_term;
		/// w^p and w, per path.
		Vector w_p, w;
		Vector drift_se, terminal_se;
	};

	/// Forward dynamics, generator and sample shared by the assembly routines.
	struct FbsdeContext
	{
		SdeCoefficients coeffs;
		Vector x0;
		GeneratorSpec generator;
	};

	struct AssemblyConfig
	{
		int outer_samples = 64;
		std::uint64_t seed = 11;
	};

	/// w^p = (w^xi + w^f) + E^{F_u}(int_u^t |f(r,0,0)| dr)^p
	///       + (t - u)^p E^{F_u}(|xi| + int_t^T |f(r,0,0)| dr)^p
	/// with the conditional expectations taken by redrawing the increments on (u, T].
	/// Times are snapped to grid nodes.
	WeightSample assemble_weight(const FbsdeContext &ctx, const PathBundle &bundle, const WeightComponents &components,
								 double p, double s, double u, double t, const AssemblyConfig &config = {});
	WeightSample assemble_weight(const FbsdeContext &ctx, const PathBundle &bundle, const Vector &w_xi,
								 const Vector &w_f, double p, double s, double u, double t,
								 const AssemblyConfig &config = {});

	struct C6Config
	{
		int outer_samples = 32;
		int inner_samples = 32;
		std::uint64_t seed = 21;
	};

	struct C6Report
	{
		double p = 2;
		int u = 0, t = 0;
		/// Per path: E^{F_u}|xi - E^{G_u^t} xi|^p (direct) and E^{F_u}|xi - xi^{(u,t]}|^p (decoupled).
		Vector direct, direct_se;
		Vector decoupled, decoupled_se;
		double direct_mean = 0, direct_mean_se = 0;
		double decoupled_mean = 0, decoupled_mean_se = 0;
		/// direct <= decoupled <= 2^p direct within 3 combined SE.
		bool sandwich_pass = false;
		/// Inner sampling noise above 20% of the direct estimate.
		bool inner_too_small = false;
		bool bias_corrected = false;
	};

	C6Report c6_estimate(const GridFunctional &xi, const PathBundle &bundle, double u, double t, double p,
						 const C6Config &config = {});

	struct ProbePoint
	{
		double y = 0;
		Vector z;
	};

	struct C7Report
	{
		double p = 2;
		int u = 0, t = 0;
		double lipschitz_h = 0;
		/// E^{F_u}(int_u^T L_h |X_r - X_r^{(u,t]}| dr)^p per path.
		Vector estimate, estimate_se;
		/// Same with the sup over the probe points instead of the Lipschitz bound.
		Vector probe_estimate;
		double mean = 0, mean_se = 0;
		double probe_mean = 0;
		/// Pathwise probe integrals exceeding the Lipschitz bound.
		Index probe_violations = 0;
	};

	C7Report c7_estimate(const FbsdeContext &ctx, const PathBundle &bundle, double u, double t, double p,
						 const std::vector<ProbePoint> &probes, const C6Config &config = {});

	/// Deterministic node or the first node in [start, t] where |X| >= threshold (t if never).
	struct StoppingRule
	{
		std::optional<double> time;
		std::optional<double> threshold;
		double start = 0.0;

		static StoppingRule at(double tau) { return StoppingRule{tau, std::nullopt, tau}; }
		static StoppingRule hitting(double start, double threshold) { return StoppingRule{std::nullopt, threshold, start}; }
	};

	struct RatioStratum
	{
		int bin = 0;
		double lo = 0, hi = 0;
		Index count = 0;
		double weighted = 0, weighted_se = 0;
		double unweighted = 0, unweighted_se = 0;
		/// Mean of |Y_t - Y_tau|^p minus the lower bound (t-tau)^{p/2}(1 + |X_tau|^p (t-tau)^{p/2}).
		double lower_gap = 0, lower_gap_se = 0;
		bool lower_ok = true;
	};

	struct RatioConfig
	{
		int bins = 10;
		double bin_max = 3.0;
		/// Strata with fewer paths are reported but not tested.
		Index min_count = 30;
		ConditionalEstimator estimator = RegressionEstimator{};
	};

	struct WeightedRatioReport
	{
		double p = 2;
		double t = 0;
		std::vector<RatioStratum> strata;
		Index empty_strata = 0;
		/// Non-empty strata below RatioConfig::min_count.
		Index sparse_strata = 0;
		/// max / min over non-empty strata.
		double weighted_spread = 0;
		double unweighted_spread = 0;
		/// Unweighted top stratum over bottom stratum.
		double unweighted_top_bottom = 0;
		/// Estimates of c^p: max over strata, and max of the regression fit.
		double c_strata = 0, c_regression = 0;
		/// c_strata with twice as many bins.
		double c_refined = 0;
		bool lower_bound_holds = true;
		bool pass = false;
	};

	/// E[|Y_t - Y_tau|^p / (1 + |X_tau|^p (t - tau)^{p/2}) | F_tau] / (t - tau)^{p/2} by strata of |X_tau|
	/// and by regression on X_tau. Paths with tau = t are left out.
	WeightedRatioReport weighted_bmo_ratio(const BsdeGridSolution &solution, const ForwardSolution &forward, double p,
										   const StoppingRule &tau, double t, const RatioConfig &config = {});

	struct GoodLambdaConstants
	{
		double theta = 0;
		double eta = 0;
		double b = 1;
		double a = 3;
		double alpha = 2;
	};

	/// eta = 2 theta, b = max(1, -1/ln eta), a = 3b, alpha = 2/(1 - eta).
	///
	/// The bootstrap ends with
	///   P_B(g > lambda + mu nu) <= e^{1 - mu/b} P_B(g > lambda) + (2/(1-eta)) W_Psi(B, nu/3) / P(B);
	/// replacing mu by b mu and nu by 3 nu gives the stated form with a = 3b.
	GoodLambdaConstants good_lambda_constants(double theta);

	struct TailRow
	{
		double lambda = 0, mu = 0, nu = 0;
		double lhs = 0, lhs_se = 0;
		double rhs = 0, rhs_se = 0;
		double p_lambda = 0;
		double w_psi = 0;
		bool pass = false;
	};

	struct HypothesisRow
	{
		double nu = 0;
		double lhs = 0, lhs_se = 0;
		double rhs = 0;
		bool pass = false;
	};

	struct TailGrids
	{
		std::vector<double> lambda_quantiles{0.25, 0.5, 0.75, 0.9};
		std::vector<double> mu{0.5, 1.0, 2.0, 4.0};
		std::vector<double> nu_quantiles{0.5, 0.75, 0.9, 0.95, 0.99};
	};

	struct TailReport
	{
		GoodLambdaConstants constants;
		std::string event;
		double p_event = 0;
		Index event_paths = 0;
		std::vector<double> lambdas, mus, nus;
		std::vector<HypothesisRow> hypothesis;
		std::vector<TailRow> rows;
		bool hypothesis_holds = false;
		bool pass = false;
	};

	/// A and Psi are M x L on the nodes sigma = r_0 < ... < r_{L-1} = R (column 0 is sigma).
	/// event marks B in G_sigma.
	TailReport tail_check(const PathMatrix &a, const PathMatrix &psi, const std::vector<char> &event,
						  const std::string &event_name, double theta, const TailGrids &grids = {});

	/// Rhs of the conclusion for given probabilities.
	inline double tail_rhs(double mu, double alpha, double p_lambda, double w_psi)
	{
		return std::exp(1.0 - mu) * p_lambda + alpha * w_psi;
	}
} // namespace bsdelab
