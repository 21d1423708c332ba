#pragma once

#include <bsdelab/decouple.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace bsdelab
{
	using VectorRef = Eigen::Ref<Vector>;
	using ConstVectorRef = Eigen::Ref<const Vector>;
	using MatrixRef = Eigen::Ref<Matrix>;

	/// b(t, x) and sigma(t, x) written into caller-owned storage.
	using DriftFn = std::function<void(double t, const ConstVectorRef &x, VectorRef out)>;
	using DiffusionFn = std::function<void(double t, const ConstVectorRef &x, MatrixRef out)>;

	struct SdeCoefficients
	{
		std::string name;
		int dim = 1;
		DriftFn drift;
		DiffusionFn diffusion;
		/// Declared constants; used in bound formulas, spot-checked only.
		double lipschitz = 0.0;   // L_{b,sigma}
		double sigma_bound = 0.0; // K_sigma
		double drift_growth = 0.0; // K_b
	};

	/// Checks |sigma(t, x)| <= K_sigma (Frobenius norm) on the given states.
	bool sigma_bound_holds(const SdeCoefficients &coeffs, const TimeGrid &grid, const PathMatrix &states);

	namespace presets
	{
		/// b = 0, sigma = identity.
		SdeCoefficients brownian(int dim = 1);
		/// d = 1: b(t, x) = -x/2, sigma(t, x) = clamp(x, -2, 2).
		SdeCoefficients capped_linear();
		/// d = 1: b = 0, sigma(t, x) = min(x, cap).
		SdeCoefficients capped_geometric(double cap = 2.0);

		std::vector<std::string> names();
		SdeCoefficients by_name(const std::string &name);
	} // namespace presets

	/// Which increments drive the scheme.
	struct Driver
	{
		std::optional<DecoupleWindow> window; // empty: the original W

		static Driver original() { return {}; }
		static Driver decoupled(DecoupleWindow w) { return Driver{w}; }
		std::string tag() const;
	};

	struct ForwardSolution
	{
		TimeGrid grid;
		int dim = 1;
		/// M x (N+1)*d, node-major within a row.
		PathMatrix states;
		std::string driver_tag;
		/// Increments that drove the scheme (shared, immutable).
		std::shared_ptr<const PathMatrix> increments;
		/// Paths whose state left the finite range; their later states are NaN.
		std::vector<Index> aborted;

		Index paths() const { return states.rows(); }
		double state(Index path, int node, int coord = 0) const { return states(path, node * dim + coord); }
		/// Column of X_{t_k} (coordinate `coord`) over paths.
		Vector at_node(int node, int coord = 0) const { return states.col(node * dim + coord); }
		/// All coordinates of X_{t_k}, M x d.
		Matrix node_states(int node) const { return states.middleCols(static_cast<Index>(node) * dim, dim); }
	};

	/// Left-point Euler-Maruyama: X_{k+1} = X_k + b(t_k, X_k) dt_k + sigma(t_k, X_k) dW_k.
	ForwardSolution euler_forward(const SdeCoefficients &coeffs, const Vector &x0, const PathBundle &bundle,
								  const Driver &driver = Driver::original());

	ForwardSolution euler_forward(const SdeCoefficients &coeffs, const Vector &x0, const TimeGrid &grid,
								  std::shared_ptr<const PathMatrix> increments, std::string tag = "custom");

	/// Workspace for stepping one path; reuse across paths to avoid allocation.
	class EulerStepper
	{
	public:
		explicit EulerStepper(const SdeCoefficients &coeffs);

		/// Advances states from node `from` to `to`; states holds (N+1)*d
		/// entries with the state at `from` already set. Returns false and
		/// fills the rest with NaN when a non-finite state appears.
		bool run(const TimeGrid &grid, const double *increments, int from, int to, double *states);

	private:
		const SdeCoefficients *coeffs_;
		Vector drift_, dw_;
		Matrix sigma_;
	};

	/// Terminal functional g(X_T) where X solves the SDE on the path's increments.
	GridFunctional terminal_functional(const SdeCoefficients &coeffs, const Vector &x0,
									   std::function<double(const ConstVectorRef &)> g);

	struct CouplingRow
	{
		double span = 0;
		double estimate = 0;
		double se = 0;
		/// Stratified on sign of the first coordinate of W_s: {W_s <= 0, W_s > 0}.
		double negative_stratum = 0;
		double positive_stratum = 0;
	};

	struct CouplingTable
	{
		double s = 0;
		double p = 2;
		std::vector<CouplingRow> rows;
		double slope = 0;
		double intercept = 0;
		Index paths = 0;
	};

	/// Estimates E sup_{r in [s,T]} |X_r^{(s,t]} - X_r|^p for each t = s + span,
	/// sup over grid nodes, and fits log(estimate) against log(span).
	CouplingTable coupling_distance_experiment(const SdeCoefficients &coeffs, const Vector &x0, const PathBundle &bundle,
											   double s, const std::vector<double> &spans, double p);

	/// Streaming version over a seeded ensemble of M paths, one table per
	/// power. Memory stays bounded by `chunk` paths; estimates equal the bundle
	/// version up to summation order.
	std::vector<CouplingTable> coupling_distance_ensemble(const SdeCoefficients &coeffs, const Vector &x0,
														  const TimeGrid &grid, Index paths, std::uint64_t seed, double s,
														  const std::vector<double> &spans,
														  const std::vector<double> &powers, Index chunk = 4096);

	/// Least-squares slope and intercept of y on x.
	std::pair<double, double> fit_line(const std::vector<double> &x, const std::vector<double> &y);

	/// Binary dump: bundle format followed by u64 d, f64[M*(N+1)*d] states.
	void save_forward(const std::string &path, const PathBundle &bundle, const ForwardSolution &solution);
} // namespace bsdelab
