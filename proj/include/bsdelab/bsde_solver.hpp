#pragma once

#include <bsdelab/cond_estimators.hpp>
#include <bsdelab/forward_sde.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bsdelab
{
	/// f(t, X_t, y, z) for generators of FBSDE type.
	using GeneratorFn = std::function<double(double t, const ConstVectorRef &x, double y, const ConstVectorRef &z)>;

	/// Terminal condition: either g(X_T) or a functional of the driving path.
	struct Terminal
	{
		std::function<double(const ConstVectorRef &)> of_state;
		std::optional<GridFunctional> of_path;
	};

	struct GeneratorSpec
	{
		std::string name;
		GeneratorFn f;
		double lipschitz_y = 0.0; // L_y
		double lipschitz_z = 0.0; // L_z
		double theta = 0.0;       // growth exponent in z
		/// Lipschitz constant of f in the state argument (L_h for FBSDE generators).
		double lipschitz_x = 0.0;
		Terminal terminal;
		/// Lipschitz constant of g (L_g).
		double lipschitz_terminal = 0.0;
	};

	/// Spot-checks |f(t,x,y0,z0) - f(t,x,y1,z1)| <= L_y|y0-y1| + L_z[1+|z0|+|z1|]^theta |z0-z1|
	/// on random tuples. Returns the number of violations.
	int growth_template_violations(const GeneratorSpec &gen, int dim, double horizon, int samples, std::uint64_t seed);

	namespace presets
	{
		/// h(t,x,y,z) = x, g(x) = x on b = 0, sigma = 1, d = 1, x0 = 0.
		GeneratorSpec example_generator();
		/// f = 0, xi = X_T.
		GeneratorSpec martingale_generator();
		/// f(t,x,y,z) = -L y, xi = 1.
		GeneratorSpec linear_decay_generator(double rate);
	} // namespace presets

	struct BsdeDiagnostics
	{
		std::vector<double> condition_numbers; // per backward step
		int ridge_fallbacks = 0;
		Index truncations = 0;
	};

	struct BsdeGridSolution
	{
		TimeGrid grid;
		int dim = 1;
		/// M x (N+1)
		PathMatrix y;
		/// M x N*d, Z on [t_k, t_{k+1})
		PathMatrix z;
		std::string method;
		BsdeDiagnostics diagnostics;

		Index paths() const { return y.rows(); }
	};

	/// Y_r = W_r (1 + T - r), Z_r = 1 + T - r for the bounded-below example.
	BsdeGridSolution closed_form_example(const PathBundle &bundle);

	struct RegressionConfig
	{
		BasisSpec basis{};
		int picard_iterations = 3;
		double truncation = 1e6;
		/// Regress (Y_{k+1} - E[Y_{k+1} | X_k]) dW_k / dt for Z and Y_{k+1} - Z_k dW_k
		/// for Y; both keep the conditional means given X_{t_k}.
		bool martingale_control = true;
	};

	/// Backward regression scheme:
	///   Y_N = xi,
	///   Z_k = E[Y_{k+1} dW_k | X_k] / dt_k,
	///   Y_k = E[Y_{k+1} | X_k] + dt_k f(t_k, X_k, Y_k, Z_k)   (Picard sweeps).
	/// Only Lipschitz generators (theta = 0) are accepted.
	BsdeGridSolution regression_backward_euler(const GeneratorSpec &gen, const ForwardSolution &forward,
											   const RegressionConfig &config = {});

	/// Piecewise-constant Z^pi on a coarse grid: conditional mean (given the
	/// state at the left coarse node) of the time average of Z over each
	/// coarse interval. Output is M x Ncoarse*d.
	PathMatrix zpi_aggregate(const BsdeGridSolution &solution, const ForwardSolution &forward, const TimeGrid &coarse,
							 const ConditionalEstimator &estimator);

	/// RMS over paths of Y - Y_ref at every node.
	std::vector<double> node_rms_error(const BsdeGridSolution &solution, const BsdeGridSolution &reference);

	/// CSV with columns path,node,t,Y,Z_1..Z_d (Z empty at the terminal node).
	void write_solution_csv(std::ostream &out, const BsdeGridSolution &solution);
} // namespace bsdelab
