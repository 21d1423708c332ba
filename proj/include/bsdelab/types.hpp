#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace bsdelab
{
	/// Row-major storage: one Monte Carlo path per row.
	template <typename Scalar>
	using PathMatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

	using PathMatrix = PathMatrixT<double>;
	using Vector = Eigen::VectorXd;
	using Matrix = Eigen::MatrixXd;
	using Index = Eigen::Index;

	/// Raised when an argument violates an operation's precondition.
	class InvalidArgument : public std::invalid_argument
	{
	public:
		using std::invalid_argument::invalid_argument;
	};

	inline void require(bool condition, const std::string &message)
	{
		if (!condition)
			throw InvalidArgument(message);
	}
} // namespace bsdelab
