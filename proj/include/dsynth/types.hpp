#ifndef DSYNTH_TYPES_HPP
#define DSYNTH_TYPES_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsynth {

using Real = double;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<Real>;
using Vector = VectorX<Real>;
using ConstMatrixRef = const Eigen::Ref<const Matrix>&;

// N x K, entry (n, k) = 1 iff model k classifies sample n correctly.
using BitMatrix = MatrixX<std::uint8_t>;

using IndexList = std::vector<std::size_t>;
using LabelVector = std::vector<int>;

// Input data or configuration violates a documented contract.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure at run time (divergence, non-finite values).
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dsynth

#endif  // DSYNTH_TYPES_HPP
