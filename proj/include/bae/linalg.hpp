#ifndef BAE_LINALG_HPP
#define BAE_LINALG_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace bae {

using Index = Eigen::Index;

// Batches are stored one sample per row.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;

/// Engine for an independent random stream identified by (seed, stream, index).
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Stream tags so that different consumers of one seed never share draws.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t anchor = 2;
inline constexpr std::uint64_t shuffle = 3;
inline constexpr std::uint64_t member_seed = 4;
inline constexpr std::uint64_t split = 5;
inline constexpr std::uint64_t synthetic = 6;
inline constexpr std::uint64_t noise = 7;
inline constexpr std::uint64_t kmeans = 8;
}  // namespace streams

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace bae

#endif  // BAE_LINALG_HPP
