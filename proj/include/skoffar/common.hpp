#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace skoffar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Signalled when a drawn sketch is numerically degenerate (e.g. the Gram
/// matrix S*S^T fails its condition check).  The solver reacts by redrawing.
class sketch_degenerate_error : public std::runtime_error {
 public:
  explicit sketch_degenerate_error(const std::string& what)
      : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed for a sub-stream (Monte-Carlo trial, sweep
/// cell, ...).  The result depends only on (base, stream), never on
/// scheduling, so sharded computations reproduce bit-for-bit.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x5851f42d4c957f2dULL));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace skoffar
