#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace dujad {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

// Binary per-UE indicator (activity, detected activity).
using Activity = std::vector<std::uint8_t>;

using Rng = std::mt19937_64;

// Independent sub-stream derived from a base seed and a path of tags, so
// (seed, P, trial, purpose) always maps to the same stream regardless of
// the order in which streams are requested.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

// Circularly-symmetric complex Gaussian sample with the given variance.
inline Complex complex_gaussian(Rng& rng, double variance) {
    std::normal_distribution<double> nd(0.0, 1.0);
    const double s = std::sqrt(variance / 2.0);
    const double re = nd(rng);
    const double im = nd(rng);
    return {s * re, s * im};
}

// Re<A, B> = Re tr(A^H B), the real inner product on complex matrices.
template <class A, class B>
double real_dot(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    return (a.array().conjugate() * b.array()).sum().real();
}

inline int count_active(const Activity& xi) {
    int n = 0;
    for (auto v : xi) n += v ? 1 : 0;
    return n;
}

}  // namespace dujad
