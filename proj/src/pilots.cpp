// Pilot design: near-equiangular tight frames of N unit vectors in C^{R_P}.
//
// Candidates, lowest coherence wins:
//   * random unit-modulus rows (the fallback),
//   * alternating projections between the coherence-constrained Gram set and
//     the tight-frame spectrum set, started from the random rows,
//   * for N <= R_P, an orthonormal set,
//   * when an odd prime power q <= R_P with q^2 >= N exists, quadratic chirps
//     over GF(q), v_{a,b}(x) = w^{tr(a x^2 + b x)} / sqrt(q). Chirps with
//     different a are mutually unbiased, so the coherence is exactly 1/sqrt(q).
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "dujad/scenario.hpp"
#include "galois.hpp"

namespace dujad {

namespace {

// Columns are the frame vectors (pilot rows transposed).
double frame_coherence(const CMatrix& frame) {
    const auto n = frame.cols();
    if (n < 2) return 0.0;
    RVector norms = frame.colwise().norm().transpose();
    CMatrix gram = frame.adjoint() * frame;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < j; ++i) worst = std::max(worst, std::abs(gram(i, j)) / (norms(i) * norms(j)));
    return worst;
}

CMatrix random_unit_modulus(int dim, int count, Rng& rng) {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    CMatrix f(dim, count);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int j = 0; j < count; ++j)
        for (int i = 0; i < dim; ++i) f(i, j) = std::polar(scale, phase(rng));
    return f;
}

CMatrix orthonormal_frame(int dim, int count, Rng& rng) {
    CMatrix g(dim, count);
    for (int j = 0; j < count; ++j)
        for (int i = 0; i < dim; ++i) g(i, j) = complex_gaussian(rng, 1.0);
    Eigen::HouseholderQR<CMatrix> qr(g);
    return qr.householderQ() * CMatrix::Identity(dim, count);
}

std::optional<CMatrix> chirp_frame(int dim, int count, Rng& rng) {
    auto q = detail::largest_odd_prime_power(dim, count);
    if (!q) return std::nullopt;
    auto field = detail::GaloisField::make(*q);
    if (!field) return std::nullopt;

    const int p = field->characteristic();
    const double norm = 1.0 / std::sqrt(static_cast<double>(*q));
    std::vector<int> square(*q);
    for (int x = 0; x < *q; ++x) square[x] = field->mul(x, x);

    // Random assignment of frame vectors to UEs plus a random phase per UE.
    std::vector<int> order(static_cast<std::size_t>(*q) * *q);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

    CMatrix f = CMatrix::Zero(dim, count);
    for (int n = 0; n < count; ++n) {
        const int a = order[n] / *q;
        const int b = order[n] % *q;
        const Complex rot = std::polar(1.0, phase(rng));
        for (int x = 0; x < *q; ++x) {
            const int arg = field->trace(field->add(field->mul(a, square[x]), field->mul(b, x)));
            f(x, n) = rot * std::polar(norm, 2.0 * std::numbers::pi * arg / p);
        }
    }
    return f;
}

// One alternating-projection pass: clip the Gram matrix to the target
// coherence, take a subspace-iteration step toward its dominant R-dimensional
// eigenspace, then restore the tight-frame spectrum and unit columns.
void project_once(CMatrix& frame, double target) {
    const auto dim = frame.rows();
    const auto count = frame.cols();
    CMatrix gram = frame.adjoint() * frame;
    for (Eigen::Index j = 0; j < count; ++j) {
        for (Eigen::Index i = 0; i < count; ++i) {
            if (i == j) {
                gram(i, j) = 1.0;
                continue;
            }
            const double mag = std::abs(gram(i, j));
            if (mag > target) gram(i, j) *= target / mag;
        }
    }
    CMatrix z = frame * gram;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(z * z.adjoint());
    RVector ev = es.eigenvalues().cwiseMax(std::numeric_limits<double>::min());
    CMatrix inv_sqrt = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().adjoint();
    frame = std::sqrt(static_cast<double>(count) / static_cast<double>(dim)) * inv_sqrt * z;
    frame.colwise().normalize();
}

}  // namespace

double welch_bound(int num_vectors, int dimension) {
    if (num_vectors <= dimension || num_vectors < 2) return 0.0;
    return std::sqrt(static_cast<double>(num_vectors - dimension) /
                     (static_cast<double>(dimension) * (num_vectors - 1)));
}

double max_cross_correlation(const CMatrix& pilots) { return frame_coherence(pilots.transpose()); }

CMatrix generate_pilots(const ScenarioConfig& cfg, Rng& rng) {
    cfg.validate();
    if (cfg.R_P > cfg.N) throw ConfigError("R_P", "pilot length exceeds the number of UEs");
    const int dim = cfg.R_P;
    const int count = cfg.N;

    CMatrix best = random_unit_modulus(dim, count, rng);
    double best_coherence = frame_coherence(best);
    auto consider = [&](const CMatrix& f) {
        const double c = frame_coherence(f);
        if (std::isfinite(c) && c < best_coherence) {
            best_coherence = c;
            best = f;
        }
    };

    if (count <= dim) {
        consider(orthonormal_frame(dim, count, rng));
    } else {
        const double target = welch_bound(count, dim);
        CMatrix frame = best;
        int since_improvement = 0;
        for (int it = 0; it < cfg.pilot_iterations && since_improvement < 100; ++it) {
            project_once(frame, target);
            if (!frame.allFinite()) break;
            const double before = best_coherence;
            consider(frame);
            since_improvement = best_coherence < before ? 0 : since_improvement + 1;
        }
        if (auto chirp = chirp_frame(dim, count, rng)) consider(*chirp);
    }

    return cfg.pilot_amplitude() * best.transpose();
}

}  // namespace dujad
