#pragma once

#include <optional>
#include <vector>

namespace dujad::detail {

// Finite field GF(p^k) for odd p with table-driven arithmetic. Elements are
// encoded as integers 0..q-1 whose base-p digits are polynomial coefficients.
class GaloisField {
public:
    // nullopt unless q is an odd prime power no larger than `max_order`.
    static std::optional<GaloisField> make(int q, int max_order = 1024);

    int order() const { return q_; }
    int characteristic() const { return p_; }
    int add(int a, int b) const { return add_[a * q_ + b]; }
    int mul(int a, int b) const { return mul_[a * q_ + b]; }
    // Absolute trace into the prime subfield, returned as 0..p-1.
    int trace(int a) const { return trace_[a]; }

private:
    int q_ = 0;
    int p_ = 0;
    int k_ = 0;
    std::vector<int> add_;
    std::vector<int> mul_;
    std::vector<int> trace_;
};

// Largest odd prime power q <= limit with q*q >= min_square, or nullopt.
std::optional<int> largest_odd_prime_power(int limit, long min_square);

}  // namespace dujad::detail
