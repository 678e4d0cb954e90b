#include "galois.hpp"

namespace dujad::detail {

namespace {

// (p, k) with q = p^k for a prime p, or {0, 0}.
std::pair<int, int> prime_power(int q) {
    if (q < 2) return {0, 0};
    int p = 0;
    for (int d = 2; d * d <= q; ++d) {
        if (q % d == 0) {
            p = d;
            break;
        }
    }
    if (p == 0) return {q, 1};
    int k = 0;
    int rest = q;
    while (rest % p == 0) {
        rest /= p;
        ++k;
    }
    return rest == 1 ? std::pair{p, k} : std::pair{0, 0};
}

std::vector<int> digits(int a, int p, int k) {
    std::vector<int> d(k);
    for (int i = 0; i < k; ++i) {
        d[i] = a % p;
        a /= p;
    }
    return d;
}

int encode(const std::vector<int>& d, int p) {
    int a = 0;
    for (int i = static_cast<int>(d.size()) - 1; i >= 0; --i) a = a * p + d[i];
    return a;
}

// Product of a and b modulo the monic polynomial x^k + sum modulus[i] x^i.
int poly_mul(int a, int b, const std::vector<int>& modulus, int p, int k) {
    auto da = digits(a, p, k);
    auto db = digits(b, p, k);
    std::vector<int> prod(2 * k - 1, 0);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) prod[i + j] = (prod[i + j] + da[i] * db[j]) % p;
    for (int deg = 2 * k - 2; deg >= k; --deg) {
        const int c = prod[deg];
        if (c == 0) continue;
        prod[deg] = 0;
        for (int i = 0; i < k; ++i) prod[deg - k + i] = ((prod[deg - k + i] - c * modulus[i]) % p + p) % p;
    }
    prod.resize(k);
    return encode(prod, p);
}

}  // namespace

std::optional<GaloisField> GaloisField::make(int q, int max_order) {
    auto [p, k] = prime_power(q);
    if (p == 0 || p == 2 || q > max_order) return std::nullopt;

    GaloisField f;
    f.q_ = q;
    f.p_ = p;
    f.k_ = k;
    f.add_.resize(static_cast<std::size_t>(q) * q);
    for (int a = 0; a < q; ++a) {
        auto da = digits(a, p, k);
        for (int b = 0; b < q; ++b) {
            auto db = digits(b, p, k);
            std::vector<int> s(k);
            for (int i = 0; i < k; ++i) s[i] = (da[i] + db[i]) % p;
            f.add_[a * q + b] = encode(s, p);
        }
    }

    // Search for an irreducible modulus: the product table must have no zero divisors.
    f.mul_.resize(static_cast<std::size_t>(q) * q);
    bool found = false;
    for (int cand = 0; cand < q && !found; ++cand) {
        auto modulus = digits(cand, p, k);
        if (k > 1 && modulus[0] == 0) continue;
        bool ok = true;
        for (int a = 1; a < q && ok; ++a) {
            for (int b = 1; b < q; ++b) {
                const int c = poly_mul(a, b, modulus, p, k);
                if (c == 0) {
                    ok = false;
                    break;
                }
                f.mul_[a * q + b] = c;
            }
        }
        if (ok) found = true;
    }
    if (!found) return std::nullopt;
    for (int a = 0; a < q; ++a) {
        f.mul_[a * q] = 0;
        f.mul_[a] = 0;
    }

    // tr(a) = a + a^p + ... + a^(p^(k-1)); lands in the prime subfield {0..p-1}.
    f.trace_.resize(q);
    for (int a = 0; a < q; ++a) {
        int frob = a;
        int sum = 0;
        for (int i = 0; i < k; ++i) {
            sum = f.add(sum, frob);
            int next = 1;
            for (int e = 0; e < p; ++e) next = f.mul(next, frob);
            frob = next;
        }
        f.trace_[a] = sum;
    }
    return f;
}

std::optional<int> largest_odd_prime_power(int limit, long min_square) {
    for (int q = limit; q >= 3; --q) {
        auto [p, k] = prime_power(q);
        if (p != 0 && p != 2 && static_cast<long>(q) * q >= min_square) return q;
    }
    return std::nullopt;
}

}  // namespace dujad::detail
