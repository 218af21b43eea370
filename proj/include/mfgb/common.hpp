#pragma once

// Small numeric helpers shared across the library: finite checks, norms,
// compensated summation, and dense solvers for the tiny systems that show up
// in the feedback Newton iteration and the convexity sampler.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgb {

// Shortest round-trip decimal form; byte-stable across runs, so CSV outputs
// are reproducible.
inline std::string fmt_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline bool all_finite(std::span<const double> a) {
    for (double x : a) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
    double s = 0.0;
    for (double x : a) s = std::max(s, std::abs(x));
    return s;
}

// Kahan compensated accumulator. Node sums feed tolerances down at 1e-12,
// so plain accumulation over 2d grids is too sloppy.
class KahanSum {
public:
    void add(double x) {
        const double y = x - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

// Solves A x = b in place by partial-pivot LU; A is n-by-n row-major and is
// destroyed. Returns false on a (numerically) singular pivot.
inline bool solve_dense(std::vector<double>& A, std::vector<double>& b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(A[static_cast<std::size_t>(col) * n + col]);
        for (int row = col + 1; row < n; ++row) {
            const double a = std::abs(A[static_cast<std::size_t>(row) * n + col]);
            if (a > best) {
                best = a;
                piv = row;
            }
        }
        if (best < 1e-300) return false;
        if (piv != col) {
            for (int k = col; k < n; ++k)
                std::swap(A[static_cast<std::size_t>(piv) * n + k],
                          A[static_cast<std::size_t>(col) * n + k]);
            std::swap(b[piv], b[col]);
        }
        const double d = A[static_cast<std::size_t>(col) * n + col];
        for (int row = col + 1; row < n; ++row) {
            const double f = A[static_cast<std::size_t>(row) * n + col] / d;
            if (f == 0.0) continue;
            A[static_cast<std::size_t>(row) * n + col] = 0.0;
            for (int k = col + 1; k < n; ++k)
                A[static_cast<std::size_t>(row) * n + k] -=
                    f * A[static_cast<std::size_t>(col) * n + k];
            b[row] -= f * b[col];
        }
    }
    for (int row = n - 1; row >= 0; --row) {
        double s = b[row];
        for (int k = row + 1; k < n; ++k)
            s -= A[static_cast<std::size_t>(row) * n + k] * b[k];
        b[row] = s / A[static_cast<std::size_t>(row) * n + row];
    }
    return true;
}

// Smallest eigenvalue of a small symmetric matrix (row-major, n-by-n) by
// cyclic Jacobi rotations. Intended for n <= 8.
inline double min_symmetric_eigenvalue(std::vector<double> A, int n) {
    if (n == 1) return A[0];
    auto at = [&](int i, int j) -> double& {
        return A[static_cast<std::size_t>(i) * n + j];
    };
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-30) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double tau = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p);
                    const double akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k);
                    const double aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    double min_eig = at(0, 0);
    for (int i = 1; i < n; ++i) min_eig = std::min(min_eig, at(i, i));
    return min_eig;
}

}  // namespace mfgb
