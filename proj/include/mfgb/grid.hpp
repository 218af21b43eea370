#pragma once

// Periodic spatial grid on the unit cube, time axis, field containers, and
// the discrete differential operators: centered gradient and Laplacian,
// conservative upwind divergence, and quadrature.
//
// Nodes are x_i = i*h with h = 1/n, so the last node is the neighbor of the
// first; all stencils wrap modulo n on every axis. In 2d the flat node index
// is i0*n + i1 (axis 0 slow, axis 1 fast).

#include "mfgb/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mfgb {

struct GridSpec {
    int d = 1;       // spatial dimension, 1 or 2
    int n = 64;      // nodes per axis
    double T = 1.0;  // time horizon
    int nt = 1;      // time steps

    double h() const { return 1.0 / n; }
    double dt() const { return T / nt; }
    std::int64_t nodes() const {
        const std::int64_t nn = n;
        return d == 2 ? nn * nn : nn;
    }
    double cell_volume() const {
        const double hh = h();
        return d == 2 ? hh * hh : hh;
    }

    void validate() const {
        if (d != 1 && d != 2) throw std::invalid_argument("GridSpec: d must be 1 or 2");
        if (n < 4) throw std::invalid_argument("GridSpec: n must be >= 4");
        if (nt < 1) throw std::invalid_argument("GridSpec: nt must be >= 1");
        if (!(T > 0.0)) throw std::invalid_argument("GridSpec: T must be > 0");
    }

    void node_coords(std::int64_t idx, double* x) const {
        const double hh = h();
        if (d == 1) {
            x[0] = static_cast<double>(idx) * hh;
        } else {
            x[0] = static_cast<double>(idx / n) * hh;
            x[1] = static_cast<double>(idx % n) * hh;
        }
    }

    bool operator==(const GridSpec&) const = default;
};

class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const GridSpec& g, double fill_value = 0.0)
        : grid_(g), v_(static_cast<std::size_t>(g.nodes()), fill_value) {
        g.validate();
    }

    const GridSpec& grid() const { return grid_; }
    std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::span<const double> values() const { return v_; }
    std::span<double> values() { return v_; }

    double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

    void fill(double c) { std::fill(v_.begin(), v_.end(), c); }
    bool finite() const { return all_finite(v_); }

    double min_value() const {
        double m = v_.empty() ? 0.0 : v_[0];
        for (double x : v_) m = std::min(m, x);
        return m;
    }
    double max_abs() const { return norm_inf(v_); }

private:
    GridSpec grid_;
    std::vector<double> v_;
};

// Fixed number of components living on one grid (u has N, v has N*M,
// vector fields have d).
class MultiField {
public:
    MultiField() = default;
    MultiField(const GridSpec& g, int components, double fill_value = 0.0) {
        comps_.reserve(static_cast<std::size_t>(components));
        for (int c = 0; c < components; ++c) comps_.emplace_back(g, fill_value);
    }

    int components() const { return static_cast<int>(comps_.size()); }
    const GridSpec& grid() const { return comps_.front().grid(); }

    ScalarField& comp(int c) { return comps_[static_cast<std::size_t>(c)]; }
    const ScalarField& comp(int c) const { return comps_[static_cast<std::size_t>(c)]; }

    bool finite() const {
        for (const auto& f : comps_)
            if (!f.finite()) return false;
        return true;
    }
    double max_abs() const {
        double m = 0.0;
        for (const auto& f : comps_) m = std::max(m, f.max_abs());
        return m;
    }

private:
    std::vector<ScalarField> comps_;
};

// One field per time index 0..nt.
template <class Field>
struct Trajectory {
    std::vector<Field> slice;

    int steps() const { return static_cast<int>(slice.size()) - 1; }
    const GridSpec& grid() const { return slice.front().grid(); }

    void validate() const {
        if (slice.empty()) throw std::invalid_argument("Trajectory: empty");
        const GridSpec& g = grid();
        if (static_cast<int>(slice.size()) != g.nt + 1)
            throw std::invalid_argument("Trajectory: slice count must be nt+1");
        for (const auto& f : slice)
            if (!(f.grid() == g)) throw std::invalid_argument("Trajectory: mixed grids");
    }
};

using ScalarTrajectory = Trajectory<ScalarField>;
using MultiTrajectory = Trajectory<MultiField>;

inline ScalarTrajectory zero_scalar_trajectory(const GridSpec& g) {
    ScalarTrajectory t;
    t.slice.assign(static_cast<std::size_t>(g.nt + 1), ScalarField(g, 0.0));
    return t;
}

inline MultiTrajectory zero_multi_trajectory(const GridSpec& g, int components) {
    MultiTrajectory t;
    t.slice.assign(static_cast<std::size_t>(g.nt + 1), MultiField(g, components, 0.0));
    return t;
}

// ---------------------------------------------------------------------------
// Discrete operators
// ---------------------------------------------------------------------------

namespace detail {
inline int wrap_up(int i, int n) { return i + 1 == n ? 0 : i + 1; }
inline int wrap_dn(int i, int n) { return i == 0 ? n - 1 : i - 1; }
}  // namespace detail

// Centered second-order periodic gradient, component k = (f(x+h e_k) - f(x-h e_k)) / 2h.
inline MultiField gradient(const ScalarField& f) {
    const GridSpec& g = f.grid();
    MultiField out(g, g.d);
    const int n = g.n;
    const double inv2h = 1.0 / (2.0 * g.h());
    const double* src = f.data();
    if (g.d == 1) {
        double* dx = out.comp(0).data();
        for (int i = 0; i < n; ++i)
            dx[i] = (src[detail::wrap_up(i, n)] - src[detail::wrap_dn(i, n)]) * inv2h;
    } else {
        double* d0 = out.comp(0).data();
        double* d1 = out.comp(1).data();
        for (int i = 0; i < n; ++i) {
            const int iu = detail::wrap_up(i, n) * n;
            const int id = detail::wrap_dn(i, n) * n;
            const int ic = i * n;
            for (int j = 0; j < n; ++j) {
                d0[ic + j] = (src[iu + j] - src[id + j]) * inv2h;
                d1[ic + j] = (src[ic + detail::wrap_up(j, n)] -
                              src[ic + detail::wrap_dn(j, n)]) * inv2h;
            }
        }
    }
    return out;
}

// Standard 2d+1-point periodic Laplacian stencil.
inline ScalarField laplacian(const ScalarField& f) {
    const GridSpec& g = f.grid();
    ScalarField out(g);
    const int n = g.n;
    const double invh2 = 1.0 / (g.h() * g.h());
    const double* src = f.data();
    double* dst = out.data();
    if (g.d == 1) {
        for (int i = 0; i < n; ++i)
            dst[i] = (src[detail::wrap_up(i, n)] - 2.0 * src[i] +
                      src[detail::wrap_dn(i, n)]) * invh2;
    } else {
        for (int i = 0; i < n; ++i) {
            const int iu = detail::wrap_up(i, n) * n;
            const int id = detail::wrap_dn(i, n) * n;
            const int ic = i * n;
            for (int j = 0; j < n; ++j) {
                dst[ic + j] = (src[iu + j] + src[id + j] +
                               src[ic + detail::wrap_up(j, n)] +
                               src[ic + detail::wrap_dn(j, n)] -
                               4.0 * src[ic + j]) * invh2;
            }
        }
    }
    return out;
}

namespace detail {
// Accumulates one axis of the conservative upwind divergence of (density *
// velocity). For each face the velocity is the arithmetic average of the two
// node values; the donor cell is picked by its sign. `tangent` additionally
// carries the flux derivative (dvel*density + vel*ddensity) with the donor
// cell still chosen by the sign of the BASE velocity: that makes the tangent
// operator the exact derivative of the base one.
struct FaceAxis {
    int stride;  // flat-index stride along this axis
    int count;   // nodes along this axis
};

template <bool Tangent>
inline void upwind_axis_accumulate(const ScalarField& density, const double* vel,
                                   const double* ddensity, const double* dvel,
                                   const FaceAxis& ax, int other_stride, int other_count,
                                   double inv_h, double* out) {
    const double* m = density.data();
    for (int o = 0; o < other_count; ++o) {
        const int base = o * other_stride;
        for (int i = 0; i < ax.count; ++i) {
            const int a = base + i * ax.stride;
            const int b = base + wrap_up(i, ax.count) * ax.stride;
            const double vface = 0.5 * (vel[a] + vel[b]);
            const int donor = vface > 0.0 ? a : (vface < 0.0 ? b : a);
            double flux;
            if constexpr (Tangent) {
                const double dvface = 0.5 * (dvel[a] + dvel[b]);
                flux = vface * ddensity[donor] + dvface * m[donor];
            } else {
                flux = vface * m[donor];
            }
            out[a] += flux * inv_h;
            out[b] -= flux * inv_h;
        }
    }
}

template <bool Tangent>
inline ScalarField upwind_divergence(const ScalarField& density, const MultiField& vel,
                                     const ScalarField* ddensity, const MultiField* dvel) {
    const GridSpec& g = density.grid();
    ScalarField out(g);
    const double inv_h = 1.0 / g.h();
    const int n = g.n;
    const double* dd = ddensity ? ddensity->data() : nullptr;
    if (g.d == 1) {
        upwind_axis_accumulate<Tangent>(density, vel.comp(0).data(), dd,
                                        dvel ? dvel->comp(0).data() : nullptr,
                                        FaceAxis{1, n}, 0, 1, inv_h, out.data());
    } else {
        // axis 0: stride n, rows indexed by the fast axis
        upwind_axis_accumulate<Tangent>(density, vel.comp(0).data(), dd,
                                        dvel ? dvel->comp(0).data() : nullptr,
                                        FaceAxis{n, n}, 1, n, inv_h, out.data());
        // axis 1: stride 1
        upwind_axis_accumulate<Tangent>(density, vel.comp(1).data(), dd,
                                        dvel ? dvel->comp(1).data() : nullptr,
                                        FaceAxis{1, n}, n, n, inv_h, out.data());
    }
    return out;
}
}  // namespace detail

// Conservative upwind divergence of (m * vel): per axis the face flux is
// F_{j+1/2} = vel+_{j+1/2} m_j + vel-_{j+1/2} m_{j+1} with the face velocity
// averaged from the nodes; output sums to zero exactly by telescoping.
inline ScalarField div_upwind(const ScalarField& m, const MultiField& vel) {
    if (vel.components() != m.grid().d)
        throw std::invalid_argument("div_upwind: velocity components != d");
    return detail::upwind_divergence<false>(m, vel, nullptr, nullptr);
}

// Tangent of div_upwind at (m, vel) in direction (dm, dvel); donor cells
// follow the sign of the base velocity.
inline ScalarField div_upwind_tangent(const ScalarField& m, const MultiField& vel,
                                      const ScalarField& dm, const MultiField& dvel) {
    if (vel.components() != m.grid().d || dvel.components() != m.grid().d)
        throw std::invalid_argument("div_upwind_tangent: velocity components != d");
    return detail::upwind_divergence<true>(m, vel, &dm, &dvel);
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

// integral = h^d * sum f; norm = (h^d * sum |f|^p)^(1/p).
struct PNormResult {
    double integral = 0.0;
    double norm = 0.0;
};

inline PNormResult integrate_pnorm(const ScalarField& f, double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("integrate_pnorm: p must be >= 1");
    double ip;
    const bool integer_p = std::modf(p, &ip) == 0.0;
    KahanSum sum, psum;
    for (double x : f.values()) {
        if (!integer_p && x < 0.0)
            throw std::domain_error("integrate_pnorm: negative value with fractional p");
        sum.add(x);
        psum.add(std::pow(std::abs(x), p));
    }
    const double vol = f.grid().cell_volume();
    PNormResult r;
    r.integral = vol * sum.value();
    r.norm = std::pow(vol * psum.value(), 1.0 / p);
    return r;
}

inline double integrate(const ScalarField& f) {
    KahanSum sum;
    for (double x : f.values()) sum.add(x);
    return f.grid().cell_volume() * sum.value();
}

inline double lp_norm(const ScalarField& f, double p) { return integrate_pnorm(f, p).norm; }

// Trapezoid-in-time sum of per-slice values over t in (0,T).
template <class SliceValue>
inline double time_trapezoid(int nt, double dt, SliceValue&& value) {
    KahanSum s;
    s.add(0.5 * value(0));
    for (int k = 1; k < nt; ++k) s.add(value(k));
    s.add(0.5 * value(nt));
    return dt * s.value();
}

// ---------------------------------------------------------------------------
// Field arithmetic helpers
// ---------------------------------------------------------------------------

inline void add_scaled(ScalarField& dst, double a, const ScalarField& src) {
    double* d = dst.data();
    const double* s = src.data();
    const std::int64_t sz = dst.size();
    for (std::int64_t i = 0; i < sz; ++i) d[i] += a * s[i];
}

inline void add_scaled(MultiField& dst, double a, const MultiField& src) {
    for (int c = 0; c < dst.components(); ++c) add_scaled(dst.comp(c), a, src.comp(c));
}

// L2(Q) norms with trapezoid weights in time and node sums in space.
inline double l2q_norm(const ScalarTrajectory& t) {
    const GridSpec& g = t.grid();
    const double sq = time_trapezoid(t.steps(), g.dt(), [&](int k) {
        KahanSum s;
        for (double x : t.slice[static_cast<std::size_t>(k)].values()) s.add(x * x);
        return g.cell_volume() * s.value();
    });
    return std::sqrt(std::max(0.0, sq));
}

inline double l2q_norm(const MultiTrajectory& t) {
    const GridSpec& g = t.grid();
    const double sq = time_trapezoid(t.steps(), g.dt(), [&](int k) {
        KahanSum s;
        const MultiField& f = t.slice[static_cast<std::size_t>(k)];
        for (int c = 0; c < f.components(); ++c)
            for (double x : f.comp(c).values()) s.add(x * x);
        return g.cell_volume() * s.value();
    });
    return std::sqrt(std::max(0.0, sq));
}

template <class Traj>
inline double l2q_distance(const Traj& a, const Traj& b) {
    Traj diff = a;
    for (std::size_t k = 0; k < diff.slice.size(); ++k)
        add_scaled(diff.slice[k], -1.0, b.slice[k]);
    return l2q_norm(diff);
}

}  // namespace mfgb
