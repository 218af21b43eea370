#pragma once

// Time integrators for the forward density equation and the backward value
// system, plus the pointwise Lagrangian evaluator.
//
// Scheme: IMEX stepping. The unit diffusion is treated implicitly (solved by
// matrix-free conjugate gradient on the periodic stencil), the drift and the
// Lagrangian explicitly from the known slice.

#include "mfgb/grid.hpp"
#include "mfgb/model.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace mfgb {

// Nonnegativity floor: upwind + implicit diffusion keep the density above
// -POSITIVITY_TOL; evaluators clamp such dips to zero.
inline constexpr double POSITIVITY_TOL = 1e-12;

struct StepScheme {
    bool implicit_diffusion = true;
    double linear_tol = 1e-13;  // relative CG residual
    int max_linear_iters = 0;   // 0 -> 10 * nodes

    // stability bookkeeping, filled by the steppers
    double cfl_max = 0.0;             // max over steps of dt * max|g| / h
    double explicit_dt_bound = 0.0;   // h^2 / (4d) of the last grid seen

    double diffusion_dt_bound(const GridSpec& g) const {
        return g.h() * g.h() / (4.0 * g.d);
    }
    void require_explicit_stable(const GridSpec& g) {
        explicit_dt_bound = diffusion_dt_bound(g);
        if (g.dt() > explicit_dt_bound)
            throw std::invalid_argument(
                "StepScheme: explicit diffusion requires dt <= h^2/(4d)");
    }
};

// Solves (I - dt*Lap) x = b on the periodic grid by conjugate gradient.
// The operator is symmetric positive definite and preserves node means; with
// conserve_mean the mean of b is restored exactly on the result, which keeps
// the discrete mass telescoping to machine precision across steps.
inline ScalarField implicit_diffusion_solve(const ScalarField& b, double dt,
                                            const StepScheme& scheme, bool conserve_mean) {
    const GridSpec& g = b.grid();
    const std::int64_t sz = b.size();
    ScalarField x = b;  // good initial guess for small dt
    auto apply = [&](const ScalarField& in) {
        ScalarField out = laplacian(in);
        double* o = out.data();
        const double* i_ = in.data();
        for (std::int64_t i = 0; i < sz; ++i) o[i] = i_[i] - dt * o[i];
        return out;
    };

    ScalarField r = apply(x);
    {
        double* rd = r.data();
        const double* bd = b.data();
        for (std::int64_t i = 0; i < sz; ++i) rd[i] = bd[i] - rd[i];
    }
    const double bnorm = norm2(b.values());
    const double tol = scheme.linear_tol * std::max(bnorm, 1e-300);
    double rr = dot(r.values(), r.values());
    const int max_iters = scheme.max_linear_iters > 0
                              ? scheme.max_linear_iters
                              : static_cast<int>(10 * sz + 100);
    ScalarField p = r;
    int it = 0;
    while (std::sqrt(rr) > tol) {
        if (++it > max_iters)
            throw std::runtime_error("implicit_diffusion_solve: CG did not converge");
        ScalarField ap = apply(p);
        const double alpha = rr / dot(p.values(), ap.values());
        add_scaled(x, alpha, p);
        add_scaled(r, -alpha, ap);
        const double rr_new = dot(r.values(), r.values());
        const double beta = rr_new / rr;
        rr = rr_new;
        double* pd = p.data();
        const double* rd = r.data();
        for (std::int64_t i = 0; i < sz; ++i) pd[i] = rd[i] + beta * pd[i];
    }
    if (conserve_mean) {
        KahanSum sb, sx;
        for (double v : b.values()) sb.add(v);
        for (double v : x.values()) sx.add(v);
        const double shift = (sb.value() - sx.value()) / static_cast<double>(sz);
        double* xd = x.data();
        for (std::int64_t i = 0; i < sz; ++i) xd[i] += shift;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Pointwise Lagrangian: L^i = f^i + m f^i_m + grad_u^i . (g + m g_m)
// ---------------------------------------------------------------------------

// Reusable per-point evaluation buffers.
struct PointWork {
    PayoffEval payoff;
    DriftEval drift;
    std::vector<double> a_buf;
};

inline void eval_lagrangian_into(const GameModel& model, double t, const double* x, double m,
                                 const double* v, const double* grad_u, double* L_out,
                                 PointWork& w) {
    const ModelConstants& c = model.constants();
    model.payoff(t, x, m, v, w.payoff);
    eval_drift_into(model, t, x, m, v, w.drift, w.a_buf);
    for (int i = 0; i < c.N; ++i) {
        double transport = 0.0;
        for (int k = 0; k < c.d; ++k)
            transport += grad_u[static_cast<std::size_t>(i) * c.d + k] *
                         (w.drift.g[static_cast<std::size_t>(k)] +
                          m * w.drift.g_m[static_cast<std::size_t>(k)]);
        L_out[i] = w.payoff.f[static_cast<std::size_t>(i)] +
                   m * w.payoff.f_m[static_cast<std::size_t>(i)] + transport;
    }
}

// Validated single-point evaluation (pre: m >= 0, finite inputs).
inline std::vector<double> eval_lagrangian(const GameModel& model, double t, const double* x,
                                           double m, const double* v, const double* grad_u) {
    detail::check_point_inputs(model, t, x, m, v, "eval_lagrangian");
    const ModelConstants& c = model.constants();
    std::vector<double> L(static_cast<std::size_t>(c.N));
    PointWork w;
    eval_lagrangian_into(model, t, x, m, v, grad_u, L.data(), w);
    return L;
}

// ---------------------------------------------------------------------------
// Forward density stepping
// ---------------------------------------------------------------------------

namespace detail {
// Node-wise drift velocity g(t, x, m(x), v(x)), clamping density dips below
// zero within the positivity floor.
inline MultiField drift_velocity(const GameModel& model, double t, const ScalarField& m,
                                 const MultiField& v) {
    const GridSpec& g = m.grid();
    const ModelConstants& c = model.constants();
    MultiField vel(g, g.d);
    std::vector<double> a_buf(static_cast<std::size_t>(c.d) * c.M);
    std::vector<double> b0v(static_cast<std::size_t>(c.d));
    double x[2];
    for (std::int64_t node = 0; node < g.nodes(); ++node) {
        g.node_coords(node, x);
        const double mv = std::max(0.0, m[node]);
        const double b1v = model.b1(mv);
        model.b0(mv, b0v.data());
        for (int k = 0; k < c.d; ++k) vel.comp(k)[node] = b0v[static_cast<std::size_t>(k)];
        for (int j = 0; j < c.N; ++j) {
            model.control_matrix(j, t, x, a_buf.data());
            for (int k = 0; k < c.d; ++k) {
                double av = 0.0;
                for (int q = 0; q < c.M; ++q)
                    av += a_buf[static_cast<std::size_t>(k) * c.M + q] *
                          v.comp(j * c.M + q)[node];
                vel.comp(k)[node] += b1v * av;
            }
        }
    }
    return vel;
}

inline double max_axis_speed_sum(const MultiField& vel) {
    double worst = 0.0;
    for (std::int64_t node = 0; node < vel.grid().nodes(); ++node) {
        double s = 0.0;
        for (int k = 0; k < vel.components(); ++k) s += std::abs(vel.comp(k)[node]);
        worst = std::max(worst, s);
    }
    return worst;
}
}  // namespace detail

// One step of the density equation: explicit upwind drift, implicit (or
// explicit) diffusion. Pre: m_k >= -POSITIVITY_TOL.
inline ScalarField fp_step(const ScalarField& m_k, const MultiField& v_k,
                           const GameModel& model, double t, StepScheme& scheme) {
    const GridSpec& g = m_k.grid();
    if (m_k.min_value() < -POSITIVITY_TOL)
        throw std::domain_error("fp_step: negative input density");
    const double dt = g.dt();

    const MultiField vel = detail::drift_velocity(model, t, m_k, v_k);
    scheme.cfl_max = std::max(scheme.cfl_max, dt * detail::max_axis_speed_sum(vel) / g.h());

    ScalarField rhs = div_upwind(m_k, vel);
    {
        double* r = rhs.data();
        const double* m = m_k.data();
        for (std::int64_t i = 0; i < g.nodes(); ++i) r[i] = m[i] - dt * r[i];
    }
    if (!scheme.implicit_diffusion) {
        scheme.require_explicit_stable(g);
        ScalarField lap = laplacian(m_k);
        add_scaled(rhs, dt, lap);
        return rhs;
    }
    return implicit_diffusion_solve(rhs, dt, scheme, /*conserve_mean=*/true);
}

// Marches the density from t=0 to t=T under the given control trajectory.
// Slice 0 of the result equals m0.
inline ScalarTrajectory solve_forward(const GameModel& model, const MultiTrajectory& v,
                                      const ScalarField& m0, StepScheme& scheme) {
    const GridSpec& g = m0.grid();
    if (m0.min_value() < 0.0) throw std::domain_error("solve_forward: m0 must be >= 0");
    if (v.steps() != g.nt || !(v.grid() == g))
        throw std::invalid_argument("solve_forward: control trajectory grid mismatch");
    ScalarTrajectory m;
    m.slice.reserve(static_cast<std::size_t>(g.nt) + 1);
    m.slice.push_back(m0);
    for (int k = 0; k < g.nt; ++k) {
        const double t = k * g.dt();
        m.slice.push_back(fp_step(m.slice.back(), v.slice[static_cast<std::size_t>(k)],
                                  model, t, scheme));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Backward value stepping
// ---------------------------------------------------------------------------

// One backward step: u_k = u_{k+1} + dt (Lap u_k + L_k) with implicit
// diffusion; the Lagrangian forcing is supplied explicitly by the caller.
inline MultiField bellman_step(const MultiField& u_next, const MultiField& L, double dt,
                               StepScheme& scheme) {
    const GridSpec& g = u_next.grid();
    MultiField u_k(g, u_next.components());
    for (int c = 0; c < u_next.components(); ++c) {
        ScalarField rhs = u_next.comp(c);
        add_scaled(rhs, dt, L.comp(c));
        if (!scheme.implicit_diffusion) {
            scheme.require_explicit_stable(g);
            ScalarField lap = laplacian(u_next.comp(c));
            add_scaled(rhs, dt, lap);
            u_k.comp(c) = rhs;
        } else {
            u_k.comp(c) = implicit_diffusion_solve(rhs, dt, scheme, /*conserve_mean=*/false);
        }
    }
    return u_k;
}

// Lagrangian field at one time slice from (m, v, grad u) there.
inline MultiField lagrangian_field(const GameModel& model, double t, const ScalarField& m,
                                   const MultiField& v, const MultiField& u) {
    const GridSpec& g = m.grid();
    const ModelConstants& c = model.constants();
    MultiField L(g, c.N);
    std::vector<MultiField> grads;
    grads.reserve(static_cast<std::size_t>(c.N));
    for (int i = 0; i < c.N; ++i) grads.push_back(gradient(u.comp(i)));
    PointWork w;
    std::vector<double> grad_u(static_cast<std::size_t>(c.N) * c.d);
    std::vector<double> v_node(static_cast<std::size_t>(c.N) * c.M);
    std::vector<double> L_node(static_cast<std::size_t>(c.N));
    double x[2];
    for (std::int64_t node = 0; node < g.nodes(); ++node) {
        g.node_coords(node, x);
        for (int i = 0; i < c.N; ++i)
            for (int k = 0; k < c.d; ++k)
                grad_u[static_cast<std::size_t>(i) * c.d + k] = grads[static_cast<std::size_t>(i)].comp(k)[node];
        for (int j = 0; j < c.N * c.M; ++j) v_node[static_cast<std::size_t>(j)] = v.comp(j)[node];
        eval_lagrangian_into(model, t, x, std::max(0.0, m[node]), v_node.data(),
                             grad_u.data(), L_node.data(), w);
        for (int i = 0; i < c.N; ++i) L.comp(i)[node] = L_node[static_cast<std::size_t>(i)];
    }
    return L;
}

// Marches the value system from t=T down to 0; slice nt equals u_T. The
// terminal datum u_T enters as terminal data of the backward system. The
// Lagrangian is evaluated from the known slice k+1.
inline MultiTrajectory solve_backward(const GameModel& model, const ScalarTrajectory& m,
                                      const MultiTrajectory& v, const MultiField& u_T,
                                      StepScheme& scheme) {
    const GridSpec& g = m.grid();
    const ModelConstants& c = model.constants();
    if (u_T.components() != c.N)
        throw std::invalid_argument("solve_backward: u_T must have N components");
    if (m.steps() != g.nt || v.steps() != g.nt)
        throw std::invalid_argument("solve_backward: trajectory length mismatch");
    MultiTrajectory u;
    u.slice.assign(static_cast<std::size_t>(g.nt) + 1, MultiField(g, c.N));
    u.slice[static_cast<std::size_t>(g.nt)] = u_T;
    for (int k = g.nt - 1; k >= 0; --k) {
        const double t_next = (k + 1) * g.dt();
        const MultiField L = lagrangian_field(model, t_next,
                                              m.slice[static_cast<std::size_t>(k) + 1],
                                              v.slice[static_cast<std::size_t>(k) + 1],
                                              u.slice[static_cast<std::size_t>(k) + 1]);
        u.slice[static_cast<std::size_t>(k)] =
            bellman_step(u.slice[static_cast<std::size_t>(k) + 1], L, g.dt(), scheme);
    }
    return u;
}

}  // namespace mfgb
