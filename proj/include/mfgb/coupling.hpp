#pragma once

// Nash feedback closure and the damped Picard fixed-point iteration coupling
// the forward density solve with the backward value solve.
//
// The compatibility condition ties the control to the state: for every
// player i and control index j,
//     f^i_{v^i_j}(v, m) + b1(m) sum_k d_{x_k} u^i A^i_{kj} = 0.
// Models may supply a closed form; otherwise a Newton iteration on the
// strictly monotone gradient map solves it pointwise.

#include "mfgb/pde.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgb {

struct SolverConfig {
    double theta = 0.5;        // damping of the control update, in (0,1]
    double picard_tol = 1e-8;  // L2(Q) residual and relative-change tolerance
    int max_picard = 200;
    double newton_tol = 1e-12;  // max-norm residual of the pointwise solve
    int max_newton = 50;
    std::uint64_t seed = 12345;
    bool force_newton = false;  // bypass closed-form feedback (cross-check path)

    void validate() const {
        if (!(theta > 0.0 && theta <= 1.0))
            throw std::invalid_argument("SolverConfig: theta must be in (0,1]");
        if (!(picard_tol > 0.0) || !(newton_tol > 0.0))
            throw std::invalid_argument("SolverConfig: tolerances must be > 0");
        if (max_picard < 1 || max_newton < 1)
            throw std::invalid_argument("SolverConfig: iteration limits must be >= 1");
    }
};

class FeedbackError : public std::runtime_error {
public:
    FeedbackError(const std::string& what, double residual)
        : std::runtime_error(what), last_residual(residual) {}
    double last_residual;
};

namespace detail {
// Residual of the compatibility condition at fixed (m, grad_u):
// R(v) = T(v) + rhs with T the stacked i-block gradients and
// rhs_{i,j} = b1(m) (grad_u^i A^i)_j.
struct FeedbackSystem {
    const GameModel* model;
    double t;
    const double* x;
    double m;
    std::vector<double> rhs;  // N*M, constant in v
    mutable PayoffEval pe;

    void residual(const double* v, double* out) const {
        const ModelConstants& c = model->constants();
        model->payoff(t, x, m, v, pe);
        for (int i = 0; i < c.N * c.M; ++i)
            out[i] = pe.f_v[static_cast<std::size_t>(i)] + rhs[static_cast<std::size_t>(i)];
    }
};

inline std::vector<double> feedback_rhs(const GameModel& model, double t, const double* x,
                                        double m, const double* grad_u) {
    const ModelConstants& c = model.constants();
    std::vector<double> rhs(static_cast<std::size_t>(c.N) * c.M, 0.0);
    std::vector<double> a_buf(static_cast<std::size_t>(c.d) * c.M);
    const double b1v = model.b1(m);
    for (int i = 0; i < c.N; ++i) {
        model.control_matrix(i, t, x, a_buf.data());
        for (int j = 0; j < c.M; ++j) {
            double guA = 0.0;
            for (int k = 0; k < c.d; ++k)
                guA += grad_u[static_cast<std::size_t>(i) * c.d + k] *
                       a_buf[static_cast<std::size_t>(k) * c.M + j];
            rhs[static_cast<std::size_t>(i) * c.M + j] = b1v * guA;
        }
    }
    return rhs;
}

// Newton with analytic Jacobian when the model supplies one, else a central
// finite-difference Jacobian (step 1e-6). A halving line search guards the
// steps; the monotone structure makes the plain step accept almost always.
inline void feedback_newton(const FeedbackSystem& sys, const SolverConfig& cfg, double* v) {
    const ModelConstants& c = sys.model->constants();
    const int nm = c.N * c.M;
    std::vector<double> res(static_cast<std::size_t>(nm));
    std::vector<double> res_try(static_cast<std::size_t>(nm));
    std::vector<double> jac(static_cast<std::size_t>(nm) * nm);
    std::vector<double> step(static_cast<std::size_t>(nm));
    std::vector<double> v_try(static_cast<std::size_t>(nm));
    std::vector<double> v_pert(static_cast<std::size_t>(nm));

    sys.residual(v, res.data());
    double rnorm = norm_inf(res);
    for (int it = 0; it < cfg.max_newton; ++it) {
        if (rnorm <= cfg.newton_tol) return;
        if (!sys.model->payoff_gradient_jacobian(sys.t, sys.x, sys.m, v, jac.data())) {
            const double fd = 1e-6;
            for (int col = 0; col < nm; ++col) {
                for (int i = 0; i < nm; ++i) v_pert[static_cast<std::size_t>(i)] = v[i];
                v_pert[static_cast<std::size_t>(col)] += fd;
                sys.residual(v_pert.data(), step.data());
                v_pert[static_cast<std::size_t>(col)] -= 2.0 * fd;
                sys.residual(v_pert.data(), res_try.data());
                for (int row = 0; row < nm; ++row)
                    jac[static_cast<std::size_t>(row) * nm + col] =
                        (step[static_cast<std::size_t>(row)] - res_try[static_cast<std::size_t>(row)]) /
                        (2.0 * fd);
            }
        }
        for (int i = 0; i < nm; ++i) step[static_cast<std::size_t>(i)] = -res[static_cast<std::size_t>(i)];
        std::vector<double> jac_lu = jac;
        if (!solve_dense(jac_lu, step, nm))
            throw FeedbackError("feedback_solve: singular Newton system", rnorm);
        double scale = 1.0;
        for (int back = 0; back < 30; ++back) {
            for (int i = 0; i < nm; ++i)
                v_try[static_cast<std::size_t>(i)] = v[i] + scale * step[static_cast<std::size_t>(i)];
            sys.residual(v_try.data(), res_try.data());
            const double rt = norm_inf(res_try);
            if (rt < rnorm || rt <= cfg.newton_tol) {
                for (int i = 0; i < nm; ++i) v[i] = v_try[static_cast<std::size_t>(i)];
                res = res_try;
                rnorm = rt;
                break;
            }
            scale *= 0.5;
            if (back == 29)
                throw FeedbackError("feedback_solve: line search stalled", rnorm);
        }
    }
    if (rnorm > cfg.newton_tol)
        throw FeedbackError("feedback_solve: Newton did not converge", rnorm);
}
}  // namespace detail

// Solves the compatibility condition at one point (pre: m >= 0, grad_u is
// N-by-d row-major). Writes the unique control into v_out (N*M values).
inline void feedback_solve_into(const GameModel& model, double t, const double* x, double m,
                                const double* grad_u, const SolverConfig& cfg, double* v_out) {
    const ModelConstants& c = model.constants();
    if (!(m >= 0.0)) throw std::domain_error("feedback_solve: negative density");
    if (!cfg.force_newton && model.feedback_closed_form(t, x, m, grad_u, v_out)) return;
    detail::FeedbackSystem sys;
    sys.model = &model;
    sys.t = t;
    sys.x = x;
    sys.m = m;
    sys.rhs = detail::feedback_rhs(model, t, x, m, grad_u);
    sys.pe.resize(c.N, c.M);
    for (int i = 0; i < c.N * c.M; ++i) v_out[i] = 0.0;
    detail::feedback_newton(sys, cfg, v_out);
}

inline std::vector<double> feedback_solve(const GameModel& model, double t, const double* x,
                                          double m, const double* grad_u,
                                          const SolverConfig& cfg = {}) {
    const ModelConstants& c = model.constants();
    std::vector<double> v(static_cast<std::size_t>(c.N) * c.M);
    feedback_solve_into(model, t, x, m, grad_u, cfg, v.data());
    return v;
}

// Hamiltonian: the Lagrangian evaluated at the feedback control.
inline std::vector<double> hamiltonian(const GameModel& model, double t, const double* x,
                                       double m, const double* grad_u,
                                       const SolverConfig& cfg = {}) {
    const std::vector<double> v = feedback_solve(model, t, x, m, grad_u, cfg);
    return eval_lagrangian(model, t, x, m, v.data(), grad_u);
}

// ---------------------------------------------------------------------------
// Picard coupling
// ---------------------------------------------------------------------------

struct IterationRecord {
    int iteration = 0;
    double residual = 0.0;  // L2(Q) norm of the compatibility residual
    double dm_rel = 0.0;
    double du_rel = 0.0;
    double dv_rel = 0.0;
};

struct SolutionState {
    ScalarTrajectory m;
    MultiTrajectory u;  // N components
    MultiTrajectory v;  // N*M components
    std::vector<IterationRecord> history;
    bool converged = false;
    double residual_l2 = 0.0;
    double residual_max = 0.0;

    void validate() const {
        m.validate();
        u.validate();
        v.validate();
        if (!(u.grid() == m.grid()) || !(v.grid() == m.grid()))
            throw std::invalid_argument("SolutionState: trajectories on different grids");
        for (const auto& f : m.slice)
            if (f.min_value() < -POSITIVITY_TOL)
                throw std::invalid_argument("SolutionState: density below positivity floor");
    }
};

class PicardNonConvergence : public std::runtime_error {
public:
    PicardNonConvergence(const std::string& what, SolutionState s)
        : std::runtime_error(what), state(std::move(s)) {}
    SolutionState state;
};

inline void write_history_csv(const std::string& path,
                              const std::vector<IterationRecord>& history) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_history_csv: cannot open " + path);
    os << "iteration,residual_1.81_L2,dm_rel,du_rel,dv_rel\n";
    for (const auto& rec : history)
        os << rec.iteration << "," << fmt_double(rec.residual) << ","
           << fmt_double(rec.dm_rel) << "," << fmt_double(rec.du_rel) << ","
           << fmt_double(rec.dv_rel) << "\n";
}

namespace detail {
struct ResidualNorms {
    double l2 = 0.0;
    double max = 0.0;
};

// L2(Q) and max norms of the compatibility residual over the whole cylinder.
inline ResidualNorms compatibility_residual(const GameModel& model, const ScalarTrajectory& m,
                                            const MultiTrajectory& u, const MultiTrajectory& v) {
    const GridSpec& g = m.grid();
    const ModelConstants& c = model.constants();
    ResidualNorms out;
    PayoffEval pe;
    pe.resize(c.N, c.M);
    std::vector<double> grad_u(static_cast<std::size_t>(c.N) * c.d);
    std::vector<double> v_node(static_cast<std::size_t>(c.N) * c.M);
    double x[2];
    const double sq = time_trapezoid(g.nt, g.dt(), [&](int k) {
        const double t = k * g.dt();
        const MultiField& uk = u.slice[static_cast<std::size_t>(k)];
        const MultiField& vk = v.slice[static_cast<std::size_t>(k)];
        const ScalarField& mk = m.slice[static_cast<std::size_t>(k)];
        std::vector<MultiField> grads;
        grads.reserve(static_cast<std::size_t>(c.N));
        for (int i = 0; i < c.N; ++i) grads.push_back(gradient(uk.comp(i)));
        KahanSum slice_sq;
        for (std::int64_t node = 0; node < g.nodes(); ++node) {
            g.node_coords(node, x);
            const double mv = std::max(0.0, mk[node]);
            for (int i = 0; i < c.N; ++i)
                for (int kk = 0; kk < c.d; ++kk)
                    grad_u[static_cast<std::size_t>(i) * c.d + kk] =
                        grads[static_cast<std::size_t>(i)].comp(kk)[node];
            for (int j = 0; j < c.N * c.M; ++j) v_node[static_cast<std::size_t>(j)] = vk.comp(j)[node];
            const std::vector<double> rhs = feedback_rhs(model, t, x, mv, grad_u.data());
            model.payoff(t, x, mv, v_node.data(), pe);
            for (int i = 0; i < c.N * c.M; ++i) {
                const double res = pe.f_v[static_cast<std::size_t>(i)] + rhs[static_cast<std::size_t>(i)];
                slice_sq.add(res * res);
                out.max = std::max(out.max, std::abs(res));
            }
        }
        return g.cell_volume() * slice_sq.value();
    });
    out.l2 = std::sqrt(std::max(0.0, sq));
    return out;
}

// Pointwise feedback over the whole cylinder.
inline MultiTrajectory feedback_trajectory(const GameModel& model, const ScalarTrajectory& m,
                                           const MultiTrajectory& u, const SolverConfig& cfg) {
    const GridSpec& g = m.grid();
    const ModelConstants& c = model.constants();
    MultiTrajectory out = zero_multi_trajectory(g, c.N * c.M);
    std::vector<double> grad_u(static_cast<std::size_t>(c.N) * c.d);
    std::vector<double> v_node(static_cast<std::size_t>(c.N) * c.M);
    double x[2];
    for (int k = 0; k <= g.nt; ++k) {
        const double t = k * g.dt();
        const MultiField& uk = u.slice[static_cast<std::size_t>(k)];
        MultiField& vk = out.slice[static_cast<std::size_t>(k)];
        std::vector<MultiField> grads;
        grads.reserve(static_cast<std::size_t>(c.N));
        for (int i = 0; i < c.N; ++i) grads.push_back(gradient(uk.comp(i)));
        for (std::int64_t node = 0; node < g.nodes(); ++node) {
            g.node_coords(node, x);
            for (int i = 0; i < c.N; ++i)
                for (int kk = 0; kk < c.d; ++kk)
                    grad_u[static_cast<std::size_t>(i) * c.d + kk] =
                        grads[static_cast<std::size_t>(i)].comp(kk)[node];
            feedback_solve_into(model, t, x, std::max(0.0, m.slice[static_cast<std::size_t>(k)][node]),
                                grad_u.data(), cfg, v_node.data());
            for (int j = 0; j < c.N * c.M; ++j) vk.comp(j)[node] = v_node[static_cast<std::size_t>(j)];
        }
    }
    return out;
}

inline double rel_change(double dist, double base_norm) {
    return dist / std::max(base_norm, 1e-12);
}
}  // namespace detail

// Damped Picard (best-response) iteration: from the current control solve
// forward, solve backward, read the feedback control, and move the control a
// theta-fraction toward it. Stops when the L2(Q) compatibility residual and
// the relative changes of (m, u, v) all fall below picard_tol. Throws
// PicardNonConvergence (state attached) when max_picard is exhausted.
inline SolutionState picard_solve(const GameModel& model, const ScalarField& m0,
                                  const MultiField& u_T, const SolverConfig& cfg,
                                  StepScheme* scheme_in = nullptr) {
    cfg.validate();
    const GridSpec& g = m0.grid();
    const ModelConstants& c = model.constants();
    if (u_T.components() != c.N)
        throw std::invalid_argument("picard_solve: u_T must have N components");
    {
        const GateReport gates = check_gates(c, /*prototype=*/false);
        if (!gates.all_pass())
            std::cerr << "[mfgb] warning: parameter gates not satisfied; proceeding anyway\n";
    }
    StepScheme local_scheme;
    StepScheme& scheme = scheme_in ? *scheme_in : local_scheme;

    SolutionState state;
    state.v = zero_multi_trajectory(g, c.N * c.M);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    ScalarTrajectory prev_m;
    MultiTrajectory prev_u;
    MultiTrajectory prev_v;

    for (int it = 1; it <= cfg.max_picard; ++it) {
        ScalarTrajectory m = solve_forward(model, state.v, m0, scheme);
        MultiTrajectory u = solve_backward(model, m, state.v, u_T, scheme);
        const detail::ResidualNorms res = detail::compatibility_residual(model, m, u, state.v);
        const MultiTrajectory v_star = detail::feedback_trajectory(model, m, u, cfg);

        IterationRecord rec;
        rec.iteration = it;
        rec.residual = res.l2;
        bool small_changes;
        if (it == 1) {
            // no previous iterate yet: gate on the undamped prospective change
            rec.dv_rel = detail::rel_change(l2q_distance(v_star, state.v), l2q_norm(state.v));
            rec.dm_rel = nan;
            rec.du_rel = nan;
            small_changes = rec.dv_rel <= cfg.picard_tol;
        } else {
            rec.dv_rel = detail::rel_change(l2q_distance(state.v, prev_v), l2q_norm(prev_v));
            rec.dm_rel = detail::rel_change(l2q_distance(m, prev_m), l2q_norm(prev_m));
            rec.du_rel = detail::rel_change(l2q_distance(u, prev_u), l2q_norm(prev_u));
            small_changes = rec.dv_rel <= cfg.picard_tol && rec.dm_rel <= cfg.picard_tol &&
                            rec.du_rel <= cfg.picard_tol;
        }
        state.history.push_back(rec);

        if (res.l2 <= cfg.picard_tol && small_changes) {
            state.m = std::move(m);
            state.u = std::move(u);
            state.converged = true;
            state.residual_l2 = res.l2;
            state.residual_max = res.max;
            return state;
        }

        prev_m = m;
        prev_u = u;
        prev_v = state.v;
        // v <- (1-theta) v + theta v*
        for (std::size_t k = 0; k < state.v.slice.size(); ++k) {
            MultiField& vk = state.v.slice[k];
            const MultiField& sk = v_star.slice[k];
            for (int comp = 0; comp < vk.components(); ++comp) {
                double* dst = vk.comp(comp).data();
                const double* src = sk.comp(comp).data();
                for (std::int64_t i = 0; i < g.nodes(); ++i)
                    dst[i] = (1.0 - cfg.theta) * dst[i] + cfg.theta * src[i];
            }
        }
        state.m = std::move(m);
        state.u = std::move(u);
        state.residual_l2 = res.l2;
        state.residual_max = res.max;
    }
    throw PicardNonConvergence("picard_solve: no convergence within max iterations",
                               std::move(state));
}

}  // namespace mfgb
