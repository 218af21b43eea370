#pragma once

// Verification of computed solutions against the proven structure: cost
// functionals, the stationarity of the Nash point under control
// perturbations, the linearized density sensitivity, the a-priori estimate
// quantities, and the sampled Lagrangian inequalities.

#include "mfgb/coupling.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace mfgb {

// ---------------------------------------------------------------------------
// Cost functional J^i = int_Q m f^i + int_Omega u_T^i m(T)
// (trapezoid in time, node sums in space)
// ---------------------------------------------------------------------------

inline std::vector<double> cost_functional(const GameModel& model, const MultiTrajectory& v,
                                           const ScalarTrajectory& m, const MultiField& u_T) {
    const GridSpec& g = m.grid();
    const ModelConstants& c = model.constants();
    if (v.steps() != m.steps()) throw std::invalid_argument("cost_functional: length mismatch");
    std::vector<double> J(static_cast<std::size_t>(c.N), 0.0);
    PayoffEval pe;
    pe.resize(c.N, c.M);
    std::vector<double> v_node(static_cast<std::size_t>(c.N) * c.M);
    double x[2];
    for (int i = 0; i < c.N; ++i) {
        const double running = time_trapezoid(g.nt, g.dt(), [&](int k) {
            const double t = k * g.dt();
            const ScalarField& mk = m.slice[static_cast<std::size_t>(k)];
            const MultiField& vk = v.slice[static_cast<std::size_t>(k)];
            KahanSum s;
            for (std::int64_t node = 0; node < g.nodes(); ++node) {
                g.node_coords(node, x);
                const double mv = std::max(0.0, mk[node]);
                for (int j = 0; j < c.N * c.M; ++j)
                    v_node[static_cast<std::size_t>(j)] = vk.comp(j)[node];
                model.payoff(t, x, mv, v_node.data(), pe);
                s.add(mv * pe.f[static_cast<std::size_t>(i)]);
            }
            return g.cell_volume() * s.value();
        });
        KahanSum terminal;
        const ScalarField& mT = m.slice.back();
        for (std::int64_t node = 0; node < g.nodes(); ++node)
            terminal.add(u_T.comp(i)[node] * mT[node]);
        J[static_cast<std::size_t>(i)] = running + g.cell_volume() * terminal.value();
    }
    return J;
}

// ---------------------------------------------------------------------------
// Linearized density sensitivity
// ---------------------------------------------------------------------------

// Trajectory of the density derivative along a control perturbation of one
// player; slice 0 is identically zero.
struct LinearizedDensity {
    int player = 0;
    ScalarTrajectory M;
};

// Marches the linearized density equation with coefficients frozen at the
// converged state: dM/dt - Lap M = -div(M g + m g_{v^i} z + m M g_m). The
// flux is the exact tangent of the fp_step flux (donor cells by the sign of
// the base velocity), diffusion implicit as in fp_step.
inline LinearizedDensity solve_linearized_fp(const GameModel& model, const SolutionState& state,
                                             int player, const MultiTrajectory& z,
                                             StepScheme& scheme) {
    const GridSpec& g = state.m.grid();
    const ModelConstants& c = model.constants();
    if (player < 0 || player >= c.N)
        throw std::invalid_argument("solve_linearized_fp: bad player index");
    if (z.steps() != g.nt || z.slice.front().components() != c.M)
        throw std::invalid_argument("solve_linearized_fp: z must have M components on the grid");

    LinearizedDensity out;
    out.player = player;
    out.M = zero_scalar_trajectory(g);

    std::vector<double> a_buf(static_cast<std::size_t>(c.d) * c.M);
    std::vector<double> b0p(static_cast<std::size_t>(c.d));
    double x[2];
    for (int k = 0; k < g.nt; ++k) {
        const double t = k * g.dt();
        const ScalarField& mk = state.m.slice[static_cast<std::size_t>(k)];
        const MultiField& vk = state.v.slice[static_cast<std::size_t>(k)];
        const ScalarField& Mk = out.M.slice[static_cast<std::size_t>(k)];
        const MultiField vel = detail::drift_velocity(model, t, mk, vk);

        // velocity perturbation: dvel = g_m(m, v) * M + b1(m) A^i z
        MultiField dvel(g, g.d);
        for (std::int64_t node = 0; node < g.nodes(); ++node) {
            g.node_coords(node, x);
            const double mv = std::max(0.0, mk[node]);
            const double b1v = model.b1(mv);
            const double b1p = model.b1_deriv(mv);
            model.b0_deriv(mv, b0p.data());
            for (int kk = 0; kk < c.d; ++kk)
                dvel.comp(kk)[node] = b0p[static_cast<std::size_t>(kk)] * Mk[node];
            for (int j = 0; j < c.N; ++j) {
                model.control_matrix(j, t, x, a_buf.data());
                for (int kk = 0; kk < c.d; ++kk) {
                    double av = 0.0;
                    double az = 0.0;
                    for (int q = 0; q < c.M; ++q) {
                        av += a_buf[static_cast<std::size_t>(kk) * c.M + q] * vk.comp(j * c.M + q)[node];
                        if (j == player)
                            az += a_buf[static_cast<std::size_t>(kk) * c.M + q] * z.slice[static_cast<std::size_t>(k)].comp(q)[node];
                    }
                    dvel.comp(kk)[node] += b1p * av * Mk[node];
                    if (j == player) dvel.comp(kk)[node] += b1v * az;
                }
            }
        }

        ScalarField rhs = div_upwind_tangent(mk, vel, Mk, dvel);
        {
            double* r = rhs.data();
            const double* Md = Mk.data();
            for (std::int64_t i = 0; i < g.nodes(); ++i) r[i] = Md[i] - g.dt() * r[i];
        }
        out.M.slice[static_cast<std::size_t>(k) + 1] =
            scheme.implicit_diffusion
                ? implicit_diffusion_solve(rhs, g.dt(), scheme, /*conserve_mean=*/true)
                : [&] {
                      scheme.require_explicit_stable(g);
                      ScalarField ex = rhs;
                      ScalarField lap = laplacian(Mk);
                      add_scaled(ex, g.dt(), lap);
                      return ex;
                  }();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stationarity of the cost under control perturbations
// ---------------------------------------------------------------------------

struct GateauxDirection {
    int player = 0;
    MultiTrajectory z;  // M components
};

struct GateauxResult {
    int player = 0;
    double derivative = 0.0;  // central difference of J^i along the direction
    double scale = 0.0;       // ||z||_{L2(Q)} * (1 + |J^i|)
    double normalized = 0.0;
};

// Central difference (J^i(v + s z^i) - J^i(v - s z^i)) / 2s with each cost
// evaluated on its own re-solved forward density.
inline std::vector<GateauxResult> gateaux_check(const GameModel& model,
                                                const SolutionState& state,
                                                const std::vector<GateauxDirection>& directions,
                                                double step, const MultiField& u_T,
                                                StepScheme& scheme) {
    const GridSpec& g = state.m.grid();
    const ModelConstants& c = model.constants();
    if (!(step > 0.0)) throw std::invalid_argument("gateaux_check: step must be > 0");
    const ScalarField& m0 = state.m.slice.front();
    const std::vector<double> J0 = cost_functional(model, state.v, state.m, u_T);

    std::vector<GateauxResult> results;
    results.reserve(directions.size());
    for (const auto& dir : directions) {
        if (dir.player < 0 || dir.player >= c.N)
            throw std::invalid_argument("gateaux_check: bad player index");
        auto perturbed = [&](double s) {
            MultiTrajectory v = state.v;
            for (int k = 0; k <= g.nt; ++k)
                for (int q = 0; q < c.M; ++q)
                    add_scaled(v.slice[static_cast<std::size_t>(k)].comp(dir.player * c.M + q), s,
                               dir.z.slice[static_cast<std::size_t>(k)].comp(q));
            const ScalarTrajectory m = solve_forward(model, v, m0, scheme);
            return cost_functional(model, v, m, u_T)[static_cast<std::size_t>(dir.player)];
        };
        GateauxResult r;
        r.player = dir.player;
        r.derivative = (perturbed(step) - perturbed(-step)) / (2.0 * step);
        r.scale = l2q_norm(dir.z) * (1.0 + std::abs(J0[static_cast<std::size_t>(dir.player)]));
        r.normalized = r.scale > 1e-300 ? std::abs(r.derivative) / r.scale : std::abs(r.derivative);
        results.push_back(r);
    }
    return results;
}

// ---------------------------------------------------------------------------
// Sampled Lagrangian inequalities
// ---------------------------------------------------------------------------

struct LagrangianBoundsConfig {
    int count = 10000;
    std::uint64_t seed = 12345;
    double eps0 = 0.0;  // 0 -> 1/(4N)
    double m_max = 10.0;
    double grad_max = 10.0;
    bool from_state = true;  // sample the converged state; else random (m, grad_u)
};

struct LagrangianBoundsReport {
    double eps0 = 0.0;
    int samples = 0;
    // smallest constants making each inequality hold over the sample
    double lower_C = 0.0;   // sum coerciveness
    double upper_C = 0.0;   // per-player upper bound
    double global_C = 0.0;  // global bound
    // same constants at doubled sample count, and the stability flag
    double lower_C_doubled = 0.0;
    double upper_C_doubled = 0.0;
    double global_C_doubled = 0.0;
    bool stable = true;  // every constant drifts by at most 2x under doubling
};

namespace detail {
struct LagrangianFit {
    double lower = 0.0, upper = 0.0, global = 0.0;
};

template <class SampleFn>
inline LagrangianFit fit_lagrangian_bounds(const GameModel& model, double eps0, int count,
                                           SampleFn&& draw) {
    const ModelConstants& c = model.constants();
    const int N = c.N, M = c.M, d = c.d;
    LagrangianFit fit;
    PointWork w;
    std::vector<double> L(static_cast<std::size_t>(N));
    for (int sample = 0; sample < count; ++sample) {
        double t = 0.0, x[2] = {0.0, 0.0}, m = 0.0;
        std::vector<double> v(static_cast<std::size_t>(N) * M), grad_u(static_cast<std::size_t>(N) * d);
        draw(sample, t, x, m, v, grad_u);
        eval_lagrangian_into(model, t, x, m, v.data(), grad_u.data(), L.data(), w);

        const double m_r = pow0(m, c.r);
        const double m_2s = pow0(m, 2.0 * c.s);
        const double m_2s0 = pow0(m, 2.0 * c.s0);
        const double ratio = 1.0 + (m_2s + 1.0) / (m_r + 1.0);
        const double vnorm_sq = dot(v, v);
        double grad_sq = 0.0;  // |grad u|^2 over all players
        std::vector<double> grad_w(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < N; ++i)
            for (int k = 0; k < d; ++k) {
                const double gik = grad_u[static_cast<std::size_t>(i) * d + k];
                grad_sq += gik * gik;
                grad_w[static_cast<std::size_t>(k)] += gik;
            }
        const double grad_w_sq = dot(grad_w, grad_w);
        double Lsum = 0.0;
        for (int i = 0; i < N; ++i) Lsum += L[static_cast<std::size_t>(i)];

        // sum coerciveness
        {
            const double need = 0.5 * c.C0 * (m_r + 1.0) * vnorm_sq - Lsum;
            const double den = (m_2s0 + 1.0) + grad_w_sq * ratio;
            fit.lower = std::max(fit.lower, need / den);
        }
        // per-player upper bound and global bound
        for (int i = 0; i < N; ++i) {
            double gw_diff_sq = 0.0;
            for (int k = 0; k < d; ++k) {
                const double gd = grad_u[static_cast<std::size_t>(i) * d + k] -
                                  eps0 * grad_w[static_cast<std::size_t>(k)];
                gw_diff_sq += gd * gd;
            }
            const double up_lhs = L[static_cast<std::size_t>(i)] - eps0 * Lsum;
            const double up_den = (1.0 + m_2s0) + gw_diff_sq * ratio;
            fit.upper = std::max(fit.upper, up_lhs / up_den);

            const double gl_den = 1.0 + m_2s0 + (1.0 + m_r) * vnorm_sq + grad_sq * ratio;
            fit.global = std::max(fit.global, std::abs(L[static_cast<std::size_t>(i)]) / gl_den);
        }
    }
    return fit;
}
}  // namespace detail

// Samples the three Lagrangian inequalities either on pointwise triples of a
// converged state (which satisfy the compatibility condition by construction)
// or on random (m, grad_u) with the control from feedback_solve. Reports the
// fitted constants at the configured count and at double the count.
inline LagrangianBoundsReport sample_lagrangian_bounds(const GameModel& model,
                                                       const SolutionState* state,
                                                       const LagrangianBoundsConfig& cfg,
                                                       const SolverConfig& solver_cfg = {}) {
    const ModelConstants& c = model.constants();
    LagrangianBoundsReport rep;
    rep.eps0 = cfg.eps0 > 0.0 ? cfg.eps0 : 1.0 / (4.0 * static_cast<double>(c.N));
    rep.samples = cfg.count;

    auto run = [&](int count) {
        std::mt19937_64 rng(cfg.seed);
        if (cfg.from_state && state) {
            const GridSpec& g = state->m.grid();
            std::uniform_int_distribution<int> pick_k(0, g.nt);
            std::uniform_int_distribution<std::int64_t> pick_node(0, g.nodes() - 1);
            // per-slice gradients are cached lazily
            std::vector<std::vector<MultiField>> grads(static_cast<std::size_t>(g.nt) + 1);
            return detail::fit_lagrangian_bounds(
                model, rep.eps0, count,
                [&](int /*s*/, double& t, double* x, double& m, std::vector<double>& v,
                    std::vector<double>& grad_u) {
                    const int k = pick_k(rng);
                    const std::int64_t node = pick_node(rng);
                    t = k * g.dt();
                    g.node_coords(node, x);
                    m = std::max(0.0, state->m.slice[static_cast<std::size_t>(k)][node]);
                    auto& gk = grads[static_cast<std::size_t>(k)];
                    if (gk.empty()) {
                        gk.reserve(static_cast<std::size_t>(c.N));
                        for (int i = 0; i < c.N; ++i)
                            gk.push_back(gradient(state->u.slice[static_cast<std::size_t>(k)].comp(i)));
                    }
                    for (int i = 0; i < c.N; ++i)
                        for (int kk = 0; kk < c.d; ++kk)
                            grad_u[static_cast<std::size_t>(i) * c.d + kk] = gk[static_cast<std::size_t>(i)].comp(kk)[node];
                    for (int j = 0; j < c.N * c.M; ++j)
                        v[static_cast<std::size_t>(j)] = state->v.slice[static_cast<std::size_t>(k)].comp(j)[node];
                });
        }
        std::uniform_real_distribution<double> um(0.0, cfg.m_max);
        std::uniform_real_distribution<double> ug(-cfg.grad_max, cfg.grad_max);
        return detail::fit_lagrangian_bounds(
            model, rep.eps0, count,
            [&](int s, double& t, double* x, double& m, std::vector<double>& v,
                std::vector<double>& grad_u) {
                t = 0.0;
                x[0] = x[1] = 0.0;
                if (s == 0) {
                    // corner sample: m = 0, grad_u = 0
                    m = 0.0;
                    std::fill(grad_u.begin(), grad_u.end(), 0.0);
                } else {
                    m = um(rng);
                    for (auto& gu : grad_u) gu = ug(rng);
                }
                v = feedback_solve(model, t, x, m, grad_u.data(), solver_cfg);
            });
    };

    const detail::LagrangianFit base = run(cfg.count);
    const detail::LagrangianFit twice = run(2 * cfg.count);
    rep.lower_C = base.lower;
    rep.upper_C = base.upper;
    rep.global_C = base.global;
    rep.lower_C_doubled = twice.lower;
    rep.upper_C_doubled = twice.upper;
    rep.global_C_doubled = twice.global;
    auto stable_pair = [](double a, double b) {
        const double lo = std::min(a, b), hi = std::max(a, b);
        return hi <= 2.0 * std::max(lo, 1e-12);
    };
    rep.stable = stable_pair(rep.lower_C, rep.lower_C_doubled) &&
                 stable_pair(rep.upper_C, rep.upper_C_doubled) &&
                 stable_pair(rep.global_C, rep.global_C_doubled);
    return rep;
}

// ---------------------------------------------------------------------------
// A-priori estimate diagnostics
// ---------------------------------------------------------------------------

// Every quantity of the uniform estimate, plus conservation/positivity checks
// and the interpolation-inequality ratio. Descriptive only: thresholds are
// applied by the caller.
struct DiagnosticsReport {
    double sigma = 0.0;
    double mass_drift = 0.0;   // max_t |int m(t) - int m0|
    double min_density = 0.0;  // min over Q
    double sup_m_sigma = 0.0;  // sup_t ||m(t)||_sigma
    double sup_u_inf = 0.0;    // ||u||_inf over Q
    double grad_u_sq = 0.0;    // int_Q |grad u|^2
    double weighted_grad_m_sq = 0.0;  // int_Q (m+1)^{sigma-2} |grad m|^2
    double density_moment = 0.0;      // int_Q m^{2 s0 + 1}
    double control_energy = 0.0;      // int_Q (m+1)(m^r+1)|v|^2
    double energy = 0.0;              // sup_t ||m+1||_sigma^sigma + weighted_grad_m_sq
    double interpolation_ratio = 0.0;
    double sup_w_inf = 0.0;  // w = sum_i u^i
    double grad_w_sq = 0.0;
    LagrangianBoundsReport lagrangian_bounds;
};

inline DiagnosticsReport run_diagnostics(const GameModel& model, const SolutionState& state,
                                         const LagrangianBoundsConfig& lag_cfg = {}) {
    const GridSpec& g = state.m.grid();
    const ModelConstants& c = model.constants();
    const double sigma = c.sigma();
    DiagnosticsReport rep;
    rep.sigma = sigma;

    const double mass0 = integrate(state.m.slice.front());
    double mass_drift = 0.0, min_density = state.m.slice.front().min_value();
    double sup_m_sigma = 0.0, sup_m1_sigma_pow = 0.0;
    for (int k = 0; k <= g.nt; ++k) {
        const ScalarField& mk = state.m.slice[static_cast<std::size_t>(k)];
        mass_drift = std::max(mass_drift, std::abs(integrate(mk) - mass0));
        min_density = std::min(min_density, mk.min_value());
        ScalarField clamped = mk;
        for (auto& vv : clamped.values()) vv = std::max(0.0, vv);
        sup_m_sigma = std::max(sup_m_sigma, lp_norm(clamped, sigma));
        ScalarField m1 = mk;
        for (auto& vv : m1.values()) vv = std::max(0.0, vv) + 1.0;
        sup_m1_sigma_pow = std::max(sup_m1_sigma_pow, std::pow(lp_norm(m1, sigma), sigma));
    }
    rep.mass_drift = mass_drift;
    rep.min_density = min_density;
    rep.sup_m_sigma = sup_m_sigma;

    double sup_u = 0.0, sup_w = 0.0;
    for (int k = 0; k <= g.nt; ++k) {
        const MultiField& uk = state.u.slice[static_cast<std::size_t>(k)];
        sup_u = std::max(sup_u, uk.max_abs());
        for (std::int64_t node = 0; node < g.nodes(); ++node) {
            double wv = 0.0;
            for (int i = 0; i < c.N; ++i) wv += uk.comp(i)[node];
            sup_w = std::max(sup_w, std::abs(wv));
        }
    }
    rep.sup_u_inf = sup_u;
    rep.sup_w_inf = sup_w;

    rep.grad_u_sq = time_trapezoid(g.nt, g.dt(), [&](int k) {
        KahanSum s;
        for (int i = 0; i < c.N; ++i) {
            const MultiField gu = gradient(state.u.slice[static_cast<std::size_t>(k)].comp(i));
            for (int kk = 0; kk < g.d; ++kk)
                for (double gv : gu.comp(kk).values()) s.add(gv * gv);
        }
        return g.cell_volume() * s.value();
    });
    rep.grad_w_sq = time_trapezoid(g.nt, g.dt(), [&](int k) {
        ScalarField w(g, 0.0);
        for (int i = 0; i < c.N; ++i)
            add_scaled(w, 1.0, state.u.slice[static_cast<std::size_t>(k)].comp(i));
        const MultiField gw = gradient(w);
        KahanSum s;
        for (int kk = 0; kk < g.d; ++kk)
            for (double gv : gw.comp(kk).values()) s.add(gv * gv);
        return g.cell_volume() * s.value();
    });
    rep.weighted_grad_m_sq = time_trapezoid(g.nt, g.dt(), [&](int k) {
        const ScalarField& mk = state.m.slice[static_cast<std::size_t>(k)];
        const MultiField gm = gradient(mk);
        KahanSum s;
        for (std::int64_t node = 0; node < g.nodes(); ++node) {
            double gsq = 0.0;
            for (int kk = 0; kk < g.d; ++kk) {
                const double gv = gm.comp(kk)[node];
                gsq += gv * gv;
            }
            s.add(std::pow(std::max(0.0, mk[node]) + 1.0, sigma - 2.0) * gsq);
        }
        return g.cell_volume() * s.value();
    });
    rep.density_moment = time_trapezoid(g.nt, g.dt(), [&](int k) {
        KahanSum s;
        for (double mv : state.m.slice[static_cast<std::size_t>(k)].values())
            s.add(pow0(std::max(0.0, mv), 2.0 * c.s0 + 1.0));
        return g.cell_volume() * s.value();
    });
    rep.control_energy = time_trapezoid(g.nt, g.dt(), [&](int k) {
        const ScalarField& mk = state.m.slice[static_cast<std::size_t>(k)];
        const MultiField& vk = state.v.slice[static_cast<std::size_t>(k)];
        KahanSum s;
        for (std::int64_t node = 0; node < g.nodes(); ++node) {
            const double mv = std::max(0.0, mk[node]);
            double vsq = 0.0;
            for (int j = 0; j < c.N * c.M; ++j) {
                const double vv = vk.comp(j)[node];
                vsq += vv * vv;
            }
            s.add((mv + 1.0) * (pow0(mv, c.r) + 1.0) * vsq);
        }
        return g.cell_volume() * s.value();
    });
    rep.energy = sup_m1_sigma_pow + rep.weighted_grad_m_sq;

    // interpolation ratio: for phi = (m+1)^{sigma/2},
    //   int_Q phi^{2(d+2)/d}  vs  (sup_t ||phi||_2^2 + int_Q |grad phi|^2)^{(d+2)/d}
    {
        const double expo = (static_cast<double>(g.d) + 2.0) / g.d;
        double sup_phi_sq = 0.0;
        std::vector<ScalarField> phi;
        phi.reserve(static_cast<std::size_t>(g.nt) + 1);
        for (int k = 0; k <= g.nt; ++k) {
            ScalarField p = state.m.slice[static_cast<std::size_t>(k)];
            for (auto& vv : p.values()) vv = std::pow(std::max(0.0, vv) + 1.0, sigma / 2.0);
            sup_phi_sq = std::max(sup_phi_sq, std::pow(lp_norm(p, 2.0), 2.0));
            phi.push_back(std::move(p));
        }
        const double num = time_trapezoid(g.nt, g.dt(), [&](int k) {
            KahanSum s;
            for (double pv : phi[static_cast<std::size_t>(k)].values())
                s.add(std::pow(pv, 2.0 * expo));
            return g.cell_volume() * s.value();
        });
        const double grad_phi_sq = time_trapezoid(g.nt, g.dt(), [&](int k) {
            const MultiField gp = gradient(phi[static_cast<std::size_t>(k)]);
            KahanSum s;
            for (int kk = 0; kk < g.d; ++kk)
                for (double gv : gp.comp(kk).values()) s.add(gv * gv);
            return g.cell_volume() * s.value();
        });
        const double den = std::pow(sup_phi_sq + grad_phi_sq, expo);
        rep.interpolation_ratio = den > 0.0 ? num / den : 0.0;
    }

    rep.lagrangian_bounds = sample_lagrangian_bounds(model, &state, lag_cfg);
    return rep;
}

}  // namespace mfgb
