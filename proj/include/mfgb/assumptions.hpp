#pragma once

// Randomized verification of the structural assumptions on the pay-offs and
// the drift. Each assumption is an inequality quantified over all (m, v);
// the checker evaluates both sides at seeded random samples (plus a few
// deterministic corners), reports pass/fail with a worst-case witness, and
// fits the smallest constant that would make the inequality hold over the
// sample.

#include "mfgb/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace mfgb {

struct SamplerSpec {
    double m_max = 10.0;
    double v_max = 10.0;
    double t_max = 1.0;
    int count = 10000;
    std::uint64_t seed = 12345;

    void validate() const {
        if (m_max < 0.0) throw std::invalid_argument("SamplerSpec: m range must be nonnegative");
        if (count < 1) throw std::invalid_argument("SamplerSpec: count must be >= 1");
    }
};

struct Witness {
    double t = 0.0;
    double x[2] = {0.0, 0.0};
    double m = 0.0;
    std::vector<double> v;
};

struct AssumptionResult {
    std::string id;
    bool pass = true;
    double fitted_constant = 0.0;  // smallest constant making it hold on the sample
    double worst_violation = 0.0;  // max of lhs - rhs with declared constants
    Witness witness;               // where the worst violation (or margin) occurred
    std::string note;
};

// Pass/fail with witnesses per assumption plus the gate section.
struct AssumptionReport {
    double sigma = 0.0;
    std::vector<AssumptionResult> assumptions;
    std::vector<GateResult> gates;

    const AssumptionResult* find(const std::string& id) const {
        for (const auto& a : assumptions)
            if (a.id == id) return &a;
        return nullptr;
    }
    bool all_pass() const {
        for (const auto& a : assumptions)
            if (!a.pass) return false;
        return true;
    }
};

namespace detail {
// Accumulates one two-sided comparison "lhs <= constant * base + offset".
// fitted = max over samples of (lhs - offset) / base.
struct InequalityTracker {
    double worst_violation = -std::numeric_limits<double>::infinity();
    double fitted = 0.0;
    Witness witness;
    bool have_witness = false;

    void observe(double lhs, double rhs, double base_for_fit, double offset_for_fit,
                 const Witness& w) {
        const double violation = lhs - rhs;
        if (violation > worst_violation || !have_witness) {
            worst_violation = violation;
            witness = w;
            have_witness = true;
        }
        if (base_for_fit > 0.0)
            fitted = std::max(fitted, (lhs - offset_for_fit) / base_for_fit);
        else if (lhs - offset_for_fit > 0.0)
            fitted = std::numeric_limits<double>::infinity();
    }

    AssumptionResult result(const std::string& id, double tol_scale) const {
        AssumptionResult r;
        r.id = id;
        r.worst_violation = std::max(0.0, worst_violation);
        r.pass = worst_violation <= tol_scale;
        r.fitted_constant = fitted;
        r.witness = witness;
        return r;
    }
};

inline double hypot_n(const double* a, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * a[i];
    return std::sqrt(s);
}
}  // namespace detail

inline AssumptionReport sample_assumptions(const GameModel& model, const SamplerSpec& sampler) {
    sampler.validate();
    const ModelConstants& c = model.constants();
    const int N = c.N, M = c.M, d = c.d;
    const int nm = N * M;

    AssumptionReport report;
    report.sigma = c.sigma();
    report.gates = check_gates(c, /*prototype=*/false).gates;

    std::mt19937_64 rng(sampler.seed);
    std::uniform_real_distribution<double> um(0.0, sampler.m_max);
    std::uniform_real_distribution<double> uv(-sampler.v_max, sampler.v_max);
    std::uniform_real_distribution<double> ut(0.0, sampler.t_max);
    std::uniform_real_distribution<double> ux(0.0, 1.0);

    detail::InequalityTracker growth_f, growth_fv, one_sided, sum_coercive, convex,
        at_zero, fv_coercive, growth_g, growth_gv, b1_bound, b0_bound, a_bound, a_range,
        b0_deriv1, b0_deriv2t, b1_small;

    PayoffEval pe, pe_zero, pe_a, pe_b;
    pe.resize(N, M);
    pe_zero.resize(N, M);
    pe_a.resize(N, M);
    pe_b.resize(N, M);
    DriftEval de;
    std::vector<double> a_buf(static_cast<std::size_t>(d) * M), a_other(static_cast<std::size_t>(d) * M);
    std::vector<double> b0v(static_cast<std::size_t>(d)), b0p(static_cast<std::size_t>(d)),
        b0pp(static_cast<std::size_t>(d));
    std::vector<double> v(static_cast<std::size_t>(nm)), v0(static_cast<std::size_t>(nm)),
        va(static_cast<std::size_t>(nm)), vb(static_cast<std::size_t>(nm));
    std::vector<double> hess(static_cast<std::size_t>(M) * M);
    std::vector<double> zA(static_cast<std::size_t>(M)), zAi(static_cast<std::size_t>(M));
    const double hess_step = 1e-4;
    // float-noise slack on the pass decision, scaled per assumption below
    const double tol = 1e-9;

    for (int sample = 0; sample < sampler.count; ++sample) {
        Witness w;
        // deterministic corners first, then random draws
        if (sample == 0) {
            w.m = 0.0;
            std::fill(v.begin(), v.end(), 0.0);
        } else if (sample == 1) {
            w.m = 0.0;
            for (int i = 0; i < nm; ++i) v[static_cast<std::size_t>(i)] = sampler.v_max;
        } else if (sample == 2) {
            w.m = sampler.m_max;
            std::fill(v.begin(), v.end(), 0.0);
        } else {
            w.t = ut(rng);
            for (int a = 0; a < d; ++a) w.x[a] = ux(rng);
            w.m = um(rng);
            for (int i = 0; i < nm; ++i) v[static_cast<std::size_t>(i)] = uv(rng);
        }
        w.v = v;
        const double m = w.m;
        const double t = w.t;
        const double* x = w.x;

        model.payoff(t, x, m, v.data(), pe);
        eval_drift_into(model, t, x, m, v.data(), de, a_buf);

        const double vnorm = detail::hypot_n(v.data(), nm);
        const double m_r = pow0(m, c.r);
        const double m_s = pow0(m, c.s);
        const double m_s0 = pow0(m, c.s0);
        const double m_2s0 = pow0(m, 2.0 * c.s0);
        const double v_alpha = std::pow(vnorm, c.alpha + 1.0);

        // |f| + m|f_m| <= K (m^r+1)|v|^2 + K m^{2s0}
        {
            const double lhs = detail::hypot_n(pe.f.data(), N) + m * detail::hypot_n(pe.f_m.data(), N);
            const double base = (m_r + 1.0) * vnorm * vnorm + m_2s0;
            growth_f.observe(lhs, c.K * base, base, 0.0, w);
        }
        // |f_v| <= K (m^r+1)|v| + K m^{s0}   (i-block gradients)
        {
            const double lhs = detail::hypot_n(pe.f_v.data(), nm);
            const double base = (m_r + 1.0) * vnorm + m_s0;
            growth_fv.observe(lhs, c.K * base, base, 0.0, w);
        }
        // f^i + m f^i_m <= K (1 + f^i + |v|^{a+1} + m^{2s0})
        for (int i = 0; i < N; ++i) {
            const double fi = pe.f[static_cast<std::size_t>(i)];
            const double lhs = fi + m * pe.f_m[static_cast<std::size_t>(i)];
            const double base = 1.0 + fi + v_alpha + m_2s0;
            one_sided.observe(lhs, c.K * base, base, 0.0, w);
        }
        // sum_i f^i + m f^i_m >= C0 (m^r+1)|v|^2 - K (m^{2s0}+1):
        // tracked as C0 (m^r+1)|v|^2 - sum <= K (m^{2s0}+1); fitted constant
        // is the smallest K making the lower bound hold with the declared C0.
        {
            double sum = 0.0;
            for (int i = 0; i < N; ++i)
                sum += pe.f[static_cast<std::size_t>(i)] + m * pe.f_m[static_cast<std::size_t>(i)];
            const double lhs = c.C0 * (m_r + 1.0) * vnorm * vnorm - sum;
            const double base = m_2s0 + 1.0;
            sum_coercive.observe(lhs, c.K * base, base, 0.0, w);
        }
        // convexity of f^i in v^i: finite-difference Hessian PSD up to -1e-8
        for (int i = 0; i < N; ++i) {
            for (int p = 0; p < M; ++p) {
                for (int q = p; q < M; ++q) {
                    double second;
                    if (p == q) {
                        va = v;
                        vb = v;
                        va[static_cast<std::size_t>(i * M + p)] += hess_step;
                        vb[static_cast<std::size_t>(i * M + p)] -= hess_step;
                        model.payoff(t, x, m, va.data(), pe_a);
                        model.payoff(t, x, m, vb.data(), pe_b);
                        second = (pe_a.f[static_cast<std::size_t>(i)] - 2.0 * pe.f[static_cast<std::size_t>(i)] +
                                  pe_b.f[static_cast<std::size_t>(i)]) /
                                 (hess_step * hess_step);
                    } else {
                        double quad = 0.0;
                        for (int sp : {+1, -1}) {
                            for (int sq : {+1, -1}) {
                                va = v;
                                va[static_cast<std::size_t>(i * M + p)] += sp * hess_step;
                                va[static_cast<std::size_t>(i * M + q)] += sq * hess_step;
                                model.payoff(t, x, m, va.data(), pe_a);
                                quad += sp * sq * pe_a.f[static_cast<std::size_t>(i)];
                            }
                        }
                        second = quad / (4.0 * hess_step * hess_step);
                    }
                    hess[static_cast<std::size_t>(p) * M + q] = second;
                    hess[static_cast<std::size_t>(q) * M + p] = second;
                }
            }
            const double min_eig = min_symmetric_eigenvalue(hess, M);
            // fitted constant reports the worst negative-eigenvalue magnitude
            convex.observe(-min_eig, 1e-8, 1.0, 0.0, w);
        }
        // f^i at v^i = 0 <= K (1 + m^{2s0} + |v|^{a+1})
        {
            v0 = v;
            for (int i = 0; i < N; ++i) {
                for (int q = 0; q < M; ++q) v0[static_cast<std::size_t>(i * M + q)] = 0.0;
                model.payoff(t, x, m, v0.data(), pe_zero);
                const double vz = detail::hypot_n(v0.data(), nm);
                const double base = 1.0 + m_2s0 + std::pow(vz, c.alpha + 1.0);
                at_zero.observe(pe_zero.f[static_cast<std::size_t>(i)], c.K * base, base, 0.0, w);
                for (int q = 0; q < M; ++q)
                    v0[static_cast<std::size_t>(i * M + q)] = v[static_cast<std::size_t>(i * M + q)];
            }
        }
        // C0 (m^r+1)|v^i|^2 <= f^i_{v^i}.v^i + K (1 + m^{2s0} + |v|^{a+1})
        for (int i = 0; i < N; ++i) {
            double vi_sq = 0.0, fv_dot = 0.0;
            for (int q = 0; q < M; ++q) {
                const double viq = v[static_cast<std::size_t>(i * M + q)];
                vi_sq += viq * viq;
                fv_dot += pe.f_v[static_cast<std::size_t>(i * M + q)] * viq;
            }
            const double lhs = c.C0 * (m_r + 1.0) * vi_sq - fv_dot;
            const double base = 1.0 + m_2s0 + v_alpha;
            fv_coercive.observe(lhs, c.K * base, base, 0.0, w);
        }
        // m|g_m| + |g| <= K ((m^s+1)|v| + m^{s0} + 1)
        {
            const double lhs = m * detail::hypot_n(de.g_m.data(), d) + detail::hypot_n(de.g.data(), d);
            const double base = (m_s + 1.0) * vnorm + m_s0 + 1.0;
            growth_g.observe(lhs, c.K * base, base, 0.0, w);
        }
        // |g_v| <= K (m^s+1), per block
        {
            double worst = 0.0;
            for (int j = 0; j < N; ++j)
                worst = std::max(worst, detail::hypot_n(de.g_v.data() + static_cast<std::size_t>(j) * d * M,
                                                        d * M));
            growth_gv.observe(worst, c.K * (m_s + 1.0), m_s + 1.0, 0.0, w);
        }
        // |b1(m)| <= K (m^s+1), |b0(m)| <= K (m^{s0}+1)
        {
            const double b1v = std::abs(model.b1(m));
            b1_bound.observe(b1v, c.K * (m_s + 1.0), m_s + 1.0, 0.0, w);
            model.b0(m, b0v.data());
            const double b0n = detail::hypot_n(b0v.data(), d);
            b0_bound.observe(b0n, c.K * (m_s0 + 1.0), m_s0 + 1.0, 0.0, w);
        }
        // |A^j(t,x)| <= K and the same-range comparison |z A^j| <= C1 |z A^i|
        {
            double z[2];
            double zn = 0.0;
            for (int a = 0; a < d; ++a) {
                z[a] = uv(rng);
                zn += z[a] * z[a];
            }
            zn = std::sqrt(zn);
            if (zn < 1e-12) {
                z[0] = 1.0;
                zn = 1.0;
            }
            for (int a = 0; a < d; ++a) z[a] /= zn;
            for (int j = 0; j < N; ++j) {
                model.control_matrix(j, t, x, a_buf.data());
                a_bound.observe(detail::hypot_n(a_buf.data(), d * M), c.K, 1.0, 0.0, w);
                for (int q = 0; q < M; ++q) {
                    zA[static_cast<std::size_t>(q)] = 0.0;
                    for (int a = 0; a < d; ++a)
                        zA[static_cast<std::size_t>(q)] += z[a] * a_buf[static_cast<std::size_t>(a) * M + q];
                }
                const double num = detail::hypot_n(zA.data(), M);
                for (int i = 0; i < N; ++i) {
                    if (i == j) continue;
                    model.control_matrix(i, t, x, a_other.data());
                    for (int q = 0; q < M; ++q) {
                        zAi[static_cast<std::size_t>(q)] = 0.0;
                        for (int a = 0; a < d; ++a)
                            zAi[static_cast<std::size_t>(q)] += z[a] * a_other[static_cast<std::size_t>(a) * M + q];
                    }
                    const double den = detail::hypot_n(zAi.data(), M);
                    a_range.observe(num, c.C1 * den, den, 0.0, w);
                }
            }
        }
        // |m b0'(m)| <= K m (m+1)^{s0-1}, |m^2 b0''(m)| <= K m^2 (m+1)^{s0-2}
        {
            model.b0_deriv(m, b0p.data());
            model.b0_deriv2(m, b0pp.data());
            const double base1 = m * std::pow(m + 1.0, c.s0 - 1.0);
            const double base2 = m * m * std::pow(m + 1.0, c.s0 - 2.0);
            b0_deriv1.observe(m * detail::hypot_n(b0p.data(), d), c.K * base1, base1, 0.0, w);
            b0_deriv2t.observe(m * m * detail::hypot_n(b0pp.data(), d), c.K * base2, base2, 0.0, w);
        }
        // |m b1'(m)| <= gamma |b1(m)|
        {
            const double lhs = m * std::abs(model.b1_deriv(m));
            const double base = std::abs(model.b1(m));
            b1_small.observe(lhs, c.gamma_effective() * base, base, 0.0, w);
        }
    }

    auto push = [&](const detail::InequalityTracker& tr, const std::string& id, double scale,
                    std::string note = {}) {
        AssumptionResult r = tr.result(id, tol * std::max(1.0, scale));
        r.note = std::move(note);
        report.assumptions.push_back(std::move(r));
    };

    const double kscale = c.K * (1.0 + std::pow(sampler.m_max, std::max({c.r, 2.0 * c.s0, 1.0})) *
                                           sampler.v_max * sampler.v_max);
    push(growth_f, "payoff_growth", kscale);
    push(growth_fv, "payoff_gradient_growth", kscale);
    push(one_sided, "payoff_one_sided", kscale);
    push(sum_coercive, "payoff_sum_coercive", kscale,
         "fitted constant is the smallest K with the declared C0");
    push(convex, "payoff_convex", 0.0,
         "finite-difference Hessian, eigenvalue tolerance -1e-8");
    push(at_zero, "payoff_at_zero", kscale);
    push(fv_coercive, "payoff_gradient_coercive", kscale);
    push(growth_g, "drift_growth", kscale);
    push(growth_gv, "drift_gradient_growth", kscale);
    push(b1_bound, "b1_bound", kscale);
    push(b0_bound, "b0_bound", kscale);
    push(a_bound, "control_matrix_bound", c.K);
    push(a_range, "control_matrix_range", c.C1);
    push(b0_deriv1, "b0_derivative_bound", kscale);
    push(b0_deriv2t, "b0_second_derivative_bound", kscale);
    {
        AssumptionResult r = b1_small.result("b1_smallness", tol);
        const double bound = c.gamma_bound();
        const double gamma = c.gamma_effective();
        if (gamma > bound * (1.0 + 1e-12)) {
            r.pass = false;
            r.note = "gamma exceeds C0/(2(C1^2+N^2))";
        } else {
            r.note = "fitted constant is the smallest admissible gamma";
        }
        report.assumptions.push_back(std::move(r));
    }
    return report;
}

}  // namespace mfgb
