#pragma once

// Game data: pay-off functions, drift structure, their derivatives, the
// exponent constants, the built-in prototype model, and the parameter gates.
//
// The drift is always assembled from the structural pieces
//     g(t,x,m,v) = sum_j b1(m) A^j(t,x) v^j + b0(m),
// so models supply b1, b0, the control matrices A^j and the pay-offs; no
// free-form drift is accepted.

#include "mfgb/common.hpp"

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfgb {

// m^p with the convention m^0 == 1 for all m >= 0 (so an exponent of zero is
// the constant 1, including at m = 0).
inline double pow0(double m, double p) { return p == 0.0 ? 1.0 : std::pow(m, p); }

// d/dm of m^p under the same convention; at m = 0 the finite part is taken
// (the value only ever enters downstream quantities multiplied by m).
inline double pow0_deriv(double m, double p) {
    if (p == 0.0) return 0.0;
    if (m == 0.0) return p == 1.0 ? 1.0 : 0.0;
    return p * std::pow(m, p - 1.0);
}

struct ModelConstants {
    int N = 1;  // player count
    int M = 1;  // control dimension per player
    int d = 1;  // spatial dimension

    // growth exponents: r for the pay-off, s for the drift factor b1,
    // s0 for the inhomogeneities
    double r = 0.0;
    double s = 0.0;
    double s0 = 0.0;
    double alpha = 0.0;  // sublinear exponent in the one-sided bounds, in [0,1)

    // structural constants
    double K = 1.0;
    double C0 = 0.5;
    double C1 = 1.0;
    double gamma = 0.0;  // smallness constant for the b1-derivative bound; 0 -> default

    // sigma is always computed, never stored.
    double sigma() const { return r - 2.0 * s + 1.0; }

    double gamma_bound() const {
        return C0 / (2.0 * (C1 * C1 + static_cast<double>(N) * N));
    }
    double gamma_effective() const { return gamma > 0.0 ? gamma : gamma_bound(); }

    void validate() const {
        if (N < 1) throw std::invalid_argument("ModelConstants: N must be >= 1");
        if (M < 1) throw std::invalid_argument("ModelConstants: M must be >= 1");
        if (d != 1 && d != 2) throw std::invalid_argument("ModelConstants: d must be 1 or 2");
        if (r < 0.0 || s < 0.0 || s0 < 0.0)
            throw std::invalid_argument("ModelConstants: exponents must be nonnegative");
        if (alpha < 0.0 || alpha >= 1.0)
            throw std::invalid_argument("ModelConstants: alpha must be in [0,1)");
        if (!(K > 0.0)) throw std::invalid_argument("ModelConstants: K must be > 0");
        if (!(C0 > 0.0)) throw std::invalid_argument("ModelConstants: C0 must be > 0");
        if (!(C1 >= 1.0)) throw std::invalid_argument("ModelConstants: C1 must be >= 1");
        if (gamma < 0.0) throw std::invalid_argument("ModelConstants: gamma must be >= 0");
    }
};

// Pay-off values and partial derivatives at one point, for all players:
// f[i], the i-block gradient f_v[i*M + j] = d f^i / d v^i_j, and f_m[i].
struct PayoffEval {
    std::vector<double> f;
    std::vector<double> f_v;
    std::vector<double> f_m;

    void resize(int N, int M) {
        f.assign(static_cast<std::size_t>(N), 0.0);
        f_v.assign(static_cast<std::size_t>(N) * M, 0.0);
        f_m.assign(static_cast<std::size_t>(N), 0.0);
    }
};

// Drift pieces at one point: g and g_m are d-vectors, g_v holds the N blocks
// b1(m) A^j, each d-by-M row-major.
struct DriftEval {
    std::vector<double> g;
    std::vector<double> g_m;
    std::vector<double> g_v;

    void resize(int N, int M, int d) {
        g.assign(static_cast<std::size_t>(d), 0.0);
        g_m.assign(static_cast<std::size_t>(d), 0.0);
        g_v.assign(static_cast<std::size_t>(N) * d * M, 0.0);
    }
};

// Abstract game-data contract. All evaluators are pure deterministic mappings
// of their arguments and safe to call from concurrent workers.
class GameModel {
public:
    virtual ~GameModel() = default;

    virtual const ModelConstants& constants() const = 0;

    // Pay-offs f^i, the i-block gradients f^i_{v^i}, and f^i_m at one point.
    virtual void payoff(double t, const double* x, double m, const double* v,
                        PayoffEval& out) const = 0;

    // Scalar drift factor and its derivative in m.
    virtual double b1(double m) const = 0;
    virtual double b1_deriv(double m) const = 0;

    // Drift inhomogeneity (d values) and its first two derivatives in m.
    virtual void b0(double m, double* out) const = 0;
    virtual void b0_deriv(double m, double* out) const = 0;
    virtual void b0_deriv2(double m, double* out) const = 0;

    // Control matrix A^j(t,x), d-by-M row-major.
    virtual void control_matrix(int j, double t, const double* x, double* out) const = 0;

    // Optional closed-form solution of the compatibility condition: fill v
    // (N*M values) from (m, grad_u) and return true, or return false to fall
    // back to the Newton path. grad_u is N-by-d row-major.
    virtual bool feedback_closed_form(double /*t*/, const double* /*x*/, double /*m*/,
                                      const double* /*grad_u*/, double* /*v_out*/) const {
        return false;
    }

    // Optional analytic Jacobian of v -> (f^i_{v^i})_i, NM-by-NM row-major.
    // Return false to use a finite-difference Jacobian.
    virtual bool payoff_gradient_jacobian(double /*t*/, const double* /*x*/, double /*m*/,
                                          const double* /*v*/, double* /*jac*/) const {
        return false;
    }
};

namespace detail {
inline void check_point_inputs(const GameModel& model, double t, const double* x, double m,
                               const double* v, const char* who) {
    const ModelConstants& c = model.constants();
    if (!(m >= 0.0)) throw std::domain_error(std::string(who) + ": negative density");
    if (!std::isfinite(m) || !std::isfinite(t))
        throw std::domain_error(std::string(who) + ": non-finite input");
    for (int a = 0; a < c.d; ++a)
        if (!std::isfinite(x[a])) throw std::domain_error(std::string(who) + ": non-finite input");
    if (v) {
        for (int i = 0; i < c.N * c.M; ++i)
            if (!std::isfinite(v[i]))
                throw std::domain_error(std::string(who) + ": non-finite input");
    }
}
}  // namespace detail

// Validated pay-off evaluation (pre: m >= 0, finite inputs).
inline PayoffEval eval_model(const GameModel& model, double t, const double* x, double m,
                             const double* v) {
    detail::check_point_inputs(model, t, x, m, v, "eval_model");
    const ModelConstants& c = model.constants();
    PayoffEval out;
    out.resize(c.N, c.M);
    model.payoff(t, x, m, v, out);
    return out;
}

// Assembles the drift from the structural pieces: g = sum_j b1(m) A^j v^j + b0(m),
// g_m = sum_j b1'(m) A^j v^j + b0'(m), and g_v blocks b1(m) A^j.
inline void eval_drift_into(const GameModel& model, double t, const double* x, double m,
                            const double* v, DriftEval& out, std::vector<double>& a_buf) {
    const ModelConstants& c = model.constants();
    out.resize(c.N, c.M, c.d);
    a_buf.resize(static_cast<std::size_t>(c.d) * c.M);
    model.b0(m, out.g.data());
    model.b0_deriv(m, out.g_m.data());
    const double b1v = model.b1(m);
    const double b1p = model.b1_deriv(m);
    for (int j = 0; j < c.N; ++j) {
        model.control_matrix(j, t, x, a_buf.data());
        double* gv_block = out.g_v.data() + static_cast<std::size_t>(j) * c.d * c.M;
        for (int k = 0; k < c.d; ++k) {
            double av = 0.0;
            for (int q = 0; q < c.M; ++q) {
                const double a_kq = a_buf[static_cast<std::size_t>(k) * c.M + q];
                av += a_kq * v[static_cast<std::size_t>(j) * c.M + q];
                gv_block[static_cast<std::size_t>(k) * c.M + q] = b1v * a_kq;
            }
            out.g[static_cast<std::size_t>(k)] += b1v * av;
            out.g_m[static_cast<std::size_t>(k)] += b1p * av;
        }
    }
}

inline DriftEval eval_drift(const GameModel& model, double t, const double* x, double m,
                            const double* v) {
    detail::check_point_inputs(model, t, x, m, v, "eval_drift");
    DriftEval out;
    std::vector<double> a_buf;
    eval_drift_into(model, t, x, m, v, out, a_buf);
    return out;
}

// ---------------------------------------------------------------------------
// Prototype model:
//   f^i(m,v) = (m+1)^r |v^i|^2 + B^i . v + K (1 + m^{2 s0})
//   b1(m)    = (m+1)^s
// with constant control matrices A^j and a polynomial (or zero) b0.
// ---------------------------------------------------------------------------

class PrototypeModel : public GameModel {
public:
    // B is N rows of N*M coefficients (empty -> zero). A is N constant
    // matrices, each d*M row-major (empty -> truncated identity per player).
    // b0_coeffs is one polynomial in m per spatial component (empty -> zero).
    PrototypeModel(ModelConstants constants, std::vector<double> B = {},
                   std::vector<double> A = {},
                   std::vector<std::vector<double>> b0_coeffs = {})
        : c_(constants), B_(std::move(B)), A_(std::move(A)), b0_(std::move(b0_coeffs)) {
        c_.validate();
        const std::size_t nm = static_cast<std::size_t>(c_.N) * c_.N * c_.M;
        if (B_.empty()) B_.assign(nm, 0.0);
        if (B_.size() != nm)
            throw std::invalid_argument("PrototypeModel: B must have N*(N*M) entries");
        const std::size_t na = static_cast<std::size_t>(c_.N) * c_.d * c_.M;
        if (A_.empty()) {
            A_.assign(na, 0.0);
            for (int j = 0; j < c_.N; ++j)
                for (int k = 0; k < std::min(c_.d, c_.M); ++k)
                    A_[static_cast<std::size_t>(j) * c_.d * c_.M + static_cast<std::size_t>(k) * c_.M + k] = 1.0;
        }
        if (A_.size() != na)
            throw std::invalid_argument("PrototypeModel: A must have N*(d*M) entries");
        if (!b0_.empty() && static_cast<int>(b0_.size()) != c_.d)
            throw std::invalid_argument("PrototypeModel: b0 needs one polynomial per dimension");
    }

    const ModelConstants& constants() const override { return c_; }

    void payoff(double /*t*/, const double* /*x*/, double m, const double* v,
                PayoffEval& out) const override {
        const int N = c_.N, M = c_.M;
        out.resize(N, M);
        const double mp1r = std::pow(m + 1.0, c_.r);
        const double dmp1r = c_.r == 0.0 ? 0.0 : c_.r * std::pow(m + 1.0, c_.r - 1.0);
        const double m2s0 = pow0(m, 2.0 * c_.s0);
        const double dm2s0 = pow0_deriv(m, 2.0 * c_.s0);
        for (int i = 0; i < N; ++i) {
            const double* Bi = B_.data() + static_cast<std::size_t>(i) * N * M;
            double vi_sq = 0.0;
            double bv = 0.0;
            for (int j = 0; j < N * M; ++j) bv += Bi[j] * v[j];
            for (int q = 0; q < M; ++q) {
                const double viq = v[static_cast<std::size_t>(i) * M + q];
                vi_sq += viq * viq;
                out.f_v[static_cast<std::size_t>(i) * M + q] =
                    2.0 * mp1r * viq + Bi[static_cast<std::size_t>(i) * M + q];
            }
            out.f[static_cast<std::size_t>(i)] = mp1r * vi_sq + bv + c_.K * (1.0 + m2s0);
            out.f_m[static_cast<std::size_t>(i)] = dmp1r * vi_sq + c_.K * dm2s0;
        }
    }

    double b1(double m) const override { return std::pow(m + 1.0, c_.s); }
    double b1_deriv(double m) const override {
        return c_.s == 0.0 ? 0.0 : c_.s * std::pow(m + 1.0, c_.s - 1.0);
    }

    void b0(double m, double* out) const override {
        for (int k = 0; k < c_.d; ++k) out[k] = b0_.empty() ? 0.0 : poly(b0_[static_cast<std::size_t>(k)], m, 0);
    }
    void b0_deriv(double m, double* out) const override {
        for (int k = 0; k < c_.d; ++k) out[k] = b0_.empty() ? 0.0 : poly(b0_[static_cast<std::size_t>(k)], m, 1);
    }
    void b0_deriv2(double m, double* out) const override {
        for (int k = 0; k < c_.d; ++k) out[k] = b0_.empty() ? 0.0 : poly(b0_[static_cast<std::size_t>(k)], m, 2);
    }

    void control_matrix(int j, double /*t*/, const double* /*x*/, double* out) const override {
        const double* src = A_.data() + static_cast<std::size_t>(j) * c_.d * c_.M;
        for (int k = 0; k < c_.d * c_.M; ++k) out[k] = src[k];
    }

    // v^i_j = -(B^i_{(i,j)} + (m+1)^s (grad_u^i A^i)_j) / (2 (m+1)^r)
    bool feedback_closed_form(double /*t*/, const double* /*x*/, double m,
                              const double* grad_u, double* v_out) const override {
        const int N = c_.N, M = c_.M, d = c_.d;
        const double b1v = std::pow(m + 1.0, c_.s);
        const double denom = 2.0 * std::pow(m + 1.0, c_.r);
        for (int i = 0; i < N; ++i) {
            const double* Ai = A_.data() + static_cast<std::size_t>(i) * d * M;
            const double* Bi = B_.data() + static_cast<std::size_t>(i) * N * M;
            for (int j = 0; j < M; ++j) {
                double guA = 0.0;
                for (int k = 0; k < d; ++k)
                    guA += grad_u[static_cast<std::size_t>(i) * d + k] *
                           Ai[static_cast<std::size_t>(k) * M + j];
                v_out[static_cast<std::size_t>(i) * M + j] =
                    -(Bi[static_cast<std::size_t>(i) * M + j] + b1v * guA) / denom;
            }
        }
        return true;
    }

    bool payoff_gradient_jacobian(double /*t*/, const double* /*x*/, double m,
                                  const double* /*v*/, double* jac) const override {
        const int nm = c_.N * c_.M;
        const double diag = 2.0 * std::pow(m + 1.0, c_.r);
        for (int i = 0; i < nm * nm; ++i) jac[i] = 0.0;
        for (int i = 0; i < nm; ++i) jac[static_cast<std::size_t>(i) * nm + i] = diag;
        return true;
    }

    const std::vector<double>& B() const { return B_; }
    const std::vector<double>& A() const { return A_; }

private:
    static double poly(const std::vector<double>& coeffs, double m, int deriv) {
        double out = 0.0;
        for (std::size_t p = 0; p < coeffs.size(); ++p) {
            const double pe = static_cast<double>(p);
            double term;
            switch (deriv) {
                case 0: term = pow0(m, pe); break;
                case 1: term = pow0_deriv(m, pe); break;
                default:
                    term = (p < 2) ? 0.0 : pe * (pe - 1.0) * pow0(m, pe - 2.0);
            }
            out += coeffs[p] * term;
        }
        return out;
    }

    ModelConstants c_;
    std::vector<double> B_;
    std::vector<double> A_;
    std::vector<std::vector<double>> b0_;
};

// ---------------------------------------------------------------------------
// Parameter gates
// ---------------------------------------------------------------------------

struct GateResult {
    std::string id;
    bool pass = false;
    double value = 0.0;  // the computed quantity the gate looks at
    std::string detail;
};

struct GateReport {
    double sigma = 0.0;
    std::vector<GateResult> gates;

    bool all_pass() const {
        for (const auto& g : gates)
            if (!g.pass) return false;
        return true;
    }
    const GateResult* find(const std::string& id) const {
        for (const auto& g : gates)
            if (g.id == id) return &g;
        return nullptr;
    }
};

// Exact arithmetic checks on the exponent constants: sigma, r >= 2s, the
// estimate-exponent condition (minimum of the two exponent expressions < 1
// with positive denominators), and for prototypes s < r/(2N).
inline GateReport check_gates(const ModelConstants& c, bool prototype = true) {
    GateReport rep;
    const double sigma = c.sigma();
    rep.sigma = sigma;
    const double dd = static_cast<double>(c.d);

    {
        GateResult g;
        g.id = "exponent_order";
        g.value = c.r - 2.0 * c.s;
        g.pass = c.r >= 2.0 * c.s;
        g.detail = "requires r >= 2s";
        rep.gates.push_back(g);
    }
    {
        GateResult g;
        g.id = "estimate_exponent";
        const double pos = [](double x) { return x > 0.0 ? x : 0.0; }(2.0 * c.s0 - sigma + 1.0);
        const double denom2 = sigma * (dd + 2.0) - dd;
        const double denom1 = denom2 - pos * (dd + 2.0);
        const double num1 = 4.0 * std::max(0.0, 2.0 * c.s0 * (dd + 2.0) - 1.0);
        const double num2 = 2.0 * c.s0 * (dd + 2.0);
        if (denom1 > 0.0 && denom2 > 0.0) {
            g.value = std::min(num1 / denom1, num2 / denom2);
            g.pass = g.value < 1.0;
            g.detail = "requires min of the exponent expressions < 1";
        } else {
            g.value = std::numeric_limits<double>::infinity();
            g.pass = false;
            g.detail = "nonpositive denominator in the exponent expressions";
        }
        rep.gates.push_back(g);
    }
    if (prototype) {
        GateResult g;
        g.id = "prototype_smallness";
        g.value = c.r / (2.0 * static_cast<double>(c.N)) - c.s;
        g.pass = c.s < c.r / (2.0 * static_cast<double>(c.N));
        g.detail = "requires s < r/(2N)";
        rep.gates.push_back(g);
    }
    return rep;
}

}  // namespace mfgb
