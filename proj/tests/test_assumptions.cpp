#include <doctest.h>

#include "testutil.hpp"

#include <cmath>
#include <random>

using namespace mfgb;

namespace {

ModelConstants constants_for(int N, int M, double r, double s, double s0, double K) {
    ModelConstants c;
    c.N = N;
    c.M = M;
    c.d = 1;
    c.r = r;
    c.s = s;
    c.s0 = s0;
    c.K = K;
    c.C0 = 0.5;
    return c;
}

// Deliberately concave pay-off, for the negative convexity test.
class ConcaveModel : public GameModel {
public:
    explicit ConcaveModel(ModelConstants c) : c_(c) {}
    const ModelConstants& constants() const override { return c_; }
    void payoff(double, const double*, double, const double* v, PayoffEval& out) const override {
        out.resize(c_.N, c_.M);
        for (int i = 0; i < c_.N; ++i) {
            double vi_sq = 0.0;
            for (int q = 0; q < c_.M; ++q) {
                const double viq = v[i * c_.M + q];
                vi_sq += viq * viq;
                out.f_v[i * c_.M + q] = -2.0 * viq;
            }
            out.f[i] = -vi_sq;
        }
    }
    double b1(double) const override { return 1.0; }
    double b1_deriv(double) const override { return 0.0; }
    void b0(double, double* out) const override { out[0] = 0.0; }
    void b0_deriv(double, double* out) const override { out[0] = 0.0; }
    void b0_deriv2(double, double* out) const override { out[0] = 0.0; }
    void control_matrix(int, double, const double*, double* out) const override {
        for (int k = 0; k < c_.M; ++k) out[k] = k == 0 ? 1.0 : 0.0;
    }

private:
    ModelConstants c_;
};

}  // namespace

TEST_SUITE_BEGIN("assumptions");

TEST_CASE("prototype with B = 0: convexity and sum coerciveness pass") {
    const PrototypeModel model(constants_for(2, 1, 1.0, 0.0, 0.0, 1.0));
    SamplerSpec sampler;
    sampler.count = 2000;
    sampler.seed = 42;
    const AssumptionReport rep = sample_assumptions(model, sampler);

    const AssumptionResult* convex = rep.find("payoff_convex");
    REQUIRE(convex != nullptr);
    CHECK(convex->pass);  // Hessian is 2(m+1)^r * I

    // the lower bound holds with the declared C0 = 1/2
    const AssumptionResult* coercive = rep.find("payoff_sum_coercive");
    REQUIRE(coercive != nullptr);
    CHECK(coercive->pass);

    CHECK(rep.sigma == 2.0);
    CHECK(rep.gates.size() >= 2);
}

TEST_CASE("explicit-constant sum coerciveness holds pointwise for B = 0 prototypes") {
    // sum_i (f^i + m f^i_m) >= (m^r+1)|v|^2 / 2 - K(1+2s0)(m^{2s0}+1)
    for (const auto& [r, s0, K] : {std::tuple{1.0, 0.0, 1.0}, std::tuple{1.3, 0.6, 2.0},
                                   std::tuple{0.0, 0.25, 0.5}}) {
        const PrototypeModel model(constants_for(2, 2, r, 0.0, s0, K));
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> um(0.0, 10.0);
        std::uniform_real_distribution<double> uv(-10.0, 10.0);
        PayoffEval pe;
        pe.resize(2, 2);
        const double x[1] = {0.0};
        for (int trial = 0; trial < 5000; ++trial) {
            const double m = um(rng);
            std::vector<double> v(4);
            double v_sq = 0.0;
            for (auto& vi : v) {
                vi = uv(rng);
                v_sq += vi * vi;
            }
            model.payoff(0.0, x, m, v.data(), pe);
            double sum = 0.0;
            for (int i = 0; i < 2; ++i) sum += pe.f[i] + m * pe.f_m[i];
            const double lower = 0.5 * (pow0(m, r) + 1.0) * v_sq -
                                 K * (1.0 + 2.0 * s0) * (pow0(m, 2.0 * s0) + 1.0);
            CHECK(sum >= lower - 1e-9 * std::abs(lower));
        }
    }
}

TEST_CASE("growth bounds report fitted constants against the declared ones") {
    // the prototype needs a larger generic constant than its own K in the
    // growth bound (the constant term alone forces a factor ~2 sqrt(N)),
    // which is exactly what the fitted constant reports
    const PrototypeModel model(constants_for(1, 1, 1.0, 0.0, 0.0, 1.0));
    SamplerSpec sampler;
    sampler.count = 2000;
    const AssumptionReport rep = sample_assumptions(model, sampler);
    const AssumptionResult* growth = rep.find("payoff_growth");
    REQUIRE(growth != nullptr);
    CHECK_FALSE(growth->pass);
    CHECK(growth->fitted_constant >= 2.0);
    CHECK(growth->fitted_constant < 3.0);
    CHECK(std::isfinite(growth->fitted_constant));

    // drift side: b1 == 1 <= K(m^s+1) holds with the declared K = 1
    CHECK(rep.find("b1_bound")->pass);
    CHECK(rep.find("b0_bound")->pass);
    CHECK(rep.find("control_matrix_bound")->pass);
    CHECK(rep.find("control_matrix_range")->pass);
    CHECK(rep.find("b0_derivative_bound")->pass);
    CHECK(rep.find("b0_second_derivative_bound")->pass);
}

TEST_CASE("exponential drift factor fails the smallness bound with a witness") {
    ModelConstants c = constants_for(1, 1, 1.0, 0.0, 0.0, 1.0);
    c.gamma = 0.01;
    const testutil::ExpDriftModel model(c);
    SamplerSpec sampler;
    sampler.count = 500;
    sampler.seed = 7;
    const AssumptionReport rep = sample_assumptions(model, sampler);
    const AssumptionResult* small = rep.find("b1_smallness");
    REQUIRE(small != nullptr);
    CHECK_FALSE(small->pass);
    // any m > gamma is a witness; the sampler must find one
    CHECK(small->witness.m > 0.01);
    // the fitted constant is the smallest admissible gamma: sup m = m_max here
    CHECK(small->fitted_constant > 1.0);
}

TEST_CASE("declared gamma above the admissible bound fails even when sampling holds") {
    ModelConstants c = constants_for(1, 1, 1.0, 0.0, 0.0, 1.0);
    // prototype with s = 0 has b1' == 0, so sampling holds for any gamma
    c.gamma = 10.0;  // way above C0/(2(C1^2+N^2)) = 0.125
    const PrototypeModel model(c);
    SamplerSpec sampler;
    sampler.count = 100;
    const AssumptionReport rep = sample_assumptions(model, sampler);
    const AssumptionResult* small = rep.find("b1_smallness");
    REQUIRE(small != nullptr);
    CHECK_FALSE(small->pass);
    CHECK(small->note == "gamma exceeds C0/(2(C1^2+N^2))");
}

TEST_CASE("concave pay-off fails the convexity check") {
    const ConcaveModel model(constants_for(1, 2, 0.0, 0.0, 0.0, 1.0));
    SamplerSpec sampler;
    sampler.count = 50;
    const AssumptionReport rep = sample_assumptions(model, sampler);
    const AssumptionResult* convex = rep.find("payoff_convex");
    REQUIRE(convex != nullptr);
    CHECK_FALSE(convex->pass);
    CHECK(convex->fitted_constant == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("quartic perturbation stays convex") {
    const testutil::QuarticModel model(constants_for(2, 1, 1.0, 0.0, 0.0, 1.0), 0.05);
    SamplerSpec sampler;
    sampler.count = 300;
    const AssumptionReport rep = sample_assumptions(model, sampler);
    CHECK(rep.find("payoff_convex")->pass);
}

TEST_CASE("reports are deterministic for a fixed seed") {
    const PrototypeModel model(constants_for(2, 1, 1.0, 0.0, 0.0, 1.0));
    SamplerSpec sampler;
    sampler.count = 500;
    sampler.seed = 321;
    const AssumptionReport a = sample_assumptions(model, sampler);
    const AssumptionReport b = sample_assumptions(model, sampler);
    REQUIRE(a.assumptions.size() == b.assumptions.size());
    for (std::size_t i = 0; i < a.assumptions.size(); ++i) {
        CHECK(a.assumptions[i].fitted_constant == b.assumptions[i].fitted_constant);
        CHECK(a.assumptions[i].pass == b.assumptions[i].pass);
        CHECK(a.assumptions[i].witness.m == b.assumptions[i].witness.m);
    }
}

TEST_SUITE_END();
