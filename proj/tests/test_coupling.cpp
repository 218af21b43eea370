#include <doctest.h>

#include "testutil.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace mfgb;
using testutil::kPi;
using testutil::make_field;

namespace {

ModelConstants constants_for(int N, int M, int d, double r, double s, double s0, double K) {
    ModelConstants c;
    c.N = N;
    c.M = M;
    c.d = d;
    c.r = r;
    c.s = s;
    c.s0 = s0;
    c.K = K;
    c.C0 = 0.5;
    return c;
}

std::vector<double> stacked_gradient(const GameModel& model, const double* x, double m,
                                     const std::vector<double>& v) {
    PayoffEval pe;
    const ModelConstants& c = model.constants();
    pe.resize(c.N, c.M);
    model.payoff(0.0, x, m, v.data(), pe);
    return pe.f_v;
}

}  // namespace

TEST_SUITE_BEGIN("coupling");

TEST_CASE("feedback: unforced quadratic gives zero control") {
    const PrototypeModel model(constants_for(2, 2, 1, 1.0, 0.0, 0.0, 1.0));
    const double x[1] = {0.5};
    const std::vector<double> grad_u(4, 0.0);
    const std::vector<double> v = feedback_solve(model, 0.0, x, 2.0, grad_u.data());
    for (double vi : v) CHECK(vi == 0.0);
}

TEST_CASE("feedback hand value and closed-form/Newton agreement") {
    const PrototypeModel model(constants_for(1, 1, 1, 1.0, 0.0, 0.0, 1.0));
    const double x[1] = {0.0};
    const double grad_u[1] = {1.0};
    const std::vector<double> v = feedback_solve(model, 0.0, x, 1.0, grad_u);
    CHECK(v[0] == doctest::Approx(-0.25).epsilon(1e-15));

    SolverConfig newton_cfg;
    newton_cfg.force_newton = true;
    const std::vector<double> vn = feedback_solve(model, 0.0, x, 1.0, grad_u, newton_cfg);
    CHECK(std::abs(vn[0] - v[0]) <= 1e-12);
}

TEST_CASE("closed form vs Newton agree at random points") {
    const PrototypeModel model(constants_for(2, 2, 2, 1.4, 0.2, 0.1, 1.0),
                               std::vector<double>{0.3, -0.1, 0.2, 0.0,
                                                   0.1, 0.4, -0.2, 0.3});
    SolverConfig newton_cfg;
    newton_cfg.force_newton = true;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> um(0.0, 10.0);
    std::uniform_real_distribution<double> ug(-5.0, 5.0);
    const double x[2] = {0.1, 0.6};
    for (int trial = 0; trial < 1000; ++trial) {
        const double m = um(rng);
        std::vector<double> grad_u(4);
        for (auto& g : grad_u) g = ug(rng);
        const std::vector<double> a = feedback_solve(model, 0.0, x, m, grad_u.data());
        const std::vector<double> b = feedback_solve(model, 0.0, x, m, grad_u.data(), newton_cfg);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
    }
}

TEST_CASE("Newton handles a strictly monotone quartic perturbation") {
    const testutil::QuarticModel model(constants_for(2, 1, 1, 1.0, 0.0, 0.0, 1.0), 0.1);
    const double x[1] = {0.3};
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> ug(-4.0, 4.0);
    SolverConfig cfg;
    cfg.newton_tol = 1e-10;
    for (int trial = 0; trial < 200; ++trial) {
        const double m = std::abs(ug(rng));
        std::vector<double> grad_u(2);
        for (auto& g : grad_u) g = ug(rng);
        const std::vector<double> v = feedback_solve(model, 0.0, x, m, grad_u.data(), cfg);
        // the residual of the compatibility condition is the oracle
        std::vector<double> fv = stacked_gradient(model, x, m, v);
        for (int i = 0; i < 2; ++i) {
            const double res = fv[static_cast<std::size_t>(i)] + model.b1(m) * grad_u[static_cast<std::size_t>(i)];
            CHECK(std::abs(res) <= 1e-10);
        }
    }
}

TEST_CASE("Newton non-convergence carries the last residual") {
    const testutil::QuarticModel model(constants_for(1, 1, 1, 1.0, 0.0, 0.0, 1.0), 0.5);
    SolverConfig cfg;
    cfg.max_newton = 1;
    cfg.newton_tol = 1e-14;
    const double x[1] = {0.0};
    const double grad_u[1] = {50.0};
    try {
        feedback_solve(model, 0.0, x, 1.0, grad_u, cfg);
        FAIL("expected FeedbackError");
    } catch (const FeedbackError& e) {
        CHECK(e.last_residual > 0.0);
        CHECK(std::isfinite(e.last_residual));
    }
}

TEST_CASE("strict monotonicity spot check of the gradient map") {
    const PrototypeModel proto(constants_for(2, 2, 1, 1.2, 0.3, 0.0, 1.0),
                               std::vector<double>{0.2, 0.1, 0.0, -0.1,
                                                   0.3, 0.0, 0.1, 0.2});
    const testutil::QuarticModel quartic(constants_for(2, 2, 1, 1.2, 0.3, 0.0, 1.0), 0.2);
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const double x[1] = {0.2};
    for (const GameModel* model : {static_cast<const GameModel*>(&proto),
                                   static_cast<const GameModel*>(&quartic)}) {
        for (int trial = 0; trial < 200; ++trial) {
            const double m = std::abs(u(rng));
            std::vector<double> va(4), vb(4);
            for (std::size_t i = 0; i < 4; ++i) {
                va[i] = u(rng);
                vb[i] = u(rng);
            }
            if (va == vb) continue;
            const std::vector<double> ta = stacked_gradient(*model, x, m, va);
            const std::vector<double> tb = stacked_gradient(*model, x, m, vb);
            double inner = 0.0;
            for (std::size_t i = 0; i < 4; ++i) inner += (ta[i] - tb[i]) * (va[i] - vb[i]);
            CHECK(inner > 0.0);
        }
    }
}

TEST_CASE("hamiltonian: corner value and sign-flip invariance") {
    {
        const PrototypeModel model(constants_for(2, 1, 1, 1.0, 0.0, 0.0, 1.0));
        const double x[1] = {0.0};
        const std::vector<double> grad_u(2, 0.0);
        const std::vector<double> H = hamiltonian(model, 0.0, x, 0.0, grad_u.data());
        CHECK(H[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(H[1] == doctest::Approx(2.0).epsilon(1e-15));
    }
    {
        // B = 0, s = 0, r = 0, A = identity with M = d: the Hamiltonian is
        // invariant under a common sign flip of every player's gradient
        const PrototypeModel model(constants_for(2, 2, 2, 0.0, 0.0, 0.0, 1.0));
        const double x[2] = {0.1, 0.2};
        std::mt19937_64 rng(37);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        for (int trial = 0; trial < 100; ++trial) {
            const double m = std::abs(u(rng));
            std::vector<double> grad_u(8), flipped(8);
            const double flip[2] = {1.0, -1.0};
            for (int i = 0; i < 2; ++i)
                for (int k = 0; k < 2; ++k) {
                    const std::size_t idx = static_cast<std::size_t>(i) * 2 + k;
                    grad_u[idx] = u(rng);
                    flipped[idx] = flip[k] * grad_u[idx];
                }
            const std::vector<double> Ha = hamiltonian(model, 0.0, x, m, grad_u.data());
            const std::vector<double> Hb = hamiltonian(model, 0.0, x, m, flipped.data());
            for (int i = 0; i < 2; ++i)
                CHECK(Ha[static_cast<std::size_t>(i)] ==
                      doctest::Approx(Hb[static_cast<std::size_t>(i)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("hamiltonian gradient matches finite differences at the fixed optimal control") {
    // with r = 0, s = 0, B = 0 the compatibility condition kills the direct
    // control sensitivity, so dH^i/d(grad u^i) equals (g + m g_m) at v*
    const PrototypeModel model(constants_for(2, 1, 1, 0.0, 0.0, 0.0, 1.0));
    const double x[1] = {0.4};
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double m = std::abs(u(rng));
        std::vector<double> grad_u(2);
        for (auto& g : grad_u) g = u(rng);
        const std::vector<double> v = feedback_solve(model, 0.0, x, m, grad_u.data());
        const DriftEval de = eval_drift(model, 0.0, x, m, v.data());
        const double step = 1e-6;
        for (int i = 0; i < 2; ++i) {
            std::vector<double> gp = grad_u, gm = grad_u;
            gp[static_cast<std::size_t>(i)] += step;
            gm[static_cast<std::size_t>(i)] -= step;
            const double fd = (hamiltonian(model, 0.0, x, m, gp.data())[static_cast<std::size_t>(i)] -
                               hamiltonian(model, 0.0, x, m, gm.data())[static_cast<std::size_t>(i)]) /
                              (2.0 * step);
            const double partial = de.g[0] + m * de.g_m[0];
            CHECK(std::abs(fd - partial) / std::max(1.0, std::abs(partial)) < 1e-5);
        }
    }
}

TEST_CASE("picard on the decoupled scenario converges in one iteration") {
    // controls do not enter the drift (A == 0) and B = 0: the feedback is
    // zero at every iterate and the density solves the pure-diffusion flow
    const ModelConstants c = constants_for(2, 1, 1, 1.0, 0.0, 0.0, 1.0);
    const GridSpec g{1, 32, 0.1, 20};
    const std::vector<double> A_zero(2, 0.0);
    const PrototypeModel model(c, {}, A_zero);
    const ScalarField m0 =
        make_field(g, [](double x, double) { return 1.0 + 0.5 * std::sin(2.0 * kPi * x); });
    MultiField u_T(g, 2);
    u_T.comp(0) = make_field(g, [](double x, double) { return 0.3 * std::sin(2.0 * kPi * x); });
    u_T.comp(1) = ScalarField(g, 0.1);

    SolverConfig cfg;
    cfg.picard_tol = 1e-9;
    const SolutionState state = picard_solve(model, m0, u_T, cfg);
    CHECK(state.converged);
    CHECK(state.history.size() == 1);
    CHECK(state.residual_l2 == 0.0);
    for (const auto& slice : state.v.slice)
        CHECK(slice.max_abs() == 0.0);

    // density coincides with the zero-control forward solve
    StepScheme scheme;
    const ScalarTrajectory pure =
        solve_forward(model, zero_multi_trajectory(g, 2), m0, scheme);
    for (int k = 0; k <= g.nt; ++k)
        CHECK(testutil::max_abs_diff(state.m.slice[static_cast<std::size_t>(k)],
                                     pure.slice[static_cast<std::size_t>(k)]) == 0.0);
}

TEST_CASE("picard on a coupled scenario: residual bounds and fixed-point consistency") {
    testutil::CoupledSetup setup = testutil::coupled_reference(32, 32);
    SolverConfig cfg;
    cfg.picard_tol = 1e-7;
    cfg.max_picard = 300;
    StepScheme scheme;
    const SolutionState state = picard_solve(*setup.model, setup.m0, setup.u_T, cfg, &scheme);
    CHECK(state.converged);
    CHECK(state.residual_l2 <= cfg.picard_tol);
    CHECK(state.residual_max <= 10.0 * cfg.picard_tol);
    CHECK(state.history.back().residual <= cfg.picard_tol);

    // controls genuinely nonzero (the coupling is not degenerate)
    CHECK(l2q_norm(state.v) > 1e-3);

    // re-running the pieces on the converged state changes nothing beyond
    // the solver tolerances
    StepScheme scheme2;
    const ScalarTrajectory m2 = solve_forward(*setup.model, state.v, setup.m0, scheme2);
    CHECK(l2q_distance(m2, state.m) == 0.0);  // deterministic re-solve
    const MultiTrajectory u2 = solve_backward(*setup.model, state.m, state.v, setup.u_T, scheme2);
    CHECK(l2q_distance(u2, state.u) == 0.0);
    const MultiTrajectory v_star = detail::feedback_trajectory(*setup.model, state.m, state.u, cfg);
    CHECK(l2q_distance(v_star, state.v) <= 10.0 * cfg.picard_tol * std::max(1.0, l2q_norm(state.v)));

    // residual history decays monotonically after its peak
    std::size_t peak = 0;
    for (std::size_t i = 1; i < state.history.size(); ++i)
        if (state.history[i].residual > state.history[peak].residual) peak = i;
    for (std::size_t i = peak + 1; i + 1 < state.history.size(); ++i)
        CHECK(state.history[i + 1].residual <= state.history[i].residual * (1.0 + 1e-9));
}

TEST_CASE("picard damping consistency: theta 1.0 and 0.5 land on the same state") {
    testutil::CoupledSetup setup = testutil::coupled_reference(32, 32);
    SolverConfig cfg;
    cfg.picard_tol = 1e-8;
    cfg.max_picard = 400;
    cfg.theta = 1.0;
    const SolutionState full = picard_solve(*setup.model, setup.m0, setup.u_T, cfg);
    cfg.theta = 0.5;
    const SolutionState damped = picard_solve(*setup.model, setup.m0, setup.u_T, cfg);
    CHECK(full.converged);
    CHECK(damped.converged);
    CHECK(l2q_distance(full.v, damped.v) <= 10.0 * cfg.picard_tol);
    CHECK(l2q_distance(full.m, damped.m) <= 10.0 * cfg.picard_tol);
}

TEST_CASE("picard non-convergence throws with the state attached") {
    testutil::CoupledSetup setup = testutil::coupled_reference(32, 32);
    SolverConfig cfg;
    cfg.picard_tol = 1e-12;
    cfg.max_picard = 1;
    try {
        picard_solve(*setup.model, setup.m0, setup.u_T, cfg);
        FAIL("expected PicardNonConvergence");
    } catch (const PicardNonConvergence& e) {
        CHECK(e.state.history.size() == 1);
        CHECK(e.state.history[0].residual > 1e-12);
        CHECK(e.state.m.slice.size() == static_cast<std::size_t>(setup.grid.nt) + 1);
        e.state.validate();
    }
}

TEST_CASE("history csv carries the documented columns") {
    std::vector<IterationRecord> history;
    history.push_back({1, 0.5, std::numeric_limits<double>::quiet_NaN(),
                       std::numeric_limits<double>::quiet_NaN(), 0.25});
    history.push_back({2, 0.1, 0.01, 0.02, 0.03});
    const std::filesystem::path tmp =
        std::filesystem::temp_directory_path() / "mfgb_history_test.csv";
    write_history_csv(tmp.string(), history);
    std::ifstream is(tmp);
    std::string line;
    std::getline(is, line);
    CHECK(line == "iteration,residual_1.81_L2,dm_rel,du_rel,dv_rel");
    std::getline(is, line);
    CHECK(line.substr(0, 6) == "1,0.5,");
    std::getline(is, line);
    CHECK(line == "2,0.1,0.01,0.02,0.03");
    std::filesystem::remove(tmp);
}

TEST_SUITE_END();
