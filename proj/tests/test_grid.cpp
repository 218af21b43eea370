#include <doctest.h>

#include "testutil.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace mfgb;
using testutil::kPi;
using testutil::make_field;

TEST_SUITE_BEGIN("grid");

TEST_CASE("grid spec validation and geometry") {
    GridSpec g{1, 64, 1.0, 10};
    g.validate();
    CHECK(g.h() == doctest::Approx(1.0 / 64));
    CHECK(g.dt() == doctest::Approx(0.1));
    CHECK(g.nodes() == 64);

    GridSpec g2{2, 8, 2.0, 4};
    CHECK(g2.nodes() == 64);
    CHECK(g2.cell_volume() == doctest::Approx(1.0 / 64.0));

    CHECK_THROWS_AS((GridSpec{3, 8, 1.0, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((GridSpec{1, 3, 1.0, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((GridSpec{1, 8, -1.0, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((GridSpec{1, 8, 1.0, 0}.validate()), std::invalid_argument);
}

TEST_CASE("periodic wrap: shifting a field by n nodes is the identity") {
    const GridSpec g{1, 16, 1.0, 1};
    const ScalarField f = make_field(g, [](double x, double) { return std::cos(7.0 * x) + x; });
    ScalarField shifted(g);
    for (int i = 0; i < g.n; ++i) shifted[(i + g.n) % g.n] = f[i];
    CHECK(testutil::max_abs_diff(f, shifted) == 0.0);
}

TEST_CASE("gradient annihilates constants") {
    for (int d : {1, 2}) {
        const GridSpec g{d, 16, 1.0, 1};
        const MultiField grad = gradient(ScalarField(g, 3.7));
        for (int k = 0; k < d; ++k) CHECK(grad.comp(k).max_abs() == 0.0);
    }
}

TEST_CASE("gradient of sin(2 pi x) converges at second order") {
    double prev_err = 0.0;
    for (int n : {128, 256}) {
        const GridSpec g{1, n, 1.0, 1};
        const ScalarField f = make_field(g, [](double x, double) { return std::sin(2.0 * kPi * x); });
        const ScalarField exact =
            make_field(g, [](double x, double) { return 2.0 * kPi * std::cos(2.0 * kPi * x); });
        const double err = testutil::max_abs_diff(gradient(f).comp(0), exact);
        if (n == 128) {
            CHECK(err < 2.0 * kPi * std::pow(2.0 * kPi / n, 2.0));  // <= C h^2
            prev_err = err;
        } else {
            const double order = std::log2(prev_err / err);
            CHECK(order > 1.95);
            CHECK(order < 2.05);
        }
    }
}

TEST_CASE("gradient component vanishes along a symmetry axis") {
    const GridSpec g{2, 16, 1.0, 1};
    const ScalarField f = make_field(g, [](double x, double) { return std::sin(2.0 * kPi * x); });
    const MultiField grad = gradient(f);
    CHECK(grad.comp(1).max_abs() == 0.0);
    CHECK(grad.comp(0).max_abs() > 1.0);
}

TEST_CASE("laplacian: constants, analytic comparison, exact zero sum") {
    for (int d : {1, 2}) {
        const GridSpec g{d, 16, 1.0, 1};
        CHECK(laplacian(ScalarField(g, -2.5)).max_abs() == 0.0);
    }

    double prev_err = 0.0;
    for (int n : {128, 256}) {
        const GridSpec g{1, n, 1.0, 1};
        const ScalarField f = make_field(g, [](double x, double) { return std::sin(2.0 * kPi * x); });
        const ScalarField exact = make_field(
            g, [](double x, double) { return -4.0 * kPi * kPi * std::sin(2.0 * kPi * x); });
        const double err = testutil::max_abs_diff(laplacian(f), exact);
        if (n == 128) {
            prev_err = err;
        } else {
            CHECK(std::log2(prev_err / err) == doctest::Approx(2.0).epsilon(0.05));
        }
    }

    const GridSpec g{2, 12, 1.0, 1};
    const ScalarField f = make_field(g, [](double x, double y) {
        return std::exp(std::sin(2.0 * kPi * x) + std::cos(2.0 * kPi * y));
    });
    CHECK(std::abs(integrate(laplacian(f))) < 1e-11 * f.max_abs() / (g.h() * g.h()) * g.cell_volume() * g.nodes());
}

TEST_CASE("div_upwind: constant state, telescoping, first-order accuracy") {
    // m == 1 with constant velocity: constant flux, periodic -> zero
    for (int d : {1, 2}) {
        const GridSpec g{d, 16, 1.0, 1};
        const ScalarField m(g, 1.0);
        MultiField vel(g, d);
        for (int k = 0; k < d; ++k) vel.comp(k).fill(0.7 - 0.2 * k);
        CHECK(div_upwind(m, vel).max_abs() < 1e-14);
    }

    // sum over nodes is zero for arbitrary (m, g)
    {
        const GridSpec g{2, 12, 1.0, 1};
        const ScalarField m = make_field(g, [](double x, double y) {
            return 1.0 + 0.3 * std::sin(2.0 * kPi * x) * std::cos(4.0 * kPi * y);
        });
        MultiField vel(g, 2);
        vel.comp(0) = make_field(g, [](double x, double y) { return std::cos(2.0 * kPi * (x + y)); });
        vel.comp(1) = make_field(g, [](double x, double y) { return std::sin(2.0 * kPi * (x - y)); });
        const ScalarField dv = div_upwind(m, vel);
        CHECK(std::abs(integrate(dv)) < 1e-12);
    }

    // m = 1 + 0.5 sin(2 pi x), g == 1: approximates dm/dx at first order
    double prev_err = 0.0;
    for (int n : {128, 256}) {
        const GridSpec g{1, n, 1.0, 1};
        const ScalarField m =
            make_field(g, [](double x, double) { return 1.0 + 0.5 * std::sin(2.0 * kPi * x); });
        MultiField vel(g, 1);
        vel.comp(0).fill(1.0);
        const ScalarField exact =
            make_field(g, [](double x, double) { return kPi * std::cos(2.0 * kPi * x); });
        const double err = testutil::max_abs_diff(div_upwind(m, vel), exact);
        if (n == 128) {
            prev_err = err;
        } else {
            const double order = std::log2(prev_err / err);
            CHECK(order > 0.9);
            CHECK(order < 1.1);
        }
    }
}

TEST_CASE("div_upwind_tangent matches a directional finite difference") {
    const GridSpec g{1, 64, 1.0, 1};
    const ScalarField m =
        make_field(g, [](double x, double) { return 1.0 + 0.4 * std::sin(2.0 * kPi * x); });
    const ScalarField dm =
        make_field(g, [](double x, double) { return std::cos(4.0 * kPi * x); });
    MultiField vel(g, 1), dvel(g, 1);
    vel.comp(0) = make_field(g, [](double x, double) { return 0.8 + std::sin(2.0 * kPi * x); });
    dvel.comp(0) = make_field(g, [](double x, double) { return std::cos(2.0 * kPi * x); });

    const ScalarField tangent = div_upwind_tangent(m, vel, dm, dvel);
    const double eps = 1e-7;
    ScalarField mp = m, mm = m;
    add_scaled(mp, eps, dm);
    add_scaled(mm, -eps, dm);
    MultiField vp = vel, vm = vel;
    add_scaled(vp, eps, dvel);
    add_scaled(vm, -eps, dvel);
    ScalarField fd = div_upwind(mp, vp);
    add_scaled(fd, -1.0, div_upwind(mm, vm));
    for (auto& v : fd.values()) v /= 2.0 * eps;
    CHECK(testutil::max_abs_diff(tangent, fd) < 1e-6);
}

TEST_CASE("integrate_pnorm: constants, homogeneity, trigonometric exactness, domain errors") {
    const GridSpec g{2, 16, 1.0, 1};
    {
        const PNormResult r = integrate_pnorm(ScalarField(g, 1.0), 3.0);
        CHECK(r.integral == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(r.norm == doctest::Approx(1.0).epsilon(1e-14));
    }
    {
        const PNormResult r = integrate_pnorm(ScalarField(g, -2.5), 4.0);
        CHECK(r.norm == doctest::Approx(2.5).epsilon(1e-14));
        CHECK(r.integral == doctest::Approx(-2.5).epsilon(1e-14));
    }
    {
        const GridSpec g1{1, 128, 1.0, 1};
        const ScalarField f =
            make_field(g1, [](double x, double) { return 1.0 + std::sin(2.0 * kPi * x); });
        const PNormResult r = integrate_pnorm(f, 2.0);
        CHECK(std::abs(r.norm * r.norm - 1.5) < 1e-10);
    }
    {
        ScalarField f(g, 1.0);
        f[0] = -0.5;
        CHECK_THROWS_AS(integrate_pnorm(f, 1.5), std::domain_error);
        CHECK_NOTHROW(integrate_pnorm(f, 2.0));
        CHECK_THROWS_AS(integrate_pnorm(f, 0.5), std::invalid_argument);
    }
}

TEST_CASE("binary field dump round-trips and trajectories pack slices") {
    const std::filesystem::path tmp =
        std::filesystem::temp_directory_path() / "mfgb_io_test.bin";
    const GridSpec g{2, 8, 1.0, 3};
    MultiField f(g, 2);
    f.comp(0) = make_field(g, [](double x, double y) { return x + 10.0 * y; });
    f.comp(1) = make_field(g, [](double x, double y) { return std::sin(x * y + 1.0); });
    write_field_bin(tmp.string(), f);
    const FieldFileData data = read_field_bin(tmp.string());
    CHECK(data.d == 2);
    CHECK(data.n == 8);
    CHECK(data.components == 2);
    for (std::int64_t i = 0; i < g.nodes(); ++i) {
        CHECK(data.values[static_cast<std::size_t>(i)] == f.comp(0)[i]);
        CHECK(data.values[static_cast<std::size_t>(g.nodes() + i)] == f.comp(1)[i]);
    }

    ScalarTrajectory traj = zero_scalar_trajectory(g);
    for (int k = 0; k <= g.nt; ++k) traj.slice[static_cast<std::size_t>(k)].fill(k);
    write_trajectory_bin(tmp.string(), traj);
    const FieldFileData tdata = read_field_bin(tmp.string());
    CHECK(tdata.components == g.nt + 1);
    CHECK(tdata.values[0] == 0.0);
    CHECK(tdata.values.back() == static_cast<double>(g.nt));
    std::filesystem::remove(tmp);
}

TEST_CASE("csv export lists coordinates then component values") {
    const std::filesystem::path tmp =
        std::filesystem::temp_directory_path() / "mfgb_io_test.csv";
    const GridSpec g{1, 4, 1.0, 1};
    MultiField f(g, 1);
    f.comp(0) = make_field(g, [](double x, double) { return 2.0 * x; });
    write_field_csv(tmp.string(), f);
    std::ifstream is(tmp);
    std::string line;
    std::getline(is, line);
    CHECK(line == "x_1,value_1");
    std::getline(is, line);
    CHECK(line == "0,0");
    std::getline(is, line);
    CHECK(line == "0.25,0.5");
    std::filesystem::remove(tmp);
}

TEST_SUITE_END();
