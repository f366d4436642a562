#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "kmarket/transport.hpp"

using namespace kmarket;
using doctest::Approx;

namespace {

double total_variation(const std::vector<double>& f)
{
    double tv = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) {
        tv += std::abs(f[i] - f[i - 1]);
    }
    return tv;
}

double sum(const std::vector<double>& f)
{
    double s = 0.0;
    for (double v : f) {
        s += v;
    }
    return s;
}

// L1 error of advecting exp(-((x - x0)/s)^2) on [-1, 1] with speed 1 to time T.
double gaussian_l1_error(std::size_t n, double phi)
{
    const double dx = 2.0 / static_cast<double>(n);
    const double nu = 0.4;
    const double T = 0.5;
    const auto steps = static_cast<std::size_t>(std::llround(T * std::abs(phi) / (nu * dx)));
    const double dt = T / static_cast<double>(steps);
    const double x0 = phi > 0 ? -0.3 : 0.3;
    const double s = 0.15;
    // Cell averages of the exact profile.
    auto average = [&](double a, double b, double shift) {
        const double c = std::sqrt(M_PI) * s / 2.0;
        return c * (std::erf((b - x0 - shift) / s) - std::erf((a - x0 - shift) / s)) / (b - a);
    };
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = -1.0 + static_cast<double>(i) * dx;
        f[i] = average(a, a + dx, 0.0);
    }
    TransportWorkspace ws;
    for (std::size_t k = 0; k < steps; ++k) {
        advect_row(f, phi, dt, dx, FluxForm::Limited, ws);
    }
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = -1.0 + static_cast<double>(i) * dx;
        err += std::abs(f[i] - average(a, a + dx, phi * T)) * dx;
    }
    return err;
}

}  // namespace

TEST_CASE("van_leer_psi")
{
    CHECK(van_leer_psi(1.0) == 1.0);
    CHECK(van_leer_psi(-2.0) == 0.0);
    CHECK(van_leer_psi(3.0) == 1.5);
    CHECK(van_leer_psi(0.0) == 0.0);
    CHECK(van_leer_psi(std::numeric_limits<double>::infinity()) == 2.0);
    CHECK(van_leer_psi(-std::numeric_limits<double>::infinity()) == 0.0);
    for (double t = -50.0; t <= 50.0; t += 0.37) {
        const double v = van_leer_psi(t);
        CHECK(v >= 0.0);
        CHECK(v < 2.0);
        CHECK(v <= 2.0 * std::max(t, 0.0) + 1e-15);  // TVD region
    }
}

TEST_CASE("transport_step trivial cases")
{
    Scenario s;
    ModelParams p;
    DistributionGrid g(10, 10);
    for (std::size_t k = 0; k < g.values().size(); ++k) {
        g.values()[k] = 1.0 + std::sin(0.1 * static_cast<double>(k));
    }

    SUBCASE("constant rows stay constant away from the walls")
    {
        DistributionGrid c(10, 10);
        c.fill(0.7);
        transport_step(c, 0.0, 0.01, s, p);
        const double nu = courant_number(c, 0.0, 0.01, s, p);
        for (std::size_t j = 0; j < 10; ++j) {
            for (std::size_t i = 1; i + 1 < 10; ++i) {
                CHECK(c(i, j) == Approx(0.7).epsilon(1e-15));
            }
            // No-flux walls: the downstream end gains what the upstream end loses.
            const double sgn = drift_phi(0.0, c.w_center(j), 0.5, p) > 0 ? 1.0 : -1.0;
            CHECK(c(9, j) == Approx(0.7 * (1.0 + sgn * nu)));
            CHECK(c(0, j) == Approx(0.7 * (1.0 - sgn * nu)));
        }
    }
    SUBCASE("zero drift leaves the grid unchanged")
    {
        std::vector<double> row{0.0, 1.0, 3.0, 2.0};
        const auto before = row;
        TransportWorkspace ws;
        advect_row(row, 0.0, 0.1, 0.1, FluxForm::Limited, ws);
        CHECK(row == before);
    }
    SUBCASE("CFL violation")
    {
        CHECK_THROWS_AS(transport_step(g, 0.0, 0.5, s, p), std::domain_error);
        CHECK(courant_number(g, 0.0, 0.1, s, p) == Approx(0.5));
    }
    SUBCASE("mass conservation")
    {
        const double m0 = total_mass(g);
        TransportWorkspace ws;
        for (int k = 0; k < 500; ++k) {
            transport_step(g, 0.0, 0.05, s, p, FluxForm::Limited, ws);
        }
        CHECK(std::abs(total_mass(g) - m0) / m0 < 1e-12);
    }
}

TEST_CASE("printed flux form is pinned on a 5-cell row")
{
    // Evaluated by hand from the printed flux: F_0 = F_5 = 0, zero-gradient ghost.
    std::vector<double> row{0.0, 1.0, 3.0, 2.0, 0.5};
    TransportWorkspace ws;
    advect_row(row, 1.0, 0.1, 0.2, FluxForm::AsPrinted, ws);
    const std::vector<double> expected{5.0 / 12.0, 19.0 / 12.0, 1.6, 1.65, 1.25};
    for (std::size_t i = 0; i < row.size(); ++i) {
        CHECK(row[i] == Approx(expected[i]).epsilon(1e-14));
    }
    // Conservative, but not consistent with advection: mass appears upstream of a
    // right-moving front.
    std::vector<double> step{0.0, 0.0, 1.0, 1.0, 1.0};
    advect_row(step, 1.0, 0.1, 0.2, FluxForm::AsPrinted, ws);
    CHECK(sum(step) == Approx(3.0));
    CHECK(step[1] > 0.0);
    std::vector<double> limited{0.0, 0.0, 1.0, 1.0, 1.0};
    advect_row(limited, 1.0, 0.1, 0.2, FluxForm::Limited, ws);
    CHECK(limited[1] == 0.0);
}

TEST_CASE("limited form reduces to upwind on a step and stays TVD")
{
    // 40 steps at nu <= 1 stay clear of the walls.
    const std::size_t n = 120;
    for (double phi : {1.0, -1.0}) {
        for (double nu : {0.2, 0.5, 0.9, 1.0}) {
            std::vector<double> f(n, 0.0);
            for (std::size_t i = 45; i < 75; ++i) {
                f[i] = 1.0;
            }
            const double dx = 2.0 / n;
            const double dt = nu * dx;
            const double m0 = sum(f);
            double tv = total_variation(f);
            TransportWorkspace ws;
            for (int k = 0; k < 40; ++k) {
                advect_row(f, phi, dt, dx, FluxForm::Limited, ws);
                const double now = total_variation(f);
                CHECK(now <= tv + 1e-12);
                tv = now;
                for (double v : f) {
                    CHECK(v >= -1e-14);
                    CHECK(v <= 1.0 + 1e-14);
                }
            }
            CHECK(sum(f) == Approx(m0).epsilon(1e-13));
        }
    }
}

TEST_CASE("no-flux ends accumulate mass at the boundary")
{
    std::vector<double> f(20, 1.0);
    TransportWorkspace ws;
    for (int k = 0; k < 400; ++k) {
        advect_row(f, 1.0, 0.05, 0.1, FluxForm::Limited, ws);
    }
    CHECK(sum(f) == Approx(20.0).epsilon(1e-13));
    CHECK(f.back() > 1.0);
    CHECK(f.front() < 1.0);
}

TEST_CASE("smooth advection converges at second order")
{
    for (double phi : {1.0, -1.0}) {
        const double e1 = gaussian_l1_error(70, phi);
        const double e2 = gaussian_l1_error(140, phi);
        const double e3 = gaussian_l1_error(280, phi);
        const double order = std::log2(e2 / e3);
        MESSAGE("L1 errors ", e1, " ", e2, " ", e3, " order ", std::log2(e1 / e2), " ", order);
        CHECK(order >= 1.8);
    }
}
