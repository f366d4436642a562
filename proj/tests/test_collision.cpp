#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "kmarket/collision.hpp"

using namespace kmarket;
using doctest::Approx;

namespace {

ModelParams quiet()
{
    ModelParams p;
    p.noise.amplitude = 0.0;
    return p;
}

DistributionGrid gaussian_grid(std::size_t n_x, std::size_t n_w)
{
    DistributionGrid g(n_x, n_w);
    for (std::size_t j = 0; j < n_w; ++j) {
        const double z = (g.w_center(j) - 0.5) / 0.1;
        for (std::size_t i = 0; i < n_x; ++i) {
            g(i, j) = std::exp(-0.5 * z * z) * (1.0 + 0.3 * std::sin(3.0 * g.x_center(i)));
        }
    }
    const double m = total_mass(g);
    for (double& v : g.values()) {
        v /= m;
    }
    return g;
}

}  // namespace

TEST_CASE("public_interaction")
{
    ModelParams p = quiet();
    CHECK(public_interaction(0.5, 0.5, 0.0, p) == 0.5);
    p.alpha = 0.5;
    CHECK(public_interaction(0.8, 0.5, 0.0, p) == Approx(0.65));
    p.alpha = 1.0;
    CHECK(public_interaction(0.8, 0.5, 0.0, p) == Approx(0.5));
    p.alpha = 0.5;
    CHECK(public_interaction(0.5, 0.5, 0.06, p) == Approx(0.56));
}

TEST_CASE("herding_interaction")
{
    ModelParams p = quiet();
    p.beta = 0.5;
    auto [a, b] = herding_interaction(0.4, 0.4, 0.0, 0.0, p);
    CHECK(a == 0.4);
    CHECK(b == 0.4);
    auto [w, v] = herding_interaction(0.2, 0.6, 0.0, 0.0, p);
    CHECK(w == Approx(0.296));
    CHECK(v == Approx(0.504));
    CHECK(w + v == Approx(0.8));
    auto [c, d] = herding_interaction(0.6, 0.2, 0.0, 0.0, p);
    CHECK(c == 0.6);
    CHECK(d == 0.2);
}

TEST_CASE("select_rule")
{
    ModelParams p;
    Rng rng(7);
    CHECK(select_rule(0.7, p, rng) == Rule::Herding);
    CHECK(select_rule(0.3, p, rng) == Rule::Public);
    p.swap_rules = true;
    CHECK(select_rule(0.7, p, rng) == Rule::Public);
    CHECK(select_rule(0.3, p, rng) == Rule::Herding);
    p.swap_rules = false;

    // Fair coin in the middle band: 20000 draws, 4 sigma = 0.014.
    int herding = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        herding += select_rule(0.5, p, rng) == Rule::Herding;
    }
    CHECK(std::abs(herding / double(n) - 0.5) < 0.014);
}

TEST_CASE("sample_noise")
{
    Rng rng(3);
    NoiseModel two{NoiseModel::Kind::TwoPoint, 0.06};
    double sum = 0.0;
    const int n = 40000;
    for (int k = 0; k < n; ++k) {
        const double e = sample_noise(two, rng);
        CHECK((e == 0.06 || e == -0.06));
        sum += e;
    }
    CHECK(std::abs(sum / n) < 4 * 0.06 / std::sqrt(double(n)));

    NoiseModel gauss{NoiseModel::Kind::Gaussian, 0.06};
    double s1 = 0.0;
    double s2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double e = sample_noise(gauss, rng);
        s1 += e;
        s2 += e * e;
    }
    CHECK(std::abs(s1 / n) < 4 * 0.06 / std::sqrt(double(n)));
    CHECK(s2 / n == Approx(0.0036).epsilon(0.03));

    NoiseModel off{NoiseModel::Kind::Gaussian, 0.0};
    CHECK(sample_noise(off, rng) == 0.0);
}

TEST_CASE("apply_event rejection leaves the grid untouched")
{
    ModelParams p = quiet();
    p.alpha = 0.5;
    DistributionGrid g = gaussian_grid(4, 10);
    const DistributionGrid before = g;

    CollisionEvent ev;
    ev.rule = Rule::Public;
    ev.column = 1;
    ev.source_row = 9;  // w = 0.95
    ev.W = 0.5;
    ev.eta1 = 10.0;     // w* = 0.95 - 0.225 + 10 * d(0.95) > 1
    ev.quantum = 1e-3;
    CHECK_FALSE(apply_event(g, ev, p));
    CHECK(g == before);

    ev.rule = Rule::Herding;
    ev.partner_row = 2;
    ev.eta1 = -50.0;
    CHECK_FALSE(apply_event(g, ev, p));
    CHECK(g == before);
}

TEST_CASE("apply_event public fixed point")
{
    ModelParams p = quiet();
    DistributionGrid g(2, 5);  // centers 0.1 .. 0.9, 0.5 is a center
    g.fill(1.0);
    const DistributionGrid before = g;
    CollisionEvent ev;
    ev.rule = Rule::Public;
    ev.column = 0;
    ev.source_row = 2;
    ev.W = 0.5;
    ev.quantum = 0.05;
    CHECK(apply_event(g, ev, p));
    for (std::size_t k = 0; k < g.values().size(); ++k) {
        CHECK(g.values()[k] == Approx(before.values()[k]).epsilon(1e-14));
    }
}

TEST_CASE("apply_event herding deposits")
{
    // Centers 0.1, 0.3, 0.5, 0.7, 0.9.
    ModelParams p = quiet();
    p.beta = 0.5;
    DistributionGrid g(1, 5);
    g.fill(1.0);
    const double area = g.cell_area();
    const double q = 1e-4;

    CollisionEvent ev;
    ev.rule = Rule::Herding;
    ev.column = 0;
    ev.source_row = 1;   // 0.3
    ev.partner_row = 3;  // 0.7
    ev.quantum = q;
    const auto [ws, vs] = herding_interaction(0.3, 0.7, 0.0, 0.0, p);
    // gamma = 0.7 * 0.7 = 0.49: w* = 0.3 + 0.5 * 0.49 * 0.4 = 0.398, v* = 0.602.
    CHECK(ws == Approx(0.398));
    CHECK(vs == Approx(0.602));
    const double before = total_mass(g);
    const double m_before = moments(g, 0.5).m_w;
    CHECK(apply_event(g, ev, p));
    CHECK(total_mass(g) == Approx(before).epsilon(1e-15));

    // 0.398 lies 0.49 of the way from center 0.3 to 0.5; 0.602 lies 0.51 from 0.5 to 0.7.
    const double w_up = (0.398 - 0.3) / 0.2;
    const double v_up = (0.602 - 0.5) / 0.2;
    CHECK(g(0, 1) * area == Approx(area - q + q * (1 - w_up)).epsilon(1e-12));
    CHECK(g(0, 2) * area == Approx(area + q * w_up + q * (1 - v_up)).epsilon(1e-12));
    CHECK(g(0, 3) * area == Approx(area - q + q * v_up).epsilon(1e-12));
    // Interior linear deposits keep the first moment of the moved quanta.
    CHECK(moments(g, 0.5).m_w == Approx(m_before).epsilon(1e-14));
}

TEST_CASE("apply_event spec herding example on a grid with centers at 0.2 and 0.6")
{
    ModelParams p = quiet();
    p.beta = 0.5;
    // Centers 0.2, 0.4, 0.6, 0.8.
    DistributionGrid g(1, 4, GridBox{-1.0, 1.0, 0.1, 0.9});
    g.fill(1.0);
    const double area = g.cell_area();
    const double q = 1e-4;
    CollisionEvent ev;
    ev.rule = Rule::Herding;
    ev.source_row = 0;   // 0.2
    ev.partner_row = 2;  // 0.6
    ev.quantum = q;
    CHECK(apply_event(g, ev, p));
    // 0.296 -> 0.48 of the way from 0.2 to 0.4; 0.504 -> 0.52 of the way from 0.4 to 0.6.
    CHECK(g(0, 0) * area == Approx(area - q + q * 0.52).epsilon(1e-12));
    CHECK(g(0, 1) * area == Approx(area + q * 0.48 + q * 0.48).epsilon(1e-12));
    CHECK(g(0, 2) * area == Approx(area - q + q * 0.52).epsilon(1e-12));
    CHECK(g(0, 3) * area == Approx(area).epsilon(1e-12));
}

TEST_CASE("apply_event over-withdrawal is a hard error")
{
    ModelParams p = quiet();
    DistributionGrid g(1, 5);
    g(0, 1) = 1.0;
    CollisionEvent ev;
    ev.rule = Rule::Public;
    ev.source_row = 1;
    ev.W = 0.5;
    ev.quantum = 10.0;
    CHECK_THROWS_AS(apply_event(g, ev, p), std::logic_error);
}

TEST_CASE("collision_step")
{
    ModelParams p;
    Scenario s;
    CollisionConfig cfg;

    SUBCASE("empty grid")
    {
        DistributionGrid g(5, 5);
        Rng rng(1);
        const auto stats = collision_step(g, 0.0, 1e-3, s, p, cfg, rng);
        CHECK(stats.sampled == 0);
        CHECK(g == DistributionGrid(5, 5));
    }
    SUBCASE("mass conservation and positivity")
    {
        DistributionGrid g = gaussian_grid(12, 12);
        cfg.quantum_mass = 1.0 / 144.0;
        Rng rng(11);
        const double m0 = total_mass(g);
        for (int k = 0; k < 200; ++k) {
            collision_step(g, 0.0, 1e-3, s, p, cfg, rng);
            for (double v : g.values()) {
                REQUIRE(v >= 0.0);
            }
        }
        CHECK(std::abs(total_mass(g) - m0) / m0 < 1e-12);
    }
    SUBCASE("determinism")
    {
        DistributionGrid a = gaussian_grid(8, 8);
        DistributionGrid b = a;
        Rng r1(5);
        Rng r2(5);
        for (int k = 0; k < 20; ++k) {
            collision_step(a, 0.0, 1e-3, s, p, cfg, r1);
            collision_step(b, 0.0, 1e-3, s, p, cfg, r2);
        }
        CHECK(a == b);
    }
    SUBCASE("public relaxation toward W")
    {
        p.noise.amplitude = 0.0;
        p.rule_lower = 1.0;  // every fraction < 1 picks Public
        p.rule_upper = 1.0;
        DistributionGrid g(4, 40);
        for (std::size_t i = 0; i < 4; ++i) {
            deposit_mass(g, i, 0.8, 0.25);
        }
        cfg.quantum_mass = 1.0 / 160.0;
        Rng rng(2);
        double prev = std::abs(moments(g, 0.5).m_w - 0.5);
        for (int k = 0; k < 5; ++k) {
            collision_step(g, 0.0, 1e-3, s, p, cfg, rng);
            const double now = std::abs(moments(g, 0.5).m_w - 0.5);
            CHECK(now < prev);
            prev = now;
        }
    }
    SUBCASE("auto quantum follows dt / tau")
    {
        p.noise.amplitude = 0.0;
        p.rule_lower = 1.0;
        p.rule_upper = 1.0;
        p.alpha = 0.5;
        Rng rng(4);
        // With rate turnover a fraction dt of the mass moves; m_w - W shrinks by ~alpha dt.
        DistributionGrid h(10, 10);
        for (std::size_t i = 0; i < 10; ++i) {
            deposit_mass(h, i, 0.85, 0.1);
        }
        const double d0 = moments(h, 0.5).m_w - 0.5;
        collision_step(h, 0.0, 0.01, s, p, cfg, rng);
        const double d1 = moments(h, 0.5).m_w - 0.5;
        CHECK(d1 / d0 == Approx(1.0 - 0.5 * 0.01).epsilon(1e-3));
    }
}
