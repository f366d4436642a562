#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kmarket/analytics.hpp"

using namespace kmarket;
using doctest::Approx;

namespace {

TimeSeries series_from(const std::vector<double>& values, double dt = 0.01)
{
    TimeSeries s;
    for (std::size_t k = 0; k < values.size(); ++k) {
        s.push({static_cast<double>(k) * dt, values[k], 0.0, 0.0, 1.0, MarketState::Normal});
    }
    return s;
}

// Direct transcription of the band formulas with the same warm-up rule:
// M(j) averages the min(j, n) values before j, M(0) = m(0).
double brute_mean(const std::vector<double>& m, std::size_t j, std::size_t n)
{
    if (j == 0) {
        return m[0];
    }
    const std::size_t count = std::min(j, n);
    double s = 0.0;
    for (std::size_t l = 1; l <= count; ++l) {
        s += m[j - l];
    }
    return s / static_cast<double>(count);
}

double brute_sigma(const std::vector<double>& m, std::size_t k, std::size_t n, bool lagged)
{
    double s = 0.0;
    for (std::size_t l = 1; l <= n; ++l) {
        const double centre = lagged ? brute_mean(m, k - l, n) : brute_mean(m, k, n);
        s += (m[k - l] - centre) * (m[k - l] - centre);
    }
    return std::sqrt(s / static_cast<double>(n - 1));
}

}  // namespace

TEST_CASE("classify")
{
    CHECK(classify(0.53, 0.5, 0.025) == MarketState::Bubble);
    CHECK(classify(0.47, 0.5, 0.025) == MarketState::Crash);
    CHECK(classify(0.51, 0.5, 0.025) == MarketState::Normal);
    CHECK(classify(0.525, 0.5, 0.025) == MarketState::Normal);
    CHECK(classify(0.475, 0.5, 0.025) == MarketState::Normal);
}

TEST_CASE("classify is monotone in m_w")
{
    auto rank = [](MarketState s) { return s == MarketState::Crash ? 0 : (s == MarketState::Normal ? 1 : 2); };
    int prev = 0;
    for (double m = 0.0; m <= 1.0; m += 0.001) {
        const int r = rank(classify(m, 0.5, 0.025));
        CHECK(r >= prev);
        prev = r;
    }
}

TEST_CASE("bubble_crash_percentages")
{
    Scenario s;
    s.background = ConstantBackground{0.5};
    CHECK_THROWS_AS(bubble_crash_percentages(TimeSeries{}, s, 0.025), std::invalid_argument);

    auto inside = bubble_crash_percentages(series_from(std::vector<double>(50, 0.5)), s, 0.025);
    CHECK(inside.bubble == 0.0);
    CHECK(inside.crash == 0.0);
    CHECK(inside.normal() == 100.0);

    auto above = bubble_crash_percentages(series_from(std::vector<double>(50, 0.6)), s, 0.025);
    CHECK(above.bubble == 100.0);
    CHECK(above.crash == 0.0);

    std::vector<double> mixed(100, 0.5);
    for (int k = 0; k < 30; ++k) {
        mixed[3 * k] = 0.6;
    }
    for (int k = 0; k < 10; ++k) {
        mixed[3 * k + 1] = 0.4;
    }
    auto p = bubble_crash_percentages(series_from(mixed), s, 0.025);
    CHECK(p.bubble == Approx(30.0));
    CHECK(p.crash == Approx(10.0));
    CHECK(p.bubble + p.crash + p.normal() == 100.0);
}

TEST_CASE("bollinger on a constant series")
{
    const auto b = bollinger(series_from(std::vector<double>(40, 0.3)));
    CHECK(b.records.size() == 10);
    for (const auto& r : b.records) {
        CHECK(r.M_n == Approx(0.3));
        CHECK(r.sigma == Approx(0.0).scale(1.0));
        CHECK(r.r_plus == Approx(0.3));
        CHECK(r.r_minus == Approx(0.3));
    }
}

TEST_CASE("bollinger on an alternating series")
{
    std::vector<double> v(60);
    for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = 0.5 + (k % 2 == 0 ? 0.1 : -0.1);
    }
    const auto b = bollinger(series_from(v), 30, 5.0);
    for (const auto& r : b.records) {
        CHECK(r.sigma > 0.0);
        CHECK(r.M_n == Approx(0.5));
        CHECK(r.r_plus - r.M_n == Approx(r.M_n - r.r_minus));
    }
}

TEST_CASE("bollinger on a linear ramp with n = 3")
{
    const double h = 0.01;
    std::vector<double> v(12);
    for (std::size_t l = 0; l < v.size(); ++l) {
        v[l] = static_cast<double>(l) * h;
    }
    const auto b = bollinger(series_from(v), 3, 2.0);
    REQUIRE(b.records.size() == 9);
    for (std::size_t idx = 0; idx < b.records.size(); ++idx) {
        const std::size_t k = idx + 3;
        CHECK(b.records[idx].M_n == Approx((static_cast<double>(k) - 2.0) * h));
        // Lagged means M(k - l) = (k - l - 2) h for k - l >= 3; each deviation is 2h.
        if (k >= 6) {
            CHECK(b.records[idx].sigma == Approx(std::sqrt(6.0) * h));
        }
        CHECK(b.records[idx].sigma == Approx(brute_sigma(v, k, 3, true)).epsilon(1e-12));
    }
}

TEST_CASE("bollinger matches a brute-force evaluation")
{
    std::vector<double> v(300);
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double t = static_cast<double>(k);
        v[k] = 0.5 + 0.05 * std::sin(0.07 * t) + 0.01 * std::cos(1.3 * t * t / 100.0);
    }
    for (bool lagged : {true, false}) {
        const auto variant = lagged ? SigmaVariant::LaggedMean : SigmaVariant::CurrentMean;
        const auto b = bollinger(series_from(v), 30, 2.0, variant);
        REQUIRE(b.records.size() == 270);
        double worst = 0.0;
        for (std::size_t idx = 0; idx < b.records.size(); ++idx) {
            const std::size_t k = idx + 30;
            const double M = brute_mean(v, k, 30);
            const double sigma = brute_sigma(v, k, 30, lagged);
            worst = std::max(worst, std::abs(b.records[idx].M_n - M));
            worst = std::max(worst, std::abs(b.records[idx].sigma - sigma));
            worst = std::max(worst, std::abs(b.records[idx].r_plus - (M + 2.0 * sigma)));
            worst = std::max(worst, std::abs(b.records[idx].r_minus - (M - 2.0 * sigma)));
            CHECK(b.records[idx].r_plus >= b.records[idx].M_n);
            CHECK(b.records[idx].M_n >= b.records[idx].r_minus);
        }
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("bollinger errors")
{
    CHECK_THROWS_AS(bollinger(series_from(std::vector<double>(30, 0.5))), std::invalid_argument);
    CHECK_THROWS_AS(bollinger(series_from(std::vector<double>(40, 0.5)), 1), std::invalid_argument);
    CHECK_THROWS_AS(bollinger(series_from(std::vector<double>(40, 0.5)), 30, 0.0), std::invalid_argument);
}

TEST_CASE("bandwidth")
{
    Scenario s;
    s.background = ConstantBackground{0.5};
    const auto flat = bollinger(series_from(std::vector<double>(40, 0.3)));
    for (double b : bandwidth(flat, s)) {
        CHECK(b == Approx(0.0).scale(1.0));
    }

    std::vector<double> v(80);
    for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = 0.5 + 0.02 * std::sin(0.3 * static_cast<double>(k));
    }
    const auto b2 = bandwidth(bollinger(series_from(v), 30, 2.0), s);
    const auto b4 = bandwidth(bollinger(series_from(v), 30, 4.0), s);
    REQUIRE(b2.size() == b4.size());
    for (std::size_t k = 0; k < b2.size(); ++k) {
        CHECK(b2[k] >= 0.0);
        CHECK(b4[k] == Approx(2.0 * b2[k]));
    }
    const auto bands = bollinger(series_from(v), 30, 2.0);
    CHECK(b2[5] == Approx(100.0 * (bands.records[5].r_plus - bands.records[5].r_minus) / 0.5));
}
