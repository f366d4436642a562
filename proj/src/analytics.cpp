#include "kmarket/analytics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kmarket {

MarketState classify(double m_w, double W, double R)
{
    if (m_w > W + R) {
        return MarketState::Bubble;
    }
    if (m_w < W - R) {
        return MarketState::Crash;
    }
    return MarketState::Normal;
}

Percentages bubble_crash_percentages(const TimeSeries& series, const Scenario& s, double R,
                                     const GridBox& box)
{
    if (series.empty()) {
        throw std::invalid_argument("bubble_crash_percentages: empty series");
    }
    std::size_t bubbles = 0;
    std::size_t crashes = 0;
    for (const auto& r : series.records()) {
        switch (classify(r.m_w, background_W(r.t, s, box), R)) {
        case MarketState::Bubble:
            ++bubbles;
            break;
        case MarketState::Crash:
            ++crashes;
            break;
        case MarketState::Normal:
            break;
        }
    }
    const auto total = static_cast<double>(series.size());
    return {100.0 * static_cast<double>(bubbles) / total, 100.0 * static_cast<double>(crashes) / total};
}

BollingerBands bollinger(std::span<const double> times, std::span<const double> values,
                         std::size_t n, double k, SigmaVariant variant)
{
    if (times.size() != values.size()) {
        throw std::invalid_argument("bollinger: times and values differ in length");
    }
    if (n < 2) {
        throw std::invalid_argument("bollinger: window n must be >= 2");
    }
    if (!(k > 0.0)) {
        throw std::invalid_argument("bollinger: width factor k must be positive");
    }
    const std::size_t size = values.size();
    if (size <= n) {
        std::ostringstream os;
        os << "bollinger: series of length " << size << " is too short for window " << n;
        throw std::invalid_argument(os.str());
    }

    // Moving averages of the values strictly before each index, expanding
    // during warm-up.
    std::vector<double> mean(size);
    std::vector<double> prefix(size + 1, 0.0);
    for (std::size_t j = 0; j < size; ++j) {
        prefix[j + 1] = prefix[j] + values[j];
    }
    mean[0] = values[0];
    for (std::size_t j = 1; j < size; ++j) {
        const std::size_t lo = j >= n ? j - n : 0;
        mean[j] = (prefix[j] - prefix[lo]) / static_cast<double>(j - lo);
    }

    BollingerBands bands;
    bands.n = n;
    bands.k = k;
    bands.records.reserve(size - n);
    for (std::size_t idx = n; idx < size; ++idx) {
        double ss = 0.0;
        for (std::size_t l = 1; l <= n; ++l) {
            const double centre = variant == SigmaVariant::LaggedMean ? mean[idx - l] : mean[idx];
            const double d = values[idx - l] - centre;
            ss += d * d;
        }
        BandRecord r;
        r.t = times[idx];
        r.M_n = mean[idx];
        r.sigma = std::sqrt(ss / static_cast<double>(n - 1));
        r.r_plus = r.M_n + k * r.sigma;
        r.r_minus = r.M_n - k * r.sigma;
        bands.records.push_back(r);
    }
    return bands;
}

BollingerBands bollinger(const TimeSeries& series, std::size_t n, double k, SigmaVariant variant)
{
    std::vector<double> times;
    std::vector<double> values;
    times.reserve(series.size());
    values.reserve(series.size());
    for (const auto& r : series.records()) {
        times.push_back(r.t);
        values.push_back(r.m_w);
    }
    return bollinger(times, values, n, k, variant);
}

std::vector<double> bandwidth(const BollingerBands& bands, const Scenario& s, const GridBox& box)
{
    std::vector<double> out;
    out.reserve(bands.records.size());
    for (const auto& r : bands.records) {
        const double W = background_W(r.t, s, box);
        if (W == 0.0) {
            throw std::domain_error("bandwidth: W(t) = 0");
        }
        out.push_back(100.0 * (r.r_plus - r.r_minus) / W);
    }
    return out;
}

}  // namespace kmarket
