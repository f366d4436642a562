#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kmarket/core.hpp"

namespace kmarket {

/// Bubble above W + R, Crash below W - R; the band edges count as Normal.
MarketState classify(double m_w, double W, double R);

struct Percentages {
    double bubble = 0.0;
    double crash = 0.0;
    double normal() const { return 100.0 - bubble - crash; }
};

/// Share of records (in percent) above / below the band around W(t).
/// Throws std::invalid_argument for an empty series.
Percentages bubble_crash_percentages(const TimeSeries& series, const Scenario& s, double R,
                                     const GridBox& box = {});

struct BandRecord {
    double t = 0.0;
    double M_n = 0.0;
    double sigma = 0.0;
    double r_plus = 0.0;
    double r_minus = 0.0;
};

enum class SigmaVariant {
    /// Deviations taken from the lagged averages M_n(t_{k-l}).
    LaggedMean,
    /// Deviations taken from the current average M_n(t_k).
    CurrentMean,
};

struct BollingerBands {
    std::size_t n = 30;
    double k = 2.0;
    std::vector<BandRecord> records;
};

/// Bollinger bands of a mean-value sequence sampled at `times`.
///
/// M_n(t_k) averages the n values strictly before t_k; bands exist for
/// k = n .. size-1. Lagged averages M_n(t_j) with j < n, needed by the
/// LaggedMean deviation sum, fall back to the expanding mean of the j values
/// before t_j (m(t_0) itself for j = 0).
BollingerBands bollinger(std::span<const double> times, std::span<const double> values,
                         std::size_t n = 30, double k = 2.0,
                         SigmaVariant variant = SigmaVariant::LaggedMean);
BollingerBands bollinger(const TimeSeries& series, std::size_t n = 30, double k = 2.0,
                         SigmaVariant variant = SigmaVariant::LaggedMean);

/// B(t) = 100 (R+ - R-) / W(t) per band record. Throws std::domain_error if W = 0.
std::vector<double> bandwidth(const BollingerBands& bands, const Scenario& s,
                              const GridBox& box = {});

}  // namespace kmarket
