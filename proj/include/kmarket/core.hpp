#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace kmarket {

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

struct GridBox {
    double x_min = -1.0;
    double x_max = 1.0;
    double w_min = 0.0;
    double w_max = 1.0;

    bool operator==(const GridBox&) const = default;
};

/// Cell-averaged density f on a uniform (x, w) grid.
///
/// Storage is row-major in w: row j holds the n_x cells at w-center w_j, so a
/// transport sweep over x walks contiguous memory.
class DistributionGrid {
public:
    DistributionGrid() = default;
    DistributionGrid(std::size_t n_x, std::size_t n_w, GridBox box = {});

    std::size_t n_x() const { return n_x_; }
    std::size_t n_w() const { return n_w_; }
    const GridBox& box() const { return box_; }

    double dx() const { return (box_.x_max - box_.x_min) / static_cast<double>(n_x_); }
    double dw() const { return (box_.w_max - box_.w_min) / static_cast<double>(n_w_); }
    double cell_area() const { return dx() * dw(); }

    double x_center(std::size_t i) const { return box_.x_min + (static_cast<double>(i) + 0.5) * dx(); }
    double w_center(std::size_t j) const { return box_.w_min + (static_cast<double>(j) + 0.5) * dw(); }

    /// Index of the cell containing x (the upper edge belongs to the last cell).
    std::size_t x_cell(double x) const;
    std::size_t w_cell(double w) const;

    double& operator()(std::size_t i, std::size_t j) { return values_[j * n_x_ + i]; }
    double operator()(std::size_t i, std::size_t j) const { return values_[j * n_x_ + i]; }

    std::span<double> row(std::size_t j) { return {values_.data() + j * n_x_, n_x_}; }
    std::span<const double> row(std::size_t j) const { return {values_.data() + j * n_x_, n_x_}; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    void fill(double v);

    bool operator==(const DistributionGrid&) const = default;

private:
    std::size_t n_x_ = 0;
    std::size_t n_w_ = 0;
    GridBox box_{};
    std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

struct NoiseModel {
    enum class Kind { TwoPoint, Gaussian };
    Kind kind = Kind::TwoPoint;
    /// Outcome +-a for two-point noise, standard deviation a for gaussian.
    /// Zero disables the noise.
    double amplitude = 0.06;

    double variance() const { return amplitude * amplitude; }
};

enum class PropensityKind { ConstantOne, Indicator };
enum class HerdingKernel { IndicatorProduct, DistanceIndicator };

struct ModelParams {
    double alpha = 0.5;   // public-information strength
    double beta = 0.25;   // herding strength
    double delta = 1.0;   // irrational drift multiplier
    double kappa = 1.0;   // drift magnitude
    double band_R = 0.025;
    double tau_I = 1.0;
    double tau_H = 1.0;
    NoiseModel noise{};

    PropensityKind p_kind = PropensityKind::ConstantOne;
    double p_radius = 0.1;
    HerdingKernel gamma_kind = HerdingKernel::IndicatorProduct;
    double gamma_radius = 0.1;

    /// d(w) = d_scale * 4w(1-w).
    double d_scale = 1.0;

    double rule_lower = 0.4;
    double rule_upper = 0.6;
    bool swap_rules = false;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Background W(t)
// ---------------------------------------------------------------------------

struct ConstantBackground {
    double value = 0.5;
};

/// W(t) = c0 + c1 (sin(omega t) + exp(rate t) / 2).
struct SinExpBackground {
    double c0 = 0.1;
    double c1 = 0.05;
    double omega = 1.0 / (500.0 * 1e-5);
    double rate = 1.0 / (1500.0 * 1e-5);
};

/// Breakpoints (t_k, W_k) sorted by time. Step mode holds W_k on [t_k, t_{k+1});
/// linear mode interpolates, and a repeated time produces a jump. Both are
/// right-continuous.
struct PiecewiseBackground {
    enum class Interp { Step, Linear };
    std::vector<std::pair<double, double>> breakpoints;
    Interp interp = Interp::Step;
};

using BackgroundSchedule = std::variant<ConstantBackground, SinExpBackground, PiecewiseBackground>;

struct Scenario {
    BackgroundSchedule background = ConstantBackground{};
    double horizon = 0.5;
    double dt = 1e-5;
    unsigned long long seed = 1;
    std::size_t ensemble = 1;

    void validate(const GridBox& box = {}) const;
};

/// Evaluates W(t). Throws std::domain_error when the value leaves (w_min, w_max).
double background_W(double t, const Scenario& s, const GridBox& box = {});

/// Background distribution M(W) entering H(w): a point mass or a density
/// sampled on nodes (trapezoid quadrature).
struct PointMassBackground {
    double W = 0.5;
};
struct DensityBackground {
    std::vector<double> nodes;
    std::vector<double> density;
};
using BackgroundMeasure = std::variant<PointMassBackground, DensityBackground>;

// ---------------------------------------------------------------------------
// Model functions
// ---------------------------------------------------------------------------

double drift_phi(double x, double w, double W, const ModelParams& p);
double compromise_P(double dist, const ModelParams& p);
double diffusion_d(double w, const ModelParams& p);
double herding_gamma(double v, double w, const ModelParams& p);

/// (1/tau_I) * integral of P(|w-W|)(w-W) M(W) dW.
/// Throws std::invalid_argument when a density background is not normalized
/// to within 1e-8.
double H_of_w(double w, const BackgroundMeasure& background, const ModelParams& p);

// ---------------------------------------------------------------------------
// Grid primitives
// ---------------------------------------------------------------------------

double total_mass(const DistributionGrid& g);

struct Moments {
    double m_w = 0.0;
    double m_x = 0.0;
    double V_w = 0.0;  // about the supplied W
};

Moments moments(const DistributionGrid& g, double W);

/// I_rat / (I_rat + I_irr) for w-row j; 0.5 for an empty row.
double rational_fraction(const DistributionGrid& g, std::size_t j);

/// Adds mass m at (x-cell i, w_star), split linearly between the two w-cells
/// whose centers bracket w_star. Throws std::out_of_range for w_star outside
/// [w_min, w_max].
void deposit_mass(DistributionGrid& g, std::size_t i, double w_star, double m);
void deposit_mass(DistributionGrid& g, double x, double w_star, double m);

// ---------------------------------------------------------------------------
// Time series
// ---------------------------------------------------------------------------

enum class MarketState { Normal, Bubble, Crash };

std::string to_string(MarketState s);

struct Record {
    double t = 0.0;
    double m_w = 0.0;
    double m_x = 0.0;
    double V_w = 0.0;
    double mass = 0.0;
    MarketState state = MarketState::Normal;
};

class TimeSeries {
public:
    /// Throws std::invalid_argument if t does not increase or mass <= 0.
    void push(const Record& r);

    const std::vector<Record>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const Record& operator[](std::size_t k) const { return records_[k]; }

    std::vector<double> mean_values() const;

private:
    std::vector<Record> records_;
};

}  // namespace kmarket
