#include "kmarket/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kmarket {

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& constraint, double value)
{
    std::ostringstream os;
    os << field << " = " << value << " violates " << constraint;
    throw std::invalid_argument(os.str());
}

std::size_t clamp_index(double pos, std::size_t n)
{
    if (pos <= 0.0) {
        return 0;
    }
    const auto k = static_cast<std::size_t>(pos);
    return std::min(k, n - 1);
}

}  // namespace

DistributionGrid::DistributionGrid(std::size_t n_x, std::size_t n_w, GridBox box)
    : n_x_(n_x), n_w_(n_w), box_(box), values_(n_x * n_w, 0.0)
{
    if (n_x == 0 || n_w == 0) {
        throw std::invalid_argument("DistributionGrid: cell counts must be positive");
    }
    if (!(box.x_max > box.x_min) || !(box.w_max > box.w_min)) {
        throw std::invalid_argument("DistributionGrid: empty domain box");
    }
}

std::size_t DistributionGrid::x_cell(double x) const
{
    return clamp_index((x - box_.x_min) / dx(), n_x_);
}

std::size_t DistributionGrid::w_cell(double w) const
{
    return clamp_index((w - box_.w_min) / dw(), n_w_);
}

void DistributionGrid::fill(double v)
{
    std::fill(values_.begin(), values_.end(), v);
}

void ModelParams::validate() const
{
    if (!(alpha >= 0.0 && alpha <= 1.0)) invalid("alpha", "alpha in [0,1]", alpha);
    if (!(beta > 0.0 && beta <= 0.5)) invalid("beta", "beta in (0,1/2]", beta);
    if (!(delta > 0.0)) invalid("delta", "delta > 0", delta);
    if (!(kappa > 0.0)) invalid("kappa", "kappa > 0", kappa);
    if (!(band_R > 0.0)) invalid("band_R", "R > 0", band_R);
    if (!(tau_I > 0.0)) invalid("tau_I", "tau_I > 0", tau_I);
    if (!(tau_H > 0.0)) invalid("tau_H", "tau_H > 0", tau_H);
    if (!(noise.amplitude >= 0.0)) invalid("noise.amplitude", "amplitude >= 0", noise.amplitude);
    if (p_kind == PropensityKind::Indicator && !(p_radius > 0.0)) {
        invalid("p_radius", "r > 0", p_radius);
    }
    if (gamma_kind == HerdingKernel::DistanceIndicator && !(gamma_radius > 0.0)) {
        invalid("gamma_radius", "r_H > 0", gamma_radius);
    }
    if (!(d_scale >= 0.0)) invalid("d_scale", "d_scale >= 0", d_scale);
    if (!(rule_lower >= 0.0)) invalid("rule_lower", "0 <= lower threshold", rule_lower);
    if (!(rule_upper <= 1.0)) invalid("rule_upper", "upper threshold <= 1", rule_upper);
    if (!(rule_lower <= rule_upper)) invalid("rule_lower", "lower threshold <= upper threshold", rule_lower);
}

void Scenario::validate(const GridBox& box) const
{
    if (!(dt > 0.0)) invalid("dt", "dt > 0", dt);
    if (!(horizon >= 0.0)) invalid("horizon", "horizon >= 0", horizon);
    if (ensemble < 1) invalid("ensemble", "ensemble >= 1", static_cast<double>(ensemble));
    if (const auto* pw = std::get_if<PiecewiseBackground>(&background)) {
        if (pw->breakpoints.empty()) {
            throw std::invalid_argument("background.breakpoints must not be empty");
        }
        for (std::size_t k = 1; k < pw->breakpoints.size(); ++k) {
            if (pw->breakpoints[k].first < pw->breakpoints[k - 1].first) {
                throw std::invalid_argument("background.breakpoints must be sorted by time");
            }
        }
    }
    // Sample W(t) on the horizon; background_W throws if it leaves the box.
    const int samples = 1000;
    for (int k = 0; k <= samples; ++k) {
        background_W(horizon * k / samples, *this, box);
    }
}

namespace {

double evaluate(const ConstantBackground& b, double) { return b.value; }

double evaluate(const SinExpBackground& b, double t)
{
    return b.c0 + b.c1 * (std::sin(b.omega * t) + 0.5 * std::exp(b.rate * t));
}

double evaluate(const PiecewiseBackground& b, double t)
{
    const auto& bp = b.breakpoints;
    if (bp.empty()) {
        throw std::invalid_argument("piecewise background without breakpoints");
    }
    // Last breakpoint with time <= t (right-continuity picks the later one on ties).
    auto it = std::upper_bound(bp.begin(), bp.end(), t,
                               [](double tt, const auto& p) { return tt < p.first; });
    if (it == bp.begin()) {
        return bp.front().second;
    }
    const auto& left = *std::prev(it);
    if (b.interp == PiecewiseBackground::Interp::Step || it == bp.end()) {
        return left.second;
    }
    const auto& right = *it;
    const double span = right.first - left.first;
    if (span <= 0.0) {
        return right.second;
    }
    const double s = (t - left.first) / span;
    return left.second + s * (right.second - left.second);
}

}  // namespace

double background_W(double t, const Scenario& s, const GridBox& box)
{
    const double W = std::visit([t](const auto& b) { return evaluate(b, t); }, s.background);
    if (!(W > box.w_min && W < box.w_max)) {
        std::ostringstream os;
        os << "background W(" << t << ") = " << W << " leaves (" << box.w_min << ", " << box.w_max << ")";
        throw std::domain_error(os.str());
    }
    return W;
}

double drift_phi(double /*x*/, double w, double W, const ModelParams& p)
{
    return std::abs(w - W) < p.band_R ? -p.delta * p.kappa : p.kappa;
}

double compromise_P(double dist, const ModelParams& p)
{
    switch (p.p_kind) {
    case PropensityKind::ConstantOne:
        return 1.0;
    case PropensityKind::Indicator:
        return dist < p.p_radius ? 1.0 : 0.0;
    }
    return 1.0;
}

double diffusion_d(double w, const ModelParams& p)
{
    return p.d_scale * 4.0 * w * (1.0 - w);
}

double herding_gamma(double v, double w, const ModelParams& p)
{
    switch (p.gamma_kind) {
    case HerdingKernel::IndicatorProduct:
        return w < v ? v * (1.0 - w) : 0.0;
    case HerdingKernel::DistanceIndicator:
        return std::abs(w - v) < p.gamma_radius ? 1.0 : 0.0;
    }
    return 0.0;
}

double H_of_w(double w, const BackgroundMeasure& background, const ModelParams& p)
{
    if (const auto* pm = std::get_if<PointMassBackground>(&background)) {
        return compromise_P(std::abs(w - pm->W), p) * (w - pm->W) / p.tau_I;
    }
    const auto& dens = std::get<DensityBackground>(background);
    if (dens.nodes.size() != dens.density.size() || dens.nodes.size() < 2) {
        throw std::invalid_argument("density background needs >= 2 matching nodes and values");
    }
    double norm = 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < dens.nodes.size(); ++k) {
        const double h = dens.nodes[k + 1] - dens.nodes[k];
        const double W0 = dens.nodes[k];
        const double W1 = dens.nodes[k + 1];
        const double M0 = dens.density[k];
        const double M1 = dens.density[k + 1];
        norm += 0.5 * h * (M0 + M1);
        acc += 0.5 * h *
               (compromise_P(std::abs(w - W0), p) * (w - W0) * M0 +
                compromise_P(std::abs(w - W1), p) * (w - W1) * M1);
    }
    if (std::abs(norm - 1.0) > 1e-8) {
        std::ostringstream os;
        os << "background density integrates to " << norm << ", expected 1";
        throw std::invalid_argument(os.str());
    }
    return acc / p.tau_I;
}

double total_mass(const DistributionGrid& g)
{
    double sum = 0.0;
    for (double v : g.values()) {
        sum += v;
    }
    return sum * g.cell_area();
}

Moments moments(const DistributionGrid& g, double W)
{
    Moments m;
    const double area = g.cell_area();
    for (std::size_t j = 0; j < g.n_w(); ++j) {
        const double w = g.w_center(j);
        double row_mass = 0.0;
        double row_x = 0.0;
        for (std::size_t i = 0; i < g.n_x(); ++i) {
            const double v = g(i, j);
            row_mass += v;
            row_x += v * g.x_center(i);
        }
        m.m_w += row_mass * w;
        m.m_x += row_x;
        m.V_w += row_mass * (w - W) * (w - W);
    }
    m.m_w *= area;
    m.m_x *= area;
    m.V_w *= area;
    return m;
}

double rational_fraction(const DistributionGrid& g, std::size_t j)
{
    double rational = 0.0;
    double total = 0.0;
    const auto r = g.row(j);
    for (std::size_t i = 0; i < g.n_x(); ++i) {
        total += r[i];
        if (g.x_center(i) >= 0.0) {
            rational += r[i];
        }
    }
    if (total <= 0.0) {
        return 0.5;
    }
    return rational / total;
}

void deposit_mass(DistributionGrid& g, std::size_t i, double w_star, double m)
{
    const auto& box = g.box();
    if (!(w_star >= box.w_min && w_star <= box.w_max)) {
        std::ostringstream os;
        os << "deposit_mass: w* = " << w_star << " outside [" << box.w_min << ", " << box.w_max << "]";
        throw std::out_of_range(os.str());
    }
    const double density = m / g.cell_area();
    // Position in units of cells, measured from the first center.
    const double s = (w_star - box.w_min) / g.dw() - 0.5;
    const auto last = static_cast<double>(g.n_w() - 1);
    if (s <= 0.0) {
        g(i, 0) += density;
        return;
    }
    if (s >= last) {
        g(i, g.n_w() - 1) += density;
        return;
    }
    const auto j = static_cast<std::size_t>(s);
    const double upper = s - static_cast<double>(j);
    if (upper == 0.0) {
        g(i, j) += density;
        return;
    }
    const double to_upper = density * upper;
    g(i, j + 1) += to_upper;
    g(i, j) += density - to_upper;
}

void deposit_mass(DistributionGrid& g, double x, double w_star, double m)
{
    const auto& box = g.box();
    if (!(x >= box.x_min && x <= box.x_max)) {
        std::ostringstream os;
        os << "deposit_mass: x = " << x << " outside [" << box.x_min << ", " << box.x_max << "]";
        throw std::out_of_range(os.str());
    }
    deposit_mass(g, g.x_cell(x), w_star, m);
}

std::string to_string(MarketState s)
{
    switch (s) {
    case MarketState::Bubble:
        return "Bubble";
    case MarketState::Crash:
        return "Crash";
    case MarketState::Normal:
        return "Normal";
    }
    return "Normal";
}

void TimeSeries::push(const Record& r)
{
    if (!records_.empty() && !(r.t > records_.back().t)) {
        std::ostringstream os;
        os << "TimeSeries: time " << r.t << " does not increase past " << records_.back().t;
        throw std::invalid_argument(os.str());
    }
    if (!(r.mass > 0.0)) {
        std::ostringstream os;
        os << "TimeSeries: nonpositive mass " << r.mass << " at t = " << r.t;
        throw std::invalid_argument(os.str());
    }
    records_.push_back(r);
}

std::vector<double> TimeSeries::mean_values() const
{
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) {
        out.push_back(r.m_w);
    }
    return out;
}

}  // namespace kmarket
