#include "kmarket/collision.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace kmarket {

void CollisionConfig::validate() const
{
    if (!(quantum_mass >= 0.0)) {
        std::ostringstream os;
        os << "collision.quantum_mass = " << quantum_mass << " violates quantum_mass >= 0";
        throw std::invalid_argument(os.str());
    }
}

double public_interaction(double w, double W, double eta, const ModelParams& p)
{
    return w - p.alpha * compromise_P(std::abs(w - W), p) * (w - W) + eta * diffusion_d(w, p);
}

std::pair<double, double> herding_interaction(double w, double v, double eta1, double eta2,
                                              const ModelParams& p)
{
    const double g = herding_gamma(v, w, p);
    const double w_star = w - p.beta * g * (w - v) + eta1 * diffusion_d(w, p);
    const double v_star = v - p.beta * g * (v - w) + eta2 * diffusion_d(v, p);
    return {w_star, v_star};
}

Rule select_rule(double frac_rational, const ModelParams& p, Rng& rng)
{
    const Rule majority_rational = p.swap_rules ? Rule::Public : Rule::Herding;
    const Rule majority_irrational = p.swap_rules ? Rule::Herding : Rule::Public;
    if (frac_rational > p.rule_upper) {
        return majority_rational;
    }
    if (frac_rational < p.rule_lower) {
        return majority_irrational;
    }
    return (rng() >> 63) != 0 ? Rule::Herding : Rule::Public;
}

double sample_noise(const NoiseModel& noise, Rng& rng)
{
    if (noise.amplitude == 0.0) {
        return 0.0;
    }
    switch (noise.kind) {
    case NoiseModel::Kind::TwoPoint:
        return (rng() >> 63) != 0 ? noise.amplitude : -noise.amplitude;
    case NoiseModel::Kind::Gaussian: {
        std::normal_distribution<double> normal(0.0, noise.amplitude);
        return normal(rng);
    }
    }
    return 0.0;
}

namespace {

bool admissible(double w, const GridBox& box)
{
    return w >= box.w_min && w <= box.w_max;
}

// Removes `quantum` agents from a cell and returns the amount actually taken.
// A request that exceeds the content by more than rounding is a logic error.
double withdraw(DistributionGrid& g, std::size_t i, std::size_t j, double quantum)
{
    const double area = g.cell_area();
    const double want = quantum / area;
    double& cell = g(i, j);
    if (want <= cell) {
        cell -= want;
        return want * area;
    }
    if (want <= cell * (1.0 + 1e-12)) {
        const double taken = cell;
        cell = 0.0;
        return taken * area;
    }
    std::ostringstream os;
    os << "apply_event: withdrawing " << quantum << " from cell (" << i << ", " << j
       << ") holding " << cell * area;
    throw std::logic_error(os.str());
}

}  // namespace

bool apply_event(DistributionGrid& g, const CollisionEvent& event, const ModelParams& p)
{
    const auto& box = g.box();
    const double w = g.w_center(event.source_row);

    if (event.rule == Rule::Public) {
        const double w_star = public_interaction(w, event.W, event.eta1, p);
        if (!admissible(w_star, box)) {
            return false;
        }
        const double moved = withdraw(g, event.column, event.source_row, event.quantum);
        deposit_mass(g, event.column, w_star, moved);
        return true;
    }

    const double v = g.w_center(event.partner_row);
    const auto [w_star, v_star] = herding_interaction(w, v, event.eta1, event.eta2, p);
    if (!admissible(w_star, box) || !admissible(v_star, box)) {
        return false;
    }
    if (event.source_row == event.partner_row) {
        const double available = g(event.column, event.source_row) * g.cell_area();
        if (2.0 * event.quantum > available * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "apply_event: self-paired cell holds " << available << " < 2 * " << event.quantum;
            throw std::logic_error(os.str());
        }
    }
    const double moved_w = withdraw(g, event.column, event.source_row, event.quantum);
    const double moved_v = withdraw(g, event.column, event.partner_row, event.quantum);
    deposit_mass(g, event.column, w_star, moved_w);
    deposit_mass(g, event.column, v_star, moved_v);
    return true;
}

namespace {

std::size_t sample_index(const std::vector<double>& cdf, double u)
{
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto k = static_cast<std::size_t>(it - cdf.begin());
    return std::min(k, cdf.size() - 1);
}

}  // namespace

CollisionStats collision_step(DistributionGrid& g, double t, double dt, const Scenario& s,
                              const ModelParams& p, const CollisionConfig& cfg, Rng& rng)
{
    if (!(dt > 0.0)) {
        throw std::invalid_argument("collision_step: dt must be positive");
    }
    CollisionStats stats;
    const double mass = total_mass(g);
    if (!(mass > 0.0)) {
        return stats;
    }
    const std::size_t n_x = g.n_x();
    const std::size_t n_w = g.n_w();
    const double rate = cfg.events_per_step > 0 ? static_cast<double>(cfg.events_per_step)
                                                : static_cast<double>(n_x * n_w);
    const auto n_events = static_cast<std::size_t>(std::llround(rate * mass));
    if (n_events == 0) {
        return stats;
    }
    const double tau_min = std::min(p.tau_I, p.tau_H);
    const double quantum = cfg.quantum_mass > 0.0
                               ? cfg.quantum_mass
                               : mass * std::min(1.0, dt / tau_min) / static_cast<double>(n_events);
    const double quantum_public = quantum * tau_min / p.tau_I;
    // Both partners change in a herding event, so each side carries half.
    const double quantum_herding = 0.5 * quantum * tau_min / p.tau_H;
    const double W = background_W(t, s, g.box());
    const double area = g.cell_area();

    // Snapshot of the step's starting state.
    std::vector<double> cell_cdf(n_x * n_w);
    std::vector<double> column_cdf(n_x * n_w);  // column i occupies [i*n_w, (i+1)*n_w)
    std::vector<double> fraction(n_w);
    {
        double acc = 0.0;
        for (std::size_t k = 0; k < n_x * n_w; ++k) {
            acc += g.values()[k];
            cell_cdf[k] = acc;
        }
        for (std::size_t i = 0; i < n_x; ++i) {
            double col = 0.0;
            for (std::size_t j = 0; j < n_w; ++j) {
                col += g(i, j);
                column_cdf[i * n_w + j] = col;
            }
        }
        for (std::size_t j = 0; j < n_w; ++j) {
            fraction[j] = rational_fraction(g, j);
        }
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t e = 0; e < n_events; ++e) {
        ++stats.sampled;
        const std::size_t k = sample_index(cell_cdf, unit(rng) * cell_cdf.back());
        CollisionEvent ev;
        ev.column = k % n_x;
        ev.source_row = k / n_x;
        ev.W = W;
        ev.rule = select_rule(fraction[ev.source_row], p, rng);

        const double source = g(ev.column, ev.source_row) * area;
        if (ev.rule == Rule::Public) {
            ++stats.public_events;
            ev.quantum = std::min(quantum_public, source);
            ev.eta1 = sample_noise(p.noise, rng);
            if (ev.quantum <= 0.0) {
                continue;
            }
        }
        else {
            ++stats.herding_events;
            const double* col = column_cdf.data() + ev.column * n_w;
            const double col_total = col[n_w - 1];
            const double u = unit(rng) * col_total;
            ev.partner_row = static_cast<std::size_t>(std::upper_bound(col, col + n_w, u) - col);
            ev.partner_row = std::min(ev.partner_row, n_w - 1);
            ev.eta1 = sample_noise(p.noise, rng);
            ev.eta2 = sample_noise(p.noise, rng);
            const double partner = g(ev.column, ev.partner_row) * area;
            const double available =
                ev.partner_row == ev.source_row ? 0.5 * source : std::min(source, partner);
            ev.quantum = std::min(quantum_herding, available);
            if (ev.quantum <= 0.0) {
                continue;
            }
        }
        if (!apply_event(g, ev, p)) {
            ++stats.rejected;
        }
    }
    return stats;
}

}  // namespace kmarket
