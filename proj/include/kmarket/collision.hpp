#pragma once

#include <cstddef>
#include <random>
#include <utility>

#include "kmarket/core.hpp"

namespace kmarket {

using Rng = std::mt19937_64;

struct CollisionConfig {
    /// Events per step per unit mass; 0 selects n_x * n_w.
    std::size_t events_per_step = 0;
    /// Mass carried by one event; 0 selects mass * min(1, dt / min(tau_I, tau_H)) / N_ev,
    /// i.e. the fraction dt/tau of the population interacts per step.
    double quantum_mass = 0.0;
    unsigned long long rng_seed = 1;

    void validate() const;
};

enum class Rule { Public, Herding };

/// w* = w - alpha P(|w-W|)(w-W) + eta d(w).
double public_interaction(double w, double W, double eta, const ModelParams& p);

/// Symmetric binary herding update; returns (w*, v*).
std::pair<double, double> herding_interaction(double w, double v, double eta1, double eta2,
                                              const ModelParams& p);

Rule select_rule(double frac_rational, const ModelParams& p, Rng& rng);

double sample_noise(const NoiseModel& noise, Rng& rng);

/// One sampled interaction. For Public events the partner value is the
/// background W; for Herding events `partner_row` names the partner w-cell in
/// the same x-column.
struct CollisionEvent {
    Rule rule = Rule::Public;
    std::size_t column = 0;       // x-cell
    std::size_t source_row = 0;   // w-cell
    std::size_t partner_row = 0;  // w-cell, herding only
    double W = 0.5;
    double eta1 = 0.0;
    double eta2 = 0.0;
    /// Mass withdrawn from each participating cell.
    double quantum = 0.0;
};

/// Applies the event in place. Returns false (grid untouched) when a
/// post-interaction value leaves [w_min, w_max]. Throws std::logic_error if a
/// withdrawal would leave a negative cell.
bool apply_event(DistributionGrid& g, const CollisionEvent& event, const ModelParams& p);

struct CollisionStats {
    std::size_t sampled = 0;
    std::size_t rejected = 0;
    std::size_t public_events = 0;
    std::size_t herding_events = 0;
};

/// Bird-type stochastic collision step over dt.
///
/// Source cells are drawn proportionally to their mass at the start of the
/// step; the rule follows the source row's rational fraction, also taken at
/// the start of the step. Herding partners come from the same x-column.
/// Each event moves at most what the drawn cells still hold.
CollisionStats collision_step(DistributionGrid& g, double t, double dt, const Scenario& s,
                              const ModelParams& p, const CollisionConfig& cfg, Rng& rng);

}  // namespace kmarket
