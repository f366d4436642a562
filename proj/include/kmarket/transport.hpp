#pragma once

#include <span>
#include <vector>

#include "kmarket/core.hpp"

namespace kmarket {

/// Van Leer limiter (|theta| + theta) / (1 + |theta|). Infinite ratios map
/// to the limit 2.
double van_leer_psi(double theta);

enum class FluxForm {
    /// Limited upwind / Lax-Wendroff blend with centered average
    /// (f_{i-1} + f_i)/2 and the upwind-side slope ratio.
    Limited,
    /// The final-scheme flux with the (f_{i-1} - f_i)/2 leading term and the
    /// cell-centered ratio (f_i - f_{i-1}) / (f_{i+1} - f_i), kept verbatim
    /// for comparison. Not consistent with advection.
    AsPrinted,
};

/// Per-row scratch space so repeated steps do not allocate.
struct TransportWorkspace {
    std::vector<double> flux;   // n_x + 1 interface values F_i
    std::vector<double> theta;  // n_x slope ratios

    void resize(std::size_t n_x);
};

/// Advances one row of cell values with constant velocity `phi` using
/// no-flux ends. Throws std::domain_error if |phi| dt / dx > 1.
void advect_row(std::span<double> row, double phi, double dt, double dx, FluxForm form,
                TransportWorkspace& ws);

/// x-transport step for every w-row with Phi(x, w_j) evaluated at W(t).
void transport_step(DistributionGrid& g, double t, double dt, const Scenario& s,
                    const ModelParams& p, FluxForm form = FluxForm::Limited);
void transport_step(DistributionGrid& g, double t, double dt, const Scenario& s,
                    const ModelParams& p, FluxForm form, TransportWorkspace& ws);

/// Largest Courant number dt max|Phi| / dx over the grid at time t.
double courant_number(const DistributionGrid& g, double t, double dt, const Scenario& s,
                      const ModelParams& p);

}  // namespace kmarket
