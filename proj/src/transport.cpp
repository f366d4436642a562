#include "kmarket/transport.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace kmarket {

double van_leer_psi(double theta)
{
    if (std::isinf(theta)) {
        return theta > 0.0 ? 2.0 : 0.0;
    }
    const double a = std::abs(theta);
    return (a + theta) / (1.0 + a);
}

void TransportWorkspace::resize(std::size_t n_x)
{
    flux.assign(n_x + 1, 0.0);
    theta.assign(n_x, 0.0);
}

namespace {

// Ratio num/den with 0/0 -> 1 and x/0 -> sign(x) inf.
double slope_ratio(double num, double den)
{
    if (den == 0.0) {
        if (num == 0.0) {
            return 1.0;
        }
        return num > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
    }
    return num / den;
}

double sign(double v)
{
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

}  // namespace

void advect_row(std::span<double> row, double phi, double dt, double dx, FluxForm form,
                TransportWorkspace& ws)
{
    const std::size_t n = row.size();
    if (n == 0 || phi == 0.0) {
        return;
    }
    const double nu = dt * std::abs(phi) / dx;
    if (nu > 1.0) {
        std::ostringstream os;
        os << "transport CFL violation: nu = " << nu << " > 1";
        throw std::domain_error(os.str());
    }
    if (ws.flux.size() != n + 1 || ws.theta.size() != n) {
        ws.resize(n);
    }
    // Zero-gradient ghost values beyond both ends.
    auto f = [&](std::ptrdiff_t i) {
        if (i < 0) {
            return row[0];
        }
        if (i >= static_cast<std::ptrdiff_t>(n)) {
            return row[n - 1];
        }
        return row[static_cast<std::size_t>(i)];
    };
    const double s = sign(phi);

    ws.flux[0] = 0.0;
    ws.flux[n] = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        const auto i = static_cast<std::ptrdiff_t>(k);
        const double jump = f(i) - f(i - 1);
        double psi = 0.0;
        double centered = 0.0;
        if (form == FluxForm::Limited) {
            const double upwind_jump = phi > 0.0 ? f(i - 1) - f(i - 2) : f(i + 1) - f(i);
            const double theta = slope_ratio(upwind_jump, jump);
            ws.theta[k] = theta;
            psi = van_leer_psi(theta);
            centered = 0.5 * (f(i - 1) + f(i));
        }
        else {
            const double theta = slope_ratio(f(i) - f(i - 1), f(i + 1) - f(i));
            ws.theta[k] = theta;
            psi = van_leer_psi(theta);
            centered = 0.5 * (f(i - 1) - f(i));
        }
        ws.flux[k] = centered - 0.5 * s * (1.0 - psi * (1.0 - nu)) * jump;
    }
    const double c = dt / dx * phi;
    for (std::size_t k = 0; k < n; ++k) {
        row[k] -= c * (ws.flux[k + 1] - ws.flux[k]);
    }
}

double courant_number(const DistributionGrid& g, double t, double dt, const Scenario& s,
                      const ModelParams& p)
{
    const double W = background_W(t, s, g.box());
    double phi_max = 0.0;
    for (std::size_t j = 0; j < g.n_w(); ++j) {
        phi_max = std::max(phi_max, std::abs(drift_phi(0.0, g.w_center(j), W, p)));
    }
    return dt * phi_max / g.dx();
}

void transport_step(DistributionGrid& g, double t, double dt, const Scenario& s,
                    const ModelParams& p, FluxForm form, TransportWorkspace& ws)
{
    const double nu = courant_number(g, t, dt, s, p);
    if (nu > 1.0) {
        std::ostringstream os;
        os << "transport CFL violation: nu = " << nu << " > 1";
        throw std::domain_error(os.str());
    }
    const double W = background_W(t, s, g.box());
    const double dx = g.dx();
    for (std::size_t j = 0; j < g.n_w(); ++j) {
        // Phi does not depend on x, so it is constant along the row.
        const double phi = drift_phi(0.0, g.w_center(j), W, p);
        advect_row(g.row(j), phi, dt, dx, form, ws);
    }
}

void transport_step(DistributionGrid& g, double t, double dt, const Scenario& s,
                    const ModelParams& p, FluxForm form)
{
    TransportWorkspace ws;
    ws.resize(g.n_x());
    transport_step(g, t, dt, s, p, form, ws);
}

}  // namespace kmarket
