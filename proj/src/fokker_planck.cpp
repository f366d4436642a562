#include "kmarket/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace kmarket {

void FPConfig::validate() const
{
    auto fail = [](const char* field, const char* constraint, double v) {
        std::ostringstream os;
        os << "fp." << field << " = " << v << " violates " << constraint;
        throw std::invalid_argument(os.str());
    };
    if (n_x < 1) fail("n_x", "n_x >= 1", static_cast<double>(n_x));
    if (n_w < 2) fail("n_w", "n_w >= 2", static_cast<double>(n_w));
    if (!(L > 0.0)) fail("L", "L > 0", L);
    if (!(w_max > 0.0)) fail("w_max", "w_max > 0", w_max);
    if (!(dt >= 0.0)) fail("dt", "dt >= 0", dt);
    if (!(stability_C > 0.0 && stability_C <= 1.0)) fail("stability_C", "C in (0,1]", stability_C);
    if (kernel == Kernel::Constant && !(gamma0 >= 0.0)) fail("gamma0", "Gamma0 >= 0", gamma0);
    if (!(lambda_I >= 0.0)) fail("lambda_I", "lambda_I >= 0", lambda_I);
    if (!(lambda_H >= 0.0)) fail("lambda_H", "lambda_H >= 0", lambda_H);
    if (diffusion == Diffusion::Constant && !(d_floor > 0.0)) fail("d_floor", "d_floor > 0", d_floor);
}

FPState::FPState(const FPConfig& cfg)
    : n_x_(cfg.n_x), n_nodes_(cfg.n_w + 1), L_(cfg.L), w_max_(cfg.w_max), g_(n_x_ * n_nodes_, 0.0)
{
    cfg.validate();
}

void FPState::freeze_mass()
{
    rho_ = fp_moments(*this, 0.0).mass;
}

double K_of_g(const FPState& g, std::size_t i, double w, const FPConfig& cfg, const ModelParams& p)
{
    const std::size_t n = g.n_nodes();
    const double h = g.dw();
    if (cfg.kernel == FPConfig::Kernel::Constant) {
        double col = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double weight = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
            col += weight * g(i, j);
        }
        return cfg.gamma0 * col * h;
    }
    if (!(p.alpha > 0.0)) {
        throw std::invalid_argument("herding FP kernel needs alpha > 0 (k = beta / alpha)");
    }
    const double k = p.beta / p.alpha;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double v = g.w_node(j);
        const double weight = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
        acc += weight * herding_gamma(v, w, p) * (v - w) * g(i, j);
    }
    return k / p.tau_H * acc * h;
}

double fp_diffusion(double w, const FPState& g, const FPConfig& cfg, const ModelParams& p)
{
    switch (cfg.diffusion) {
    case FPConfig::Diffusion::FromNoise: {
        const double d = diffusion_d(w, p);
        return 0.5 * (cfg.lambda_I / p.tau_I + cfg.lambda_H * g.rho() / p.tau_H) * d * d;
    }
    case FPConfig::Diffusion::Linear:
        return w;
    case FPConfig::Diffusion::Constant:
        return cfg.d_floor;
    }
    return 0.0;
}

double fp_drift_H(double w, double W, const FPConfig& cfg, const ModelParams& p)
{
    if (cfg.drift == FPConfig::Drift::Affine) {
        return (w - W) / p.tau_I;
    }
    return H_of_w(w, PointMassBackground{W}, p);
}

namespace {

struct Coefficients {
    std::vector<double> a;    // K + H at every node, per column
    std::vector<double> D;    // at nodes
    std::vector<double> phi;  // at nodes
    double max_a = 0.0;
    double max_D = 0.0;
    double max_phi = 0.0;
};

Coefficients coefficients(const FPState& g, double t, const FPConfig& cfg, const ModelParams& p,
                          const Scenario& s)
{
    const std::size_t n = g.n_nodes();
    const double W = background_W(t, s, GridBox{-g.L(), g.L(), 0.0, g.w_max()});
    Coefficients c;
    c.a.resize(g.n_x() * n);
    c.D.resize(n);
    c.phi.resize(n);
    std::vector<double> H(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double w = g.w_node(j);
        H[j] = fp_drift_H(w, W, cfg, p);
        c.D[j] = fp_diffusion(w, g, cfg, p);
        c.phi[j] = drift_phi(0.0, w, W, p);
        c.max_D = std::max(c.max_D, std::abs(c.D[j]));
        c.max_phi = std::max(c.max_phi, std::abs(c.phi[j]));
    }
    for (std::size_t i = 0; i < g.n_x(); ++i) {
        if (cfg.kernel == FPConfig::Kernel::Constant) {
            const double K = K_of_g(g, i, 0.0, cfg, p);
            for (std::size_t j = 0; j < n; ++j) {
                c.a[i * n + j] = K + H[j];
            }
        }
        else {
            for (std::size_t j = 0; j < n; ++j) {
                c.a[i * n + j] = K_of_g(g, i, g.w_node(j), cfg, p) + H[j];
            }
        }
    }
    for (double v : c.a) {
        c.max_a = std::max(c.max_a, std::abs(v));
    }
    return c;
}

double stable_dt(const Coefficients& c, const FPState& g, const FPConfig& cfg)
{
    const double h = g.dw();
    const double denom = 2.0 * c.max_a / h + 2.0 * c.max_D / (h * h) + c.max_phi / g.dx();
    if (denom <= 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return cfg.stability_C / denom;
}

}  // namespace

double fp_stable_dt(const FPState& g, double t, const FPConfig& cfg, const ModelParams& p,
                    const Scenario& s)
{
    return stable_dt(coefficients(g, t, cfg, p, s), g, cfg);
}

void fp_step(FPState& g, double t, double dt, const FPConfig& cfg, const ModelParams& p,
             const Scenario& s)
{
    if (!(dt > 0.0)) {
        throw std::invalid_argument("fp_step: dt must be positive");
    }
    const Coefficients c = coefficients(g, t, cfg, p, s);
    const double bound = stable_dt(c, g, cfg);
    if (dt > bound * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "fp_step: dt = " << dt << " exceeds the stability bound " << bound;
        throw std::domain_error(os.str());
    }
    const std::size_t nx = g.n_x();
    const std::size_t n = g.n_nodes();
    const double h = g.dw();
    const double dx = g.dx();
    const FPState old = g;

    // w-direction: flux J_{j+1/2} = a^+ g_{j+1} + a^- g_j + (D g)_{j+1} - (D g)_j) / h,
    // g_t = (J_{j+1/2} - J_{j-1/2}) / h.
    std::vector<double> J(n - 1);
    for (std::size_t i = 0; i < nx; ++i) {
        const double* a = c.a.data() + i * n;
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double am = 0.5 * (a[j] + a[j + 1]);
            const double adv = std::max(am, 0.0) * old(i, j + 1) + std::min(am, 0.0) * old(i, j);
            const double diff = (c.D[j + 1] * old(i, j + 1) - c.D[j] * old(i, j)) / h;
            J[j] = adv + diff;
        }
        for (std::size_t j = 1; j + 1 < n; ++j) {
            g(i, j) += dt / h * (J[j] - J[j - 1]);
        }
        g(i, 0) = 0.0;
        g(i, n - 1) = 0.0;
    }

    // x-direction upwind for (Phi g)_x, Phi constant along each w node line.
    std::vector<double> F(nx + 1);
    for (std::size_t j = 1; j + 1 < n; ++j) {
        const double phi = c.phi[j];
        if (phi == 0.0) {
            continue;
        }
        for (std::size_t k = 1; k < nx; ++k) {
            F[k] = phi > 0.0 ? phi * old(k - 1, j) : phi * old(k, j);
        }
        if (cfg.x_boundary == FPConfig::XBoundary::NoFlux) {
            F[0] = 0.0;
            F[nx] = 0.0;
        }
        else {
            F[0] = phi * old(0, j);
            F[nx] = phi * old(nx - 1, j);
        }
        for (std::size_t k = 0; k < nx; ++k) {
            g(k, j) -= dt / dx * (F[k + 1] - F[k]);
        }
    }

    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (g(i, j) < -1e-14) {
                std::ostringstream os;
                os << "fp_step: negative value " << g(i, j) << " at (" << i << ", " << j << ")";
                throw std::runtime_error(os.str());
            }
        }
    }
}

FPMoments fp_moments(const FPState& g, double W)
{
    FPMoments m;
    const double cell = g.dx() * g.dw();
    const std::size_t n = g.n_nodes();
    for (std::size_t i = 0; i < g.n_x(); ++i) {
        const double x = g.x_center(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double weight = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
            const double v = weight * g(i, j) * cell;
            const double w = g.w_node(j);
            m.mass += v;
            m.m_w += v * w;
            m.m_x += v * x;
            m.V_w += v * (w - W) * (w - W);
        }
    }
    return m;
}

}  // namespace kmarket
