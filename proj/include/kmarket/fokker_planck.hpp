#pragma once

#include <cstddef>
#include <vector>

#include "kmarket/core.hpp"

namespace kmarket {

/// Settings for the explicit solver of
///   g_t + (Phi g)_x = ((K[g] + H(w)) g)_w + (D(w) g)_ww
/// on x in [-L, L], w in [0, w_max].
struct FPConfig {
    std::size_t n_x = 1;    // x cells
    std::size_t n_w = 200;  // w intervals; nodes 0..n_w, both ends Dirichlet
    double L = 0.5;
    double w_max = 2.0;
    /// Fixed step; 0 picks the stability bound each step.
    double dt = 0.0;
    double stability_C = 0.9;

    enum class Kernel { Constant, Herding };
    Kernel kernel = Kernel::Constant;
    double gamma0 = 1.0;

    enum class Diffusion { FromNoise, Linear, Constant };
    Diffusion diffusion = Diffusion::Linear;
    double lambda_I = 0.0;  // sigma_I^2 / alpha
    double lambda_H = 0.0;  // sigma_H^2 / alpha
    double d_floor = 0.01;  // constant D for Diffusion::Constant

    enum class Drift { Affine, Quadrature };
    Drift drift = Drift::Affine;

    enum class XBoundary { NoFlux, ZeroGradient };
    XBoundary x_boundary = XBoundary::NoFlux;

    void validate() const;
};

/// Nodal values g(x_i, w_j): x at cell centers, w at nodes j = 0..n_w.
class FPState {
public:
    FPState() = default;
    explicit FPState(const FPConfig& cfg);

    std::size_t n_x() const { return n_x_; }
    std::size_t n_nodes() const { return n_nodes_; }
    double L() const { return L_; }
    double w_max() const { return w_max_; }
    double dx() const { return 2.0 * L_ / static_cast<double>(n_x_); }
    double dw() const { return w_max_ / static_cast<double>(n_nodes_ - 1); }
    double x_center(std::size_t i) const { return -L_ + (static_cast<double>(i) + 0.5) * dx(); }
    double w_node(std::size_t j) const { return static_cast<double>(j) * dw(); }

    double& operator()(std::size_t i, std::size_t j) { return g_[i * n_nodes_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return g_[i * n_nodes_ + j]; }

    std::vector<double>& values() { return g_; }
    const std::vector<double>& values() const { return g_; }

    /// Agent count used in the D(w) coefficient; frozen by freeze_mass().
    double rho() const { return rho_; }
    void freeze_mass();

private:
    std::size_t n_x_ = 0;
    std::size_t n_nodes_ = 0;
    double L_ = 0.5;
    double w_max_ = 1.0;
    double rho_ = 0.0;
    std::vector<double> g_;  // column-major in x: column i holds all w nodes
};

/// Trapezoid quadrature of Gamma(v, w) g(x_i, v) over the w nodes.
double K_of_g(const FPState& g, std::size_t i, double w, const FPConfig& cfg, const ModelParams& p);

double fp_diffusion(double w, const FPState& g, const FPConfig& cfg, const ModelParams& p);
double fp_drift_H(double w, double W, const FPConfig& cfg, const ModelParams& p);

/// Largest step satisfying the combined explicit bound
///   dt (2 max|K+H| / dw + 2 max D / dw^2 + max|Phi| / dx) <= C.
double fp_stable_dt(const FPState& g, double t, const FPConfig& cfg, const ModelParams& p,
                    const Scenario& s);

/// One explicit Euler step of size dt. Throws std::domain_error when dt exceeds
/// the stability bound and std::runtime_error when a value drops below -1e-14.
void fp_step(FPState& g, double t, double dt, const FPConfig& cfg, const ModelParams& p,
             const Scenario& s);

struct FPMoments {
    double m_w = 0.0;
    double m_x = 0.0;
    double V_w = 0.0;
    double mass = 0.0;
};

FPMoments fp_moments(const FPState& g, double W);

}  // namespace kmarket
