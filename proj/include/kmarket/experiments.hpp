#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmarket/analytics.hpp"
#include "kmarket/collision.hpp"
#include "kmarket/core.hpp"
#include "kmarket/fokker_planck.hpp"
#include "kmarket/transport.hpp"

namespace kmarket {

enum class Mode { Boltzmann, FokkerPlanck };

/// How ensemble bubble/crash percentages are formed.
enum class Aggregation {
    PerRun,          // classify each run, average the percentages
    MeanTrajectory,  // classify the ensemble-averaged m_w trajectory
};

/// How much of the population a collision step turns over.
enum class Turnover {
    Rate,     // fraction dt / tau per step
    PerStep,  // every agent once per step
};

/// Initial density: uniform in x, gaussian in w, normalized to `mass`.
struct InitialDatum {
    std::optional<double> w_center;  // defaults to W(0)
    double w_sd = 0.1;
    double mass = 1.0;
};

struct OutputConfig {
    std::filesystem::path dir = "out";
    std::size_t cadence = 1;
    bool emit_bands = false;
    std::size_t band_n = 30;
    double band_k = 2.0;
    SigmaVariant sigma = SigmaVariant::LaggedMean;
};

struct RunConfig {
    std::string preset;
    Mode mode = Mode::Boltzmann;
    std::size_t n_x = 70;
    std::size_t n_w = 70;
    GridBox box{};
    ModelParams model{};
    Scenario scenario{};
    CollisionConfig collision{};
    Turnover turnover = Turnover::Rate;
    FluxForm flux = FluxForm::Limited;
    InitialDatum initial{};
    OutputConfig output{};
    Aggregation aggregation = Aggregation::PerRun;
    FPConfig fp{};

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    /// Collision settings with the quantum resolved for this config's turnover.
    CollisionConfig effective_collision() const;
};

RunConfig default_config();

/// Overlays the keys present in `j` onto `base`. Unknown keys are errors.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = default_config());
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

/// Reads a JSON config file; a top-level "preset" key selects the base preset.
RunConfig load_config(const std::filesystem::path& path);

std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

/// Desk-scale settings: 35 x 35 grid, dt = 1e-4, ensemble 20.
void apply_fast(RunConfig& cfg);

DistributionGrid initial_grid(const RunConfig& cfg);
FPState initial_fp_state(const RunConfig& cfg);

/// Splitting run: collision then transport each dt until the horizon.
TimeSeries run_single(const RunConfig& cfg, unsigned long long seed);

/// Fokker-Planck run recorded every scenario.dt * cadence.
TimeSeries run_fp(const RunConfig& cfg);

struct RunSummary {
    unsigned long long seed = 0;
    TimeSeries series;
    Percentages percentages;
};

struct EnsembleResult {
    std::vector<RunSummary> runs;
    TimeSeries mean;  // pointwise average over runs
    Percentages percentages;
};

/// Runs seeds base .. base + E - 1 on `threads` workers (0 = hardware).
EnsembleResult run_ensemble(const RunConfig& cfg, std::size_t threads = 0);

/// Averages already computed runs; independent of their order.
EnsembleResult aggregate(std::vector<RunSummary> runs, const RunConfig& cfg);

/// Writes run_<seed>.csv, ensemble.csv, optional bands.csv and summary.json.
std::vector<std::filesystem::path> emit_results(const EnsembleResult& res, const RunConfig& cfg);

void write_series_csv(const std::filesystem::path& path, const TimeSeries& series);
void write_bands_csv(const std::filesystem::path& path, const BollingerBands& bands,
                     const std::vector<double>& width);

struct SweepPoint {
    double alpha = 0.0;
    double beta = 0.0;
    Percentages percentages;
};

std::vector<SweepPoint> run_sweep(const RunConfig& cfg, const std::vector<double>& alphas,
                                  const std::vector<double>& betas, std::size_t threads = 0);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points);

/// First record time >= t_from whose m_w lies in [W - R, W + R].
std::optional<double> reentry_time(const TimeSeries& series, const Scenario& s, double R,
                                   double t_from, const GridBox& box = {});

/// Shortest decimal representation that round-trips, '.' separator.
std::string format_number(double v);

}  // namespace kmarket
