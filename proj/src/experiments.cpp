#include "kmarket/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace kmarket {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Validation and defaults
// ---------------------------------------------------------------------------

namespace {

template <typename F>
void prefixed(const std::string& prefix, F&& f)
{
    try {
        f();
    }
    catch (const std::invalid_argument& e) {
        throw std::invalid_argument(prefix + e.what());
    }
    catch (const std::domain_error& e) {
        throw std::invalid_argument(prefix + e.what());
    }
}

}  // namespace

void RunConfig::validate() const
{
    if (n_x < 1 || n_w < 1) {
        throw std::invalid_argument("grid.n_x and grid.n_w must be >= 1");
    }
    if (!(box.x_max > box.x_min) || !(box.w_max > box.w_min)) {
        throw std::invalid_argument("grid box must have positive extent");
    }
    prefixed("model.", [&] { model.validate(); });
    prefixed("scenario.", [&] { scenario.validate(box); });
    prefixed("collision.", [&] { collision.validate(); });
    if (output.cadence < 1) {
        throw std::invalid_argument("output.cadence = 0 violates cadence >= 1");
    }
    if (output.band_n < 2) {
        throw std::invalid_argument("output.band_n violates n >= 2");
    }
    if (!(output.band_k > 0.0)) {
        throw std::invalid_argument("output.band_k violates k > 0");
    }
    if (!(initial.w_sd > 0.0)) {
        throw std::invalid_argument("initial.w_sd violates w_sd > 0");
    }
    if (!(initial.mass > 0.0)) {
        throw std::invalid_argument("initial.mass violates mass > 0");
    }
    if (mode == Mode::FokkerPlanck) {
        prefixed("", [&] { fp.validate(); });
    }
}

CollisionConfig RunConfig::effective_collision() const
{
    CollisionConfig c = collision;
    if (turnover == Turnover::PerStep && c.quantum_mass == 0.0) {
        const double events = c.events_per_step > 0 ? static_cast<double>(c.events_per_step)
                                                     : static_cast<double>(n_x * n_w);
        c.quantum_mass = initial.mass / std::max(1.0, std::round(events * initial.mass));
    }
    return c;
}

RunConfig default_config()
{
    RunConfig cfg;
    cfg.scenario.background = ConstantBackground{0.5};
    cfg.scenario.horizon = 0.5;
    cfg.scenario.dt = 1e-5;
    return cfg;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!j.is_object()) {
        throw std::invalid_argument(where + " must be an object");
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) {
            throw std::invalid_argument("unknown field " + (where.empty() ? key : where + "." + key));
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    }
    catch (const json::exception&) {
        throw std::invalid_argument("field " + (where.empty() ? std::string(key) : where + "." + key) +
                                    " has the wrong type");
    }
}

template <typename E>
E parse_enum(const json& j, const std::string& field,
             std::initializer_list<std::pair<const char*, E>> table)
{
    if (!j.is_string()) {
        throw std::invalid_argument("field " + field + " must be a string");
    }
    const auto s = j.get<std::string>();
    for (const auto& [name, value] : table) {
        if (s == name) {
            return value;
        }
    }
    throw std::invalid_argument("field " + field + " has unknown value '" + s + "'");
}

BackgroundSchedule parse_background(const json& j)
{
    check_keys(j, "scenario.background", {"kind", "value", "c0", "c1", "omega", "rate", "breakpoints", "interp"});
    const std::string kind = j.value("kind", "constant");
    if (kind == "constant") {
        ConstantBackground b;
        read(j, "value", b.value, "scenario.background");
        return b;
    }
    if (kind == "sin-exp") {
        SinExpBackground b;
        read(j, "c0", b.c0, "scenario.background");
        read(j, "c1", b.c1, "scenario.background");
        read(j, "omega", b.omega, "scenario.background");
        read(j, "rate", b.rate, "scenario.background");
        return b;
    }
    if (kind == "piecewise") {
        PiecewiseBackground b;
        if (j.contains("interp")) {
            b.interp = parse_enum<PiecewiseBackground::Interp>(
                j["interp"], "scenario.background.interp",
                {{"step", PiecewiseBackground::Interp::Step}, {"linear", PiecewiseBackground::Interp::Linear}});
        }
        if (!j.contains("breakpoints") || !j["breakpoints"].is_array()) {
            throw std::invalid_argument("field scenario.background.breakpoints missing (list of [t, W])");
        }
        for (const auto& bp : j["breakpoints"]) {
            if (!bp.is_array() || bp.size() != 2) {
                throw std::invalid_argument("scenario.background.breakpoints entries must be [t, W]");
            }
            b.breakpoints.emplace_back(bp[0].get<double>(), bp[1].get<double>());
        }
        return b;
    }
    throw std::invalid_argument("field scenario.background.kind has unknown value '" + kind + "'");
}

ordered_json background_to_json(const BackgroundSchedule& bg)
{
    ordered_json j;
    if (const auto* c = std::get_if<ConstantBackground>(&bg)) {
        j["kind"] = "constant";
        j["value"] = c->value;
    }
    else if (const auto* se = std::get_if<SinExpBackground>(&bg)) {
        j["kind"] = "sin-exp";
        j["c0"] = se->c0;
        j["c1"] = se->c1;
        j["omega"] = se->omega;
        j["rate"] = se->rate;
    }
    else {
        const auto& pw = std::get<PiecewiseBackground>(bg);
        j["kind"] = "piecewise";
        j["interp"] = pw.interp == PiecewiseBackground::Interp::Step ? "step" : "linear";
        ordered_json bps = ordered_json::array();
        for (const auto& [t, W] : pw.breakpoints) {
            bps.push_back({t, W});
        }
        j["breakpoints"] = bps;
    }
    return j;
}

void parse_model(const json& j, ModelParams& m)
{
    const std::string w = "model";
    check_keys(j, w, {"alpha", "beta", "delta", "kappa", "R", "tau_I", "tau_H", "noise", "propensity",
                      "herding_kernel", "d_scale", "rule_thresholds", "swap_rules"});
    read(j, "alpha", m.alpha, w);
    read(j, "beta", m.beta, w);
    read(j, "delta", m.delta, w);
    read(j, "kappa", m.kappa, w);
    read(j, "R", m.band_R, w);
    read(j, "tau_I", m.tau_I, w);
    read(j, "tau_H", m.tau_H, w);
    read(j, "d_scale", m.d_scale, w);
    read(j, "swap_rules", m.swap_rules, w);
    if (j.contains("noise")) {
        const auto& n = j["noise"];
        check_keys(n, "model.noise", {"kind", "amplitude"});
        if (n.contains("kind")) {
            m.noise.kind = parse_enum<NoiseModel::Kind>(n["kind"], "model.noise.kind",
                                                        {{"two-point", NoiseModel::Kind::TwoPoint},
                                                         {"gaussian", NoiseModel::Kind::Gaussian},
                                                         {"truncated-gaussian", NoiseModel::Kind::Gaussian}});
        }
        read(n, "amplitude", m.noise.amplitude, "model.noise");
    }
    if (j.contains("propensity")) {
        const auto& p = j["propensity"];
        check_keys(p, "model.propensity", {"kind", "radius"});
        if (p.contains("kind")) {
            m.p_kind = parse_enum<PropensityKind>(p["kind"], "model.propensity.kind",
                                                  {{"constant-one", PropensityKind::ConstantOne},
                                                   {"indicator", PropensityKind::Indicator}});
        }
        read(p, "radius", m.p_radius, "model.propensity");
    }
    if (j.contains("herding_kernel")) {
        const auto& h = j["herding_kernel"];
        check_keys(h, "model.herding_kernel", {"kind", "radius"});
        if (h.contains("kind")) {
            m.gamma_kind = parse_enum<HerdingKernel>(h["kind"], "model.herding_kernel.kind",
                                                     {{"indicator-product", HerdingKernel::IndicatorProduct},
                                                      {"distance-indicator", HerdingKernel::DistanceIndicator}});
        }
        read(h, "radius", m.gamma_radius, "model.herding_kernel");
    }
    if (j.contains("rule_thresholds")) {
        const auto& r = j["rule_thresholds"];
        if (!r.is_array() || r.size() != 2) {
            throw std::invalid_argument("field model.rule_thresholds must be [lower, upper]");
        }
        m.rule_lower = r[0].get<double>();
        m.rule_upper = r[1].get<double>();
    }
}

void parse_fp(const json& j, FPConfig& fp)
{
    const std::string w = "fp";
    check_keys(j, w, {"n_x", "n_w", "L", "w_max", "dt", "stability_C", "kernel", "gamma0", "diffusion",
                      "lambda_I", "lambda_H", "d_floor", "drift", "x_boundary"});
    read(j, "n_x", fp.n_x, w);
    read(j, "n_w", fp.n_w, w);
    read(j, "L", fp.L, w);
    read(j, "w_max", fp.w_max, w);
    read(j, "dt", fp.dt, w);
    read(j, "stability_C", fp.stability_C, w);
    read(j, "gamma0", fp.gamma0, w);
    read(j, "lambda_I", fp.lambda_I, w);
    read(j, "lambda_H", fp.lambda_H, w);
    read(j, "d_floor", fp.d_floor, w);
    if (j.contains("kernel")) {
        fp.kernel = parse_enum<FPConfig::Kernel>(j["kernel"], "fp.kernel",
                                                 {{"constant", FPConfig::Kernel::Constant},
                                                  {"herding", FPConfig::Kernel::Herding}});
    }
    if (j.contains("diffusion")) {
        fp.diffusion = parse_enum<FPConfig::Diffusion>(j["diffusion"], "fp.diffusion",
                                                       {{"from-noise", FPConfig::Diffusion::FromNoise},
                                                        {"linear", FPConfig::Diffusion::Linear},
                                                        {"constant", FPConfig::Diffusion::Constant}});
    }
    if (j.contains("drift")) {
        fp.drift = parse_enum<FPConfig::Drift>(j["drift"], "fp.drift",
                                               {{"affine", FPConfig::Drift::Affine},
                                                {"quadrature", FPConfig::Drift::Quadrature}});
    }
    if (j.contains("x_boundary")) {
        fp.x_boundary = parse_enum<FPConfig::XBoundary>(j["x_boundary"], "fp.x_boundary",
                                                        {{"no-flux", FPConfig::XBoundary::NoFlux},
                                                         {"zero-gradient", FPConfig::XBoundary::ZeroGradient}});
    }
}

const char* name(Mode m) { return m == Mode::Boltzmann ? "boltzmann" : "fp"; }
const char* name(Turnover t) { return t == Turnover::Rate ? "rate" : "per-step"; }
const char* name(Aggregation a) { return a == Aggregation::PerRun ? "per-run" : "mean-trajectory"; }
const char* name(FluxForm f) { return f == FluxForm::Limited ? "limited" : "as-printed"; }
const char* name(SigmaVariant s) { return s == SigmaVariant::LaggedMean ? "lagged" : "current"; }

}  // namespace

RunConfig config_from_json(const json& j, RunConfig cfg)
{
    check_keys(j, "", {"preset", "mode", "grid", "model", "scenario", "collision", "turnover", "transport",
                       "initial", "output", "aggregation", "fp"});
    if (j.contains("mode")) {
        cfg.mode = parse_enum<Mode>(j["mode"], "mode",
                                    {{"boltzmann", Mode::Boltzmann}, {"fp", Mode::FokkerPlanck},
                                     {"fokker-planck", Mode::FokkerPlanck}});
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        check_keys(g, "grid", {"n_x", "n_w", "x_min", "x_max", "w_min", "w_max"});
        read(g, "n_x", cfg.n_x, "grid");
        read(g, "n_w", cfg.n_w, "grid");
        read(g, "x_min", cfg.box.x_min, "grid");
        read(g, "x_max", cfg.box.x_max, "grid");
        read(g, "w_min", cfg.box.w_min, "grid");
        read(g, "w_max", cfg.box.w_max, "grid");
    }
    if (j.contains("model")) {
        parse_model(j["model"], cfg.model);
    }
    if (j.contains("scenario")) {
        const auto& s = j["scenario"];
        check_keys(s, "scenario", {"background", "horizon", "dt", "seed", "ensemble"});
        if (s.contains("background")) {
            cfg.scenario.background = parse_background(s["background"]);
        }
        read(s, "horizon", cfg.scenario.horizon, "scenario");
        read(s, "dt", cfg.scenario.dt, "scenario");
        read(s, "seed", cfg.scenario.seed, "scenario");
        read(s, "ensemble", cfg.scenario.ensemble, "scenario");
    }
    if (j.contains("collision")) {
        const auto& c = j["collision"];
        check_keys(c, "collision", {"events_per_step", "quantum_mass"});
        read(c, "events_per_step", cfg.collision.events_per_step, "collision");
        read(c, "quantum_mass", cfg.collision.quantum_mass, "collision");
    }
    if (j.contains("turnover")) {
        cfg.turnover = parse_enum<Turnover>(j["turnover"], "turnover",
                                            {{"rate", Turnover::Rate}, {"per-step", Turnover::PerStep}});
    }
    if (j.contains("transport")) {
        const auto& t = j["transport"];
        check_keys(t, "transport", {"flux"});
        if (t.contains("flux")) {
            cfg.flux = parse_enum<FluxForm>(t["flux"], "transport.flux",
                                            {{"limited", FluxForm::Limited}, {"as-printed", FluxForm::AsPrinted}});
        }
    }
    if (j.contains("initial")) {
        const auto& i = j["initial"];
        check_keys(i, "initial", {"w_center", "w_sd", "mass"});
        if (i.contains("w_center") && !i["w_center"].is_null()) {
            cfg.initial.w_center = i["w_center"].get<double>();
        }
        read(i, "w_sd", cfg.initial.w_sd, "initial");
        read(i, "mass", cfg.initial.mass, "initial");
    }
    if (j.contains("output")) {
        const auto& o = j["output"];
        check_keys(o, "output", {"dir", "cadence", "emit_bands", "band_n", "band_k", "sigma"});
        if (o.contains("dir")) {
            cfg.output.dir = o["dir"].get<std::string>();
        }
        read(o, "cadence", cfg.output.cadence, "output");
        read(o, "emit_bands", cfg.output.emit_bands, "output");
        read(o, "band_n", cfg.output.band_n, "output");
        read(o, "band_k", cfg.output.band_k, "output");
        if (o.contains("sigma")) {
            cfg.output.sigma = parse_enum<SigmaVariant>(o["sigma"], "output.sigma",
                                                        {{"lagged", SigmaVariant::LaggedMean},
                                                         {"current", SigmaVariant::CurrentMean}});
        }
    }
    if (j.contains("aggregation")) {
        cfg.aggregation = parse_enum<Aggregation>(j["aggregation"], "aggregation",
                                                  {{"per-run", Aggregation::PerRun},
                                                   {"mean-trajectory", Aggregation::MeanTrajectory}});
    }
    if (j.contains("fp")) {
        parse_fp(j["fp"], cfg.fp);
    }
    if (j.contains("preset")) {
        read(j, "preset", cfg.preset, "");
    }
    cfg.validate();
    return cfg;
}

ordered_json config_to_json(const RunConfig& cfg)
{
    ordered_json j;
    j["preset"] = cfg.preset;
    j["mode"] = name(cfg.mode);
    j["grid"] = {{"n_x", cfg.n_x}, {"n_w", cfg.n_w}, {"x_min", cfg.box.x_min}, {"x_max", cfg.box.x_max},
                 {"w_min", cfg.box.w_min}, {"w_max", cfg.box.w_max}};
    const auto& m = cfg.model;
    ordered_json model;
    model["alpha"] = m.alpha;
    model["beta"] = m.beta;
    model["delta"] = m.delta;
    model["kappa"] = m.kappa;
    model["R"] = m.band_R;
    model["tau_I"] = m.tau_I;
    model["tau_H"] = m.tau_H;
    model["noise"] = {{"kind", m.noise.kind == NoiseModel::Kind::TwoPoint ? "two-point" : "gaussian"},
                      {"amplitude", m.noise.amplitude}};
    model["propensity"] = {{"kind", m.p_kind == PropensityKind::ConstantOne ? "constant-one" : "indicator"},
                           {"radius", m.p_radius}};
    model["herding_kernel"] = {
        {"kind", m.gamma_kind == HerdingKernel::IndicatorProduct ? "indicator-product" : "distance-indicator"},
        {"radius", m.gamma_radius}};
    model["d_scale"] = m.d_scale;
    model["rule_thresholds"] = {m.rule_lower, m.rule_upper};
    model["swap_rules"] = m.swap_rules;
    j["model"] = model;
    ordered_json scen;
    scen["background"] = background_to_json(cfg.scenario.background);
    scen["horizon"] = cfg.scenario.horizon;
    scen["dt"] = cfg.scenario.dt;
    scen["seed"] = cfg.scenario.seed;
    scen["ensemble"] = cfg.scenario.ensemble;
    j["scenario"] = scen;
    j["collision"] = {{"events_per_step", cfg.collision.events_per_step},
                      {"quantum_mass", cfg.collision.quantum_mass}};
    j["turnover"] = name(cfg.turnover);
    j["transport"] = {{"flux", name(cfg.flux)}};
    ordered_json init;
    init["w_center"] = cfg.initial.w_center ? ordered_json(*cfg.initial.w_center) : ordered_json(nullptr);
    init["w_sd"] = cfg.initial.w_sd;
    init["mass"] = cfg.initial.mass;
    j["initial"] = init;
    j["output"] = {{"dir", cfg.output.dir.string()}, {"cadence", cfg.output.cadence},
                   {"emit_bands", cfg.output.emit_bands}, {"band_n", cfg.output.band_n},
                   {"band_k", cfg.output.band_k}, {"sigma", name(cfg.output.sigma)}};
    j["aggregation"] = name(cfg.aggregation);
    const auto& fp = cfg.fp;
    ordered_json f;
    f["n_x"] = fp.n_x;
    f["n_w"] = fp.n_w;
    f["L"] = fp.L;
    f["w_max"] = fp.w_max;
    f["dt"] = fp.dt;
    f["stability_C"] = fp.stability_C;
    f["kernel"] = fp.kernel == FPConfig::Kernel::Constant ? "constant" : "herding";
    f["gamma0"] = fp.gamma0;
    f["diffusion"] = fp.diffusion == FPConfig::Diffusion::FromNoise ? "from-noise"
                     : fp.diffusion == FPConfig::Diffusion::Linear  ? "linear"
                                                                    : "constant";
    f["lambda_I"] = fp.lambda_I;
    f["lambda_H"] = fp.lambda_H;
    f["d_floor"] = fp.d_floor;
    f["drift"] = fp.drift == FPConfig::Drift::Affine ? "affine" : "quadrature";
    f["x_boundary"] = fp.x_boundary == FPConfig::XBoundary::NoFlux ? "no-flux" : "zero-gradient";
    j["fp"] = f;
    return j;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path.string());
    }
    json j;
    try {
        in >> j;
    }
    catch (const json::exception& e) {
        throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    RunConfig base = default_config();
    if (j.contains("preset")) {
        base = preset(j["preset"].get<std::string>());
    }
    return config_from_json(j, base);
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

std::vector<std::string> preset_names()
{
    return {"test1", "test2-smooth", "test2-crash", "test3-bollinger", "test3-jump", "test3-jump-wide"};
}

RunConfig preset(const std::string& which)
{
    RunConfig cfg = default_config();
    cfg.preset = which;
    // Experiments let every agent interact once per step.
    cfg.turnover = Turnover::PerStep;
    cfg.model.band_R = 0.025;
    cfg.model.kappa = 1.0;
    cfg.model.delta = 1.0;
    cfg.model.noise = {NoiseModel::Kind::Gaussian, 0.06};
    if (which == "test1") {
        cfg.scenario.background = ConstantBackground{0.5};
        cfg.model.alpha = 0.5;
        cfg.model.beta = 0.25;
        cfg.model.noise = {NoiseModel::Kind::TwoPoint, 0.06};
        cfg.scenario.ensemble = 200;
    }
    else if (which == "test2-smooth") {
        cfg.scenario.background = SinExpBackground{};
        cfg.scenario.horizon = 0.05;
        cfg.model.alpha = 0.5;
        cfg.model.beta = 0.25;
        cfg.model.delta = 2.0;
    }
    else if (which == "test2-crash") {
        cfg.scenario.background =
            PiecewiseBackground{{{0.0, 0.45}, {0.2, 0.55}, {0.2, 0.35}, {0.5, 0.35}},
                                PiecewiseBackground::Interp::Linear};
        cfg.model.alpha = 0.25;
        cfg.model.beta = 0.2;
        cfg.scenario.ensemble = 20;
    }
    else if (which == "test3-bollinger") {
        cfg.scenario.background = ConstantBackground{0.5};
        cfg.model.alpha = 0.2;
        cfg.model.beta = 0.25;
        cfg.model.noise = {NoiseModel::Kind::TwoPoint, 0.06};
        cfg.output.emit_bands = true;
    }
    else if (which == "test3-jump" || which == "test3-jump-wide") {
        cfg.scenario.background = PiecewiseBackground{{{0.0, 0.5}, {0.2, 0.4}}, PiecewiseBackground::Interp::Step};
        cfg.model.alpha = 0.05;
        cfg.model.beta = 0.25;
        cfg.model.d_scale = 0.25;  // d(w) = w(1 - w)
        cfg.model.noise = {NoiseModel::Kind::TwoPoint, which == "test3-jump" ? 0.06 : 0.18};
        cfg.output.emit_bands = true;
    }
    else {
        throw std::invalid_argument("unknown preset '" + which + "'");
    }
    return cfg;
}

void apply_fast(RunConfig& cfg)
{
    cfg.n_x = 35;
    cfg.n_w = 35;
    cfg.scenario.dt = 1e-4;
    cfg.scenario.ensemble = 20;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace {

double gaussian_profile(double w, double centre, double sd)
{
    const double z = (w - centre) / sd;
    return std::exp(-0.5 * z * z);
}

Record make_record(double t, const DistributionGrid& g, const RunConfig& cfg)
{
    const double W = background_W(t, cfg.scenario, cfg.box);
    const Moments m = moments(g, W);
    Record r;
    r.t = t;
    r.m_w = m.m_w;
    r.m_x = m.m_x;
    r.V_w = m.V_w;
    r.mass = total_mass(g);
    r.state = classify(m.m_w, W, cfg.model.band_R);
    return r;
}

std::size_t step_count(const Scenario& s)
{
    return static_cast<std::size_t>(std::llround(s.horizon / s.dt));
}

}  // namespace

DistributionGrid initial_grid(const RunConfig& cfg)
{
    DistributionGrid g(cfg.n_x, cfg.n_w, cfg.box);
    const double centre = cfg.initial.w_center.value_or(background_W(0.0, cfg.scenario, cfg.box));
    for (std::size_t j = 0; j < g.n_w(); ++j) {
        const double v = gaussian_profile(g.w_center(j), centre, cfg.initial.w_sd);
        for (std::size_t i = 0; i < g.n_x(); ++i) {
            g(i, j) = v;
        }
    }
    const double mass = total_mass(g);
    if (!(mass > 0.0)) {
        throw std::invalid_argument("initial datum has no mass on the grid");
    }
    for (double& v : g.values()) {
        v *= cfg.initial.mass / mass;
    }
    return g;
}

TimeSeries run_single(const RunConfig& cfg, unsigned long long seed)
{
    cfg.validate();
    DistributionGrid g = initial_grid(cfg);
    const CollisionConfig collision = cfg.effective_collision();
    Rng rng(seed);
    TransportWorkspace ws;
    ws.resize(g.n_x());

    TimeSeries series;
    series.push(make_record(0.0, g, cfg));
    const std::size_t steps = step_count(cfg.scenario);
    const double dt = cfg.scenario.dt;
    for (std::size_t k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k - 1) * dt;
        try {
            collision_step(g, t, dt, cfg.scenario, cfg.model, collision, rng);
            transport_step(g, t, dt, cfg.scenario, cfg.model, cfg.flux, ws);
            if (k % cfg.output.cadence == 0) {
                series.push(make_record(static_cast<double>(k) * dt, g, cfg));
            }
        }
        catch (const std::exception& e) {
            std::ostringstream os;
            os << "step " << k << " (t = " << t << ", seed " << seed << "): " << e.what();
            throw std::runtime_error(os.str());
        }
    }
    return series;
}

FPState initial_fp_state(const RunConfig& cfg)
{
    FPState g(cfg.fp);
    const GridBox box{-cfg.fp.L, cfg.fp.L, 0.0, cfg.fp.w_max};
    const double centre = cfg.initial.w_center.value_or(background_W(0.0, cfg.scenario, box));
    for (std::size_t i = 0; i < g.n_x(); ++i) {
        for (std::size_t j = 1; j + 1 < g.n_nodes(); ++j) {
            g(i, j) = gaussian_profile(g.w_node(j), centre, cfg.initial.w_sd);
        }
    }
    const double mass = fp_moments(g, 0.0).mass;
    for (double& v : g.values()) {
        v *= cfg.initial.mass / mass;
    }
    g.freeze_mass();
    return g;
}

TimeSeries run_fp(const RunConfig& cfg)
{
    FPConfig fp = cfg.fp;
    fp.validate();
    cfg.model.validate();
    const GridBox box{-fp.L, fp.L, 0.0, fp.w_max};
    cfg.scenario.validate(box);
    FPState g = initial_fp_state(cfg);

    auto record = [&](double t) {
        const double W = background_W(t, cfg.scenario, box);
        const FPMoments m = fp_moments(g, W);
        Record r;
        r.t = t;
        r.m_w = m.m_w;
        r.m_x = m.m_x;
        r.V_w = m.V_w;
        r.mass = m.mass;
        r.state = classify(m.m_w, W, cfg.model.band_R);
        return r;
    };

    TimeSeries series;
    series.push(record(0.0));
    const double interval = cfg.scenario.dt * static_cast<double>(cfg.output.cadence);
    const auto outputs = static_cast<std::size_t>(std::llround(cfg.scenario.horizon / interval));
    double t = 0.0;
    for (std::size_t k = 1; k <= outputs; ++k) {
        const double target = static_cast<double>(k) * interval;
        while (t < target - 1e-15 * std::max(1.0, target)) {
            double dt = fp.dt > 0.0 ? fp.dt : fp_stable_dt(g, t, fp, cfg.model, cfg.scenario);
            dt = std::min(dt, target - t);
            fp_step(g, t, dt, fp, cfg.model, cfg.scenario);
            t += dt;
        }
        t = target;
        series.push(record(t));
    }
    return series;
}

EnsembleResult aggregate(std::vector<RunSummary> runs, const RunConfig& cfg)
{
    if (runs.empty()) {
        throw std::invalid_argument("aggregate: no runs");
    }
    std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
    EnsembleResult res;
    const std::size_t len = runs.front().series.size();
    for (const auto& r : runs) {
        if (r.series.size() != len) {
            throw std::invalid_argument("aggregate: runs differ in length");
        }
    }
    const auto E = static_cast<double>(runs.size());
    const GridBox box = cfg.mode == Mode::Boltzmann ? cfg.box : GridBox{-cfg.fp.L, cfg.fp.L, 0.0, cfg.fp.w_max};
    for (std::size_t k = 0; k < len; ++k) {
        Record avg;
        avg.t = runs.front().series[k].t;
        for (const auto& r : runs) {
            const Record& rec = r.series[k];
            avg.m_w += rec.m_w;
            avg.m_x += rec.m_x;
            avg.V_w += rec.V_w;
            avg.mass += rec.mass;
        }
        avg.m_w /= E;
        avg.m_x /= E;
        avg.V_w /= E;
        avg.mass /= E;
        avg.state = classify(avg.m_w, background_W(avg.t, cfg.scenario, box), cfg.model.band_R);
        res.mean.push(avg);
    }
    if (cfg.aggregation == Aggregation::PerRun) {
        for (const auto& r : runs) {
            res.percentages.bubble += r.percentages.bubble / E;
            res.percentages.crash += r.percentages.crash / E;
        }
    }
    else {
        res.percentages = bubble_crash_percentages(res.mean, cfg.scenario, cfg.model.band_R, box);
    }
    res.runs = std::move(runs);
    return res;
}

namespace {

template <typename Job>
void parallel_for(std::size_t count, std::size_t threads, Job&& job)
{
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= count) {
                return;
            }
            try {
                job(k);
            }
            catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = count;
                return;
            }
        }
    };
    if (threads <= 1) {
        worker();
    }
    else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace

EnsembleResult run_ensemble(const RunConfig& cfg, std::size_t threads)
{
    cfg.validate();
    const std::size_t E = cfg.mode == Mode::FokkerPlanck ? 1 : cfg.scenario.ensemble;
    std::vector<RunSummary> runs(E);
    const GridBox box = cfg.mode == Mode::Boltzmann ? cfg.box : GridBox{-cfg.fp.L, cfg.fp.L, 0.0, cfg.fp.w_max};
    parallel_for(E, threads, [&](std::size_t r) {
        RunSummary& out = runs[r];
        out.seed = cfg.scenario.seed + r;
        try {
            out.series = cfg.mode == Mode::Boltzmann ? run_single(cfg, out.seed) : run_fp(cfg);
        }
        catch (const std::exception& e) {
            throw std::runtime_error("run with seed " + std::to_string(out.seed) + " failed: " + e.what());
        }
        out.percentages = bubble_crash_percentages(out.series, cfg.scenario, cfg.model.band_R, box);
    });
    return aggregate(std::move(runs), cfg);
}

std::vector<SweepPoint> run_sweep(const RunConfig& cfg, const std::vector<double>& alphas,
                                  const std::vector<double>& betas, std::size_t threads)
{
    std::vector<SweepPoint> points;
    for (double b : betas) {
        for (double a : alphas) {
            RunConfig c = cfg;
            c.model.alpha = a;
            c.model.beta = b;
            const EnsembleResult res = run_ensemble(c, threads);
            points.push_back({a, b, res.percentages});
        }
    }
    return points;
}

std::optional<double> reentry_time(const TimeSeries& series, const Scenario& s, double R,
                                   double t_from, const GridBox& box)
{
    for (const auto& r : series.records()) {
        if (r.t < t_from) {
            continue;
        }
        if (classify(r.m_w, background_W(r.t, s, box), R) == MarketState::Normal) {
            return r.t;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

std::string format_number(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) {
        throw std::runtime_error("I/O error while writing " + path.string());
    }
}

}  // namespace

void write_series_csv(const std::filesystem::path& path, const TimeSeries& series)
{
    auto out = open_output(path);
    out << "t,m_w,m_x,V_w,mass,state\n";
    for (const auto& r : series.records()) {
        out << format_number(r.t) << ',' << format_number(r.m_w) << ',' << format_number(r.m_x) << ','
            << format_number(r.V_w) << ',' << format_number(r.mass) << ',' << to_string(r.state) << '\n';
    }
    finish(out, path);
}

void write_bands_csv(const std::filesystem::path& path, const BollingerBands& bands,
                     const std::vector<double>& width)
{
    auto out = open_output(path);
    out << "t,M_n,sigma,r_plus,r_minus,bandwidth\n";
    for (std::size_t k = 0; k < bands.records.size(); ++k) {
        const auto& r = bands.records[k];
        out << format_number(r.t) << ',' << format_number(r.M_n) << ',' << format_number(r.sigma) << ','
            << format_number(r.r_plus) << ',' << format_number(r.r_minus) << ',' << format_number(width[k])
            << '\n';
    }
    finish(out, path);
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points)
{
    auto out = open_output(path);
    out << "alpha,beta,pct_bubble,pct_crash\n";
    for (const auto& p : points) {
        out << format_number(p.alpha) << ',' << format_number(p.beta) << ','
            << format_number(p.percentages.bubble) << ',' << format_number(p.percentages.crash) << '\n';
    }
    finish(out, path);
}

std::vector<std::filesystem::path> emit_results(const EnsembleResult& res, const RunConfig& cfg)
{
    namespace fs = std::filesystem;
    const fs::path dir = cfg.output.dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
    }
    std::vector<fs::path> written;
    for (const auto& r : res.runs) {
        const fs::path p = dir / ("run_" + std::to_string(r.seed) + ".csv");
        write_series_csv(p, r.series);
        written.push_back(p);
    }
    const fs::path ens = dir / "ensemble.csv";
    write_series_csv(ens, res.mean);
    written.push_back(ens);

    if (cfg.output.emit_bands) {
        const GridBox box =
            cfg.mode == Mode::Boltzmann ? cfg.box : GridBox{-cfg.fp.L, cfg.fp.L, 0.0, cfg.fp.w_max};
        const BollingerBands bands = bollinger(res.mean, cfg.output.band_n, cfg.output.band_k, cfg.output.sigma);
        const fs::path p = dir / "bands.csv";
        write_bands_csv(p, bands, bandwidth(bands, cfg.scenario, box));
        written.push_back(p);
    }

    ordered_json summary;
    summary["preset"] = cfg.preset;
    summary["mode"] = name(cfg.mode);
    summary["ensemble"] = res.runs.size();
    summary["aggregation"] = name(cfg.aggregation);
    summary["percentages"] = {{"bubble", res.percentages.bubble},
                              {"crash", res.percentages.crash},
                              {"normal", res.percentages.normal()}};
    ordered_json seeds = ordered_json::array();
    ordered_json per_run = ordered_json::array();
    for (const auto& r : res.runs) {
        seeds.push_back(r.seed);
        per_run.push_back({{"seed", r.seed}, {"bubble", r.percentages.bubble}, {"crash", r.percentages.crash}});
    }
    summary["seeds"] = seeds;
    summary["per_run"] = per_run;
    summary["config"] = config_to_json(cfg);
    const fs::path sp = dir / "summary.json";
    auto out = open_output(sp);
    out << summary.dump(2) << '\n';
    finish(out, sp);
    written.push_back(sp);
    return written;
}

}  // namespace kmarket
