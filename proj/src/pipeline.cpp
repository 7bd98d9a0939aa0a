#include "dptraffic/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <utility>

#include "json.hpp"

#include "dptraffic/csv.hpp"
#include "dptraffic/units.hpp"

namespace dptraffic {

using ordered_json = nlohmann::ordered_json;

// ============================================================================
// Configuration
// ============================================================================

FundamentalDiagram PipelineConfig::fd() const {
    return FundamentalDiagram{free_flow_speed, congestion_wave_speed, jam_density};
}

ZoneParams PipelineConfig::zone_params() const { return ZoneParams{zeta, psi}; }

HmmParams PipelineConfig::hmm_params() const { return HmmParams{hmm_pi1, hmm_pi2_decisive, hmm_pi2_hold}; }

EkfOptions PipelineConfig::ekf_options() const {
    EkfOptions opt;
    opt.q_interior = ekf_q_interior;
    opt.q_ghost = ekf_q_ghost;
    opt.r_base = ekf_r_base;
    opt.nondecisive_r_scale = ekf_nondecisive_r_scale;
    opt.offside_r_extra = ekf_offside_r_extra;
    return opt;
}

PrivacyParams PipelineConfig::privacy() const { return PrivacyParams{epsilon, delta}; }

SynthesisOptions PipelineConfig::synthesis_options() const {
    SynthesisOptions opt;
    opt.count_noise = count_noise == "poisson" ? CountNoise::Poisson : CountNoise::Round;
    opt.occupancy_jitter = occupancy_jitter;
    return opt;
}

void PipelineConfig::validate() const {
    fd().validate();
    zone_params().validate();
    hmm_params().validate();
    privacy().validate();
    ekf_options().validate();
    if (g_feet <= 0.0) throw std::invalid_argument("config: g_feet must be positive");
    if (T_seconds <= 0.0) throw std::invalid_argument("config: T_seconds must be positive");
    if (sigma_interior < 0.0 || sigma_ghost < 0.0)
        throw std::invalid_argument("config: process noise must be non-negative");
    if (occupancy_jitter < 0.0) throw std::invalid_argument("config: occupancy_jitter must be non-negative");
    if (ekf_init_var <= 0.0) throw std::invalid_argument("config: ekf_init_var must be positive");
    if (ekf_init_density < 0.0 || ekf_init_density > jam_density)
        throw std::invalid_argument("config: ekf_init_density must lie in [0, jam]");
    if (periods < 1) throw std::invalid_argument("config: periods must be at least 1");
    if (sensitive_rule != "hold" && sensitive_rule != "flow-trend")
        throw std::invalid_argument("config: sensitive_rule must be 'hold' or 'flow-trend'");
    if (count_noise != "round" && count_noise != "poisson")
        throw std::invalid_argument("config: count_noise must be 'round' or 'poisson'");
    if (mode != "nonprivate" && mode != "private" && mode != "both")
        throw std::invalid_argument("config: mode must be 'nonprivate', 'private', or 'both'");
}

// ============================================================================
// Scenario library
// ============================================================================

namespace {

// Piecewise-linear profile over the run; knots are (fraction of horizon,
// value) pairs with non-decreasing fractions covering [0, 1].
std::vector<double> piecewise_profile(int periods, const std::vector<std::pair<double, double>>& knots) {
    std::vector<double> out(static_cast<std::size_t>(periods));
    for (int k = 0; k < periods; ++k) {
        double t = periods > 1 ? static_cast<double>(k) / (periods - 1) : 0.0;
        double value = knots.back().second;
        if (t <= knots.front().first) {
            value = knots.front().second;
        } else {
            for (std::size_t s = 1; s < knots.size(); ++s) {
                if (t <= knots[s].first) {
                    double t0 = knots[s - 1].first;
                    double t1 = knots[s].first;
                    double v0 = knots[s - 1].second;
                    double v1 = knots[s].second;
                    value = t1 > t0 ? v0 + (v1 - v0) * (t - t0) / (t1 - t0) : v1;
                    break;
                }
            }
        }
        out[static_cast<std::size_t>(k)] = value;
    }
    return out;
}

std::vector<double> constant_profile(int periods, double value) {
    return std::vector<double>(static_cast<std::size_t>(periods), value);
}

Scenario assemble(std::string name, const PipelineConfig& cfg, double init_density,
                  BoundaryProfile boundary) {
    std::vector<CellSpec> cells(20, CellSpec{0.55, 4});
    const int interfaces[] = {0, 2, 4, 7, 9, 11, 13, 16, 18, 20};
    std::vector<SensorSpec> specs;
    std::vector<SensorConfig> configs;
    for (std::size_t s = 0; s < std::size(interfaces); ++s) {
        char id[8];
        std::snprintf(id, sizeof id, "s%02zu", s + 1);
        specs.push_back(SensorSpec{id, interfaces[s], 4});
        SensorConfig sc;
        sc.id = id;
        sc.lanes = 4;
        sc.g = cfg.g_feet / units::kFeetPerMile;
        sc.T = cfg.T_seconds / units::kSecondsPerHour;
        sc.psi = cfg.psi;
        configs.push_back(std::move(sc));
    }
    double dt = cfg.T_seconds / units::kSecondsPerHour;
    RoadGeometry geom(cells, specs, dt);
    DensityState init{std::vector<double>(static_cast<std::size_t>(geom.state_size()), init_density), 0};
    ProcessNoiseConfig noise{cfg.sigma_interior, cfg.sigma_ghost, {}};
    return Scenario{std::move(name), std::move(cells),   std::move(specs), std::move(geom),
                    std::move(init), std::move(boundary), std::move(noise), std::move(configs),
                    cfg.periods};
}

}  // namespace

Scenario scenario_library(const std::string& name, const PipelineConfig& cfg) {
    // Profiles pin states 0..periods, so they need periods + 1 entries.
    int P = cfg.periods + 1;
    if (name == "free")
        return assemble(name, cfg, 10.0,
                        BoundaryProfile{constant_profile(P, 10.0), constant_profile(P, 10.0)});
    if (name == "jam")
        return assemble(name, cfg, 150.0,
                        BoundaryProfile{constant_profile(P, 150.0), constant_profile(P, 150.0)});
    if (name == "wave") {
        // Downstream ghost density rises to near-jam, holds for a third of the
        // run, then clears; the resulting queue backs up past the stations.
        std::vector<double> down = piecewise_profile(
            P, {{0.0, 10.0}, {1.0 / 6, 10.0}, {1.0 / 3, 180.0}, {2.0 / 3, 180.0}, {5.0 / 6, 10.0}, {1.0, 10.0}});
        return assemble(name, cfg, 10.0, BoundaryProfile{constant_profile(P, 12.0), std::move(down)});
    }
    if (name == "rush") {
        // Inflow swells enough that station flows cross the robust-range cap
        // while every cell stays below critical density.
        std::vector<double> up = piecewise_profile(
            P, {{0.0, 10.0}, {0.25, 10.0}, {0.45, 26.0}, {0.70, 26.0}, {0.90, 10.0}, {1.0, 10.0}});
        return assemble(name, cfg, 10.0, BoundaryProfile{std::move(up), constant_profile(P, 8.0)});
    }
    throw std::invalid_argument("unknown scenario '" + name + "' (expected free, jam, wave, or rush)");
}

// ============================================================================
// Metrics
// ============================================================================

double density_rmse(const RoadGeometry& geom, const FundamentalDiagram& fd,
                    const std::vector<DensityState>& truth, const std::vector<DensityState>& estimates,
                    bool free_only) {
    double rho_c = fd.critical_density();
    double sq_sum = 0.0;
    long long n = 0;
    for (const DensityState& est : estimates) {
        if (est.k < 0 || static_cast<std::size_t>(est.k) >= truth.size())
            throw std::invalid_argument("density_rmse: estimate period outside the truth trajectory");
        const DensityState& ref = truth[static_cast<std::size_t>(est.k)];
        for (int i = 1; i <= geom.interior_cells(); ++i) {
            double t = ref.rho[static_cast<std::size_t>(i)];
            if (free_only && t >= rho_c) continue;
            double e = est.rho[static_cast<std::size_t>(i)] - t;
            sq_sum += e * e;
            ++n;
        }
    }
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(sq_sum / static_cast<double>(n));
}

double mode_error_rate(const RoadGeometry& geom, const FundamentalDiagram& fd,
                       const std::vector<DensityState>& truth,
                       const std::vector<DensityPseudoMeasurement>& measurements) {
    if (measurements.empty()) return std::numeric_limits<double>::quiet_NaN();
    double rho_c = fd.critical_density();
    long long errors = 0;
    for (const DensityPseudoMeasurement& m : measurements) {
        if (m.k < 0 || static_cast<std::size_t>(m.k) >= truth.size())
            throw std::invalid_argument("mode_error_rate: measurement period outside the truth trajectory");
        int i = geom.sensor(m.sensor_id).interface_index;
        const std::vector<double>& rho = truth[static_cast<std::size_t>(m.k)].rho;
        double local = 0.5 * (rho[static_cast<std::size_t>(i)] + rho[static_cast<std::size_t>(i) + 1]);
        Mode actual = local <= rho_c ? Mode::Free : Mode::Congested;
        if (m.mode_used != actual) ++errors;
    }
    return static_cast<double>(errors) / static_cast<double>(measurements.size());
}

double held_fraction(const std::vector<DensityPseudoMeasurement>& measurements) {
    if (measurements.empty()) return std::numeric_limits<double>::quiet_NaN();
    long long held = 0;
    for (const DensityPseudoMeasurement& m : measurements)
        if (!m.decisive) ++held;
    return static_cast<double>(held) / static_cast<double>(measurements.size());
}

// ============================================================================
// End-to-end run
// ============================================================================

RunArtifacts run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    auto start = std::chrono::steady_clock::now();

    RunArtifacts art{cfg, scenario_library(cfg.scenario, cfg), {}, {}, {}, {}, {}, {}, {}, {}, {}};
    const Scenario& sc = art.scenario;
    FundamentalDiagram fd = cfg.fd();
    ZoneParams zp = cfg.zone_params();

    art.truth = simulate(sc.geom, fd, sc.init, sc.process_noise, sc.boundary, cfg.seed, sc.periods);

    // Detector records cover periods 0..periods-1; the final state is kept
    // only as the last prediction target.
    std::vector<DensityState> sensed(art.truth.begin(), art.truth.end() - 1);
    auto count_rng = RngStream::derive(cfg.seed, "count-noise");
    art.records =
        synthesize_detector_data(sensed, sc.geom, fd, sc.sensor_configs, cfg.synthesis_options(), count_rng);
    build_series(sc.sensor_configs, art.records, art.flows, art.densities);

    DensityState init_guess{
        std::vector<double>(static_cast<std::size_t>(sc.geom.state_size()), cfg.ekf_init_density), 0};

    RunReport& rep = art.report;
    rep.scenario = sc.name;
    rep.mode = cfg.mode;
    rep.seed = cfg.seed;
    rep.periods = sc.periods;
    double nan = std::numeric_limits<double>::quiet_NaN();
    rep.rmse_nonprivate = rep.rmse_free_nonprivate = nan;
    rep.mode_error_rate_nonprivate = rep.held_fraction_nonprivate = nan;
    rep.rmse_private = rep.rmse_free_private = nan;
    rep.mode_error_rate_private = rep.held_fraction_private = nan;

    if (cfg.run_nonprivate()) {
        art.nonprivate_measurements = density_measurements_nonprivate(fd, zp, sc.sensor_configs, art.flows,
                                                                      art.densities, cfg.hmm_params());
        art.nonprivate_map = build_density_map(sc.geom, fd, art.nonprivate_measurements, sc.periods,
                                               cfg.ekf_options(), init_guess, cfg.ekf_init_var);
        rep.rmse_nonprivate = density_rmse(sc.geom, fd, art.truth, art.nonprivate_map.estimates, false);
        rep.rmse_free_nonprivate = density_rmse(sc.geom, fd, art.truth, art.nonprivate_map.estimates, true);
        rep.mode_error_rate_nonprivate =
            mode_error_rate(sc.geom, fd, art.truth, art.nonprivate_measurements);
        rep.held_fraction_nonprivate = held_fraction(art.nonprivate_measurements);
    }

    if (cfg.run_private()) {
        auto mech_rng = RngStream::derive(cfg.seed, "gauss-mech");
        art.private_release =
            density_measurements_private(fd, zp, sc.sensor_configs, art.flows, art.densities,
                                         cfg.hmm_params(), cfg.privacy(), cfg.flow_trend(), mech_rng);
        art.private_map = build_density_map(sc.geom, fd, art.private_release.measurements, sc.periods,
                                            cfg.ekf_options(), init_guess, cfg.ekf_init_var);
        rep.delta_f = art.private_release.delta_f;
        rep.sigma_flow = art.private_release.sigma;
        PrivacyParams total = art.private_release.ledger.total();
        rep.epsilon_total = total.epsilon;
        rep.delta_total = total.delta;
        rep.rmse_private = density_rmse(sc.geom, fd, art.truth, art.private_map.estimates, false);
        rep.rmse_free_private = density_rmse(sc.geom, fd, art.truth, art.private_map.estimates, true);
        rep.mode_error_rate_private =
            mode_error_rate(sc.geom, fd, art.truth, art.private_release.measurements);
        rep.held_fraction_private = held_fraction(art.private_release.measurements);
    }

    std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    rep.runtime_seconds = elapsed.count();
    return art;
}

// ============================================================================
// Artifact writers
// ============================================================================

void write_zone_csv(const std::filesystem::path& path, const FundamentalDiagram& fd,
                    const ZoneParams& zp, const std::vector<SensorConfig>& configs) {
    std::vector<std::vector<std::string>> rows;
    auto [lo, hi] = sensitive_interval(fd, zp);
    for (const SensorConfig& sc : configs) {
        double alpha = private_alpha(fd, zp, sc.lanes, sc.T, sc.g);
        rows.push_back({sc.id, csv::format(fd.capacity()), csv::format(lo), csv::format(hi),
                        csv::format(alpha)});
    }
    csv::write_file(path, {"sensor_id", "capacity", "sensitive_lo", "sensitive_hi", "alpha"}, rows);
}

void write_measurement_csv(const std::filesystem::path& path,
                           const std::vector<DensityPseudoMeasurement>& measurements) {
    std::vector<std::vector<std::string>> rows;
    for (const DensityPseudoMeasurement& m : measurements)
        rows.push_back({std::to_string(m.k), m.sensor_id, csv::format(m.pseudo_flow),
                        std::string(1, mode_char(m.raw_mode)), std::string(1, mode_char(m.mode_used)),
                        m.decisive ? "1" : "0", csv::format(m.belief), csv::format(m.z),
                        csv::format(m.z_noise_sd)});
    csv::write_file(path,
                    {"k", "sensor_id", "pseudo_flow", "raw_mode", "filtered_mode", "decisive", "belief",
                     "z", "z_noise_sd"},
                    rows);
}

void write_diagnostics_csv(const std::filesystem::path& path, const DensityMapResult& map) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < map.estimates.size(); ++k)
        rows.push_back({std::to_string(map.estimates[k].k), csv::format(map.trace_cov[k]),
                        csv::format(map.innovation_norm[k])});
    csv::write_file(path, {"k", "trace_cov", "innovation_norm"}, rows);
}

void emit_plot_data(const std::filesystem::path& path, const RoadGeometry& geom,
                    const std::vector<DensityState>& states) {
    std::vector<double> midpoints(static_cast<std::size_t>(geom.interior_cells()));
    double x = 0.0;
    for (int i = 1; i <= geom.interior_cells(); ++i) {
        midpoints[static_cast<std::size_t>(i) - 1] = x + 0.5 * geom.cell_length(i);
        x += geom.cell_length(i);
    }
    std::vector<std::vector<std::string>> rows;
    for (const DensityState& st : states)
        for (int i = 1; i <= geom.interior_cells(); ++i)
            rows.push_back({std::to_string(st.k), csv::format(midpoints[static_cast<std::size_t>(i) - 1]),
                            csv::format(st.rho[static_cast<std::size_t>(i)])});
    csv::write_file(path, {"k", "cell_midpoint_mi", "density"}, rows);
}

void write_privacy_json(const std::filesystem::path& path, const PrivateMeasurements& release) {
    ordered_json j;
    j["delta_f"] = release.delta_f;
    j["sigma"] = release.sigma;
    ordered_json alpha = ordered_json::object();
    for (const auto& [id, a] : release.alpha) alpha[id] = a;
    j["alpha"] = std::move(alpha);
    ordered_json mechanisms = ordered_json::array();
    for (const LedgerEntry& e : release.ledger.entries())
        mechanisms.push_back({{"label", e.label}, {"epsilon", e.epsilon}, {"delta", e.delta}});
    j["mechanisms"] = std::move(mechanisms);
    PrivacyParams total = release.ledger.total();
    j["total"] = {{"epsilon", total.epsilon}, {"delta", total.delta}};

    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

namespace {

void put_unless_nan(ordered_json& j, const char* key, double value) {
    if (!std::isnan(value)) j[key] = value;
}

}  // namespace

std::string report_to_json(const RunReport& report) {
    ordered_json j;
    j["scenario"] = report.scenario;
    j["mode"] = report.mode;
    j["seed"] = report.seed;
    j["periods"] = report.periods;
    j["delta_f"] = report.delta_f;
    j["sigma_flow"] = report.sigma_flow;
    j["epsilon_total"] = report.epsilon_total;
    j["delta_total"] = report.delta_total;
    put_unless_nan(j, "rmse_nonprivate", report.rmse_nonprivate);
    put_unless_nan(j, "rmse_free_nonprivate", report.rmse_free_nonprivate);
    put_unless_nan(j, "mode_error_rate_nonprivate", report.mode_error_rate_nonprivate);
    put_unless_nan(j, "held_fraction_nonprivate", report.held_fraction_nonprivate);
    put_unless_nan(j, "rmse_private", report.rmse_private);
    put_unless_nan(j, "rmse_free_private", report.rmse_free_private);
    put_unless_nan(j, "mode_error_rate_private", report.mode_error_rate_private);
    put_unless_nan(j, "held_fraction_private", report.held_fraction_private);
    j["runtime_seconds"] = report.runtime_seconds;
    return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    double nan = std::numeric_limits<double>::quiet_NaN();
    RunReport r;
    r.scenario = j.value("scenario", std::string());
    r.mode = j.value("mode", std::string());
    r.seed = j.value("seed", std::uint64_t{0});
    r.periods = j.value("periods", 0);
    r.delta_f = j.value("delta_f", 0.0);
    r.sigma_flow = j.value("sigma_flow", 0.0);
    r.epsilon_total = j.value("epsilon_total", 0.0);
    r.delta_total = j.value("delta_total", 0.0);
    r.rmse_nonprivate = j.value("rmse_nonprivate", nan);
    r.rmse_free_nonprivate = j.value("rmse_free_nonprivate", nan);
    r.mode_error_rate_nonprivate = j.value("mode_error_rate_nonprivate", nan);
    r.held_fraction_nonprivate = j.value("held_fraction_nonprivate", nan);
    r.rmse_private = j.value("rmse_private", nan);
    r.rmse_free_private = j.value("rmse_free_private", nan);
    r.mode_error_rate_private = j.value("mode_error_rate_private", nan);
    r.held_fraction_private = j.value("held_fraction_private", nan);
    r.runtime_seconds = j.value("runtime_seconds", 0.0);
    return r;
}

void write_report_json(const std::filesystem::path& path, const RunReport& report) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << report_to_json(report);
}

RunReport load_report_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return report_from_json(text);
}

void write_run_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& out_dir) {
    const Scenario& sc = artifacts.scenario;
    FundamentalDiagram fd = artifacts.config.fd();
    ZoneParams zp = artifacts.config.zone_params();
    std::filesystem::create_directories(out_dir);

    write_geometry_csv(out_dir / "geometry.csv", sc.cells);
    write_sensors_csv(out_dir / "sensors.csv", sc.sensor_specs);
    write_trajectory_csv(out_dir / "ground_truth.csv", artifacts.truth);
    write_detector_csv(out_dir / "detectors.csv", artifacts.records);
    write_zone_csv(out_dir / "zones.csv", fd, zp, sc.sensor_configs);
    emit_plot_data(out_dir / "plot_truth.csv", sc.geom, artifacts.truth);

    if (!artifacts.nonprivate_map.estimates.empty()) {
        write_measurement_csv(out_dir / "measurements_nonprivate.csv", artifacts.nonprivate_measurements);
        write_trajectory_csv(out_dir / "density_nonprivate.csv", artifacts.nonprivate_map.estimates);
        write_diagnostics_csv(out_dir / "diagnostics_nonprivate.csv", artifacts.nonprivate_map);
        emit_plot_data(out_dir / "plot_nonprivate.csv", sc.geom, artifacts.nonprivate_map.estimates);
    }
    if (!artifacts.private_map.estimates.empty()) {
        write_measurement_csv(out_dir / "measurements_private.csv",
                              artifacts.private_release.measurements);
        write_trajectory_csv(out_dir / "density_private.csv", artifacts.private_map.estimates);
        write_diagnostics_csv(out_dir / "diagnostics_private.csv", artifacts.private_map);
        emit_plot_data(out_dir / "plot_private.csv", sc.geom, artifacts.private_map.estimates);
        write_privacy_json(out_dir / "privacy.json", artifacts.private_release);
    }
    write_report_json(out_dir / "report.json", artifacts.report);
}

}  // namespace dptraffic
