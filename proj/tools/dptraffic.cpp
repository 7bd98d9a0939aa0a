// Command line front end: simulate ground truth, synthesize detector data,
// release private measurements, estimate densities, and run the built-in
// audits. Every subcommand is a thin wrapper over the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dptraffic/pipeline.hpp"
#include "dptraffic/units.hpp"

namespace {

using namespace dptraffic;

void bind_diagram_options(CLI::App* cmd, PipelineConfig& cfg) {
    cmd->add_option("--free-flow-speed", cfg.free_flow_speed, "Free-flow speed [mi/h]")
        ->capture_default_str();
    cmd->add_option("--wave-speed", cfg.congestion_wave_speed, "Congestion wave speed [mi/h]")
        ->capture_default_str();
    cmd->add_option("--jam-density", cfg.jam_density, "Jam density [veh/mi/lane]")->capture_default_str();
}

void bind_sensing_options(CLI::App* cmd, PipelineConfig& cfg) {
    cmd->add_option("--g-feet", cfg.g_feet, "Effective vehicle length [ft]")->capture_default_str();
    cmd->add_option("--T-seconds", cfg.T_seconds, "Sampling period [s]")->capture_default_str();
    cmd->add_option("--psi", cfg.psi, "Per-vehicle occupancy bound")->capture_default_str();
    cmd->add_option("--zeta", cfg.zeta, "Log-band half-width")->capture_default_str();
}

void bind_privacy_options(CLI::App* cmd, PipelineConfig& cfg) {
    cmd->add_option("--epsilon", cfg.epsilon, "Privacy budget per released series")->capture_default_str();
    cmd->add_option("--delta", cfg.delta, "Privacy slack per released series")->capture_default_str();
    cmd->add_option("--sensitive-rule", cfg.sensitive_rule, "Mode rule above alpha")
        ->check(CLI::IsMember({"hold", "flow-trend"}))
        ->capture_default_str();
}

void bind_estimator_options(CLI::App* cmd, PipelineConfig& cfg) {
    cmd->add_option("--hmm-pi1", cfg.hmm_pi1, "Mode switch probability")->capture_default_str();
    cmd->add_option("--hmm-pi2-decisive", cfg.hmm_pi2_decisive, "Confidence, decisive evidence")
        ->capture_default_str();
    cmd->add_option("--hmm-pi2-hold", cfg.hmm_pi2_hold, "Confidence, held evidence")
        ->capture_default_str();
    cmd->add_option("--ekf-q-interior", cfg.ekf_q_interior, "Process noise variance, interior cells")
        ->capture_default_str();
    cmd->add_option("--ekf-q-ghost", cfg.ekf_q_ghost, "Process noise variance, ghost cells")
        ->capture_default_str();
    cmd->add_option("--ekf-r-base", cfg.ekf_r_base, "Baseline measurement variance")
        ->capture_default_str();
    cmd->add_option("--ekf-r-scale-held", cfg.ekf_nondecisive_r_scale,
                    "Variance inflation for held-mode measurements")
        ->capture_default_str();
    cmd->add_option("--ekf-r-offside", cfg.ekf_offside_r_extra,
                    "Added variance for the cell off the binding flux side")
        ->capture_default_str();
    cmd->add_option("--ekf-init-density", cfg.ekf_init_density, "Flat initial mean [veh/mi/lane]")
        ->capture_default_str();
    cmd->add_option("--ekf-init-var", cfg.ekf_init_var, "Initial variance per cell")
        ->capture_default_str();
}

void bind_simulation_options(CLI::App* cmd, PipelineConfig& cfg) {
    cmd->add_option("--scenario", cfg.scenario, "free, jam, wave, or rush")->capture_default_str();
    cmd->add_option("--periods", cfg.periods, "Sampling periods to run")->capture_default_str();
    cmd->add_option("--sigma-interior", cfg.sigma_interior, "Process noise, interior [veh/mi/lane]")
        ->capture_default_str();
    cmd->add_option("--sigma-ghost", cfg.sigma_ghost, "Process noise, ghosts [veh/mi/lane]")
        ->capture_default_str();
    cmd->add_option("--count-noise", cfg.count_noise, "Detector count noise")
        ->check(CLI::IsMember({"round", "poisson"}))
        ->capture_default_str();
    cmd->add_option("--occupancy-jitter", cfg.occupancy_jitter, "Occupancy noise stddev")
        ->capture_default_str();
}

std::vector<SensorConfig> configs_from_specs(const std::vector<SensorSpec>& specs,
                                             const PipelineConfig& cfg) {
    std::vector<SensorConfig> out;
    for (const SensorSpec& spec : specs) {
        SensorConfig sc;
        sc.id = spec.id;
        sc.lanes = spec.lanes;
        sc.g = cfg.g_feet / units::kFeetPerMile;
        sc.T = cfg.T_seconds / units::kSecondsPerHour;
        sc.psi = cfg.psi;
        sc.validate();
        out.push_back(std::move(sc));
    }
    return out;
}

void print_report(const RunReport& rep) {
    std::printf("scenario %s, mode %s, seed %llu, %d periods\n", rep.scenario.c_str(), rep.mode.c_str(),
                static_cast<unsigned long long>(rep.seed), rep.periods);
    if (rep.sigma_flow > 0.0)
        std::printf("flow sensitivity %.6f, mechanism sigma %.6f, budget spent (%.6f, %.6f)\n",
                    rep.delta_f, rep.sigma_flow, rep.epsilon_total, rep.delta_total);
    auto metrics = [](const char* tag, double rmse, double rmse_free, double mode_err, double held) {
        std::printf("%-11s rmse %.4f  rmse(free) %.4f  mode errors %.4f  held %.4f\n", tag, rmse,
                    rmse_free, mode_err, held);
    };
    if (!std::isnan(rep.rmse_nonprivate))
        metrics("nonprivate", rep.rmse_nonprivate, rep.rmse_free_nonprivate,
                rep.mode_error_rate_nonprivate, rep.held_fraction_nonprivate);
    if (!std::isnan(rep.rmse_private))
        metrics("private", rep.rmse_private, rep.rmse_free_private, rep.mode_error_rate_private,
                rep.held_fraction_private);
    std::printf("runtime %.3f s\n", rep.runtime_seconds);
}

int cmd_run(const PipelineConfig& cfg) {
    RunArtifacts art = run_pipeline(cfg);
    write_run_artifacts(art, cfg.out_dir);
    print_report(art.report);
    std::printf("artifacts written to %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_simulate(const PipelineConfig& cfg) {
    cfg.validate();
    Scenario sc = scenario_library(cfg.scenario, cfg);
    std::vector<DensityState> truth =
        simulate(sc.geom, cfg.fd(), sc.init, sc.process_noise, sc.boundary, cfg.seed, sc.periods);
    std::filesystem::path out = cfg.out_dir;
    write_geometry_csv(out / "geometry.csv", sc.cells);
    write_sensors_csv(out / "sensors.csv", sc.sensor_specs);
    write_trajectory_csv(out / "ground_truth.csv", truth);
    emit_plot_data(out / "plot_truth.csv", sc.geom, truth);
    std::printf("simulated %d periods of '%s' into %s\n", sc.periods, sc.name.c_str(),
                cfg.out_dir.c_str());
    return 0;
}

int cmd_sense(const PipelineConfig& cfg, const std::string& geometry_path,
              const std::string& sensors_path, const std::string& truth_path, const std::string& out) {
    std::vector<CellSpec> cells = load_geometry_csv(geometry_path);
    std::vector<SensorSpec> specs = load_sensors_csv(sensors_path);
    RoadGeometry geom(cells, specs, cfg.T_seconds / units::kSecondsPerHour);
    FundamentalDiagram fd = cfg.fd();
    geom.validate(fd);
    std::vector<DensityState> truth = load_trajectory_csv(truth_path);
    std::vector<SensorConfig> configs = configs_from_specs(specs, cfg);
    auto rng = RngStream::derive(cfg.seed, "count-noise");
    std::vector<DetectorRecord> records =
        synthesize_detector_data(truth, geom, fd, configs, cfg.synthesis_options(), rng);
    write_detector_csv(out, records);
    std::printf("wrote %zu detector records to %s\n", records.size(), out.c_str());
    return 0;
}

int cmd_estimate(const PipelineConfig& cfg, const std::string& geometry_path,
                 const std::string& sensors_path, const std::string& detectors_path) {
    std::vector<CellSpec> cells = load_geometry_csv(geometry_path);
    std::vector<SensorSpec> specs = load_sensors_csv(sensors_path);
    RoadGeometry geom(cells, specs, cfg.T_seconds / units::kSecondsPerHour);
    FundamentalDiagram fd = cfg.fd();
    ZoneParams zp = cfg.zone_params();
    geom.validate(fd);
    std::vector<DetectorRecord> records = ingest_csv(detectors_path);
    if (records.empty()) throw std::runtime_error("no detector records in " + detectors_path);
    std::vector<SensorConfig> configs = configs_from_specs(specs, cfg);

    FlowSeries flows;
    OccDensitySeries densities;
    build_series(configs, records, flows, densities);
    int periods = 0;
    for (const DetectorRecord& r : records) periods = std::max(periods, r.k + 1);

    DensityState init{std::vector<double>(static_cast<std::size_t>(geom.state_size()),
                                          cfg.ekf_init_density),
                      0};
    std::filesystem::path out = cfg.out_dir;

    if (cfg.run_nonprivate()) {
        auto meas = density_measurements_nonprivate(fd, zp, configs, flows, densities, cfg.hmm_params());
        DensityMapResult map =
            build_density_map(geom, fd, meas, periods, cfg.ekf_options(), init, cfg.ekf_init_var);
        write_measurement_csv(out / "measurements_nonprivate.csv", meas);
        write_trajectory_csv(out / "density_nonprivate.csv", map.estimates);
        write_diagnostics_csv(out / "diagnostics_nonprivate.csv", map);
        emit_plot_data(out / "plot_nonprivate.csv", geom, map.estimates);
        std::printf("nonprivate estimate over %d periods written to %s\n", periods, cfg.out_dir.c_str());
    }
    if (cfg.run_private()) {
        auto rng = RngStream::derive(cfg.seed, "gauss-mech");
        PrivateMeasurements release = density_measurements_private(
            fd, zp, configs, flows, densities, cfg.hmm_params(), cfg.privacy(), cfg.flow_trend(), rng);
        DensityMapResult map = build_density_map(geom, fd, release.measurements, periods,
                                                 cfg.ekf_options(), init, cfg.ekf_init_var);
        write_measurement_csv(out / "measurements_private.csv", release.measurements);
        write_trajectory_csv(out / "density_private.csv", map.estimates);
        write_diagnostics_csv(out / "diagnostics_private.csv", map);
        emit_plot_data(out / "plot_private.csv", geom, map.estimates);
        write_privacy_json(out / "privacy.json", release);
        PrivacyParams total = release.ledger.total();
        std::printf("private estimate: sigma %.6f, budget spent (%.6f, %.6f), written to %s\n",
                    release.sigma, total.epsilon, total.delta, cfg.out_dir.c_str());
    }
    return 0;
}

int cmd_zones(const PipelineConfig& cfg, int lanes, const std::string& out) {
    FundamentalDiagram fd = cfg.fd();
    ZoneParams zp = cfg.zone_params();
    fd.validate();
    zp.validate();
    double T = cfg.T_seconds / units::kSecondsPerHour;
    double g = cfg.g_feet / units::kFeetPerMile;
    auto [lo, hi] = sensitive_interval(fd, zp);
    double alpha = private_alpha(fd, zp, lanes, T, g);
    double held_gap =
        fd.jam_density - alpha * (1.0 / fd.free_flow_speed + 1.0 / fd.congestion_wave_speed);
    std::printf("capacity               %12.6f veh/h/lane\n", fd.capacity());
    std::printf("critical density       %12.6f veh/mi/lane\n", fd.critical_density());
    std::printf("sensitive interval     [%.6f, %.6f] veh/h/lane\n", lo, hi);
    std::printf("alpha (lanes=%d)        %12.6f veh/h/lane\n", lanes, alpha);
    std::printf("held-mode density gap  %12.6f veh/mi/lane\n", held_gap);
    if (!out.empty()) {
        SensorConfig sc;
        sc.id = "station";
        sc.lanes = lanes;
        sc.g = g;
        sc.T = T;
        sc.psi = cfg.psi;
        write_zone_csv(out, fd, zp, {sc});
        std::printf("zone table written to %s\n", out.c_str());
    }
    return 0;
}

int cmd_audit_dp(const PipelineConfig& cfg, int stations, long long trials, int thresholds,
                 double sigma_scale) {
    std::vector<SensorSpec> specs;
    for (int s = 0; s < stations; ++s) specs.push_back(SensorSpec{"s" + std::to_string(s + 1), s, 4});
    std::vector<SensorConfig> configs = configs_from_specs(specs, cfg);
    double delta_f = flow_sensitivity(configs).delta_f;
    DpAuditOptions opt;
    opt.trials = trials;
    opt.thresholds = thresholds;
    opt.sigma_scale = sigma_scale;
    opt.seed = cfg.seed;
    DpAuditResult res = dp_audit_gaussian(delta_f, cfg.privacy(), opt);
    std::printf("stations %d, delta_f %.6f, audited sigma %.6f\n", stations, delta_f, res.sigma);
    std::printf("trials %lld x %d thresholds: %d violations (worst excess %.3f sigma)\n", res.trials,
                res.thresholds, res.violations, res.worst_excess_sigma);
    return res.violations == 0 ? 0 : 1;
}

int cmd_audit_mode(const PipelineConfig& cfg, long long trials, int periods) {
    FundamentalDiagram fd = cfg.fd();
    ZoneParams zp = cfg.zone_params();
    ModeAuditScenario scenario;
    scenario.sensor.id = "probe";
    scenario.sensor.lanes = 4;
    scenario.sensor.g = cfg.g_feet / units::kFeetPerMile;
    scenario.sensor.T = cfg.T_seconds / units::kSecondsPerHour;
    scenario.sensor.psi = cfg.psi;
    scenario.priv = cfg.privacy();
    scenario.flow_trend = cfg.flow_trend();
    double alpha = private_alpha(fd, zp, scenario.sensor.lanes, scenario.sensor.T, scenario.sensor.g);
    double phi = alpha - 50.0;
    scenario.flows.assign(static_cast<std::size_t>(periods), phi);
    scenario.occ_density.assign(static_cast<std::size_t>(periods), phi / fd.free_flow_speed);
    ModeAuditOptions opt;
    opt.trials = trials;
    opt.seed = cfg.seed;
    ModeAuditResult res = mode_equality_audit(fd, zp, scenario, opt);
    long long covered = 0;
    for (long long c : res.cell_coverage)
        if (c > 0) ++covered;
    std::printf("flow %.4f near alpha %.4f, %d periods, %d neighbors\n", phi, alpha, periods,
                res.adjacent_pairs);
    std::printf("comparisons %lld, same-cell %lld, violations %lld\n", res.comparisons, res.same_cell,
                res.violations);
    std::printf("occupancy-only neighbors %lld, mismatches %lld\n", res.occ_only_pairs,
                res.occ_only_mismatch);
    std::printf("zone cells covered %lld / %zu\n", covered, res.cell_coverage.size());
    return res.violations == 0 ? 0 : 1;
}

int cmd_audit_flip(const PipelineConfig& cfg, int lanes) {
    FundamentalDiagram fd = cfg.fd();
    ZoneParams zp = cfg.zone_params();
    double T = cfg.T_seconds / units::kSecondsPerHour;
    double g = cfg.g_feet / units::kFeetPerMile;
    double alpha = private_alpha(fd, zp, lanes, T, g);
    FlipSearchResult res = flip_bound_oracle(fd, zp, lanes, T, g);
    std::printf("closed-form alpha %.6f\n", alpha);
    if (res.found)
        std::printf("earliest exhibited flip at flow %.6f (step %.3f)\n", res.alpha_empirical,
                    res.flow_step);
    else
        std::printf("no flip found on the grid\n");
    return 0;
}

int cmd_audit_interval(const PipelineConfig& cfg) {
    FundamentalDiagram fd = cfg.fd();
    ZoneParams zp = cfg.zone_params();
    auto [lo, hi] = sensitive_interval(fd, zp);
    IntervalScanResult res = sensitive_interval_scan(fd, zp);
    std::printf("closed form  [%.6f, %.6f]\n", lo, hi);
    if (res.nonempty)
        std::printf("grid scan    [%.6f, %.6f] (step %.3f)\n", res.lo, res.hi, res.flow_step);
    else
        std::printf("grid scan found no overlap\n");
    return 0;
}

int cmd_report(const std::string& out_dir) {
    RunReport rep = load_report_json(std::filesystem::path(out_dir) / "report.json");
    print_report(rep);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentially private traffic density estimation from loop detectors"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI file; keys per subcommand section");

    PipelineConfig cfg;
    std::string geometry_path;
    std::string sensors_path;
    std::string truth_path;
    std::string detectors_path;
    std::string sense_out = "detectors.csv";
    std::string zones_out;
    int lanes = 4;
    int stations = 10;
    long long audit_trials = 200000;
    int audit_thresholds = 21;
    double sigma_scale = 1.0;
    long long mode_trials = 10000;
    int mode_periods = 2;

    CLI::App* run = app.add_subcommand("run", "Simulate, sense, release, and estimate end to end");
    bind_diagram_options(run, cfg);
    bind_sensing_options(run, cfg);
    bind_privacy_options(run, cfg);
    bind_estimator_options(run, cfg);
    bind_simulation_options(run, cfg);
    run->add_option("--mode", cfg.mode, "nonprivate, private, or both")
        ->check(CLI::IsMember({"nonprivate", "private", "both"}))
        ->capture_default_str();
    run->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
    run->add_option("--out-dir", cfg.out_dir, "Artifact directory")->capture_default_str();

    CLI::App* sim = app.add_subcommand("simulate", "Write ground truth for a built-in scenario");
    bind_diagram_options(sim, cfg);
    bind_sensing_options(sim, cfg);
    bind_simulation_options(sim, cfg);
    sim->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
    sim->add_option("--out-dir", cfg.out_dir, "Artifact directory")->capture_default_str();

    CLI::App* sense = app.add_subcommand("sense", "Synthesize detector records from a trajectory");
    bind_diagram_options(sense, cfg);
    bind_sensing_options(sense, cfg);
    sense->add_option("--geometry", geometry_path, "geometry.csv")->required();
    sense->add_option("--sensors", sensors_path, "sensors.csv")->required();
    sense->add_option("--truth", truth_path, "ground_truth.csv")->required();
    sense->add_option("--out", sense_out, "Output detector csv")->capture_default_str();
    sense->add_option("--count-noise", cfg.count_noise, "Detector count noise")
        ->check(CLI::IsMember({"round", "poisson"}))
        ->capture_default_str();
    sense->add_option("--occupancy-jitter", cfg.occupancy_jitter, "Occupancy noise stddev")
        ->capture_default_str();
    sense->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();

    CLI::App* est = app.add_subcommand("estimate", "Estimate densities from detector records");
    bind_diagram_options(est, cfg);
    bind_sensing_options(est, cfg);
    bind_privacy_options(est, cfg);
    bind_estimator_options(est, cfg);
    est->add_option("--geometry", geometry_path, "geometry.csv")->required();
    est->add_option("--sensors", sensors_path, "sensors.csv")->required();
    est->add_option("--detectors", detectors_path, "detector csv")->required();
    est->add_option("--mode", cfg.mode, "nonprivate, private, or both")
        ->check(CLI::IsMember({"nonprivate", "private", "both"}))
        ->capture_default_str();
    est->add_option("--seed", cfg.seed, "Master seed (mechanism noise)")->capture_default_str();
    est->add_option("--out-dir", cfg.out_dir, "Artifact directory")->capture_default_str();

    CLI::App* zones = app.add_subcommand("zones", "Print zone geometry for the current parameters");
    bind_diagram_options(zones, cfg);
    bind_sensing_options(zones, cfg);
    zones->add_option("--lanes", lanes, "Lanes at the station")->capture_default_str();
    zones->add_option("--out", zones_out, "Optional zone csv to write");

    CLI::App* audit = app.add_subcommand("audit", "Empirical checks of the privacy machinery");
    audit->require_subcommand(1);

    CLI::App* audit_dp = audit->add_subcommand("dp", "Gaussian mechanism inequality audit");
    bind_sensing_options(audit_dp, cfg);
    bind_privacy_options(audit_dp, cfg);
    audit_dp->add_option("--stations", stations, "Stations in the released vector")
        ->capture_default_str();
    audit_dp->add_option("--trials", audit_trials, "Monte Carlo draws per input")->capture_default_str();
    audit_dp->add_option("--thresholds", audit_thresholds, "Threshold grid size")->capture_default_str();
    audit_dp->add_option("--sigma-scale", sigma_scale, "Scale on the calibrated noise (<1 weakens)")
        ->capture_default_str();
    audit_dp->add_option("--seed", cfg.seed, "Audit seed")->capture_default_str();

    CLI::App* audit_mode = audit->add_subcommand("mode", "Mode release neighbor-equality audit");
    bind_diagram_options(audit_mode, cfg);
    bind_sensing_options(audit_mode, cfg);
    bind_privacy_options(audit_mode, cfg);
    audit_mode->add_option("--trials", mode_trials, "Noise draws")->capture_default_str();
    audit_mode->add_option("--periods", mode_periods, "Periods in the toy dataset (<= 8)")
        ->capture_default_str();
    audit_mode->add_option("--seed", cfg.seed, "Audit seed")->capture_default_str();

    CLI::App* audit_flip = audit->add_subcommand("flip", "Brute-force search for branch flips");
    bind_diagram_options(audit_flip, cfg);
    bind_sensing_options(audit_flip, cfg);
    audit_flip->add_option("--lanes", lanes, "Lanes at the station")->capture_default_str();

    CLI::App* audit_interval = audit->add_subcommand("interval", "Grid scan of the ambiguous flow range");
    bind_diagram_options(audit_interval, cfg);
    bind_sensing_options(audit_interval, cfg);

    CLI::App* report = app.add_subcommand("report", "Print the report of a finished run");
    report->add_option("--out-dir", cfg.out_dir, "Artifact directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(cfg);
        if (sim->parsed()) return cmd_simulate(cfg);
        if (sense->parsed()) return cmd_sense(cfg, geometry_path, sensors_path, truth_path, sense_out);
        if (est->parsed()) return cmd_estimate(cfg, geometry_path, sensors_path, detectors_path);
        if (zones->parsed()) return cmd_zones(cfg, lanes, zones_out);
        if (audit->parsed()) {
            if (audit_dp->parsed())
                return cmd_audit_dp(cfg, stations, audit_trials, audit_thresholds, sigma_scale);
            if (audit_mode->parsed()) return cmd_audit_mode(cfg, mode_trials, mode_periods);
            if (audit_flip->parsed()) return cmd_audit_flip(cfg, lanes);
            if (audit_interval->parsed()) return cmd_audit_interval(cfg);
        }
        if (report->parsed()) return cmd_report(cfg.out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
