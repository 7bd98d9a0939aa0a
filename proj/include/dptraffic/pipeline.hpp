#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dptraffic/ctm.hpp"
#include "dptraffic/detector.hpp"
#include "dptraffic/dp.hpp"
#include "dptraffic/ekf.hpp"
#include "dptraffic/mode.hpp"
#include "dptraffic/road.hpp"
#include "dptraffic/zones.hpp"

namespace dptraffic {

/**
 * Full configuration of an end-to-end run: simulate -> sense -> release ->
 * estimate. Every field maps one-to-one onto a CLI flag / INI key, so the
 * defaults here are the tool's defaults.
 */
struct PipelineConfig {
    // fundamental diagram
    double free_flow_speed = 65.0;        // [mi/h]
    double congestion_wave_speed = 11.6;  // [mi/h]
    double jam_density = 193.0;           // [veh/mi/lane]

    // zone analysis
    double zeta = 0.51;  // log-band half-width
    double psi = 0.25;   // per-vehicle occupancy bound

    // detector hardware
    double g_feet = 20.0;     // effective vehicle length [ft]
    double T_seconds = 30.0;  // sampling period [s]

    // privacy budget, charged once per released series
    double epsilon = 0.6931471805599453;  // ln 2
    double delta = 0.05;
    std::string sensitive_rule = "hold";  // "hold" | "flow-trend" above alpha

    // simulation process noise [veh/mi/lane]
    double sigma_interior = 0.5;
    double sigma_ghost = 2.0;

    // detector synthesis
    std::string count_noise = "round";  // "round" | "poisson"
    double occupancy_jitter = 0.0;

    // mode filter
    double hmm_pi1 = 0.01;
    double hmm_pi2_decisive = 0.95;
    double hmm_pi2_hold = 0.60;

    // density estimator
    double ekf_q_interior = 1.0;
    double ekf_q_ghost = 25.0;
    double ekf_r_base = 1.0;
    double ekf_nondecisive_r_scale = 4.0;
    double ekf_offside_r_extra = 10000.0;
    double ekf_init_density = 20.0;  // flat initial mean [veh/mi/lane]
    double ekf_init_var = 100.0;

    // run selection
    std::string scenario = "wave";  // "free" | "jam" | "wave" | "rush"
    std::string mode = "both";      // "nonprivate" | "private" | "both"
    std::uint64_t seed = 1;
    int periods = 360;
    std::string out_dir = "out";

    FundamentalDiagram fd() const;
    ZoneParams zone_params() const;
    HmmParams hmm_params() const;
    EkfOptions ekf_options() const;
    PrivacyParams privacy() const;
    SynthesisOptions synthesis_options() const;
    bool run_nonprivate() const { return mode != "private"; }
    bool run_private() const { return mode != "nonprivate"; }
    bool flow_trend() const { return sensitive_rule == "flow-trend"; }

    void validate() const;  // throws std::invalid_argument
};

/** A named ground-truth setup: road, initial state, boundary forcing,
 *  process noise, and the detector stations installed on it. */
struct Scenario {
    std::string name;
    std::vector<CellSpec> cells;
    std::vector<SensorSpec> sensor_specs;
    RoadGeometry geom;
    DensityState init;
    BoundaryProfile boundary;
    ProcessNoiseConfig process_noise;
    std::vector<SensorConfig> sensor_configs;
    int periods = 0;
};

/**
 * Built-in scenarios, all on a 20-cell, 0.55 mi, 4-lane road with ten
 * stations (dt = T keeps the CFL bound with margin):
 *   free: light uniform traffic, both boundaries steady.
 *   jam:  dense uniform traffic, both boundaries steady.
 *   wave: a downstream blockage rises, holds, and clears, sending a
 *         congestion wave upstream through the sensor line.
 *   rush: inflow swells until station flows cross the robust-range cap
 *         while the road itself stays uncongested.
 * Throws std::invalid_argument for unknown names.
 */
Scenario scenario_library(const std::string& name, const PipelineConfig& cfg);

/** Summary metrics of one run. Estimator metrics are NaN for the paths that
 *  did not run; NaN fields are omitted from the JSON form. */
struct RunReport {
    std::string scenario;
    std::string mode;
    std::uint64_t seed = 0;
    int periods = 0;

    double delta_f = 0.0;     // L2 flow sensitivity [veh/h/lane]
    double sigma_flow = 0.0;  // mechanism noise scale [veh/h/lane]
    double epsilon_total = 0.0;
    double delta_total = 0.0;

    double rmse_nonprivate = 0.0;
    double rmse_free_nonprivate = 0.0;
    double mode_error_rate_nonprivate = 0.0;
    double held_fraction_nonprivate = 0.0;

    double rmse_private = 0.0;
    double rmse_free_private = 0.0;
    double mode_error_rate_private = 0.0;
    double held_fraction_private = 0.0;

    double runtime_seconds = 0.0;
};

/** Everything produced by one run, kept in memory for tests and tooling. */
struct RunArtifacts {
    PipelineConfig config;
    Scenario scenario;
    std::vector<DensityState> truth;  // periods + 1 states
    std::vector<DetectorRecord> records;
    FlowSeries flows;
    OccDensitySeries densities;

    std::vector<DensityPseudoMeasurement> nonprivate_measurements;
    DensityMapResult nonprivate_map;

    PrivateMeasurements private_release;
    DensityMapResult private_map;

    RunReport report;
};

/**
 * Runs the full chain. Independent noise streams are derived from the master
 * seed under the labels "sim-noise", "count-noise", and "gauss-mech", so the
 * simulated truth and detector records are identical across the three run
 * modes. Detector records are generated for periods 0..periods-1.
 */
RunArtifacts run_pipeline(const PipelineConfig& cfg);

/** Writes every artifact of a finished run under `out_dir`; see the README
 *  for the file list. All files except report.json (which embeds the wall
 *  clock runtime) are byte-identical across reruns with one seed. */
void write_run_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& out_dir);

// ============================================================================
// Metrics
// ============================================================================

/** RMSE of interior-cell estimates against the truth, over all estimate
 *  periods. `free_only` keeps only cells whose true density is below the
 *  critical density. Returns NaN when nothing matches. */
double density_rmse(const RoadGeometry& geom, const FundamentalDiagram& fd,
                    const std::vector<DensityState>& truth, const std::vector<DensityState>& estimates,
                    bool free_only);

/** Fraction of measurements whose filtered mode disagrees with the true mode
 *  at the station (mean of the two adjacent cells vs the critical density). */
double mode_error_rate(const RoadGeometry& geom, const FundamentalDiagram& fd,
                       const std::vector<DensityState>& truth,
                       const std::vector<DensityPseudoMeasurement>& measurements);

/** Fraction of measurements whose raw evidence was non-decisive. */
double held_fraction(const std::vector<DensityPseudoMeasurement>& measurements);

// ============================================================================
// Artifact writers / readers
// ============================================================================

// zone csv:        sensor_id,capacity,sensitive_lo,sensitive_hi,alpha
// measurement csv: k,sensor_id,pseudo_flow,raw_mode,filtered_mode,decisive,belief,z,z_noise_sd
// diagnostics csv: k,trace_cov,innovation_norm
// plot csv:        k,cell_midpoint_mi,density   (interior cells only)

void write_zone_csv(const std::filesystem::path& path, const FundamentalDiagram& fd,
                    const ZoneParams& zp, const std::vector<SensorConfig>& configs);

void write_measurement_csv(const std::filesystem::path& path,
                           const std::vector<DensityPseudoMeasurement>& measurements);

void write_diagnostics_csv(const std::filesystem::path& path, const DensityMapResult& map);

void emit_plot_data(const std::filesystem::path& path, const RoadGeometry& geom,
                    const std::vector<DensityState>& states);

void write_privacy_json(const std::filesystem::path& path, const PrivateMeasurements& release);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);
void write_report_json(const std::filesystem::path& path, const RunReport& report);
RunReport load_report_json(const std::filesystem::path& path);

}  // namespace dptraffic
