#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dptraffic/ctm.hpp"
#include "dptraffic/fundamental_diagram.hpp"
#include "dptraffic/rng.hpp"
#include "dptraffic/road.hpp"
#include "dptraffic/units.hpp"

namespace dptraffic {

/** One lane of one detector station over one sampling period. */
struct DetectorRecord {
    int k = 0;               // sampling period index
    std::string sensor_id;
    int lane = 0;            // 0-based lane within the station
    int count = 0;           // vehicles passing during the period
    double occupancy = 0.0;  // fraction of the period the loop was occupied, [0,1]
};

/** Measurement parameters of one detector station. */
struct SensorConfig {
    std::string id;
    int lanes = 4;
    double g = 20.0 / units::kFeetPerMile;    // effective vehicle length [mi]
    double T = 30.0 / units::kSecondsPerHour; // sampling period [h]
    double psi = 0.25;                        // per-vehicle occupancy bound used in adjacency analysis

    void validate() const;
};

// period -> value, one series per sensor
using PeriodSeries = std::map<int, double>;
using FlowSeries = std::map<std::string, PeriodSeries>;        // [veh/h/lane]
using OccDensitySeries = std::map<std::string, PeriodSeries>;  // [veh/mi/lane]

/** Lane-aggregated flow for one station and one period:
 *  phi = (1 / (lanes * T)) * sum of counts, in veh/h/lane.
 *  All records must share one sensor and period; counts must be >= 0. */
double aggregate_flow(const SensorConfig& cfg, std::span<const DetectorRecord> records);

/** Occupancy-implied density for one station and one period:
 *  y = (1 / (g * lanes)) * sum of occupancies, in veh/mi/lane. */
double occupancy_density(const SensorConfig& cfg, std::span<const DetectorRecord> records);

/** Groups records by (sensor, period) and evaluates both aggregates. */
void build_series(const std::vector<SensorConfig>& configs, const std::vector<DetectorRecord>& records,
                  FlowSeries& flows, OccDensitySeries& densities);

enum class CountNoise { Round, Poisson };

struct SynthesisOptions {
    CountNoise count_noise = CountNoise::Round;
    double occupancy_jitter = 0.0;  // additive Gaussian stddev on per-lane occupancy, truncated to [0,1]
};

/**
 * Generates per-lane detector records from a simulated trajectory. For a
 * station on interface i, the per-lane count over a period is the Godunov
 * interface flux times T (rounded or Poisson-sampled), and the per-lane
 * occupancy is g times the mean of the two adjacent cell densities. One
 * record set is emitted per trajectory state, keyed by its period index.
 * Callers pass a stream derived specifically for detector noise so that
 * toggling other noise sources leaves the records unchanged.
 */
std::vector<DetectorRecord> synthesize_detector_data(const std::vector<DensityState>& trajectory,
                                                     const RoadGeometry& geom,
                                                     const FundamentalDiagram& fd,
                                                     const std::vector<SensorConfig>& configs,
                                                     const SynthesisOptions& options, RngStream& rng);

// detector csv: k,sensor_id,lane,count,occupancy  ('#' comment lines ignored)
std::vector<DetectorRecord> ingest_csv(const std::filesystem::path& path);
void write_detector_csv(const std::filesystem::path& path, const std::vector<DetectorRecord>& records);

/** Looks up the config for a sensor id; throws std::invalid_argument if absent. */
const SensorConfig& config_for(const std::vector<SensorConfig>& configs, const std::string& id);

}  // namespace dptraffic
