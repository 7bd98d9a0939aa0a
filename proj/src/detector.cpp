#include "dptraffic/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dptraffic/csv.hpp"

namespace dptraffic {

void SensorConfig::validate() const {
    if (id.empty()) throw std::invalid_argument("sensor config: empty id");
    if (lanes < 1) throw std::invalid_argument("sensor config '" + id + "': lanes must be >= 1");
    if (!(g > 0.0)) throw std::invalid_argument("sensor config '" + id + "': g must be positive");
    if (!(T > 0.0)) throw std::invalid_argument("sensor config '" + id + "': T must be positive");
    if (psi < 0.0 || psi > 1.0)
        throw std::invalid_argument("sensor config '" + id + "': psi must lie in [0, 1]");
}

namespace {

void check_group(const SensorConfig& cfg, std::span<const DetectorRecord> records) {
    if (records.empty()) throw std::invalid_argument("detector aggregate: empty record group");
    std::vector<bool> seen(static_cast<std::size_t>(cfg.lanes), false);
    for (const auto& r : records) {
        if (r.sensor_id != records.front().sensor_id || r.k != records.front().k)
            throw std::invalid_argument("detector aggregate: records span mixed sensors or periods");
        if (r.sensor_id != cfg.id)
            throw std::invalid_argument("detector aggregate: records for '" + r.sensor_id +
                                        "' passed with config '" + cfg.id + "'");
        if (r.lane < 0 || r.lane >= cfg.lanes)
            throw std::invalid_argument("detector aggregate: lane " + std::to_string(r.lane) +
                                        " outside sensor '" + cfg.id + "' lane range");
        if (seen[static_cast<std::size_t>(r.lane)])
            throw std::invalid_argument("detector aggregate: duplicate lane " + std::to_string(r.lane));
        seen[static_cast<std::size_t>(r.lane)] = true;
        if (r.count < 0) throw std::invalid_argument("detector aggregate: negative count");
        if (r.occupancy < 0.0 || r.occupancy > 1.0)
            throw std::invalid_argument("detector aggregate: occupancy outside [0, 1]");
    }
    for (int lane = 0; lane < cfg.lanes; ++lane)
        if (!seen[static_cast<std::size_t>(lane)])
            throw std::invalid_argument("detector aggregate: sensor '" + cfg.id + "' period " +
                                        std::to_string(records.front().k) + " is missing lane " +
                                        std::to_string(lane));
}

}  // namespace

double aggregate_flow(const SensorConfig& cfg, std::span<const DetectorRecord> records) {
    cfg.validate();
    check_group(cfg, records);
    double total = 0.0;
    for (const auto& r : records) total += static_cast<double>(r.count);
    return total / (static_cast<double>(cfg.lanes) * cfg.T);
}

double occupancy_density(const SensorConfig& cfg, std::span<const DetectorRecord> records) {
    cfg.validate();
    check_group(cfg, records);
    double total = 0.0;
    for (const auto& r : records) total += r.occupancy;
    return total / (cfg.g * static_cast<double>(cfg.lanes));
}

void build_series(const std::vector<SensorConfig>& configs, const std::vector<DetectorRecord>& records,
                  FlowSeries& flows, OccDensitySeries& densities) {
    // group by (sensor, period)
    std::map<std::pair<std::string, int>, std::vector<DetectorRecord>> groups;
    for (const auto& r : records) groups[{r.sensor_id, r.k}].push_back(r);
    flows.clear();
    densities.clear();
    for (auto& [key, group] : groups) {
        const auto& cfg = config_for(configs, key.first);
        flows[key.first][key.second] = aggregate_flow(cfg, group);
        densities[key.first][key.second] = occupancy_density(cfg, group);
    }
}

std::vector<DetectorRecord> synthesize_detector_data(const std::vector<DensityState>& trajectory,
                                                     const RoadGeometry& geom,
                                                     const FundamentalDiagram& fd,
                                                     const std::vector<SensorConfig>& configs,
                                                     const SynthesisOptions& options, RngStream& rng) {
    std::vector<DetectorRecord> records;
    for (const auto& state : trajectory) {
        if (state.rho.size() != static_cast<std::size_t>(geom.state_size()))
            throw std::invalid_argument("synthesize_detector_data: state size mismatch at period " +
                                        std::to_string(state.k));
        for (const auto& sensor : geom.sensors()) {
            const auto& cfg = config_for(configs, sensor.id);
            cfg.validate();
            int i = sensor.interface_index;
            double rho_up = state.rho[static_cast<std::size_t>(i)];
            double rho_down = state.rho[static_cast<std::size_t>(i) + 1];
            double flux = godunov_flux(fd, rho_up, rho_down);  // [veh/h/lane]
            double mean_count = flux * cfg.T;
            double density = 0.5 * (rho_up + rho_down);
            for (int lane = 0; lane < cfg.lanes; ++lane) {
                DetectorRecord rec;
                rec.k = state.k;
                rec.sensor_id = sensor.id;
                rec.lane = lane;
                rec.count = options.count_noise == CountNoise::Poisson
                                ? rng.poisson(mean_count)
                                : static_cast<int>(std::lround(mean_count));
                double occ = cfg.g * density;
                if (options.occupancy_jitter > 0.0) occ += rng.normal(0.0, options.occupancy_jitter);
                rec.occupancy = std::clamp(occ, 0.0, 1.0);
                records.push_back(std::move(rec));
            }
        }
    }
    return records;
}

std::vector<DetectorRecord> ingest_csv(const std::filesystem::path& path) {
    auto table = csv::read_file(path);
    std::vector<DetectorRecord> records;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::string ctx = path.string() + " line " + std::to_string(table.line_numbers[r]);
        const auto& row = table.rows[r];
        if (row.size() != 5) throw std::runtime_error(ctx + ": expected 5 fields, got " + std::to_string(row.size()));
        DetectorRecord rec;
        rec.k = static_cast<int>(csv::parse_long(row[0], ctx));
        rec.sensor_id = row[1];
        rec.lane = static_cast<int>(csv::parse_long(row[2], ctx));
        rec.count = static_cast<int>(csv::parse_long(row[3], ctx));
        rec.occupancy = csv::parse_double(row[4], ctx);
        if (rec.k < 0) throw std::runtime_error(ctx + ": negative period index");
        if (rec.sensor_id.empty()) throw std::runtime_error(ctx + ": empty sensor id");
        if (rec.count < 0) throw std::runtime_error(ctx + ": negative count");
        if (rec.occupancy < 0.0 || rec.occupancy > 1.0)
            throw std::runtime_error(ctx + ": occupancy outside [0, 1]");
        records.push_back(std::move(rec));
    }
    return records;
}

void write_detector_csv(const std::filesystem::path& path, const std::vector<DetectorRecord>& records) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : records)
        rows.push_back({std::to_string(r.k), r.sensor_id, std::to_string(r.lane),
                        std::to_string(r.count), csv::format(r.occupancy)});
    csv::write_file(path, {"k", "sensor_id", "lane", "count", "occupancy"}, rows);
}

const SensorConfig& config_for(const std::vector<SensorConfig>& configs, const std::string& id) {
    auto it = std::find_if(configs.begin(), configs.end(),
                           [&](const SensorConfig& c) { return c.id == id; });
    if (it == configs.end())
        throw std::invalid_argument("no sensor config for id '" + id + "'");
    return *it;
}

}  // namespace dptraffic
