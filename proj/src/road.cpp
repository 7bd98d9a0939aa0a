#include "dptraffic/road.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "dptraffic/csv.hpp"

namespace dptraffic {

RoadGeometry::RoadGeometry(std::vector<CellSpec> cells, std::vector<SensorSpec> sensors, double dt_hours)
    : cells_(std::move(cells)), sensors_(std::move(sensors)), dt_(dt_hours) {
    if (cells_.empty()) throw std::invalid_argument("road geometry: at least one interior cell required");
    if (!(dt_ > 0.0)) throw std::invalid_argument("road geometry: dt must be positive");
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        if (!(cells_[i].length > 0.0))
            throw std::invalid_argument("road geometry: cell " + std::to_string(i + 1) +
                                        " has non-positive length");
        if (cells_[i].lanes < 1)
            throw std::invalid_argument("road geometry: cell " + std::to_string(i + 1) +
                                        " has fewer than one lane");
    }
    std::set<std::string> ids;
    for (const auto& s : sensors_) {
        if (s.id.empty()) throw std::invalid_argument("road geometry: sensor with empty id");
        if (!ids.insert(s.id).second)
            throw std::invalid_argument("road geometry: duplicate sensor id '" + s.id + "'");
        if (s.interface_index < 0 || s.interface_index > interior_cells())
            throw std::invalid_argument("road geometry: sensor '" + s.id + "' interface " +
                                        std::to_string(s.interface_index) + " outside [0, " +
                                        std::to_string(interior_cells()) + "]");
        if (s.lanes < 1)
            throw std::invalid_argument("road geometry: sensor '" + s.id + "' has fewer than one lane");
    }
}

double RoadGeometry::cell_length(int i) const {
    int I = interior_cells();
    if (i < 0 || i > I + 1) throw std::out_of_range("cell_length: index " + std::to_string(i));
    if (i == 0) return cells_.front().length;
    if (i == I + 1) return cells_.back().length;
    return cells_[static_cast<std::size_t>(i) - 1].length;
}

int RoadGeometry::cell_lanes(int i) const {
    int I = interior_cells();
    if (i < 0 || i > I + 1) throw std::out_of_range("cell_lanes: index " + std::to_string(i));
    if (i == 0) return cells_.front().lanes;
    if (i == I + 1) return cells_.back().lanes;
    return cells_[static_cast<std::size_t>(i) - 1].lanes;
}

const SensorSpec& RoadGeometry::sensor(const std::string& id) const {
    auto it = std::find_if(sensors_.begin(), sensors_.end(),
                           [&](const SensorSpec& s) { return s.id == id; });
    if (it == sensors_.end()) throw std::invalid_argument("unknown sensor id '" + id + "'");
    return *it;
}

void RoadGeometry::validate(const FundamentalDiagram& fd) const {
    fd.validate();
    double min_dx = cells_.front().length;
    for (const auto& c : cells_) min_dx = std::min(min_dx, c.length);
    double fastest = std::max(fd.free_flow_speed, fd.congestion_wave_speed);
    if (fastest * dt_ > min_dx + 1e-12)
        throw std::invalid_argument("road geometry: CFL violation, speed " + std::to_string(fastest) +
                                    " * dt " + std::to_string(dt_) + " exceeds min cell length " +
                                    std::to_string(min_dx));
}

// ============================================================================
// CSV
// ============================================================================

std::vector<CellSpec> load_geometry_csv(const std::filesystem::path& path) {
    auto table = csv::read_file(path);
    std::vector<CellSpec> cells;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::string ctx = path.string() + " line " + std::to_string(table.line_numbers[r]);
        const auto& row = table.rows[r];
        if (row.size() != 3) throw std::runtime_error(ctx + ": expected 3 fields, got " + std::to_string(row.size()));
        long idx = csv::parse_long(row[0], ctx);
        if (idx != static_cast<long>(cells.size()) + 1)
            throw std::runtime_error(ctx + ": cell_index must run 1..I in order, got " + row[0]);
        CellSpec c;
        c.length = csv::parse_double(row[1], ctx);
        c.lanes = static_cast<int>(csv::parse_long(row[2], ctx));
        cells.push_back(c);
    }
    if (cells.empty()) throw std::runtime_error(path.string() + ": no cells");
    return cells;
}

std::vector<SensorSpec> load_sensors_csv(const std::filesystem::path& path) {
    auto table = csv::read_file(path);
    std::vector<SensorSpec> sensors;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::string ctx = path.string() + " line " + std::to_string(table.line_numbers[r]);
        const auto& row = table.rows[r];
        if (row.size() != 3) throw std::runtime_error(ctx + ": expected 3 fields, got " + std::to_string(row.size()));
        SensorSpec s;
        s.id = row[0];
        s.interface_index = static_cast<int>(csv::parse_long(row[1], ctx));
        s.lanes = static_cast<int>(csv::parse_long(row[2], ctx));
        sensors.push_back(std::move(s));
    }
    return sensors;
}

void write_geometry_csv(const std::filesystem::path& path, const std::vector<CellSpec>& cells) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < cells.size(); ++i)
        rows.push_back({std::to_string(i + 1), csv::format(cells[i].length), std::to_string(cells[i].lanes)});
    csv::write_file(path, {"cell_index", "length_mi", "lanes"}, rows);
}

void write_sensors_csv(const std::filesystem::path& path, const std::vector<SensorSpec>& sensors) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : sensors)
        rows.push_back({s.id, std::to_string(s.interface_index), std::to_string(s.lanes)});
    csv::write_file(path, {"sensor_id", "interface_index", "lanes"}, rows);
}

std::vector<DensityState> load_trajectory_csv(const std::filesystem::path& path) {
    auto table = csv::read_file(path);
    if (table.header.size() < 3)
        throw std::runtime_error(path.string() + ": trajectory needs k plus at least ghost+interior+ghost columns");
    std::size_t ncells = table.header.size() - 1;
    std::vector<DensityState> traj;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::string ctx = path.string() + " line " + std::to_string(table.line_numbers[r]);
        const auto& row = table.rows[r];
        if (row.size() != ncells + 1)
            throw std::runtime_error(ctx + ": expected " + std::to_string(ncells + 1) + " fields");
        DensityState st;
        st.k = static_cast<int>(csv::parse_long(row[0], ctx));
        st.rho.reserve(ncells);
        for (std::size_t c = 1; c < row.size(); ++c) st.rho.push_back(csv::parse_double(row[c], ctx));
        traj.push_back(std::move(st));
    }
    return traj;
}

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<DensityState>& trajectory) {
    std::vector<std::string> header{"k"};
    if (!trajectory.empty())
        for (std::size_t i = 0; i < trajectory.front().rho.size(); ++i)
            header.push_back("cell_" + std::to_string(i));
    std::vector<std::vector<std::string>> rows;
    for (const auto& st : trajectory) {
        std::vector<std::string> row{std::to_string(st.k)};
        for (double v : st.rho) row.push_back(csv::format(v));
        rows.push_back(std::move(row));
    }
    csv::write_file(path, header, rows);
}

}  // namespace dptraffic
