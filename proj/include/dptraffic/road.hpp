#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dptraffic/fundamental_diagram.hpp"

namespace dptraffic {

/** One interior cell of the discretized road. */
struct CellSpec {
    double length = 0.5;  // [mi]
    int lanes = 4;
};

/** A single-loop detector station sitting on the interface between cell
 *  `interface_index` and cell `interface_index + 1` (0 = upstream ghost
 *  boundary, I = downstream ghost boundary). */
struct SensorSpec {
    std::string id;
    int interface_index = 0;
    int lanes = 4;
};

/**
 * Road discretization. Interior cells are indexed 1..I; indices 0 and I+1
 * are ghost cells whose densities evolve as boundary states rather than by
 * the conservation update. State vectors therefore have I+2 entries.
 *
 * Interface i (between cells i and i+1, for i in 0..I) carries the lane
 * count of its upstream cell; ghost cells inherit the lane count of the
 * adjacent interior cell. This convention keeps per-lane mass bookkeeping
 * exactly telescoping across lane drops.
 */
class RoadGeometry {
public:
    RoadGeometry(std::vector<CellSpec> cells, std::vector<SensorSpec> sensors, double dt_hours);

    int interior_cells() const { return static_cast<int>(cells_.size()); }
    int state_size() const { return interior_cells() + 2; }
    double dt() const { return dt_; }

    /** Cell length; ghost indices return the adjacent interior cell's length. */
    double cell_length(int i) const;
    /** Lane count of cell i, i in [0, I+1]. */
    int cell_lanes(int i) const;
    /** Lane count at interface i -> i+1, i in [0, I]. */
    int interface_lanes(int i) const { return cell_lanes(i); }

    const std::vector<SensorSpec>& sensors() const { return sensors_; }
    const SensorSpec& sensor(const std::string& id) const;

    /** Structural checks plus the CFL condition v * dt <= min cell length.
     *  Throws std::invalid_argument on violation. */
    void validate(const FundamentalDiagram& fd) const;

private:
    std::vector<CellSpec> cells_;
    std::vector<SensorSpec> sensors_;
    double dt_;
};

/** Density profile over all cells including ghosts, at period k. */
struct DensityState {
    std::vector<double> rho;  // size I+2, [veh/mi/lane]
    int k = 0;
};

// ============================================================================
// File formats
// ============================================================================

// geometry csv:  cell_index,length_mi,lanes     (interior cells 1..I, in order)
// sensors csv:   sensor_id,interface_index,lanes
// trajectory csv: k,cell_0,...,cell_{I+1}       (densities, 6 decimals)

std::vector<CellSpec> load_geometry_csv(const std::filesystem::path& path);
std::vector<SensorSpec> load_sensors_csv(const std::filesystem::path& path);
void write_geometry_csv(const std::filesystem::path& path, const std::vector<CellSpec>& cells);
void write_sensors_csv(const std::filesystem::path& path, const std::vector<SensorSpec>& sensors);

std::vector<DensityState> load_trajectory_csv(const std::filesystem::path& path);
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<DensityState>& trajectory);

}  // namespace dptraffic
