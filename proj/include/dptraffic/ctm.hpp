#pragma once

#include <cstdint>
#include <vector>

#include "dptraffic/fundamental_diagram.hpp"
#include "dptraffic/rng.hpp"
#include "dptraffic/road.hpp"

namespace dptraffic {

/** Zero-mean Gaussian process noise added after the conservation update.
 *  Interior cells use sigma_interior; ghost cells random-walk with
 *  sigma_ghost. A non-empty per_cell vector (size I+2) overrides both. */
struct ProcessNoiseConfig {
    double sigma_interior = 0.0;  // [veh/mi/lane]
    double sigma_ghost = 0.0;     // [veh/mi/lane]
    std::vector<double> per_cell;

    double stddev(int i, int interior_cells) const;
    void validate(int interior_cells) const;
};

/** Per-period ghost densities. A non-empty vector pins that boundary to the
 *  given profile (index = period); an empty one leaves the ghost on its
 *  noise-driven random walk. */
struct BoundaryProfile {
    std::vector<double> upstream;
    std::vector<double> downstream;
};

/**
 * Deterministic conservation update, unclamped and noise-free: interior cell
 * i gains its upstream interface flux (rescaled by the interface lane ratio)
 * and loses its downstream interface flux; ghost entries map to themselves.
 * Shared by the simulator, the density estimator's prediction step, and the
 * Jacobian checks. Input densities must lie in [0, jam].
 */
std::vector<double> ctm_map(const RoadGeometry& geom, const FundamentalDiagram& fd,
                            const std::vector<double>& rho);

/** One stochastic step: ctm_map, plus process noise, clamped to [0, jam]. */
DensityState ctm_step(const RoadGeometry& geom, const FundamentalDiagram& fd, const DensityState& state,
                      const ProcessNoiseConfig& noise, RngStream& rng);

/**
 * Runs `periods` steps from `init`, returning the trajectory including the
 * initial state (periods+1 entries). Boundary profiles, when present, pin
 * the ghost densities each period (profile[k] is in force at period k) and
 * must therefore carry at least periods+1 entries.
 * Simulation noise is drawn from a stream derived from `seed` under the
 * label "sim-noise" so other consumers of the same master seed stay
 * decoupled.
 */
std::vector<DensityState> simulate(const RoadGeometry& geom, const FundamentalDiagram& fd,
                                   const DensityState& init, const ProcessNoiseConfig& noise,
                                   const BoundaryProfile& boundary, std::uint64_t seed, int periods);

/** Total vehicles on the interior cells: sum lanes * length * density. */
double interior_vehicle_count(const RoadGeometry& geom, const std::vector<double>& rho);

}  // namespace dptraffic
