#pragma once

namespace dptraffic {

/**
 * Triangular flow-density relation for a road segment.
 *
 * Flow rises linearly at the free-flow speed up to the critical density and
 * falls back to zero at the jam density along the congestion wave slope.
 * Units: speeds mi/h, densities veh/mi/lane, flows veh/h/lane.
 */
struct FundamentalDiagram {
    double free_flow_speed = 65.0;        // v      [mi/h]
    double congestion_wave_speed = 11.6;  // w      [mi/h]
    double jam_density = 193.0;           // rho_max [veh/mi/lane]

    double critical_density() const {
        return congestion_wave_speed * jam_density / (free_flow_speed + congestion_wave_speed);
    }

    double capacity() const { return free_flow_speed * critical_density(); }

    /** Throws std::invalid_argument unless all three parameters are positive. */
    void validate() const;
};

/** Flow at density rho. Throws std::domain_error outside [0, jam_density]. */
double fd_flow(const FundamentalDiagram& fd, double rho);

enum class FluxBranch { Sending, Capacity, Receiving };

struct FluxPartials {
    double d_up = 0.0;    // dF / d(rho_up)
    double d_down = 0.0;  // dF / d(rho_down)
    FluxBranch branch = FluxBranch::Capacity;
};

/**
 * Godunov interface flux: min of upstream sending flow, capacity, and
 * downstream receiving flow. Throws std::domain_error if either density is
 * outside [0, jam_density].
 */
double godunov_flux(const FundamentalDiagram& fd, double rho_up, double rho_down);

/** Active flux branch and its partial derivatives. Ties resolve in the order
 *  capacity, sending, receiving, so zero partials win at branch boundaries. */
FluxPartials godunov_flux_partials(const FundamentalDiagram& fd, double rho_up, double rho_down);

}  // namespace dptraffic
