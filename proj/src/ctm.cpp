#include "dptraffic/ctm.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dptraffic {

double ProcessNoiseConfig::stddev(int i, int interior_cells) const {
    if (!per_cell.empty()) return per_cell[static_cast<std::size_t>(i)];
    return (i == 0 || i == interior_cells + 1) ? sigma_ghost : sigma_interior;
}

void ProcessNoiseConfig::validate(int interior_cells) const {
    if (sigma_interior < 0.0 || sigma_ghost < 0.0)
        throw std::invalid_argument("process noise: standard deviations must be non-negative");
    if (!per_cell.empty()) {
        if (per_cell.size() != static_cast<std::size_t>(interior_cells) + 2)
            throw std::invalid_argument("process noise: per_cell override must have I+2 entries");
        for (double s : per_cell)
            if (s < 0.0) throw std::invalid_argument("process noise: per_cell entries must be non-negative");
    }
}

std::vector<double> ctm_map(const RoadGeometry& geom, const FundamentalDiagram& fd,
                            const std::vector<double>& rho) {
    int I = geom.interior_cells();
    if (rho.size() != static_cast<std::size_t>(I) + 2)
        throw std::invalid_argument("ctm_map: state has " + std::to_string(rho.size()) +
                                    " entries, expected " + std::to_string(I + 2));

    std::vector<double> next(rho.size());
    next[0] = rho[0];
    next[static_cast<std::size_t>(I) + 1] = rho[static_cast<std::size_t>(I) + 1];

    // Interface fluxes F_i between cells i and i+1, i = 0..I.
    std::vector<double> flux(static_cast<std::size_t>(I) + 1);
    for (int i = 0; i <= I; ++i)
        flux[static_cast<std::size_t>(i)] = godunov_flux(fd, rho[static_cast<std::size_t>(i)],
                                                         rho[static_cast<std::size_t>(i) + 1]);

    for (int i = 1; i <= I; ++i) {
        double lane_ratio = static_cast<double>(geom.interface_lanes(i - 1)) /
                            static_cast<double>(geom.interface_lanes(i));
        double net = lane_ratio * flux[static_cast<std::size_t>(i) - 1] - flux[static_cast<std::size_t>(i)];
        next[static_cast<std::size_t>(i)] =
            rho[static_cast<std::size_t>(i)] + geom.dt() / geom.cell_length(i) * net;
    }
    return next;
}

DensityState ctm_step(const RoadGeometry& geom, const FundamentalDiagram& fd, const DensityState& state,
                      const ProcessNoiseConfig& noise, RngStream& rng) {
    int I = geom.interior_cells();
    noise.validate(I);
    DensityState out;
    out.k = state.k + 1;
    out.rho = ctm_map(geom, fd, state.rho);
    for (int i = 0; i < I + 2; ++i) {
        double sd = noise.stddev(i, I);
        if (sd > 0.0) out.rho[static_cast<std::size_t>(i)] += rng.normal(0.0, sd);
        out.rho[static_cast<std::size_t>(i)] =
            std::clamp(out.rho[static_cast<std::size_t>(i)], 0.0, fd.jam_density);
    }
    return out;
}

std::vector<DensityState> simulate(const RoadGeometry& geom, const FundamentalDiagram& fd,
                                   const DensityState& init, const ProcessNoiseConfig& noise,
                                   const BoundaryProfile& boundary, std::uint64_t seed, int periods) {
    geom.validate(fd);
    noise.validate(geom.interior_cells());
    if (periods < 0) throw std::invalid_argument("simulate: periods must be non-negative");
    if (init.rho.size() != static_cast<std::size_t>(geom.state_size()))
        throw std::invalid_argument("simulate: initial state size mismatch");
    std::size_t needed = static_cast<std::size_t>(periods) + 1;
    if (!boundary.upstream.empty() && boundary.upstream.size() < needed)
        throw std::invalid_argument("simulate: upstream profile has " +
                                    std::to_string(boundary.upstream.size()) + " entries, needs " +
                                    std::to_string(needed) + " (one per state 0..periods)");
    if (!boundary.downstream.empty() && boundary.downstream.size() < needed)
        throw std::invalid_argument("simulate: downstream profile has " +
                                    std::to_string(boundary.downstream.size()) + " entries, needs " +
                                    std::to_string(needed) + " (one per state 0..periods)");

    auto rng = RngStream::derive(seed, "sim-noise");
    std::size_t last = init.rho.size() - 1;

    std::vector<DensityState> traj;
    traj.reserve(static_cast<std::size_t>(periods) + 1);
    DensityState current = init;
    current.k = 0;
    auto pin_boundary = [&](DensityState& st) {
        std::size_t k = static_cast<std::size_t>(st.k);
        if (!boundary.upstream.empty())
            st.rho[0] = std::clamp(boundary.upstream[k], 0.0, fd.jam_density);
        if (!boundary.downstream.empty())
            st.rho[last] = std::clamp(boundary.downstream[k], 0.0, fd.jam_density);
    };
    pin_boundary(current);
    traj.push_back(current);
    for (int k = 0; k < periods; ++k) {
        current = ctm_step(geom, fd, current, noise, rng);
        pin_boundary(current);
        traj.push_back(current);
    }
    return traj;
}

double interior_vehicle_count(const RoadGeometry& geom, const std::vector<double>& rho) {
    double total = 0.0;
    for (int i = 1; i <= geom.interior_cells(); ++i)
        total += static_cast<double>(geom.cell_lanes(i)) * geom.cell_length(i) *
                 rho[static_cast<std::size_t>(i)];
    return total;
}

}  // namespace dptraffic
