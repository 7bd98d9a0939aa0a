#include "dptraffic/fundamental_diagram.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dptraffic {

void FundamentalDiagram::validate() const {
    if (!(free_flow_speed > 0.0))
        throw std::invalid_argument("fundamental diagram: free_flow_speed must be positive");
    if (!(congestion_wave_speed > 0.0))
        throw std::invalid_argument("fundamental diagram: congestion_wave_speed must be positive");
    if (!(jam_density > 0.0))
        throw std::invalid_argument("fundamental diagram: jam_density must be positive");
}

namespace {

void check_density(const FundamentalDiagram& fd, double rho, const char* what) {
    if (!(rho >= 0.0) || !(rho <= fd.jam_density))
        throw std::domain_error(std::string(what) + " density " + std::to_string(rho) +
                                " outside [0, " + std::to_string(fd.jam_density) + "]");
}

}  // namespace

double fd_flow(const FundamentalDiagram& fd, double rho) {
    check_density(fd, rho, "fd_flow:");
    if (rho <= fd.critical_density()) return fd.free_flow_speed * rho;
    return fd.congestion_wave_speed * (fd.jam_density - rho);
}

double godunov_flux(const FundamentalDiagram& fd, double rho_up, double rho_down) {
    check_density(fd, rho_up, "godunov_flux: upstream");
    check_density(fd, rho_down, "godunov_flux: downstream");
    double sending = fd.free_flow_speed * rho_up;
    double receiving = fd.congestion_wave_speed * (fd.jam_density - rho_down);
    return std::min({sending, fd.capacity(), receiving});
}

FluxPartials godunov_flux_partials(const FundamentalDiagram& fd, double rho_up, double rho_down) {
    check_density(fd, rho_up, "godunov_flux_partials: upstream");
    check_density(fd, rho_down, "godunov_flux_partials: downstream");
    double sending = fd.free_flow_speed * rho_up;
    double capacity = fd.capacity();
    double receiving = fd.congestion_wave_speed * (fd.jam_density - rho_down);

    FluxPartials out;
    if (capacity <= sending && capacity <= receiving) {
        out.branch = FluxBranch::Capacity;
    } else if (sending <= receiving) {
        out.branch = FluxBranch::Sending;
        out.d_up = fd.free_flow_speed;
    } else {
        out.branch = FluxBranch::Receiving;
        out.d_down = -fd.congestion_wave_speed;
    }
    return out;
}

}  // namespace dptraffic
