#include "dptraffic/zones.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dptraffic {

void ZoneParams::validate() const {
    if (!(zeta > 0.0)) throw std::invalid_argument("zone params: zeta must be positive");
    if (psi < 0.0 || psi > 1.0) throw std::invalid_argument("zone params: psi must lie in [0, 1]");
}

namespace {

/** Precomputed constants for the branch tests. Both public predicates and the
 *  grid oracles evaluate membership through this one helper, in the
 *  multiplicative form e^{-zeta} <= ratio <= e^{zeta} (identical to the
 *  log-distance definition, without the logs). */
struct ZoneBands {
    double v, w_inv, jam, el, eh;

    ZoneBands(const FundamentalDiagram& fd, const ZoneParams& zp)
        : v(fd.free_flow_speed),
          w_inv(1.0 / fd.congestion_wave_speed),
          jam(fd.jam_density),
          el(std::exp(-zp.zeta)),
          eh(std::exp(zp.zeta)) {}

    bool in_tf(double phi, double y) const {
        if (!(phi > 0.0) || !(y > 0.0)) return false;
        return phi >= el * v * y && phi <= eh * v * y;
    }

    bool in_tc(double phi, double y) const {
        if (!(y > 0.0)) return false;
        double s = jam - phi * w_inv;  // congested-branch density implied by the flow
        if (!(s > 0.0)) return false;
        return s >= el * y && s <= eh * y;
    }
};

void check_sensor_args(int lanes, double T_hours, double g_miles) {
    if (lanes < 1) throw std::invalid_argument("zone analysis: lanes must be >= 1");
    if (!(T_hours > 0.0)) throw std::invalid_argument("zone analysis: T must be positive");
    if (!(g_miles > 0.0)) throw std::invalid_argument("zone analysis: g must be positive");
}

}  // namespace

bool in_TF(const FundamentalDiagram& fd, const ZoneParams& zp, double phi, double y) {
    fd.validate();
    zp.validate();
    return ZoneBands(fd, zp).in_tf(phi, y);
}

bool in_TC(const FundamentalDiagram& fd, const ZoneParams& zp, double phi, double y) {
    fd.validate();
    zp.validate();
    return ZoneBands(fd, zp).in_tc(phi, y);
}

std::pair<double, double> sensitive_interval(const FundamentalDiagram& fd, const ZoneParams& zp) {
    fd.validate();
    zp.validate();
    double v = fd.free_flow_speed, w = fd.congestion_wave_speed, jam = fd.jam_density;
    double e2 = std::exp(2.0 * zp.zeta);
    double lo = w * v * jam / (w * e2 + v);
    double hi = w * e2 * v * jam / (w + e2 * v);
    return {lo, hi};
}

double private_alpha(const FundamentalDiagram& fd, const ZoneParams& zp, int lanes, double T_hours,
                     double g_miles) {
    fd.validate();
    zp.validate();
    check_sensor_args(lanes, T_hours, g_miles);
    double v = fd.free_flow_speed, w = fd.congestion_wave_speed, jam = fd.jam_density;
    double el = std::exp(-zp.zeta), eh = std::exp(zp.zeta);
    double dphi = 1.0 / (T_hours * lanes);        // worst single-vehicle flow shift [veh/h/lane]
    double dy = zp.psi / (g_miles * lanes);       // worst occupancy-density shift [veh/mi/lane]
    double denom = eh / v + 1.0 / (eh * w);
    double free_to_congested = (el * (jam - dphi / w) - dy) / denom;
    double congested_to_free = (el * jam - eh * dphi / v - dy) / denom;
    double alpha = std::min(free_to_congested, congested_to_free);
    if (!(alpha > 0.0))
        throw std::domain_error("private_alpha: no private zone at these parameters");
    // zeta > 0 keeps alpha strictly below capacity, but cap defensively: a
    // bound beyond capacity would only mean every feasible flow is robust
    return std::min(alpha, fd.capacity());
}

bool in_PTF(const FundamentalDiagram& fd, const ZoneParams& zp, double alpha, double phi, double y) {
    return phi < alpha && in_TF(fd, zp, phi, y);
}

bool in_PTC(const FundamentalDiagram& fd, const ZoneParams& zp, double alpha, double phi, double y) {
    return phi < alpha && in_TC(fd, zp, phi, y);
}

// ============================================================================
// Grid oracles
// ============================================================================

namespace {

/** True when some y in the free-branch band of `flow` passes both tests. */
bool both_tests_satisfiable(const ZoneBands& zb, double flow, double y_step) {
    double y_lo = flow / (zb.v * zb.eh);
    double y_hi = flow * zb.eh / zb.v;
    long n = static_cast<long>(std::ceil((y_hi - y_lo) / y_step));
    for (long j = 0; j <= n; ++j) {
        double y = std::min(y_lo + static_cast<double>(j) * y_step, y_hi);
        if (zb.in_tf(flow, y) && zb.in_tc(flow, y)) return true;
    }
    return false;
}

IntervalScanResult run_interval_scan(const FundamentalDiagram& fd, const ZoneParams& zp,
                                     double flow_step, double y_step, bool parallel) {
    fd.validate();
    zp.validate();
    if (!(flow_step > 0.0) || !(y_step > 0.0))
        throw std::invalid_argument("sensitive_interval_scan: steps must be positive");
    ZoneBands zb(fd, zp);
    // The congested test needs jam - phi/w > 0, so w*jam is the natural flow
    // ceiling. It lies above capacity: the branch tests are algebraic in the
    // measurements, and the upper interval endpoint sits beyond capacity.
    double flow_max = fd.congestion_wave_speed * fd.jam_density;
    long n_flows = static_cast<long>(std::floor(flow_max / flow_step));
    long lo_idx = n_flows + 1;
    long hi_idx = 0;

    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 64) reduction(min : lo_idx) reduction(max : hi_idx)
#endif
        for (long i = 1; i <= n_flows; ++i) {
            if (both_tests_satisfiable(zb, static_cast<double>(i) * flow_step, y_step)) {
                lo_idx = std::min(lo_idx, i);
                hi_idx = std::max(hi_idx, i);
            }
        }
    } else {
        for (long i = 1; i <= n_flows; ++i) {
            if (both_tests_satisfiable(zb, static_cast<double>(i) * flow_step, y_step)) {
                lo_idx = std::min(lo_idx, i);
                hi_idx = std::max(hi_idx, i);
            }
        }
    }

    IntervalScanResult out;
    out.flow_step = flow_step;
    out.nonempty = lo_idx <= n_flows;
    if (out.nonempty) {
        out.lo = static_cast<double>(lo_idx) * flow_step;
        out.hi = static_cast<double>(hi_idx) * flow_step;
    }
    return out;
}

/** True when some in-band point at `flow` can be pushed into the other
 *  branch set by a perturbation from the given grids. */
bool flippable(const ZoneBands& zb, double flow, double y_step, const std::vector<double>& dphi_grid,
               const std::vector<double>& dy_grid) {
    for (double dphi : dphi_grid) {
        double flow_t = flow + dphi;
        for (double dy : dy_grid) {
            // free branch -> congested branch
            {
                double y_lo = flow / (zb.v * zb.eh);
                double y_hi = flow * zb.eh / zb.v;
                long n = static_cast<long>(std::ceil((y_hi - y_lo) / y_step));
                for (long j = 0; j <= n; ++j) {
                    double y = std::min(y_lo + static_cast<double>(j) * y_step, y_hi);
                    if (zb.in_tf(flow, y) && zb.in_tc(flow_t, y + dy)) return true;
                }
            }
            // congested branch -> free branch
            double s = zb.jam - flow * zb.w_inv;
            if (s > 0.0) {
                double y_lo = s / zb.eh;
                double y_hi = s * zb.eh;
                long n = static_cast<long>(std::ceil((y_hi - y_lo) / y_step));
                for (long j = 0; j <= n; ++j) {
                    double y = std::min(y_lo + static_cast<double>(j) * y_step, y_hi);
                    if (zb.in_tc(flow, y) && zb.in_tf(flow_t, y + dy)) return true;
                }
            }
        }
    }
    return false;
}

std::vector<double> symmetric_grid(double max_abs, int points) {
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(points));
    for (int j = 0; j < points; ++j)
        grid.push_back(-max_abs + 2.0 * max_abs * static_cast<double>(j) / (points - 1));
    return grid;
}

FlipSearchResult run_flip_search(const FundamentalDiagram& fd, const ZoneParams& zp, int lanes,
                                 double T_hours, double g_miles, const FlipSearchOptions& opt,
                                 bool parallel) {
    fd.validate();
    zp.validate();
    check_sensor_args(lanes, T_hours, g_miles);
    if (!(opt.flow_step > 0.0) || !(opt.y_step > 0.0))
        throw std::invalid_argument("flip_bound_oracle: steps must be positive");
    if (opt.perturb_points < 2)
        throw std::invalid_argument("flip_bound_oracle: perturbation grid needs at least 2 points");

    ZoneBands zb(fd, zp);
    auto dphi_grid = symmetric_grid(1.0 / (T_hours * lanes), opt.perturb_points);
    auto dy_grid = symmetric_grid(zp.psi / (g_miles * lanes), opt.perturb_points);
    double flow_max = fd.congestion_wave_speed * fd.jam_density;
    long n_flows = static_cast<long>(std::floor(flow_max / opt.flow_step));

    FlipSearchResult out;
    out.flow_step = opt.flow_step;

    long found_idx = n_flows + 1;
    if (parallel) {
        // Ordered blocks with a min-index reduction inside each block: the
        // first block containing a flip yields the exact minimum, and the
        // result is independent of thread count.
        const long block = 256;
        for (long start = 1; start <= n_flows && found_idx > n_flows; start += block) {
            long stop = std::min(start + block - 1, n_flows);
            long local = n_flows + 1;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8) reduction(min : local)
#endif
            for (long i = start; i <= stop; ++i) {
                if (flippable(zb, static_cast<double>(i) * opt.flow_step, opt.y_step, dphi_grid, dy_grid))
                    local = std::min(local, i);
            }
            found_idx = local;
        }
    } else {
        for (long i = 1; i <= n_flows; ++i) {
            if (flippable(zb, static_cast<double>(i) * opt.flow_step, opt.y_step, dphi_grid, dy_grid)) {
                found_idx = i;
                break;
            }
        }
    }

    if (found_idx <= n_flows) {
        out.found = true;
        out.alpha_empirical = static_cast<double>(found_idx) * opt.flow_step;
    }
    return out;
}

}  // namespace

IntervalScanResult sensitive_interval_scan(const FundamentalDiagram& fd, const ZoneParams& zp,
                                           double flow_step, double y_step) {
    return run_interval_scan(fd, zp, flow_step, y_step, true);
}

IntervalScanResult sensitive_interval_scan_serial(const FundamentalDiagram& fd, const ZoneParams& zp,
                                                  double flow_step, double y_step) {
    return run_interval_scan(fd, zp, flow_step, y_step, false);
}

FlipSearchResult flip_bound_oracle(const FundamentalDiagram& fd, const ZoneParams& zp, int lanes,
                                   double T_hours, double g_miles, const FlipSearchOptions& opt) {
    return run_flip_search(fd, zp, lanes, T_hours, g_miles, opt, true);
}

FlipSearchResult flip_bound_oracle_serial(const FundamentalDiagram& fd, const ZoneParams& zp, int lanes,
                                          double T_hours, double g_miles, const FlipSearchOptions& opt) {
    return run_flip_search(fd, zp, lanes, T_hours, g_miles, opt, false);
}

}  // namespace dptraffic
