#pragma once

#include <utility>

#include "dptraffic/fundamental_diagram.hpp"

namespace dptraffic {

/** Parameters of the occupancy truncation analysis. */
struct ZoneParams {
    double zeta = 0.51;  // half-width of the log-scale consistency band
    double psi = 0.25;   // worst-case per-vehicle occupancy change

    void validate() const;
};

/** Per-sensor zone summary, as exported by the `zones` CLI command. */
struct ZoneGeometry {
    double sensitive_lo = 0.0;  // flows where free and congested evidence overlap [veh/h/lane]
    double sensitive_hi = 0.0;
    double alpha = 0.0;         // cap of the perturbation-robust flow range [veh/h/lane]
    double capacity = 0.0;      // [veh/h/lane]
};

/** Free-branch consistency: |log(phi / v) - log y| <= zeta. False whenever
 *  phi <= 0 or y <= 0 (the log test is undefined there). */
bool in_TF(const FundamentalDiagram& fd, const ZoneParams& zp, double phi, double y);

/** Congested-branch consistency: |log(jam - phi / w) - log y| <= zeta.
 *  False for y <= 0 or when jam - phi / w <= 0. */
bool in_TC(const FundamentalDiagram& fd, const ZoneParams& zp, double phi, double y);

/**
 * Closed-form flow interval over which a single (phi, y) pair can satisfy
 * both branch tests at once, i.e. where the mode is ambiguous:
 *   lo = w v jam / (w e^{2 zeta} + v),  hi = w e^{2 zeta} v jam / (w + e^{2 zeta} v).
 */
std::pair<double, double> sensitive_interval(const FundamentalDiagram& fd, const ZoneParams& zp);

/**
 * Largest flow alpha such that no single-vehicle perturbation (flow shift up
 * to 1/(T lanes), occupancy-density shift up to psi/(g lanes)) can move a
 * point between the two branch sets in either direction while the flow stays
 * below alpha. T in hours, g in miles.
 */
double private_alpha(const FundamentalDiagram& fd, const ZoneParams& zp, int lanes, double T_hours,
                     double g_miles);

/** Branch tests intersected with the robust flow range [0, alpha). */
bool in_PTF(const FundamentalDiagram& fd, const ZoneParams& zp, double alpha, double phi, double y);
bool in_PTC(const FundamentalDiagram& fd, const ZoneParams& zp, double alpha, double phi, double y);

// ============================================================================
// Brute-force oracles
// ============================================================================
//
// Both scans evaluate the membership predicates directly on dense grids and
// never reuse the closed-form expressions above, so they serve as
// independent checks. Each has an OpenMP implementation and a serial
// reference; results are bitwise identical (min / OR reductions only).

struct IntervalScanResult {
    bool nonempty = false;
    double lo = 0.0;     // smallest flow on the grid with both tests satisfiable
    double hi = 0.0;     // largest such flow
    double flow_step = 0.0;
};

/** Scans flows in (0, w * jam] with step flow_step (the congested test is
 *  unsatisfiable beyond w * jam); for each flow, scans y across the
 *  free-branch band with step y_step looking for a point passing both
 *  tests. */
IntervalScanResult sensitive_interval_scan(const FundamentalDiagram& fd, const ZoneParams& zp,
                                           double flow_step = 1.0, double y_step = 0.02);
IntervalScanResult sensitive_interval_scan_serial(const FundamentalDiagram& fd, const ZoneParams& zp,
                                                  double flow_step = 1.0, double y_step = 0.02);

struct FlipSearchOptions {
    double flow_step = 1.0;   // [veh/h/lane]
    double y_step = 0.02;     // [veh/mi/lane]
    int perturb_points = 5;   // grid points per perturbation axis, endpoints included
};

struct FlipSearchResult {
    bool found = false;
    double alpha_empirical = 0.0;  // smallest flow where a branch flip was exhibited
    double flow_step = 0.0;
};

/** Searches for the smallest flow at which some in-bound perturbation flips a
 *  point from one branch set into the other (either direction). y is scanned
 *  across the source branch band; perturbations across the full +/- grid. */
FlipSearchResult flip_bound_oracle(const FundamentalDiagram& fd, const ZoneParams& zp, int lanes,
                                   double T_hours, double g_miles, const FlipSearchOptions& opt = {});
FlipSearchResult flip_bound_oracle_serial(const FundamentalDiagram& fd, const ZoneParams& zp, int lanes,
                                          double T_hours, double g_miles,
                                          const FlipSearchOptions& opt = {});

}  // namespace dptraffic
