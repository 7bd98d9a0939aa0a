#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dptraffic/detector.hpp"
#include "dptraffic/dp.hpp"
#include "dptraffic/fundamental_diagram.hpp"
#include "dptraffic/zones.hpp"

namespace dptraffic {

enum class Mode { Free, Congested };

inline char mode_char(Mode m) { return m == Mode::Free ? 'F' : 'C'; }

/** Two-level confidence two-state mode filter parameters. */
struct HmmParams {
    double pi1 = 0.01;           // per-period mode switch probability
    double pi2_decisive = 0.95;  // P(measured mode == true mode) for decisive evidence
    double pi2_hold = 0.60;      // same, for held (non-decisive) evidence

    void validate() const;
};

/** Per-sensor running state of the raw mode model. */
struct ModeTrackerState {
    Mode last_decisive = Mode::Free;  // most recent single-branch verdict; initial convention is free
    int hold_age = 0;                 // periods since that verdict
    double prev_pseudo_flow = 0.0;    // previous period's pseudo-flow, for the trend rule
    bool has_prev_flow = false;
};

struct RawModeResult {
    Mode mode = Mode::Free;
    bool decisive = false;
};

/**
 * Raw mode from clear data: free if exactly the free-branch test passes,
 * congested if exactly the congested-branch test passes. When both or
 * neither pass the previous decisive verdict is held (hold_age grows) and
 * the result is flagged non-decisive.
 */
RawModeResult raw_mode_nonprivate(const FundamentalDiagram& fd, const ZoneParams& zp, double phi,
                                  double y, ModeTrackerState& tracker);

/**
 * Raw mode from a noisy pseudo-flow. Branch tests are evaluated only while
 * the pseudo-flow (clamped below at 0) stays under alpha, where single-
 * vehicle perturbations provably cannot flip them. Above alpha the previous
 * verdict is held, or, when `flow_trend` is set, the sign of the pseudo-flow
 * increment picks the mode (rising = free, falling = congested, tie = hold);
 * either way the result is non-decisive. The tracker's prev_pseudo_flow is
 * refreshed every call.
 */
RawModeResult raw_mode_private(const FundamentalDiagram& fd, const ZoneParams& zp, double alpha,
                               double pseudo_flow, double y, ModeTrackerState& tracker,
                               bool flow_trend = false);

struct HmmStepResult {
    double belief_free = 0.5;  // posterior P(mode = free)
    Mode filtered = Mode::Free;
};

/**
 * One predict/update sweep of the two-state filter. The confidence level is
 * pi2_decisive or pi2_hold according to the evidence flag; the filtered mode
 * is the MAP state, keeping `previous` on an exact posterior tie.
 */
HmmStepResult hmm_filter_step(double belief_free, Mode measured, bool decisive, const HmmParams& hmm,
                              Mode previous);

/** Density on the chosen branch of the diagram, with the flow clamped into
 *  [0, capacity]: free gives flow / v, congested gives jam - flow / w. */
double invert_diagram(const FundamentalDiagram& fd, double flow, Mode mode);

// ============================================================================
// Per-sensor density pseudo-measurements
// ============================================================================

struct DensityPseudoMeasurement {
    std::string sensor_id;
    int k = 0;
    double z = 0.0;            // [veh/mi/lane]
    Mode raw_mode = Mode::Free;   // mode model output before filtering
    Mode mode_used = Mode::Free;  // filtered mode that picked the inversion branch
    bool decisive = false;        // raw evidence was single-branch
    double belief = 1.0;          // posterior probability of mode_used
    double pseudo_flow = 0.0;     // flow that was inverted [veh/h/lane]
    double z_noise_sd = 0.0;      // mechanism noise propagated through the inversion; 0 when non-private
};

/** Runs the clear-data mode model and filter over every (sensor, period)
 *  series and inverts the diagram at the measured flow. */
std::vector<DensityPseudoMeasurement> density_measurements_nonprivate(
    const FundamentalDiagram& fd, const ZoneParams& zp, const std::vector<SensorConfig>& configs,
    const FlowSeries& flows, const OccDensitySeries& densities, const HmmParams& hmm);

struct PrivateMeasurements {
    std::vector<DensityPseudoMeasurement> measurements;
    double delta_f = 0.0;  // L2 flow sensitivity across the sensor set
    double sigma = 0.0;    // Gaussian mechanism noise scale
    std::map<std::string, double> alpha;  // per-sensor robust-zone cap
    PrivacyLedger ledger;  // flows + modes, each (epsilon, delta)
};

/**
 * Differentially private variant: flows are released through the Gaussian
 * mechanism (noise from `rng`), modes come from the perturbation-robust
 * tests under each sensor's alpha, and the ledger charges the flow release
 * and the mode release separately.
 */
PrivateMeasurements density_measurements_private(const FundamentalDiagram& fd, const ZoneParams& zp,
                                                 const std::vector<SensorConfig>& configs,
                                                 const FlowSeries& flows,
                                                 const OccDensitySeries& densities,
                                                 const HmmParams& hmm, const PrivacyParams& priv,
                                                 bool flow_trend, RngStream& rng);

// ============================================================================
// Mode release audit
// ============================================================================

/** Single-sensor scenario on which neighboring datasets are enumerated. */
struct ModeAuditScenario {
    SensorConfig sensor;
    std::vector<double> flows;        // true per-period aggregate flow [veh/h/lane]
    std::vector<double> occ_density;  // true per-period occupancy density [veh/mi/lane]
    PrivacyParams priv{0.6931471805599453, 0.05};
    bool flow_trend = false;
};

struct ModeAuditOptions {
    long long trials = 10000;
    std::uint64_t seed = 404;
};

struct ModeAuditResult {
    long long trials = 0;
    int adjacent_pairs = 0;            // neighboring datasets enumerated (identity excluded)
    long long comparisons = 0;         // trials * adjacent_pairs
    long long same_cell = 0;           // comparisons with both flow vectors in one zone cell
    long long violations = 0;          // same-cell comparisons with differing mode sequences
    long long equal_outputs = 0;       // comparisons with identical mode sequences (unconditional)
    long long occ_only_pairs = 0;      // neighbors that only move occupancy
    long long occ_only_mismatch = 0;   // of those, comparisons with differing sequences
    std::vector<long long> cell_coverage;  // base-dataset zone-cell histogram, size 2^periods
};

/**
 * Empirical check that the released mode sequence ignores single-vehicle
 * changes: enumerates every admissible neighbor of the scenario's dataset
 * (counts at up to two periods shifted by +/-1, occupancy-density at up to
 * two periods shifted by up to psi/(g lanes)), draws shared Gaussian noise
 * per trial, and whenever base and neighbor pseudo-flow vectors fall in the
 * same cell of the per-period {[0, alpha), [alpha, inf)} partition requires
 * identical mode output sequences.
 */
ModeAuditResult mode_equality_audit(const FundamentalDiagram& fd, const ZoneParams& zp,
                                    const ModeAuditScenario& scenario, const ModeAuditOptions& opt = {});
ModeAuditResult mode_equality_audit_serial(const FundamentalDiagram& fd, const ZoneParams& zp,
                                           const ModeAuditScenario& scenario,
                                           const ModeAuditOptions& opt = {});

}  // namespace dptraffic
