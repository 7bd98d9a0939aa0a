#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dptraffic/detector.hpp"
#include "dptraffic/rng.hpp"

namespace dptraffic {

/** An (epsilon, delta) privacy budget. */
struct PrivacyParams {
    double epsilon = 0.0;
    double delta = 0.0;

    void validate() const;  // epsilon > 0, delta in [0, 1); delta = 0 is pure DP
};

/** Standard normal upper tail Q(x) = P(N(0,1) >= x). */
double gaussian_tail(double x);

/** Inverse of the upper tail, solved by bisection to 1e-10. Accepts delta in
 *  (0, 0.5), the meaningful range for a failure probability; anything else is
 *  a domain error. */
double q_inverse(double delta);

/** Gaussian mechanism noise multiplier:
 *  kappa = (Q^{-1}(delta) + sqrt(Q^{-1}(delta)^2 + 2 epsilon)) / (2 epsilon).
 *  The mechanism's noise scale is kappa * (L2 sensitivity). */
double kappa(const PrivacyParams& p);

/** L2 sensitivity of the stacked per-sensor flow aggregates under a single
 *  vehicle's trajectory change (at most two count entries per sensor move by
 *  at most one): delta_f = sqrt(sum_s 2 / (T lanes_s)^2). All sensors must
 *  share one sampling period T. */
struct SensitivityBound {
    double delta_f = 0.0;  // [veh/h/lane]
};
SensitivityBound flow_sensitivity(const std::vector<SensorConfig>& configs);

/**
 * Independent check of the sensitivity bound: exhaustively enumerates every
 * admissible single-vehicle count perturbation on a toy dataset with the
 * given sensors and period count (each sensor: at most two periods change,
 * each by +/-1) and returns the maximal L2 change of the flow vector.
 */
double count_sensitivity_oracle(const std::vector<SensorConfig>& configs, int periods);

/** Adds N(0, (kappa * delta_f)^2) noise to each query coordinate. Zero
 *  sensitivity yields the identity. */
std::vector<double> gaussian_mechanism(std::span<const double> query, double delta_f,
                                       const PrivacyParams& p, RngStream& rng);

/** Adds Laplace(delta_q_l1 / epsilon) noise to each query coordinate. Zero
 *  sensitivity yields the identity. */
std::vector<double> laplace_mechanism(std::span<const double> query, double delta_q_l1, double epsilon,
                                      RngStream& rng);

// ============================================================================
// Budget ledger
// ============================================================================

struct LedgerEntry {
    std::string label;
    double epsilon = 0.0;
    double delta = 0.0;
};

/** Tracks released mechanisms; the running total is the component-wise sum
 *  (sequential composition). */
class PrivacyLedger {
public:
    void charge(std::string label, const PrivacyParams& p);
    const std::vector<LedgerEntry>& entries() const { return entries_; }
    PrivacyParams total() const;

private:
    std::vector<LedgerEntry> entries_;
};

// ============================================================================
// Usefulness curves
// ============================================================================

/** Error bound gamma such that the Laplace mechanism is (gamma, zeta_prob)-
 *  useful: gamma = (delta_q / epsilon) * ln(1 / zeta_prob). */
double laplace_usefulness_gamma(double delta_q, double epsilon, double zeta_prob);

/** Two exceedance curves for the Gaussian mechanism at error bound gamma.
 *  `nominal_zeta` evaluates 2 gamma / (sigma * delta_q) exactly as published;
 *  `tail_zeta` is the actual exceedance probability 2 Q(gamma / sigma). The
 *  two disagree in general (the nominal form is not a probability bound);
 *  both are reported so the discrepancy stays visible. */
struct GaussianUsefulness {
    double nominal_zeta = 0.0;
    double tail_zeta = 0.0;
};
GaussianUsefulness gaussian_usefulness(double gamma, double sigma, double delta_q);

// ============================================================================
// Empirical privacy audit
// ============================================================================

struct DpAuditOptions {
    int thresholds = 21;          // threshold grid size
    long long trials = 1000000;   // Monte Carlo draws per neighboring input
    double sigma_scale = 1.0;     // 1.0 audits the calibrated mechanism; <1 weakens it
    std::uint64_t seed = 2027;
};

struct DpAuditResult {
    long long trials = 0;
    int thresholds = 0;
    int violations = 0;           // threshold/direction/tail combinations beyond slack
    double worst_excess_sigma = 0.0;  // largest violation in binomial-sigma units
    double sigma = 0.0;           // noise scale actually audited
};

/**
 * Samples the Gaussian mechanism on two inputs delta_q apart and checks the
 * (epsilon, delta) inequality P[M(d) in S] <= e^eps P[M(d') in S] + delta on
 * one-sided threshold sets (both tails, both input orders), allowing three
 * binomial standard errors of slack. Per-trial generator streams keyed by
 * trial index keep the result identical for any thread count.
 */
DpAuditResult dp_audit_gaussian(double delta_q, const PrivacyParams& p, const DpAuditOptions& opt = {});
DpAuditResult dp_audit_gaussian_serial(double delta_q, const PrivacyParams& p,
                                       const DpAuditOptions& opt = {});

}  // namespace dptraffic
