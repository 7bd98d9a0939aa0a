#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dptraffic/ctm.hpp"
#include "dptraffic/mode.hpp"
#include "dptraffic/road.hpp"

namespace dptraffic {

struct EkfOptions {
    double q_interior = 1.0;           // process noise variance, interior cells [(veh/mi/lane)^2]
    double q_ghost = 25.0;             // process noise variance, ghost cells
    double r_base = 1.0;               // baseline measurement variance [(veh/mi/lane)^2]
    double nondecisive_r_scale = 4.0;  // inflation applied to held-mode measurements
    double offside_r_extra = 10000.0;  // added variance for the cell off the binding flux side,
                                       // order (jam/2)^2: across a front it can differ that much
    double jitter = 1e-9;              // added to the innovation covariance diagonal

    void validate() const;
};

/** Filter state: density mean over all cells including ghosts, covariance,
 *  and the period the mean refers to. */
struct EkfState {
    Eigen::VectorXd x;
    Eigen::MatrixXd V;
    int k = 0;
};

/** One scalar density reading attached to a state cell. */
struct MeasurementEntry {
    int cell = 0;      // state index in [0, I+1]
    double z = 0.0;    // [veh/mi/lane]
    double r = 1.0;    // measurement variance
};

struct MeasurementBatch {
    std::vector<MeasurementEntry> entries;
};

/**
 * Jacobian of the deterministic conservation map at `rho`. Ghost rows are
 * identity; interior rows hold the active-branch flux partials scaled by
 * dt / dx and the interface lane ratio.
 */
Eigen::MatrixXd dynamics_jacobian(const RoadGeometry& geom, const FundamentalDiagram& fd,
                                  const Eigen::VectorXd& rho);

struct EkfStepResult {
    EkfState posterior;   // after conditioning on the batch, mean clamped to [0, jam]
    EkfState prior_next;  // after propagating through the noise-free map
    double innovation_norm = 0.0;
};

/**
 * Conditions the prior on the measurement batch with a Joseph-stabilized
 * update (innovation solved via LDLT with diagonal jitter), clamps the mean
 * into [0, jam], then predicts one period ahead through the conservation map
 * and its Jacobian with additive process noise. Covariances are symmetrized
 * after each stage. Throws std::runtime_error if the innovation solve fails.
 */
EkfStepResult ekf_step(const RoadGeometry& geom, const FundamentalDiagram& fd, const EkfState& prior,
                       const MeasurementBatch& batch, const EkfOptions& opt);

struct DensityMapResult {
    std::vector<DensityState> estimates;  // posterior mean per period
    std::vector<double> trace_cov;        // posterior covariance trace per period
    std::vector<double> innovation_norm;  // per period
};

/**
 * Runs the filter over periods 0..periods-1, assembling per-period batches
 * from the pseudo-measurements: a sensor on interface i drives cells i and
 * i+1 with its density reading. Measurement variance is r_base plus the
 * squared propagated mechanism noise, scaled by nondecisive_r_scale for
 * non-decisive readings, plus a branch-risk term: with probability
 * 1 - belief the inversion branch is wrong and the reading is off by the
 * gap between the two candidate inversions, so that mixture variance is
 * added. The reading pins the cell on the binding side of the interface
 * flux (upstream in free mode, downstream in congested); the other cell
 * receives it with offside_r_extra more variance, since across a front the
 * off-side density can differ arbitrarily. `init` supplies the prior mean
 * at period 0; `init_var` its diagonal covariance.
 */
DensityMapResult build_density_map(const RoadGeometry& geom, const FundamentalDiagram& fd,
                                   const std::vector<DensityPseudoMeasurement>& measurements,
                                   int periods, const EkfOptions& opt, const DensityState& init,
                                   double init_var);

}  // namespace dptraffic
