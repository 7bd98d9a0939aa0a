#include "dptraffic/ekf.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace dptraffic {

void EkfOptions::validate() const {
    if (q_interior < 0.0 || q_ghost < 0.0)
        throw std::invalid_argument("ekf options: process noise variances must be non-negative");
    if (!(r_base > 0.0)) throw std::invalid_argument("ekf options: r_base must be positive");
    if (!(nondecisive_r_scale >= 1.0))
        throw std::invalid_argument("ekf options: nondecisive_r_scale must be >= 1");
    if (!(offside_r_extra >= 0.0))
        throw std::invalid_argument("ekf options: offside_r_extra must be non-negative");
    if (!(jitter >= 0.0)) throw std::invalid_argument("ekf options: jitter must be non-negative");
}

Eigen::MatrixXd dynamics_jacobian(const RoadGeometry& geom, const FundamentalDiagram& fd,
                                  const Eigen::VectorXd& rho) {
    int n = geom.state_size();
    if (rho.size() != n) throw std::invalid_argument("dynamics_jacobian: state size mismatch");
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
    F(0, 0) = 1.0;
    F(n - 1, n - 1) = 1.0;
    int I = geom.interior_cells();
    for (int i = 1; i <= I; ++i) {
        double scale = geom.dt() / geom.cell_length(i);
        double ratio = static_cast<double>(geom.interface_lanes(i - 1)) /
                       static_cast<double>(geom.interface_lanes(i));
        FluxPartials in = godunov_flux_partials(fd, rho(i - 1), rho(i));
        FluxPartials out = godunov_flux_partials(fd, rho(i), rho(i + 1));
        F(i, i - 1) = scale * ratio * in.d_up;
        F(i, i) = 1.0 + scale * (ratio * in.d_down - out.d_up);
        F(i, i + 1) = -scale * out.d_down;
    }
    return F;
}

EkfStepResult ekf_step(const RoadGeometry& geom, const FundamentalDiagram& fd, const EkfState& prior,
                       const MeasurementBatch& batch, const EkfOptions& opt) {
    opt.validate();
    int n = geom.state_size();
    if (prior.x.size() != n || prior.V.rows() != n || prior.V.cols() != n)
        throw std::invalid_argument("ekf_step: prior dimensions do not match the geometry");

    EkfStepResult result;
    Eigen::VectorXd x = prior.x;
    Eigen::MatrixXd V = prior.V;

    int m = static_cast<int>(batch.entries.size());
    if (m > 0) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, n);
        Eigen::VectorXd z(m);
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < m; ++j) {
            const auto& e = batch.entries[static_cast<std::size_t>(j)];
            if (e.cell < 0 || e.cell >= n)
                throw std::invalid_argument("ekf_step: measurement cell " + std::to_string(e.cell) +
                                            " outside the state");
            if (!(e.r > 0.0)) throw std::invalid_argument("ekf_step: measurement variance must be positive");
            H(j, e.cell) = 1.0;
            z(j) = e.z;
            R(j, j) = e.r;
        }

        Eigen::MatrixXd S = H * V * H.transpose() + R;
        S.diagonal().array() += opt.jitter;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
        if (ldlt.info() != Eigen::Success)
            throw std::runtime_error("ekf_step: innovation covariance factorization failed at period " +
                                     std::to_string(prior.k));
        Eigen::VectorXd innovation = z - H * x;
        Eigen::MatrixXd K = ldlt.solve(H * V).transpose();  // V H^T S^{-1}
        x += K * innovation;
        Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
        V = IKH * V * IKH.transpose() + K * R * K.transpose();
        result.innovation_norm = innovation.norm();
    }

    for (int i = 0; i < n; ++i) x(i) = std::clamp(x(i), 0.0, fd.jam_density);
    V = 0.5 * (V + V.transpose()).eval();

    result.posterior.x = x;
    result.posterior.V = V;
    result.posterior.k = prior.k;

    // Prediction through the noise-free conservation map.
    std::vector<double> rho(x.data(), x.data() + n);
    std::vector<double> next = ctm_map(geom, fd, rho);
    Eigen::VectorXd xn = Eigen::Map<Eigen::VectorXd>(next.data(), n);
    for (int i = 0; i < n; ++i) xn(i) = std::clamp(xn(i), 0.0, fd.jam_density);

    Eigen::MatrixXd F = dynamics_jacobian(geom, fd, x);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
    int I = geom.interior_cells();
    for (int i = 0; i < n; ++i) Q(i, i) = (i == 0 || i == I + 1) ? opt.q_ghost : opt.q_interior;

    result.prior_next.x = xn;
    result.prior_next.V = (F * V * F.transpose() + Q).eval();
    result.prior_next.V = 0.5 * (result.prior_next.V + result.prior_next.V.transpose()).eval();
    result.prior_next.k = prior.k + 1;
    return result;
}

DensityMapResult build_density_map(const RoadGeometry& geom, const FundamentalDiagram& fd,
                                   const std::vector<DensityPseudoMeasurement>& measurements,
                                   int periods, const EkfOptions& opt, const DensityState& init,
                                   double init_var) {
    opt.validate();
    if (periods < 1) throw std::invalid_argument("build_density_map: periods must be >= 1");
    if (init.rho.size() != static_cast<std::size_t>(geom.state_size()))
        throw std::invalid_argument("build_density_map: initial state size mismatch");
    if (!(init_var > 0.0)) throw std::invalid_argument("build_density_map: init_var must be positive");

    int n = geom.state_size();
    std::vector<MeasurementBatch> batches(static_cast<std::size_t>(periods));
    for (const auto& meas : measurements) {
        if (meas.k < 0 || meas.k >= periods) continue;
        const auto& sensor = geom.sensor(meas.sensor_id);
        double r = opt.r_base + meas.z_noise_sd * meas.z_noise_sd;
        if (!meas.decisive) r *= opt.nondecisive_r_scale;
        // With probability 1 - belief the branch choice is wrong and the
        // reading is off by the full gap between the two inversions, so that
        // mixture term joins the variance. The gap closes near capacity,
        // where the branches agree.
        double gap = invert_diagram(fd, meas.pseudo_flow, Mode::Congested) -
                     invert_diagram(fd, meas.pseudo_flow, Mode::Free);
        double risk = std::clamp(1.0 - meas.belief, 0.0, 1.0);
        r += risk * gap * gap;
        // Free mode: the flux is demand-bound, so z pins the upstream cell.
        // Congested: supply-bound, so it pins the downstream cell.
        int bound_cell = meas.mode_used == Mode::Free ? sensor.interface_index
                                                      : sensor.interface_index + 1;
        auto& batch = batches[static_cast<std::size_t>(meas.k)];
        for (int cell : {sensor.interface_index, sensor.interface_index + 1})
            batch.entries.push_back(
                MeasurementEntry{cell, meas.z, cell == bound_cell ? r : r + opt.offside_r_extra});
    }

    EkfState state;
    state.x = Eigen::Map<const Eigen::VectorXd>(init.rho.data(), n);
    state.V = init_var * Eigen::MatrixXd::Identity(n, n);
    state.k = 0;

    DensityMapResult out;
    out.estimates.reserve(static_cast<std::size_t>(periods));
    for (int k = 0; k < periods; ++k) {
        EkfStepResult step = ekf_step(geom, fd, state, batches[static_cast<std::size_t>(k)], opt);
        DensityState est;
        est.k = k;
        est.rho.assign(step.posterior.x.data(), step.posterior.x.data() + n);
        out.estimates.push_back(std::move(est));
        out.trace_cov.push_back(step.posterior.V.trace());
        out.innovation_norm.push_back(step.innovation_norm);
        state = std::move(step.prior_next);
    }
    return out;
}

}  // namespace dptraffic
