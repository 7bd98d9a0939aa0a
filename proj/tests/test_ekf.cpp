#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "dptraffic/ekf.hpp"
#include "dptraffic/rng.hpp"

using namespace dptraffic;

namespace {

FundamentalDiagram wb_triangle() { return FundamentalDiagram{65.0, 11.6, 193.0}; }

RoadGeometry uniform_road(int interior, double dt = 1.0 / 240.0) {
    std::vector<CellSpec> cells(static_cast<std::size_t>(interior), CellSpec{0.5, 4});
    std::vector<SensorSpec> sensors{SensorSpec{"s01", 1, 4}};
    return RoadGeometry(std::move(cells), std::move(sensors), dt);
}

EkfState flat_state(int n, double rho, double var) {
    EkfState s;
    s.x = Eigen::VectorXd::Constant(n, rho);
    s.V = var * Eigen::MatrixXd::Identity(n, n);
    return s;
}

Eigen::MatrixXd finite_difference_jacobian(const RoadGeometry& geom, const FundamentalDiagram& fd,
                                           const Eigen::VectorXd& rho, double h) {
    int n = geom.state_size();
    Eigen::MatrixXd J(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<double> up(rho.data(), rho.data() + n), dn(up);
        up[static_cast<std::size_t>(j)] += h;
        dn[static_cast<std::size_t>(j)] -= h;
        auto fu = ctm_map(geom, fd, up);
        auto fdn = ctm_map(geom, fd, dn);
        for (int i = 0; i < n; ++i)
            J(i, j) = (fu[static_cast<std::size_t>(i)] - fdn[static_cast<std::size_t>(i)]) / (2.0 * h);
    }
    return J;
}

DensityPseudoMeasurement reading(const std::string& id, int k, double z, Mode mode, bool decisive,
                                 double belief, double pseudo_flow, double z_noise_sd = 0.0) {
    DensityPseudoMeasurement m;
    m.sensor_id = id;
    m.k = k;
    m.z = z;
    m.raw_mode = mode;
    m.mode_used = mode;
    m.decisive = decisive;
    m.belief = belief;
    m.pseudo_flow = pseudo_flow;
    m.z_noise_sd = z_noise_sd;
    return m;
}

}  // namespace

TEST_CASE("conservation-map jacobian") {
    auto fd = wb_triangle();

    SUBCASE("matches central differences across flux branches") {
        std::vector<CellSpec> cells{{0.5, 4}, {0.4, 3}, {0.5, 3}, {0.6, 2}};
        RoadGeometry geom(std::move(cells), {}, 1.0 / 240.0);
        // States exercising sending, receiving, and capacity branches, all
        // away from branch ties so the map is locally linear.
        std::vector<Eigen::VectorXd> states;
        Eigen::VectorXd mixed(6);
        mixed << 8.0, 12.0, 150.0, 170.0, 20.0, 6.0;
        states.push_back(mixed);
        Eigen::VectorXd free_rho = Eigen::VectorXd::Constant(6, 10.0);
        states.push_back(free_rho);
        Eigen::VectorXd jammed = Eigen::VectorXd::Constant(6, 180.0);
        states.push_back(jammed);

        for (const auto& rho : states) {
            auto F = dynamics_jacobian(geom, fd, rho);
            auto J = finite_difference_jacobian(geom, fd, rho, 1e-5);
            CHECK((F - J).cwiseAbs().maxCoeff() < 1e-4);
        }
    }

    SUBCASE("ghost rows are identity") {
        auto geom = uniform_road(4);
        Eigen::VectorXd rho = Eigen::VectorXd::Constant(6, 20.0);
        auto F = dynamics_jacobian(geom, fd, rho);
        CHECK(F.row(0).sum() == 1.0);
        CHECK(F(0, 0) == 1.0);
        CHECK(F(5, 5) == 1.0);
        CHECK(F.row(5).sum() == 1.0);
    }

    SUBCASE("a capacity tie zeroes the inflow partials") {
        auto geom = uniform_road(2);
        Eigen::VectorXd rho(4);
        // Sending flux at the critical density equals capacity bitwise; the
        // tie resolves to the capacity branch with zero partials.
        rho << fd.critical_density(), 5.0, 5.0, 5.0;
        auto F = dynamics_jacobian(geom, fd, rho);
        CHECK(F(1, 0) == 0.0);
    }

    SUBCASE("state size mismatch is rejected") {
        auto geom = uniform_road(3);
        CHECK_THROWS_AS(dynamics_jacobian(geom, fd, Eigen::VectorXd::Zero(4)), std::invalid_argument);
    }
}

TEST_CASE("single filter step") {
    auto fd = wb_triangle();
    auto geom = uniform_road(4);
    const int n = geom.state_size();
    EkfOptions opt;

    SUBCASE("an empty batch is pure prediction") {
        auto prior = flat_state(n, 15.0, 25.0);
        auto res = ekf_step(geom, fd, prior, MeasurementBatch{}, opt);
        CHECK(res.innovation_norm == 0.0);
        CHECK(res.posterior.x == prior.x);
        CHECK(res.prior_next.k == 1);
        std::vector<double> rho(prior.x.data(), prior.x.data() + n);
        auto mapped = ctm_map(geom, fd, rho);
        for (int i = 0; i < n; ++i) CHECK(res.prior_next.x(i) == mapped[static_cast<std::size_t>(i)]);
    }

    SUBCASE("a near-exact measurement pins the posterior") {
        auto prior = flat_state(n, 30.0, 25.0);
        MeasurementBatch batch;
        batch.entries.push_back(MeasurementEntry{2, 14.0, 1e-12});
        auto res = ekf_step(geom, fd, prior, batch, opt);
        CHECK(res.posterior.x(2) == doctest::Approx(14.0).epsilon(1e-9));
        CHECK(res.posterior.V(2, 2) < 1e-6);
    }

    SUBCASE("a measurement equal to the prior mean changes nothing") {
        auto prior = flat_state(n, 30.0, 25.0);
        MeasurementBatch batch;
        batch.entries.push_back(MeasurementEntry{1, 30.0, 2.0});
        auto res = ekf_step(geom, fd, prior, batch, opt);
        CHECK(res.innovation_norm == 0.0);
        CHECK(res.posterior.x == prior.x);
        CHECK(res.posterior.V(1, 1) < prior.V(1, 1));  // variance still contracts
    }

    SUBCASE("entry order within a batch does not matter") {
        auto prior = flat_state(n, 30.0, 25.0);
        MeasurementBatch ab, ba;
        ab.entries = {MeasurementEntry{1, 12.0, 2.0}, MeasurementEntry{3, 160.0, 5.0}};
        ba.entries = {MeasurementEntry{3, 160.0, 5.0}, MeasurementEntry{1, 12.0, 2.0}};
        auto ra = ekf_step(geom, fd, prior, ab, opt);
        auto rb = ekf_step(geom, fd, prior, ba, opt);
        CHECK((ra.posterior.x - rb.posterior.x).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((ra.posterior.V - rb.posterior.V).cwiseAbs().maxCoeff() < 1e-9);
    }

    SUBCASE("the posterior mean is clamped into the physical range") {
        auto prior = flat_state(n, 5.0, 25.0);
        prior.x(2) = -7.0;  // out-of-range prior mean, as after a wild innovation
        auto res = ekf_step(geom, fd, prior, MeasurementBatch{}, opt);
        CHECK(res.posterior.x(2) == 0.0);

        prior.x(2) = 400.0;
        res = ekf_step(geom, fd, prior, MeasurementBatch{}, opt);
        CHECK(res.posterior.x(2) == fd.jam_density);
    }

    SUBCASE("covariances stay symmetric positive semidefinite") {
        auto rng = RngStream::derive(31337, "ekf-psd");
        EkfState state = flat_state(n, 20.0, 25.0);
        for (int step = 0; step < 30; ++step) {
            MeasurementBatch batch;
            int m = static_cast<int>(rng.next_u64() % 4);
            for (int j = 0; j < m; ++j)
                batch.entries.push_back(MeasurementEntry{static_cast<int>(rng.next_u64() % n),
                                                         rng.uniform() * 193.0,
                                                         0.5 + rng.uniform() * 50.0});
            auto res = ekf_step(geom, fd, state, batch, opt);
            for (const EkfState* s : {&res.posterior, &res.prior_next}) {
                CHECK((s->V - s->V.transpose()).norm() == 0.0);
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s->V);
                CHECK(eig.eigenvalues().minCoeff() > -1e-9);
            }
            state = res.prior_next;
        }
    }

    SUBCASE("argument validation") {
        auto prior = flat_state(n, 10.0, 25.0);
        MeasurementBatch bad_cell;
        bad_cell.entries.push_back(MeasurementEntry{n, 10.0, 1.0});
        CHECK_THROWS_AS(ekf_step(geom, fd, prior, bad_cell, opt), std::invalid_argument);
        bad_cell.entries[0].cell = -1;
        CHECK_THROWS_AS(ekf_step(geom, fd, prior, bad_cell, opt), std::invalid_argument);
        MeasurementBatch bad_r;
        bad_r.entries.push_back(MeasurementEntry{1, 10.0, 0.0});
        CHECK_THROWS_AS(ekf_step(geom, fd, prior, bad_r, opt), std::invalid_argument);
        CHECK_THROWS_AS(ekf_step(geom, fd, flat_state(n + 1, 10.0, 25.0), MeasurementBatch{}, opt),
                        std::invalid_argument);
        EkfOptions bad_opt;
        bad_opt.r_base = 0.0;
        CHECK_THROWS_AS(ekf_step(geom, fd, prior, MeasurementBatch{}, bad_opt), std::invalid_argument);
        bad_opt = EkfOptions{};
        bad_opt.nondecisive_r_scale = 0.5;
        CHECK_THROWS_AS(ekf_step(geom, fd, prior, MeasurementBatch{}, bad_opt), std::invalid_argument);
        bad_opt = EkfOptions{};
        bad_opt.q_interior = -1.0;
        CHECK_THROWS_AS(ekf_step(geom, fd, prior, MeasurementBatch{}, bad_opt), std::invalid_argument);
    }
}

TEST_CASE("filter equals a hand-rolled linear filter on the free branch") {
    // With every density far below critical, the sending branch is active at
    // all interfaces and the conservation map is a fixed linear stencil. A
    // plain Kalman filter against that stencil must agree with the extended
    // filter to rounding.
    auto fd = wb_triangle();
    auto geom = uniform_road(4);
    const int n = geom.state_size();
    const double sc = geom.dt() / 0.5;

    EkfOptions opt;
    opt.jitter = 0.0;

    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
    F(0, 0) = 1.0;
    F(n - 1, n - 1) = 1.0;
    for (int i = 1; i <= 4; ++i) {
        F(i, i - 1) = sc * fd.free_flow_speed;
        F(i, i) = 1.0 - sc * fd.free_flow_speed;
    }
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) Q(i, i) = (i == 0 || i == n - 1) ? opt.q_ghost : opt.q_interior;

    auto rng = RngStream::derive(777, "ekf-linear");
    EkfState state = flat_state(n, 12.0, 9.0);
    Eigen::VectorXd x = state.x;
    Eigen::MatrixXd V = state.V;

    for (int k = 0; k < 50; ++k) {
        MeasurementBatch batch;
        batch.entries.push_back(MeasurementEntry{1, 10.0 + 4.0 * rng.uniform(), 2.0});
        batch.entries.push_back(MeasurementEntry{3, 11.0 + 4.0 * rng.uniform(), 3.0});

        auto res = ekf_step(geom, fd, state, batch, opt);

        // Reference update with explicit matrices.
        int m = static_cast<int>(batch.entries.size());
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, n);
        Eigen::VectorXd z(m);
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < m; ++j) {
            H(j, batch.entries[static_cast<std::size_t>(j)].cell) = 1.0;
            z(j) = batch.entries[static_cast<std::size_t>(j)].z;
            R(j, j) = batch.entries[static_cast<std::size_t>(j)].r;
        }
        Eigen::MatrixXd S = H * V * H.transpose() + R;
        Eigen::MatrixXd K = (S.ldlt().solve(H * V)).transpose();
        x = x + K * (z - H * x);
        Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
        V = IKH * V * IKH.transpose() + K * R * K.transpose();
        V = 0.5 * (V + V.transpose()).eval();

        REQUIRE(x.minCoeff() > 0.0);  // clamping never engages in this regime
        REQUIRE(x.maxCoeff() < 28.0);
        CHECK((res.posterior.x - x).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((res.posterior.V - V).cwiseAbs().maxCoeff() < 1e-8);

        x = F * x;
        V = (F * V * F.transpose() + Q).eval();
        V = 0.5 * (V + V.transpose()).eval();
        CHECK((res.prior_next.x - x).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((res.prior_next.V - V).cwiseAbs().maxCoeff() < 1e-8);

        state = res.prior_next;
        x = state.x;  // resynchronize to keep rounding differences from compounding
        V = state.V;
    }
}

TEST_CASE("noise-free tracking is exact") {
    auto fd = wb_triangle();
    auto geom = uniform_road(5);
    const int n = geom.state_size();

    EkfOptions opt;
    opt.q_interior = 0.0;
    opt.q_ghost = 0.0;

    DensityState init;
    init.rho = {12.0, 15.0, 40.0, 90.0, 140.0, 140.0, 150.0};
    auto res = build_density_map(geom, fd, {}, 10, opt, init, 1.0);

    std::vector<double> truth = init.rho;
    for (int k = 0; k < 10; ++k) {
        for (int i = 0; i < n; ++i)
            CHECK(res.estimates[static_cast<std::size_t>(k)].rho[static_cast<std::size_t>(i)] ==
                  truth[static_cast<std::size_t>(i)]);
        truth = ctm_map(geom, fd, truth);
        CHECK(res.innovation_norm[static_cast<std::size_t>(k)] == 0.0);
    }
}

TEST_CASE("density map measurement weighting") {
    auto fd = wb_triangle();
    auto geom = uniform_road(4);
    DensityState init;
    init.rho.assign(6, 30.0);
    EkfOptions opt;

    SUBCASE("free mode pins the upstream cell, congested the downstream") {
        auto free_run = build_density_map(
            geom, fd, {reading("s01", 0, 10.0, Mode::Free, true, 1.0, 650.0)}, 1, opt, init, 25.0);
        const auto& f = free_run.estimates[0].rho;
        CHECK(std::abs(f[1] - 10.0) < 2.0);   // bound side follows the reading
        CHECK(std::abs(f[2] - 30.0) < 0.2);   // off side barely moves
        CHECK(f[2] < 30.0);                   // but it does move toward the reading

        auto cong_run = build_density_map(
            geom, fd, {reading("s01", 0, 150.0, Mode::Congested, true, 1.0, 480.0)}, 1, opt, init, 25.0);
        const auto& c = cong_run.estimates[0].rho;
        CHECK(std::abs(c[2] - 150.0) < 6.0);
        CHECK(std::abs(c[1] - 30.0) < 4.0);
    }

    SUBCASE("held readings are trusted less") {
        auto decisive = build_density_map(
            geom, fd, {reading("s01", 0, 10.0, Mode::Free, true, 1.0, 650.0)}, 1, opt, init, 25.0);
        auto held = build_density_map(
            geom, fd, {reading("s01", 0, 10.0, Mode::Free, false, 1.0, 650.0)}, 1, opt, init, 25.0);
        double pull_decisive = 30.0 - decisive.estimates[0].rho[1];
        double pull_held = 30.0 - held.estimates[0].rho[1];
        CHECK(pull_held > 0.0);
        CHECK(pull_held < pull_decisive);
    }

    SUBCASE("branch risk discounts low-confidence inversions") {
        auto sure = build_density_map(
            geom, fd, {reading("s01", 0, 10.0, Mode::Free, true, 1.0, 600.0)}, 1, opt, init, 25.0);
        auto unsure = build_density_map(
            geom, fd, {reading("s01", 0, 10.0, Mode::Free, true, 0.6, 600.0)}, 1, opt, init, 25.0);
        // At 600 veh/h/lane the two inversion branches sit 130 veh/mi/lane
        // apart, so 40% branch doubt adds a variance of several thousand.
        CHECK(std::abs(sure.estimates[0].rho[1] - 10.0) < 2.0);
        CHECK(std::abs(unsure.estimates[0].rho[1] - 30.0) < 2.0);
    }

    SUBCASE("mechanism noise inflates the variance") {
        auto clean = build_density_map(
            geom, fd, {reading("s01", 0, 10.0, Mode::Free, true, 1.0, 650.0, 0.0)}, 1, opt, init, 25.0);
        auto noisy = build_density_map(
            geom, fd, {reading("s01", 0, 10.0, Mode::Free, true, 1.0, 650.0, 20.0)}, 1, opt, init, 25.0);
        double pull_clean = 30.0 - clean.estimates[0].rho[1];
        double pull_noisy = 30.0 - noisy.estimates[0].rho[1];
        CHECK(pull_noisy < pull_clean);
    }

    SUBCASE("measurements shrink the covariance trace") {
        std::vector<DensityPseudoMeasurement> ms;
        for (int k = 0; k < 6; ++k) ms.push_back(reading("s01", k, 12.0, Mode::Free, true, 1.0, 780.0));
        auto with = build_density_map(geom, fd, ms, 6, opt, init, 25.0);
        auto without = build_density_map(geom, fd, {}, 6, opt, init, 25.0);
        CHECK(with.trace_cov[5] < without.trace_cov[5]);
        CHECK(with.innovation_norm[0] > 0.0);
        CHECK(without.innovation_norm[0] == 0.0);
    }

    SUBCASE("readings outside the horizon are ignored") {
        auto spilled = build_density_map(
            geom, fd, {reading("s01", 9, 10.0, Mode::Free, true, 1.0, 650.0)}, 2, opt, init, 25.0);
        auto empty = build_density_map(geom, fd, {}, 2, opt, init, 25.0);
        for (int k = 0; k < 2; ++k)
            CHECK(spilled.estimates[static_cast<std::size_t>(k)].rho ==
                  empty.estimates[static_cast<std::size_t>(k)].rho);
    }

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(build_density_map(geom, fd, {}, 0, opt, init, 25.0), std::invalid_argument);
        CHECK_THROWS_AS(build_density_map(geom, fd, {}, 2, opt, init, 0.0), std::invalid_argument);
        DensityState short_init;
        short_init.rho.assign(3, 10.0);
        CHECK_THROWS_AS(build_density_map(geom, fd, {}, 2, opt, short_init, 25.0),
                        std::invalid_argument);
        CHECK_THROWS_AS(
            build_density_map(geom, fd, {reading("zz", 0, 10.0, Mode::Free, true, 1.0, 650.0)}, 1, opt,
                              init, 25.0),
            std::invalid_argument);
    }
}
