#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dptraffic/ctm.hpp"

using namespace dptraffic;

namespace {

const FundamentalDiagram kFd{};

RoadGeometry uniform_road(int cells, double length = 0.55, int lanes = 4, double dt = 1.0 / 120.0) {
    return RoadGeometry(std::vector<CellSpec>(static_cast<std::size_t>(cells), CellSpec{length, lanes}),
                        {}, dt);
}

}  // namespace

TEST_CASE("uniform free flow is a fixed point of the conservation map") {
    auto geom = uniform_road(4);
    std::vector<double> rho(6, 10.0);
    auto next = ctm_map(geom, kFd, rho);
    for (double r : next) CHECK(r == doctest::Approx(10.0).epsilon(1e-13));

    std::vector<double> zero(6, 0.0);
    auto still = ctm_map(geom, kFd, zero);
    for (double r : still) CHECK(r == 0.0);
}

TEST_CASE("two-cell update reproduces the hand-evaluated flux balance") {
    RoadGeometry geom({CellSpec{0.5, 4}, CellSpec{0.5, 4}}, {}, 1.0 / 240.0);
    std::vector<double> rho{10.0, 10.0, 180.0, 180.0};
    auto next = ctm_map(geom, kFd, rho);

    // interface fluxes: in 650 (free sending), out 11.6 * 13 = 150.8 (receiving)
    double expect1 = 10.0 + (1.0 / 240.0) / 0.5 * (650.0 - 150.8);
    CHECK(next[1] == doctest::Approx(expect1).epsilon(1e-12));
    CHECK(next[1] == doctest::Approx(14.16).epsilon(1e-10));
    // the jammed cell passes 150.8 through both interfaces
    CHECK(next[2] == doctest::Approx(180.0).epsilon(1e-12));
    // ghost entries map to themselves
    CHECK(next[0] == 10.0);
    CHECK(next[3] == 180.0);
}

TEST_CASE("lane drops rescale the incoming interface flux") {
    RoadGeometry geom({CellSpec{0.55, 4}, CellSpec{0.55, 2}}, {}, 1.0 / 120.0);
    std::vector<double> rho{10.0, 10.0, 10.0, 10.0};
    auto next = ctm_map(geom, kFd, rho);

    // cell 1 sits between equal-lane interfaces: unchanged
    CHECK(next[1] == doctest::Approx(10.0).epsilon(1e-13));
    // cell 2 receives 4 lanes' worth of flux on 2 lanes: ratio 2
    double expect2 = 10.0 + (1.0 / 120.0) / 0.55 * (2.0 * 650.0 - 650.0);
    CHECK(next[2] == doctest::Approx(expect2).epsilon(1e-12));
    CHECK(next[2] == doctest::Approx(10.0 + 650.0 / 66.0).epsilon(1e-12));
}

TEST_CASE("conservation map rejects mismatched state sizes") {
    auto geom = uniform_road(4);
    CHECK_THROWS_AS(ctm_map(geom, kFd, std::vector<double>(5, 1.0)), std::invalid_argument);
}

TEST_CASE("per-lane vehicle count telescopes across lane changes") {
    // closed road: upstream ghost empty (sends nothing), downstream ghost
    // jammed (accepts nothing), so the interior total must be preserved
    RoadGeometry geom({CellSpec{0.5, 4}, CellSpec{0.6, 3}, CellSpec{0.5, 3}, CellSpec{0.4, 2}}, {},
                      1.0 / 240.0);
    std::vector<double> rho{0.0, 40.0, 90.0, 140.0, 25.0, kFd.jam_density};
    double before = interior_vehicle_count(geom, rho);
    for (int step = 0; step < 50; ++step) {
        rho = ctm_map(geom, kFd, rho);
        rho[0] = 0.0;
        rho[5] = kFd.jam_density;
    }
    double after = interior_vehicle_count(geom, rho);
    CHECK(after == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("the update keeps densities inside the physical range") {
    auto geom = uniform_road(6);
    std::mt19937 gen(31);
    std::uniform_real_distribution<double> d(0.0, kFd.jam_density);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> rho(8);
        for (double& r : rho) r = d(gen);
        auto next = ctm_map(geom, kFd, rho);
        for (double r : next) {
            CHECK(r >= -1e-9);
            CHECK(r <= kFd.jam_density + 1e-9);
        }
    }
}

TEST_CASE("stochastic steps clamp noisy densities to the physical range") {
    auto geom = uniform_road(3);
    ProcessNoiseConfig noise{400.0, 400.0, {}};
    auto rng = RngStream::derive(5, "sim-noise");
    DensityState state{std::vector<double>(5, 100.0), 0};
    for (int step = 0; step < 200; ++step) {
        state = ctm_step(geom, kFd, state, noise, rng);
        for (double r : state.rho) {
            CHECK(r >= 0.0);
            CHECK(r <= kFd.jam_density);
        }
    }
    CHECK(state.k == 200);
}

TEST_CASE("process noise validation rejects bad configurations") {
    ProcessNoiseConfig negative{-1.0, 0.0, {}};
    CHECK_THROWS_AS(negative.validate(3), std::invalid_argument);
    ProcessNoiseConfig short_override{0.0, 0.0, {1.0, 1.0}};
    CHECK_THROWS_AS(short_override.validate(3), std::invalid_argument);
    ProcessNoiseConfig good{0.5, 2.0, {}};
    CHECK_NOTHROW(good.validate(3));
}

TEST_CASE("zero-period simulation returns only the initial state") {
    auto geom = uniform_road(4);
    DensityState init{std::vector<double>(6, 10.0), 0};
    auto traj = simulate(geom, kFd, init, {}, {}, 9, 0);
    REQUIRE(traj.size() == 1);
    CHECK(traj[0].rho == init.rho);
    CHECK(traj[0].k == 0);
}

TEST_CASE("steady boundaries and matching initial state form a fixed point") {
    auto geom = uniform_road(4);
    DensityState init{std::vector<double>(6, 10.0), 0};
    BoundaryProfile boundary{std::vector<double>(21, 10.0), std::vector<double>(21, 10.0)};
    auto traj = simulate(geom, kFd, init, {}, boundary, 9, 20);
    REQUIRE(traj.size() == 21);
    for (const auto& state : traj)
        for (double r : state.rho) CHECK(r == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("simulation trajectories are reproducible per seed") {
    auto geom = uniform_road(5);
    DensityState init{std::vector<double>(7, 30.0), 0};
    ProcessNoiseConfig noise{0.5, 2.0, {}};
    auto a = simulate(geom, kFd, init, noise, {}, 42, 50);
    auto b = simulate(geom, kFd, init, noise, {}, 42, 50);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].rho == b[k].rho);

    auto c = simulate(geom, kFd, init, noise, {}, 43, 50);
    bool any_diff = false;
    for (std::size_t k = 0; k < a.size() && !any_diff; ++k) any_diff = a[k].rho != c[k].rho;
    CHECK(any_diff);
}

TEST_CASE("boundary profiles pin the ghost cells each period") {
    auto geom = uniform_road(3);
    DensityState init{std::vector<double>(5, 10.0), 0};
    std::vector<double> up(11), down(11);
    for (int k = 0; k <= 10; ++k) {
        up[static_cast<std::size_t>(k)] = 10.0 + k;
        down[static_cast<std::size_t>(k)] = 20.0 + 2.0 * k;
    }
    auto traj = simulate(geom, kFd, init, {}, BoundaryProfile{up, down}, 1, 10);
    REQUIRE(traj.size() == 11);
    for (int k = 0; k <= 10; ++k) {
        CHECK(traj[static_cast<std::size_t>(k)].rho[0] == doctest::Approx(10.0 + k));
        CHECK(traj[static_cast<std::size_t>(k)].rho[4] == doctest::Approx(20.0 + 2.0 * k));
    }
}

TEST_CASE("short boundary profiles are rejected") {
    auto geom = uniform_road(3);
    DensityState init{std::vector<double>(5, 10.0), 0};
    BoundaryProfile tooshort{std::vector<double>(10, 10.0), {}};
    CHECK_THROWS_AS(simulate(geom, kFd, init, {}, tooshort, 1, 10), std::invalid_argument);
    BoundaryProfile down_short{{}, std::vector<double>(5, 10.0)};
    CHECK_THROWS_AS(simulate(geom, kFd, init, {}, down_short, 1, 10), std::invalid_argument);
}

TEST_CASE("closed-road simulation conserves vehicles to machine precision") {
    auto geom = uniform_road(8, 0.5, 4, 1.0 / 240.0);
    std::vector<double> rho0(10);
    for (int i = 1; i <= 8; ++i) rho0[static_cast<std::size_t>(i)] = 15.0 + 14.0 * i;
    rho0[0] = 0.0;
    rho0[9] = kFd.jam_density;
    BoundaryProfile closed{std::vector<double>(201, 0.0), std::vector<double>(201, kFd.jam_density)};

    auto traj = simulate(geom, kFd, DensityState{rho0, 0}, {}, closed, 77, 200);
    double before = interior_vehicle_count(geom, traj.front().rho);
    for (const auto& state : traj) {
        double now = interior_vehicle_count(geom, state.rho);
        CHECK(std::abs(now - before) <= 1e-9 * before);
    }
}

TEST_CASE("simulation validates geometry and state dimensions") {
    auto geom = uniform_road(3);
    DensityState bad{std::vector<double>(4, 10.0), 0};
    CHECK_THROWS_AS(simulate(geom, kFd, bad, {}, {}, 1, 5), std::invalid_argument);

    // CFL violation: cells shorter than v * dt
    RoadGeometry tight({CellSpec{0.3, 4}, CellSpec{0.3, 4}}, {}, 1.0 / 120.0);
    DensityState init{std::vector<double>(4, 10.0), 0};
    CHECK_THROWS_AS(simulate(tight, kFd, init, {}, {}, 1, 5), std::invalid_argument);
}
