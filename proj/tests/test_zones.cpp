#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dptraffic/zones.hpp"

using namespace dptraffic;

namespace {

FundamentalDiagram wb_triangle() { return FundamentalDiagram{65.0, 11.6, 193.0}; }

constexpr double kGateLength = 20.0 / 5280.0;  // [mi]
constexpr double kPeriod = 30.0 / 3600.0;      // [h]

/** Log midpoint of the free and congested band centers. It lies in both
 *  bands exactly when the bands intersect, so it witnesses membership on the
 *  whole sensitive interval and fails outside it. */
double both_branch_witness(const FundamentalDiagram& fd, double phi) {
    double free_center = phi / fd.free_flow_speed;
    double congested_center = fd.jam_density - phi / fd.congestion_wave_speed;
    return std::sqrt(free_center * congested_center);
}

}  // namespace

TEST_CASE("branch membership on hand points") {
    auto fd = wb_triangle();
    ZoneParams zp;  // zeta 0.51, psi 0.25

    SUBCASE("free-branch point passes only the free test") {
        CHECK(in_TF(fd, zp, 650.0, 10.0));
        CHECK_FALSE(in_TC(fd, zp, 650.0, 10.0));
    }

    SUBCASE("congested-branch point passes only the congested test") {
        // jam - 498.8 / 11.6 = 150, so the congested log distance is zero.
        CHECK(in_TC(fd, zp, 498.8, 150.0));
        CHECK_FALSE(in_TF(fd, zp, 498.8, 150.0));
    }

    SUBCASE("nonpositive inputs fail both tests") {
        CHECK_FALSE(in_TF(fd, zp, 0.0, 10.0));
        CHECK_FALSE(in_TF(fd, zp, -5.0, 10.0));
        CHECK_FALSE(in_TF(fd, zp, 650.0, 0.0));
        CHECK_FALSE(in_TC(fd, zp, 650.0, 0.0));
        CHECK_FALSE(in_TC(fd, zp, 650.0, -1.0));
    }

    SUBCASE("congested test fails once jam - phi / w is nonpositive") {
        double ceiling = fd.congestion_wave_speed * fd.jam_density;
        CHECK_FALSE(in_TC(fd, zp, ceiling, 10.0));
        CHECK_FALSE(in_TC(fd, zp, ceiling + 100.0, 10.0));
    }

    SUBCASE("band edges: inside zeta passes, outside fails") {
        double center = 650.0 / fd.free_flow_speed;
        CHECK(in_TF(fd, zp, 650.0, center * std::exp(0.5)));
        CHECK(in_TF(fd, zp, 650.0, center * std::exp(-0.5)));
        CHECK_FALSE(in_TF(fd, zp, 650.0, center * std::exp(0.52)));
        CHECK_FALSE(in_TF(fd, zp, 650.0, center * std::exp(-0.52)));

        double ccenter = fd.jam_density - 498.8 / fd.congestion_wave_speed;
        CHECK(in_TC(fd, zp, 498.8, ccenter * std::exp(0.5)));
        CHECK_FALSE(in_TC(fd, zp, 498.8, ccenter * std::exp(0.52)));
    }

    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(in_TF(fd, ZoneParams{0.0, 0.25}, 650.0, 10.0), std::invalid_argument);
        CHECK_THROWS_AS(in_TF(fd, ZoneParams{-0.1, 0.25}, 650.0, 10.0), std::invalid_argument);
        CHECK_THROWS_AS(in_TF(fd, ZoneParams{0.51, -0.1}, 650.0, 10.0), std::invalid_argument);
        CHECK_THROWS_AS(in_TF(fd, ZoneParams{0.51, 1.5}, 650.0, 10.0), std::invalid_argument);
    }
}

TEST_CASE("sensitive interval closed form") {
    auto fd = wb_triangle();

    SUBCASE("western-boulevard anchor") {
        auto [lo, hi] = sensitive_interval(fd, ZoneParams{});
        CHECK(lo == doctest::Approx(1497.616640).epsilon(1e-9));
        CHECK(hi == doctest::Approx(2103.438816).epsilon(1e-9));
        // The upper endpoint exceeds capacity: both branch tests are algebraic
        // in the measurements, not limited to feasible flows.
        CHECK(hi > fd.capacity());
        CHECK(lo < fd.capacity());
    }

    SUBCASE("symmetric diagram with zeta = ln sqrt(2)") {
        FundamentalDiagram sym{1.0, 1.0, 2.0};
        auto [lo, hi] = sensitive_interval(sym, ZoneParams{0.5 * std::log(2.0), 0.25});
        CHECK(lo == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(hi == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    }

    SUBCASE("interval collapses to capacity as zeta -> 0") {
        auto [lo, hi] = sensitive_interval(fd, ZoneParams{1e-9, 0.25});
        CHECK(lo == doctest::Approx(fd.capacity()).epsilon(1e-6));
        CHECK(hi == doctest::Approx(fd.capacity()).epsilon(1e-6));
        CHECK(lo <= hi);
    }

    SUBCASE("membership witness characterizes the interval") {
        ZoneParams zp;
        auto [lo, hi] = sensitive_interval(fd, zp);
        for (double phi : {lo + 1.0, 0.5 * (lo + hi), hi - 1.0}) {
            double y = both_branch_witness(fd, phi);
            CHECK(in_TF(fd, zp, phi, y));
            CHECK(in_TC(fd, zp, phi, y));
        }
        for (double phi : {lo - 1.0, hi + 1.0, 650.0}) {
            double y = both_branch_witness(fd, phi);
            CHECK_FALSE((in_TF(fd, zp, phi, y) && in_TC(fd, zp, phi, y)));
        }
    }
}

TEST_CASE("robust flow bound") {
    auto fd = wb_triangle();

    SUBCASE("four-lane anchors at 30 s sampling") {
        double a25 = private_alpha(fd, ZoneParams{0.51, 0.25}, 4, kPeriod, kGateLength);
        double a10 = private_alpha(fd, ZoneParams{0.51, 0.10}, 4, kPeriod, kGateLength);
        CHECK(a25 == doctest::Approx(1264.333659).epsilon(1e-6));
        CHECK(a10 == doctest::Approx(1392.2626).epsilon(1e-6));
    }

    SUBCASE("held-mode density gap jam - alpha (1/v + 1/w)") {
        double slope = 1.0 / fd.free_flow_speed + 1.0 / fd.congestion_wave_speed;
        double a25 = private_alpha(fd, ZoneParams{0.51, 0.25}, 4, kPeriod, kGateLength);
        double a10 = private_alpha(fd, ZoneParams{0.51, 0.10}, 4, kPeriod, kGateLength);
        double gap25 = fd.jam_density - a25 * slope;
        double gap10 = fd.jam_density - a10 * slope;
        CHECK(gap25 == doctest::Approx(64.554432).epsilon(1e-6));
        CHECK(gap10 == doctest::Approx(51.558).epsilon(1e-4));
        // A larger per-vehicle occupancy footprint shrinks the robust range
        // and widens the unresolvable density gap.
        CHECK(gap25 > gap10);
    }

    SUBCASE("vanishing perturbations push the bound to the interval floor") {
        double lo = sensitive_interval(fd, ZoneParams{0.51, 0.0}).first;
        double a = private_alpha(fd, ZoneParams{0.51, 0.0}, 1, 1e12, kGateLength);
        CHECK(a == doctest::Approx(lo).epsilon(1e-6));
    }

    SUBCASE("monotone in psi, lanes, and T") {
        double base = private_alpha(fd, ZoneParams{0.51, 0.25}, 4, kPeriod, kGateLength);
        CHECK(private_alpha(fd, ZoneParams{0.51, 0.10}, 4, kPeriod, kGateLength) > base);
        CHECK(private_alpha(fd, ZoneParams{0.51, 0.25}, 8, kPeriod, kGateLength) > base);
        CHECK(private_alpha(fd, ZoneParams{0.51, 0.25}, 4, 2.0 * kPeriod, kGateLength) > base);
        CHECK(private_alpha(fd, ZoneParams{0.51, 0.30}, 4, kPeriod, kGateLength) < base);
    }

    SUBCASE("bound never reaches the interval floor or capacity") {
        for (double psi : {0.0, 0.1, 0.25, 0.5})
            for (int lanes : {1, 2, 4, 8}) {
                ZoneParams zp{0.51, psi};
                double a = 0.0;
                try {
                    a = private_alpha(fd, zp, lanes, kPeriod, kGateLength);
                } catch (const std::domain_error&) {
                    continue;  // no private zone at these parameters
                }
                CHECK(a > 0.0);
                CHECK(a <= sensitive_interval(fd, zp).first + 1e-9);
                CHECK(a <= fd.capacity());
            }
    }

    SUBCASE("degenerate sensor has no private zone") {
        // One lane at psi = 1: the occupancy shift 1/g exceeds the whole
        // admissible density scale, so no flow is robust.
        CHECK_THROWS_AS(private_alpha(fd, ZoneParams{0.51, 1.0}, 1, kPeriod, kGateLength),
                        std::domain_error);
    }

    SUBCASE("sensor argument validation") {
        CHECK_THROWS_AS(private_alpha(fd, ZoneParams{}, 0, kPeriod, kGateLength),
                        std::invalid_argument);
        CHECK_THROWS_AS(private_alpha(fd, ZoneParams{}, 4, 0.0, kGateLength), std::invalid_argument);
        CHECK_THROWS_AS(private_alpha(fd, ZoneParams{}, 4, kPeriod, 0.0), std::invalid_argument);
    }
}

TEST_CASE("restricted branch sets") {
    auto fd = wb_triangle();
    ZoneParams zp;
    double alpha = private_alpha(fd, zp, 4, kPeriod, kGateLength);

    SUBCASE("below the bound the tests agree with the unrestricted ones") {
        CHECK(in_PTF(fd, zp, alpha, 650.0, 10.0));
        CHECK_FALSE(in_PTC(fd, zp, alpha, 650.0, 10.0));
        CHECK(in_PTC(fd, zp, alpha, 498.8, 150.0));
    }

    SUBCASE("at or above the bound both restricted tests fail") {
        double y = 650.0 / fd.free_flow_speed;  // irrelevant once phi >= alpha
        CHECK_FALSE(in_PTF(fd, zp, alpha, alpha, alpha / fd.free_flow_speed));
        CHECK_FALSE(in_PTF(fd, zp, alpha, alpha + 50.0, y));
        CHECK_FALSE(in_PTC(fd, zp, alpha, alpha + 50.0,
                           fd.jam_density - (alpha + 50.0) / fd.congestion_wave_speed));
    }

    SUBCASE("restricted membership implies unrestricted membership") {
        for (double phi = 50.0; phi < 2200.0; phi += 77.0)
            for (double y = 1.0; y < 190.0; y += 13.0) {
                if (in_PTF(fd, zp, alpha, phi, y)) CHECK(in_TF(fd, zp, phi, y));
                if (in_PTC(fd, zp, alpha, phi, y)) CHECK(in_TC(fd, zp, phi, y));
                if (phi < alpha && in_TF(fd, zp, phi, y)) CHECK(in_PTF(fd, zp, alpha, phi, y));
            }
    }
}

TEST_CASE("interval grid scan brackets the closed form") {
    auto fd = wb_triangle();
    ZoneParams zp;
    auto [lo, hi] = sensitive_interval(fd, zp);

    auto res = sensitive_interval_scan(fd, zp, 2.0, 0.04);
    CHECK(res.nonempty);
    CHECK(res.flow_step == 2.0);
    CHECK(std::abs(res.lo - lo) <= 2.0 * res.flow_step);
    CHECK(std::abs(res.hi - hi) <= 2.0 * res.flow_step);
    CHECK(res.lo >= lo - 1e-9);
    CHECK(res.hi <= hi + 1e-9);
}

TEST_CASE("interval grid scan handles a collapsed band") {
    // At zeta = 1e-6 the interval has width ~4e-3, far below a step of 1:
    // the scan may legitimately miss it, but must not report points outside.
    auto fd = wb_triangle();
    auto res = sensitive_interval_scan(fd, ZoneParams{1e-6, 0.25}, 1.0, 0.01);
    if (res.nonempty) {
        auto [lo, hi] = sensitive_interval(fd, ZoneParams{1e-6, 0.25});
        CHECK(res.lo >= lo - 1e-6);
        CHECK(res.hi <= hi + 1e-6);
    }
}

TEST_CASE("flip search locates the robust bound") {
    auto fd = wb_triangle();
    ZoneParams zp;
    double alpha = private_alpha(fd, zp, 4, kPeriod, kGateLength);

    FlipSearchOptions opt;
    opt.flow_step = 2.0;
    opt.y_step = 0.02;
    opt.perturb_points = 5;
    auto res = flip_bound_oracle(fd, zp, 4, kPeriod, kGateLength, opt);
    CHECK(res.found);
    CHECK(res.alpha_empirical >= alpha - 1e-9);
    CHECK(std::abs(res.alpha_empirical - alpha) <= 2.0 * opt.flow_step);
}

TEST_CASE("flip search degenerates to the interval floor without perturbations") {
    auto fd = wb_triangle();
    ZoneParams zp{0.51, 0.0};
    double lo = sensitive_interval(fd, zp).first;

    // With psi = 0 and a huge T the perturbation box is essentially a point,
    // so the first exhibited flip is the first flow where both tests overlap.
    FlipSearchOptions opt;
    opt.flow_step = 2.0;
    auto res = flip_bound_oracle(fd, zp, 1, 1e9, kGateLength, opt);
    CHECK(res.found);
    CHECK(std::abs(res.alpha_empirical - lo) <= 2.0 * opt.flow_step);
}

TEST_CASE("grid scan option validation") {
    auto fd = wb_triangle();
    CHECK_THROWS_AS(sensitive_interval_scan(fd, ZoneParams{}, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(sensitive_interval_scan(fd, ZoneParams{}, 1.0, -0.1), std::invalid_argument);
    FlipSearchOptions bad;
    bad.perturb_points = 1;
    CHECK_THROWS_AS(flip_bound_oracle(fd, ZoneParams{}, 4, kPeriod, kGateLength, bad),
                    std::invalid_argument);
}
