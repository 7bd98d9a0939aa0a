#include "doctest.h"

#include <vector>

#include "dptraffic/dp.hpp"
#include "dptraffic/mode.hpp"
#include "dptraffic/zones.hpp"

// The compute kernels use min/OR/sum reductions over trial- or grid-indexed
// work items, so the threaded implementations must reproduce the serial
// reference exactly, not merely approximately.

using namespace dptraffic;

namespace {

FundamentalDiagram wb_triangle() { return FundamentalDiagram{65.0, 11.6, 193.0}; }

SensorConfig four_lane(const std::string& id) {
    SensorConfig sc;
    sc.id = id;
    sc.lanes = 4;
    sc.g = 20.0 / 5280.0;
    sc.T = 30.0 / 3600.0;
    sc.psi = 0.25;
    return sc;
}

}  // namespace

TEST_CASE("interval scan matches its serial reference") {
    auto fd = wb_triangle();
    ZoneParams zp{0.51, 0.25};

    for (double step : {8.0, 3.0}) {
        auto par = sensitive_interval_scan(fd, zp, step, 0.25);
        auto ser = sensitive_interval_scan_serial(fd, zp, step, 0.25);
        CHECK(par.nonempty == ser.nonempty);
        CHECK(par.lo == ser.lo);
        CHECK(par.hi == ser.hi);
        CHECK(par.flow_step == ser.flow_step);
    }

    // A collapsed band must agree on emptiness too.
    ZoneParams tight{1e-6, 0.25};
    auto par = sensitive_interval_scan(fd, tight, 10.0, 0.5);
    auto ser = sensitive_interval_scan_serial(fd, tight, 10.0, 0.5);
    CHECK(par.nonempty == ser.nonempty);
    CHECK(par.lo == ser.lo);
    CHECK(par.hi == ser.hi);
}

TEST_CASE("flip search matches its serial reference") {
    auto fd = wb_triangle();
    ZoneParams zp{0.51, 0.25};
    FlipSearchOptions opt;
    opt.flow_step = 6.0;
    opt.y_step = 0.2;
    opt.perturb_points = 3;

    for (int lanes : {1, 4}) {
        auto par = flip_bound_oracle(fd, zp, lanes, 30.0 / 3600.0, 20.0 / 5280.0, opt);
        auto ser = flip_bound_oracle_serial(fd, zp, lanes, 30.0 / 3600.0, 20.0 / 5280.0, opt);
        CHECK(par.found == ser.found);
        CHECK(par.alpha_empirical == ser.alpha_empirical);
        CHECK(par.flow_step == ser.flow_step);
    }
}

TEST_CASE("mechanism audit matches its serial reference") {
    PrivacyParams p{0.6931471805599453, 0.05};
    DpAuditOptions opt;
    opt.trials = 20000;
    opt.thresholds = 9;
    opt.seed = 99;

    SUBCASE("calibrated mechanism") {
        auto par = dp_audit_gaussian(42.0, p, opt);
        auto ser = dp_audit_gaussian_serial(42.0, p, opt);
        CHECK(par.trials == ser.trials);
        CHECK(par.thresholds == ser.thresholds);
        CHECK(par.violations == ser.violations);
        CHECK(par.worst_excess_sigma == ser.worst_excess_sigma);
        CHECK(par.sigma == ser.sigma);
    }

    SUBCASE("deliberately broken mechanism") {
        opt.sigma_scale = 0.1;
        auto par = dp_audit_gaussian(42.0, p, opt);
        auto ser = dp_audit_gaussian_serial(42.0, p, opt);
        CHECK(par.violations == ser.violations);
        CHECK(par.violations > 0);
        CHECK(par.worst_excess_sigma == ser.worst_excess_sigma);
    }
}

TEST_CASE("mode release audit matches its serial reference") {
    auto fd = wb_triangle();
    ZoneParams zp{0.51, 0.25};

    ModeAuditScenario scenario;
    scenario.sensor = four_lane("s01");
    double alpha = private_alpha(fd, zp, 4, 30.0 / 3600.0, 20.0 / 5280.0);
    scenario.flows = {650.0, alpha - 40.0, 480.0};
    scenario.occ_density = {10.0, 25.0, 150.0};

    ModeAuditOptions opt;
    opt.trials = 1500;
    opt.seed = 31;

    auto par = mode_equality_audit(fd, zp, scenario, opt);
    auto ser = mode_equality_audit_serial(fd, zp, scenario, opt);
    CHECK(par.trials == ser.trials);
    CHECK(par.adjacent_pairs == ser.adjacent_pairs);
    CHECK(par.comparisons == ser.comparisons);
    CHECK(par.same_cell == ser.same_cell);
    CHECK(par.violations == ser.violations);
    CHECK(par.equal_outputs == ser.equal_outputs);
    CHECK(par.occ_only_pairs == ser.occ_only_pairs);
    CHECK(par.occ_only_mismatch == ser.occ_only_mismatch);
    REQUIRE(par.cell_coverage.size() == ser.cell_coverage.size());
    for (std::size_t c = 0; c < par.cell_coverage.size(); ++c)
        CHECK(par.cell_coverage[c] == ser.cell_coverage[c]);
}
