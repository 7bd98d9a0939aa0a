// Timing harness for the four parallel kernels against their serial
// references. Each kernel is run on identical inputs; the outputs are
// compared exactly before the speedup is reported, so a mismatch shows up
// here as well as in the test suite.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dptraffic/dp.hpp"
#include "dptraffic/mode.hpp"
#include "dptraffic/units.hpp"
#include "dptraffic/zones.hpp"

namespace {

using namespace dptraffic;

double time_once(const std::function<void()>& fn) {
    auto start = std::chrono::steady_clock::now();
    fn();
    std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return elapsed.count();
}

double best_of(int reps, const std::function<void()>& fn) {
    double best = time_once(fn);
    for (int r = 1; r < reps; ++r) best = std::min(best, time_once(fn));
    return best;
}

void report(const std::string& name, double serial_s, double parallel_s, bool match) {
    std::printf("%-22s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   results %s\n", name.c_str(),
                serial_s, parallel_s, serial_s / parallel_s, match ? "match" : "DIFFER");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; both columns run serially\n");
#endif

    FundamentalDiagram fd;
    ZoneParams zp;
    const int lanes = 4;
    const double T = 30.0 / units::kSecondsPerHour;
    const double g = 20.0 / units::kFeetPerMile;

    {
        IntervalScanResult rs{};
        IntervalScanResult rp{};
        double ts = best_of(2, [&] { rs = sensitive_interval_scan_serial(fd, zp, 0.25, 0.01); });
        double tp = best_of(2, [&] { rp = sensitive_interval_scan(fd, zp, 0.25, 0.01); });
        bool match = rs.nonempty == rp.nonempty && rs.lo == rp.lo && rs.hi == rp.hi;
        report("interval scan", ts, tp, match);
    }

    {
        FlipSearchOptions opt;
        opt.flow_step = 0.5;
        opt.y_step = 0.01;
        FlipSearchResult rs{};
        FlipSearchResult rp{};
        double ts = best_of(2, [&] { rs = flip_bound_oracle_serial(fd, zp, lanes, T, g, opt); });
        double tp = best_of(2, [&] { rp = flip_bound_oracle(fd, zp, lanes, T, g, opt); });
        bool match = rs.found == rp.found && rs.alpha_empirical == rp.alpha_empirical;
        report("flip search", ts, tp, match);
    }

    {
        PrivacyParams p{0.6931471805599453, 0.05};
        DpAuditOptions opt;
        opt.trials = 400000;
        opt.thresholds = 21;
        DpAuditResult rs{};
        DpAuditResult rp{};
        double ts = best_of(2, [&] { rs = dp_audit_gaussian_serial(42.43, p, opt); });
        double tp = best_of(2, [&] { rp = dp_audit_gaussian(42.43, p, opt); });
        bool match = rs.violations == rp.violations && rs.worst_excess_sigma == rp.worst_excess_sigma;
        report("mechanism audit", ts, tp, match);
    }

    {
        ModeAuditScenario scenario;
        scenario.sensor.id = "probe";
        scenario.sensor.lanes = lanes;
        scenario.sensor.g = g;
        scenario.sensor.T = T;
        scenario.sensor.psi = zp.psi;
        double alpha = private_alpha(fd, zp, lanes, T, g);
        scenario.flows.assign(3, alpha - 50.0);
        scenario.occ_density.assign(3, (alpha - 50.0) / fd.free_flow_speed);
        ModeAuditOptions opt;
        opt.trials = 20000;
        ModeAuditResult rs{};
        ModeAuditResult rp{};
        double ts = best_of(2, [&] { rs = mode_equality_audit_serial(fd, zp, scenario, opt); });
        double tp = best_of(2, [&] { rp = mode_equality_audit(fd, zp, scenario, opt); });
        bool match = rs.violations == rp.violations && rs.same_cell == rp.same_cell &&
                     rs.equal_outputs == rp.equal_outputs;
        report("mode audit", ts, tp, match);
    }

    return 0;
}
