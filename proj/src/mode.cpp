#include "dptraffic/mode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dptraffic {

void HmmParams::validate() const {
    if (pi1 < 0.0 || pi1 >= 1.0)
        throw std::invalid_argument("hmm params: switch probability must lie in [0, 1)");
    if (!(pi2_decisive > 0.0) || !(pi2_decisive < 1.0) || !(pi2_hold > 0.0) || !(pi2_hold < 1.0))
        throw std::invalid_argument("hmm params: confidence levels must lie in (0, 1)");
}

RawModeResult raw_mode_nonprivate(const FundamentalDiagram& fd, const ZoneParams& zp, double phi,
                                  double y, ModeTrackerState& tracker) {
    bool f = in_TF(fd, zp, phi, y);
    bool c = in_TC(fd, zp, phi, y);
    RawModeResult out;
    if (f != c) {
        out.mode = f ? Mode::Free : Mode::Congested;
        out.decisive = true;
        tracker.last_decisive = out.mode;
        tracker.hold_age = 0;
    } else {
        out.mode = tracker.last_decisive;
        out.decisive = false;
        ++tracker.hold_age;
    }
    tracker.prev_pseudo_flow = phi;
    tracker.has_prev_flow = true;
    return out;
}

RawModeResult raw_mode_private(const FundamentalDiagram& fd, const ZoneParams& zp, double alpha,
                               double pseudo_flow, double y, ModeTrackerState& tracker,
                               bool flow_trend) {
    double phi = std::max(pseudo_flow, 0.0);  // mechanism noise can push the release negative
    RawModeResult out;
    bool decided = false;
    if (phi < alpha) {
        bool f = in_TF(fd, zp, phi, y);
        bool c = in_TC(fd, zp, phi, y);
        if (f != c) {
            out.mode = f ? Mode::Free : Mode::Congested;
            out.decisive = true;
            tracker.last_decisive = out.mode;
            tracker.hold_age = 0;
            decided = true;
        }
    }
    if (!decided) {
        out.mode = tracker.last_decisive;
        out.decisive = false;
        if (flow_trend && phi >= alpha && tracker.has_prev_flow) {
            double d = pseudo_flow - tracker.prev_pseudo_flow;
            if (d > 0.0)
                out.mode = Mode::Free;
            else if (d < 0.0)
                out.mode = Mode::Congested;
        }
        ++tracker.hold_age;
    }
    tracker.prev_pseudo_flow = pseudo_flow;
    tracker.has_prev_flow = true;
    return out;
}

HmmStepResult hmm_filter_step(double belief_free, Mode measured, bool decisive, const HmmParams& hmm,
                              Mode previous) {
    hmm.validate();
    if (!(belief_free >= 0.0) || !(belief_free <= 1.0))
        throw std::invalid_argument("hmm_filter_step: belief must lie in [0, 1]");
    double predicted = belief_free * (1.0 - hmm.pi1) + (1.0 - belief_free) * hmm.pi1;
    double pi2 = decisive ? hmm.pi2_decisive : hmm.pi2_hold;
    double like_free = measured == Mode::Free ? pi2 : 1.0 - pi2;
    double like_cong = measured == Mode::Congested ? pi2 : 1.0 - pi2;
    double numer = like_free * predicted;
    double denom = numer + like_cong * (1.0 - predicted);
    HmmStepResult out;
    out.belief_free = numer / denom;
    if (out.belief_free > 0.5)
        out.filtered = Mode::Free;
    else if (out.belief_free < 0.5)
        out.filtered = Mode::Congested;
    else
        out.filtered = previous;
    return out;
}

double invert_diagram(const FundamentalDiagram& fd, double flow, Mode mode) {
    fd.validate();
    double f = std::clamp(flow, 0.0, fd.capacity());
    if (mode == Mode::Free) return f / fd.free_flow_speed;
    return fd.jam_density - f / fd.congestion_wave_speed;
}

// ============================================================================
// Measurement builders
// ============================================================================

namespace {

const PeriodSeries& series_for(const OccDensitySeries& table, const std::string& sensor_id) {
    auto it = table.find(sensor_id);
    if (it == table.end())
        throw std::invalid_argument("no occupancy-density series for sensor '" + sensor_id + "'");
    return it->second;
}

double value_at(const PeriodSeries& series, int k, const std::string& sensor_id) {
    auto it = series.find(k);
    if (it == series.end())
        throw std::invalid_argument("sensor '" + sensor_id + "': occupancy-density series missing period " +
                                    std::to_string(k));
    return it->second;
}

}  // namespace

std::vector<DensityPseudoMeasurement> density_measurements_nonprivate(
    const FundamentalDiagram& fd, const ZoneParams& zp, const std::vector<SensorConfig>& configs,
    const FlowSeries& flows, const OccDensitySeries& densities, const HmmParams& hmm) {
    hmm.validate();
    std::vector<DensityPseudoMeasurement> out;
    for (const auto& [sensor_id, flow_series] : flows) {
        config_for(configs, sensor_id).validate();
        const auto& y_series = series_for(densities, sensor_id);
        ModeTrackerState tracker;
        double belief = 0.5;
        Mode prev = Mode::Free;
        for (const auto& [k, phi] : flow_series) {
            double y = value_at(y_series, k, sensor_id);
            RawModeResult raw = raw_mode_nonprivate(fd, zp, phi, y, tracker);
            HmmStepResult step = hmm_filter_step(belief, raw.mode, raw.decisive, hmm, prev);
            DensityPseudoMeasurement m;
            m.sensor_id = sensor_id;
            m.k = k;
            m.raw_mode = raw.mode;
            m.mode_used = step.filtered;
            m.decisive = raw.decisive;
            m.belief = step.filtered == Mode::Free ? step.belief_free : 1.0 - step.belief_free;
            m.pseudo_flow = phi;
            m.z = invert_diagram(fd, phi, step.filtered);
            out.push_back(std::move(m));
            belief = step.belief_free;
            prev = step.filtered;
        }
    }
    return out;
}

PrivateMeasurements density_measurements_private(const FundamentalDiagram& fd, const ZoneParams& zp,
                                                 const std::vector<SensorConfig>& configs,
                                                 const FlowSeries& flows,
                                                 const OccDensitySeries& densities,
                                                 const HmmParams& hmm, const PrivacyParams& priv,
                                                 bool flow_trend, RngStream& rng) {
    hmm.validate();
    priv.validate();

    PrivateMeasurements result;
    std::vector<SensorConfig> active;
    for (const auto& [sensor_id, series] : flows) active.push_back(config_for(configs, sensor_id));
    if (active.empty()) return result;

    result.delta_f = flow_sensitivity(active).delta_f;
    result.sigma = kappa(priv) * result.delta_f;

    for (const auto& [sensor_id, flow_series] : flows) {
        const auto& cfg = config_for(configs, sensor_id);
        const auto& y_series = series_for(densities, sensor_id);
        double alpha = private_alpha(fd, zp, cfg.lanes, cfg.T, cfg.g);
        result.alpha[sensor_id] = alpha;
        ModeTrackerState tracker;
        double belief = 0.5;
        Mode prev = Mode::Free;
        for (const auto& [k, phi] : flow_series) {
            double y = value_at(y_series, k, sensor_id);
            double pseudo = phi + rng.normal(0.0, result.sigma);
            RawModeResult raw = raw_mode_private(fd, zp, alpha, pseudo, y, tracker, flow_trend);
            HmmStepResult step = hmm_filter_step(belief, raw.mode, raw.decisive, hmm, prev);
            DensityPseudoMeasurement m;
            m.sensor_id = sensor_id;
            m.k = k;
            m.raw_mode = raw.mode;
            m.mode_used = step.filtered;
            m.decisive = raw.decisive;
            m.belief = step.filtered == Mode::Free ? step.belief_free : 1.0 - step.belief_free;
            m.pseudo_flow = pseudo;
            m.z = invert_diagram(fd, pseudo, step.filtered);
            m.z_noise_sd = result.sigma / (step.filtered == Mode::Free ? fd.free_flow_speed
                                                                       : fd.congestion_wave_speed);
            result.measurements.push_back(std::move(m));
            belief = step.belief_free;
            prev = step.filtered;
        }
    }
    result.ledger.charge("flow-release", priv);
    result.ledger.charge("mode-release", priv);
    return result;
}

// ============================================================================
// Mode release audit
// ============================================================================

namespace {

/** Per-period deltas of one neighboring dataset, in flow / density units. */
struct Neighbor {
    std::vector<double> d_flow;  // [veh/h/lane]
    std::vector<double> d_y;     // [veh/mi/lane]
    bool occupancy_only = false;
};

/** Delta patterns with at most two nonzero entries of magnitude `unit`. */
std::vector<std::vector<double>> bounded_patterns(int periods, double unit) {
    std::vector<std::vector<double>> out;
    std::vector<int> levels(static_cast<std::size_t>(periods), -1);
    while (true) {
        int nonzero = 0;
        for (int l : levels) nonzero += l != 0;
        if (nonzero <= 2) {
            std::vector<double> p(static_cast<std::size_t>(periods));
            for (int i = 0; i < periods; ++i) p[static_cast<std::size_t>(i)] = levels[static_cast<std::size_t>(i)] * unit;
            out.push_back(std::move(p));
        }
        std::size_t i = 0;
        while (i < levels.size() && ++levels[i] == 2) levels[i++] = -1;
        if (i == levels.size()) break;
    }
    return out;
}

std::uint32_t mode_sequence(const FundamentalDiagram& fd, const ZoneParams& zp, double alpha,
                            const std::vector<double>& pseudo_flows, const std::vector<double>& ys,
                            bool flow_trend) {
    ModeTrackerState tracker;
    std::uint32_t bits = 0;
    for (std::size_t k = 0; k < pseudo_flows.size(); ++k) {
        RawModeResult r = raw_mode_private(fd, zp, alpha, pseudo_flows[k], ys[k], tracker, flow_trend);
        if (r.mode == Mode::Congested) bits |= 1u << k;
    }
    return bits;
}

std::uint32_t zone_cell(const std::vector<double>& pseudo_flows, double alpha) {
    std::uint32_t bits = 0;
    for (std::size_t k = 0; k < pseudo_flows.size(); ++k)
        if (std::max(pseudo_flows[k], 0.0) >= alpha) bits |= 1u << k;
    return bits;
}

struct AuditAccum {
    long long same_cell = 0, violations = 0, equal_outputs = 0, occ_only_mismatch = 0;
    std::vector<long long> coverage;
};

}  // namespace

static ModeAuditResult run_mode_audit(const FundamentalDiagram& fd, const ZoneParams& zp,
                                      const ModeAuditScenario& scenario, const ModeAuditOptions& opt,
                                      bool parallel) {
    scenario.sensor.validate();
    scenario.priv.validate();
    if (scenario.flows.size() != scenario.occ_density.size() || scenario.flows.empty())
        throw std::invalid_argument("mode audit: flow and occupancy series must be non-empty and aligned");
    int K = static_cast<int>(scenario.flows.size());
    if (K > 8) throw std::invalid_argument("mode audit: scenario too long to enumerate, max 8 periods");
    if (opt.trials < 1) throw std::invalid_argument("mode audit: need at least 1 trial");

    const auto& cfg = scenario.sensor;
    double alpha = private_alpha(fd, zp, cfg.lanes, cfg.T, cfg.g);
    double delta_f = flow_sensitivity({cfg}).delta_f;
    double sigma = kappa(scenario.priv) * delta_f;
    double flow_unit = 1.0 / (cfg.T * static_cast<double>(cfg.lanes));
    double y_unit = zp.psi / (cfg.g * static_cast<double>(cfg.lanes));

    auto flow_patterns = bounded_patterns(K, flow_unit);
    auto y_patterns = bounded_patterns(K, y_unit);
    std::vector<Neighbor> neighbors;
    for (const auto& df : flow_patterns) {
        bool flow_zero = std::all_of(df.begin(), df.end(), [](double v) { return v == 0.0; });
        for (const auto& dy : y_patterns) {
            bool y_zero = std::all_of(dy.begin(), dy.end(), [](double v) { return v == 0.0; });
            if (flow_zero && y_zero) continue;  // identity
            neighbors.push_back(Neighbor{df, dy, flow_zero});
        }
    }

    ModeAuditResult res;
    res.trials = opt.trials;
    res.adjacent_pairs = static_cast<int>(neighbors.size());
    res.comparisons = opt.trials * static_cast<long long>(neighbors.size());
    res.cell_coverage.assign(std::size_t{1} << K, 0);
    for (const auto& n : neighbors) res.occ_only_pairs += n.occupancy_only ? 1 : 0;

    auto run_trial = [&](long long t, AuditAccum& acc) {
        SplitMix64 gen{derive_seed(opt.seed, "mode-audit", static_cast<std::uint64_t>(t))};
        std::vector<double> noise(static_cast<std::size_t>(K));
        for (double& n : noise) n = sigma * gen.normal();

        std::vector<double> base_flow(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k)
            base_flow[static_cast<std::size_t>(k)] =
                scenario.flows[static_cast<std::size_t>(k)] + noise[static_cast<std::size_t>(k)];
        std::uint32_t base_modes =
            mode_sequence(fd, zp, alpha, base_flow, scenario.occ_density, scenario.flow_trend);
        std::uint32_t base_cell = zone_cell(base_flow, alpha);
        ++acc.coverage[base_cell];

        std::vector<double> n_flow(static_cast<std::size_t>(K)), n_y(static_cast<std::size_t>(K));
        for (const auto& nb : neighbors) {
            for (int k = 0; k < K; ++k) {
                n_flow[static_cast<std::size_t>(k)] =
                    base_flow[static_cast<std::size_t>(k)] + nb.d_flow[static_cast<std::size_t>(k)];
                n_y[static_cast<std::size_t>(k)] =
                    scenario.occ_density[static_cast<std::size_t>(k)] + nb.d_y[static_cast<std::size_t>(k)];
            }
            std::uint32_t modes = mode_sequence(fd, zp, alpha, n_flow, n_y, scenario.flow_trend);
            bool equal = modes == base_modes;
            acc.equal_outputs += equal;
            if (zone_cell(n_flow, alpha) == base_cell) {
                ++acc.same_cell;
                acc.violations += !equal;
            }
            if (nb.occupancy_only) acc.occ_only_mismatch += !equal;
        }
    };

    AuditAccum total;
    total.coverage.assign(std::size_t{1} << K, 0);
    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel
        {
            AuditAccum local;
            local.coverage.assign(std::size_t{1} << K, 0);
#pragma omp for schedule(static)
            for (long long t = 0; t < opt.trials; ++t) run_trial(t, local);
#pragma omp critical
            {
                total.same_cell += local.same_cell;
                total.violations += local.violations;
                total.equal_outputs += local.equal_outputs;
                total.occ_only_mismatch += local.occ_only_mismatch;
                for (std::size_t i = 0; i < total.coverage.size(); ++i)
                    total.coverage[i] += local.coverage[i];
            }
        }
#else
        for (long long t = 0; t < opt.trials; ++t) run_trial(t, total);
#endif
    } else {
        for (long long t = 0; t < opt.trials; ++t) run_trial(t, total);
    }

    res.same_cell = total.same_cell;
    res.violations = total.violations;
    res.equal_outputs = total.equal_outputs;
    res.occ_only_mismatch = total.occ_only_mismatch;
    res.cell_coverage = std::move(total.coverage);
    return res;
}

ModeAuditResult mode_equality_audit(const FundamentalDiagram& fd, const ZoneParams& zp,
                                    const ModeAuditScenario& scenario, const ModeAuditOptions& opt) {
    return run_mode_audit(fd, zp, scenario, opt, true);
}

ModeAuditResult mode_equality_audit_serial(const FundamentalDiagram& fd, const ZoneParams& zp,
                                           const ModeAuditScenario& scenario,
                                           const ModeAuditOptions& opt) {
    return run_mode_audit(fd, zp, scenario, opt, false);
}

}  // namespace dptraffic
