#include "dptraffic/dp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dptraffic {

void PrivacyParams::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("privacy params: epsilon must be positive");
    if (delta < 0.0 || delta >= 1.0)
        throw std::invalid_argument("privacy params: delta must lie in [0, 1)");
}

double gaussian_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double q_inverse(double delta) {
    if (!(delta > 0.0) || !(delta < 0.5))
        throw std::domain_error("q_inverse: delta must lie in (0, 0.5)");
    // Q is strictly decreasing; bracket generously and bisect. 60 halvings of
    // an 80-wide bracket land well below the 1e-10 tolerance.
    double lo = -40.0, hi = 40.0;
    for (int iter = 0; iter < 100 && hi - lo > 1e-12; ++iter) {
        double mid = 0.5 * (lo + hi);
        if (gaussian_tail(mid) > delta)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double kappa(const PrivacyParams& p) {
    p.validate();
    double K = q_inverse(p.delta);
    return (K + std::sqrt(K * K + 2.0 * p.epsilon)) / (2.0 * p.epsilon);
}

SensitivityBound flow_sensitivity(const std::vector<SensorConfig>& configs) {
    if (configs.empty()) throw std::invalid_argument("flow_sensitivity: no sensors");
    double T = configs.front().T;
    double sum = 0.0;
    for (const auto& c : configs) {
        c.validate();
        if (std::abs(c.T - T) > 1e-12 * T)
            throw std::invalid_argument("flow_sensitivity: sensors must share one sampling period");
        double per = 1.0 / (T * static_cast<double>(c.lanes));
        sum += 2.0 * per * per;
    }
    return SensitivityBound{std::sqrt(sum)};
}

double count_sensitivity_oracle(const std::vector<SensorConfig>& configs, int periods) {
    if (configs.empty()) throw std::invalid_argument("count_sensitivity_oracle: no sensors");
    if (periods < 1) throw std::invalid_argument("count_sensitivity_oracle: periods must be >= 1");

    // Admissible per-sensor perturbations: no change, one period's count
    // changed by +/-1, or two distinct periods each changed by +/-1. The
    // squared L2 effect on that sensor's flow series only depends on how many
    // entries moved, but the enumeration walks every concrete choice anyway.
    std::vector<std::vector<double>> per_sensor_sq;
    for (const auto& c : configs) {
        c.validate();
        double unit = 1.0 / (c.T * static_cast<double>(c.lanes));
        std::vector<double> options{0.0};
        for (int k = 0; k < periods; ++k)
            for (int sign = 0; sign < 2; ++sign) options.push_back(unit * unit);
        for (int k1 = 0; k1 < periods; ++k1)
            for (int k2 = k1 + 1; k2 < periods; ++k2)
                for (int s1 = 0; s1 < 2; ++s1)
                    for (int s2 = 0; s2 < 2; ++s2) options.push_back(2.0 * unit * unit);
        per_sensor_sq.push_back(std::move(options));
    }

    double max_sq = 0.0;
    std::vector<std::size_t> pick(per_sensor_sq.size(), 0);
    while (true) {
        double sq = 0.0;
        for (std::size_t s = 0; s < pick.size(); ++s) sq += per_sensor_sq[s][pick[s]];
        max_sq = std::max(max_sq, sq);
        std::size_t s = 0;
        while (s < pick.size() && ++pick[s] == per_sensor_sq[s].size()) pick[s++] = 0;
        if (s == pick.size()) break;
    }
    return std::sqrt(max_sq);
}

std::vector<double> gaussian_mechanism(std::span<const double> query, double delta_f,
                                       const PrivacyParams& p, RngStream& rng) {
    p.validate();
    if (delta_f < 0.0) throw std::invalid_argument("gaussian_mechanism: sensitivity must be nonnegative");
    // Zero sensitivity means the query ignores individual records; the noise
    // scale collapses and the mechanism is the identity.
    double sigma = delta_f > 0.0 ? kappa(p) * delta_f : 0.0;
    std::vector<double> out(query.begin(), query.end());
    for (double& v : out) v += rng.normal(0.0, sigma);
    return out;
}

std::vector<double> laplace_mechanism(std::span<const double> query, double delta_q_l1, double epsilon,
                                      RngStream& rng) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("laplace_mechanism: epsilon must be positive");
    if (delta_q_l1 < 0.0) throw std::invalid_argument("laplace_mechanism: sensitivity must be nonnegative");
    double scale = delta_q_l1 / epsilon;
    std::vector<double> out(query.begin(), query.end());
    for (double& v : out) v += rng.laplace(scale);
    return out;
}

void PrivacyLedger::charge(std::string label, const PrivacyParams& p) {
    p.validate();
    if (label.empty()) throw std::invalid_argument("privacy ledger: empty label");
    entries_.push_back(LedgerEntry{std::move(label), p.epsilon, p.delta});
}

PrivacyParams PrivacyLedger::total() const {
    PrivacyParams t;
    for (const auto& e : entries_) {
        t.epsilon += e.epsilon;
        t.delta += e.delta;
    }
    return t;
}

double laplace_usefulness_gamma(double delta_q, double epsilon, double zeta_prob) {
    if (!(delta_q > 0.0)) throw std::invalid_argument("laplace usefulness: sensitivity must be positive");
    if (!(epsilon > 0.0)) throw std::invalid_argument("laplace usefulness: epsilon must be positive");
    if (!(zeta_prob > 0.0) || !(zeta_prob < 1.0))
        throw std::invalid_argument("laplace usefulness: probability must lie in (0, 1)");
    return delta_q / epsilon * std::log(1.0 / zeta_prob);
}

GaussianUsefulness gaussian_usefulness(double gamma, double sigma, double delta_q) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("gaussian usefulness: gamma must be non-negative");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian usefulness: sigma must be positive");
    if (!(delta_q > 0.0)) throw std::invalid_argument("gaussian usefulness: sensitivity must be positive");
    GaussianUsefulness u;
    u.nominal_zeta = 2.0 * gamma / (sigma * delta_q);
    u.tail_zeta = 2.0 * gaussian_tail(gamma / sigma);
    return u;
}

// ============================================================================
// Audit
// ============================================================================

namespace {

DpAuditResult run_dp_audit(double delta_q, const PrivacyParams& p, const DpAuditOptions& opt,
                           bool parallel) {
    p.validate();
    if (!(delta_q > 0.0)) throw std::invalid_argument("dp audit: sensitivity must be positive");
    if (opt.thresholds < 2) throw std::invalid_argument("dp audit: need at least 2 thresholds");
    if (opt.trials < 1) throw std::invalid_argument("dp audit: need at least 1 trial");
    if (!(opt.sigma_scale > 0.0)) throw std::invalid_argument("dp audit: sigma_scale must be positive");

    const double sigma = opt.sigma_scale * kappa(p) * delta_q;
    const int nt = opt.thresholds;
    const long long N = opt.trials;

    std::vector<double> thr(static_cast<std::size_t>(nt));
    double lo = std::min(0.0, delta_q) - 4.0 * sigma;
    double hi = std::max(0.0, delta_q) + 4.0 * sigma;
    for (int j = 0; j < nt; ++j)
        thr[static_cast<std::size_t>(j)] = lo + (hi - lo) * static_cast<double>(j) / (nt - 1);

    // ge_a[j]: draws of M(d) at or above threshold j, with d's query = delta_q.
    // ge_b[j]: same for M(d') with query 0.
    std::vector<long long> ge_a(static_cast<std::size_t>(nt), 0), ge_b(static_cast<std::size_t>(nt), 0);

    auto run_range = [&](long long begin, long long end, std::vector<long long>& a,
                         std::vector<long long>& b) {
        for (long long t = begin; t < end; ++t) {
            SplitMix64 gen{derive_seed(opt.seed, "dp-audit", static_cast<std::uint64_t>(t))};
            double xa = delta_q + sigma * gen.normal();
            double xb = sigma * gen.normal();
            for (int j = 0; j < nt; ++j) {
                a[static_cast<std::size_t>(j)] += xa >= thr[static_cast<std::size_t>(j)];
                b[static_cast<std::size_t>(j)] += xb >= thr[static_cast<std::size_t>(j)];
            }
        }
    };

    if (parallel) {
#ifdef _OPENMP
#pragma omp parallel
        {
            std::vector<long long> loc_a(static_cast<std::size_t>(nt), 0),
                loc_b(static_cast<std::size_t>(nt), 0);
#pragma omp for schedule(static)
            for (long long t = 0; t < N; ++t) {
                SplitMix64 gen{derive_seed(opt.seed, "dp-audit", static_cast<std::uint64_t>(t))};
                double xa = delta_q + sigma * gen.normal();
                double xb = sigma * gen.normal();
                for (int j = 0; j < nt; ++j) {
                    loc_a[static_cast<std::size_t>(j)] += xa >= thr[static_cast<std::size_t>(j)];
                    loc_b[static_cast<std::size_t>(j)] += xb >= thr[static_cast<std::size_t>(j)];
                }
            }
#pragma omp critical
            for (int j = 0; j < nt; ++j) {
                ge_a[static_cast<std::size_t>(j)] += loc_a[static_cast<std::size_t>(j)];
                ge_b[static_cast<std::size_t>(j)] += loc_b[static_cast<std::size_t>(j)];
            }
        }
#else
        run_range(0, N, ge_a, ge_b);
#endif
    } else {
        run_range(0, N, ge_a, ge_b);
    }

    DpAuditResult res;
    res.trials = N;
    res.thresholds = nt;
    res.sigma = sigma;

    const double eeps = std::exp(p.epsilon);
    auto check = [&](long long count_p, long long count_q) {
        double ph = static_cast<double>(count_p) / static_cast<double>(N);
        double qh = static_cast<double>(count_q) / static_cast<double>(N);
        double se = std::sqrt(ph * (1.0 - ph) / static_cast<double>(N) +
                              eeps * eeps * qh * (1.0 - qh) / static_cast<double>(N));
        double excess = ph - eeps * qh - p.delta;
        double excess_sigma = se > 0.0 ? excess / se : (excess > 0.0 ? 1e300 : 0.0);
        res.worst_excess_sigma = std::max(res.worst_excess_sigma, excess_sigma);
        if (excess_sigma > 3.0) ++res.violations;
    };

    for (int j = 0; j < nt; ++j) {
        long long a = ge_a[static_cast<std::size_t>(j)], b = ge_b[static_cast<std::size_t>(j)];
        check(a, b);          // P[M(d) >= t] vs P[M(d') >= t]
        check(b, a);          // swapped inputs
        check(N - a, N - b);  // lower tails
        check(N - b, N - a);
    }
    return res;
}

}  // namespace

DpAuditResult dp_audit_gaussian(double delta_q, const PrivacyParams& p, const DpAuditOptions& opt) {
    return run_dp_audit(delta_q, p, opt, true);
}

DpAuditResult dp_audit_gaussian_serial(double delta_q, const PrivacyParams& p,
                                       const DpAuditOptions& opt) {
    return run_dp_audit(delta_q, p, opt, false);
}

}  // namespace dptraffic
