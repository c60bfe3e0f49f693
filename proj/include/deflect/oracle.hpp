#pragma once

// Brute-force references for the analytic machinery: exhaustive allocation
// search, sampled joint detection probabilities and the P_D0-optimal split of
// a two-sensor network.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "deflect/sim.hpp"

namespace deflect {

/// Shell: TIPC points satisfy ||a||^2 = p_tot exactly.
/// Inequality: each direction is pushed out to the boundary of the full
/// TIPC set, which is where the MDC peaks along a ray.
enum class GridMode { Shell, Inequality };

/// Best MDC over a grid of feasible amplitude vectors (M <= 3).
inline PowerAllocation grid_search_allocation(const MdcForm& form, const ConstraintSet& cs, std::size_t resolution,
                                              GridMode mode = GridMode::Shell) {
    const auto m = form.size();
    if (m < 1 || m > 3) throw std::invalid_argument("grid_search_allocation: supports 1 to 3 sensors");
    if (resolution < 100) throw std::invalid_argument("grid_search_allocation: resolution must be at least 100");
    cs.validate(m);

    Vector best_a = Vector::Zero(m);
    double best = -1.0;
    const auto consider = [&](const Vector& a) {
        const double v = mdc_value(form, a);
        if (v > best) {
            best = v;
            best_a = a;
        }
    };
    const auto res = static_cast<double>(resolution);
    const Vector cap = cs.has_caps() ? Vector(cs.p0.cwiseSqrt()) : Vector();

    // ray from the origin along unit direction u, scaled to the regime's boundary
    const auto on_ray = [&](const Vector& u) {
        if (cs.regime == Regime::TPC) {
            consider(std::sqrt(cs.p_tot) * u);
            return;
        }
        if (mode == GridMode::Shell) {
            const Vector a = std::sqrt(cs.p_tot) * u;
            if ((a.array() <= cap.array() * (1.0 + 1e-12)).all()) consider(a.cwiseMin(cap));
            return;
        }
        double r = std::sqrt(cs.p_tot);
        for (Eigen::Index k = 0; k < m; ++k) {
            if (u[k] > 0.0) r = std::min(r, cap[k] / u[k]);
        }
        consider((r * u).cwiseMin(cap));
    };

    if (cs.regime == Regime::IPC) {
        const auto steps = static_cast<std::size_t>(resolution) + 1;
        std::size_t total = 1;
        for (Eigen::Index k = 0; k < m; ++k) total *= steps;
        Vector a(m);
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t rest = idx;
            for (Eigen::Index k = 0; k < m; ++k) {
                a[k] = cap[k] * static_cast<double>(rest % steps) / res;
                rest /= steps;
            }
            consider(a);
        }
    } else if (m == 1) {
        on_ray(Vector::Ones(1));
    } else if (m == 2) {
        double lo = 0.0;
        double hi = 0.5 * std::numbers::pi;
        if (cs.regime == Regime::TIPC && mode == GridMode::Shell) {
            lo = std::acos(std::min(1.0, std::sqrt(cs.p0[0] / cs.p_tot)));
            hi = std::asin(std::min(1.0, std::sqrt(cs.p0[1] / cs.p_tot)));
        }
        Vector u(2);
        for (std::size_t i = 0; i <= resolution; ++i) {
            const double phi = lo + (hi - lo) * static_cast<double>(i) / res;
            u << std::cos(phi), std::sin(phi);
            on_ray(u);
        }
    } else {
        Vector u(3);
        for (std::size_t i = 0; i <= resolution; ++i) {
            const double p1 = 0.5 * std::numbers::pi * static_cast<double>(i) / res;
            for (std::size_t j = 0; j <= resolution; ++j) {
                const double p2 = 0.5 * std::numbers::pi * static_cast<double>(j) / res;
                u << std::cos(p1), std::sin(p1) * std::cos(p2), std::sin(p1) * std::sin(p2);
                on_ray(u);
            }
        }
    }
    if (best < 0.0) throw std::logic_error("grid_search_allocation: no feasible grid point");
    PowerAllocation out;
    out.a_t = best_a;
    out.powers = best_a.cwiseAbs2();
    out.mdc = best;
    out.method = SolveMethod::GridSearch;
    out.kkt_residual = std::numeric_limits<double>::quiet_NaN();
    out.regime = cs.regime;
    return out;
}

struct JointDetectionEstimate {
    Matrix p;
    Matrix std_error;
};

/// Empirical P(x_i^2 > tau_i, x_j^2 > tau_j | H1) from n_samples draws.
inline JointDetectionEstimate mc_joint_detection(const NetworkModel& model, const Vector& thresholds,
                                                 std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1000000) throw std::invalid_argument("mc_joint_detection: need at least 10^6 samples");
    const Matrix cov = observation_covariance(model, Hypothesis::H1);
    const auto m = cov.rows();
    if (thresholds.size() != m) throw std::invalid_argument("mc_joint_detection: dimension mismatch");
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw std::domain_error("mc_joint_detection: covariance is not positive definite");
    const Matrix L = llt.matrixL();
    auto rng = stream_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> counts =
        Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(m, m);
    Vector z(m);
    std::vector<char> hit(static_cast<std::size_t>(m));
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (Eigen::Index k = 0; k < m; ++k) z[k] = normal(rng);
        const Vector x = L.triangularView<Eigen::Lower>() * z;
        for (Eigen::Index k = 0; k < m; ++k) hit[k] = x[k] * x[k] > thresholds[k];
        for (Eigen::Index i = 0; i < m; ++i) {
            if (!hit[i]) continue;
            for (Eigen::Index j = i; j < m; ++j) counts(i, j) += hit[j];
        }
    }
    JointDetectionEstimate out;
    out.p.resize(m, m);
    out.std_error.resize(m, m);
    const auto n = static_cast<double>(n_samples);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i; j < m; ++j) {
            const double p = static_cast<double>(counts(i, j)) / n;
            out.p(i, j) = out.p(j, i) = p;
            out.std_error(i, j) = out.std_error(j, i) = std::sqrt(p * (1.0 - p) / n);
        }
    }
    return out;
}

enum class FusionRule { Linear, LRT };

struct OpaConfig {
    std::size_t realizations = 100;
    std::size_t trials = 1000;  // per realization, for each of the H0 and H1 samples
    std::uint64_t seed = 1;
    Fading fading = Fading::RayleighCN01;
    std::size_t grid_points = 41;
    unsigned threads = 1;
};

struct OpaResult {
    Vector powers;  // OPA powers averaged over realizations
    double pd0 = 0.0;
    double pd0_stderr = 0.0;
    double pd0_dpa = 0.0;
    double pd0_dpa_stderr = 0.0;
    double pd0_upa = 0.0;
    double pd0_upa_stderr = 0.0;
};

namespace detail {

/// One fixed Monte-Carlo sample of a two-sensor channel: decisions and
/// per-branch noise for the H0 calibration set and the H1 set.
struct TwoSensorSample {
    std::vector<std::array<double, 4>> h0;  // u1, u2, e1, e2
    std::vector<std::array<double, 4>> h1;
};

struct TwoSensorEvaluator {
    ChannelType type;
    FusionRule rule;
    double beta_F;
    double noise_var;          // per branch
    std::array<double, 4> p1;  // P(u | H1) for u = 00, 01, 10, 11 (u1 is the high bit)
    std::array<double, 4> p0;
    Vector g;
    const TwoSensorSample* sample;

    double statistic(const std::array<double, 4>& s, double w1, double w2) const {
        if (rule == FusionRule::Linear) {
            const double t = w1 * s[0] + w2 * s[1] + s[2];
            return type == ChannelType::PAC ? t + s[3] : t;
        }
        // log-likelihood ratio of the channel output
        std::array<double, 4> expo{};
        for (int u = 0; u < 4; ++u) {
            const double u1 = (u >> 1) & 1;
            const double u2 = u & 1;
            double q;
            if (type == ChannelType::PAC) {
                const double d1 = w1 * (s[0] - u1) + s[2];
                const double d2 = w2 * (s[1] - u2) + s[3];
                q = d1 * d1 + d2 * d2;
            } else {
                const double d = w1 * (s[0] - u1) + w2 * (s[1] - u2) + s[2];
                q = d * d;
            }
            expo[u] = -q / (2.0 * noise_var);
        }
        const double top = *std::max_element(expo.begin(), expo.end());
        double num = 0.0;
        double den = 0.0;
        for (int u = 0; u < 4; ++u) {
            const double e = std::exp(expo[u] - top);
            num += p1[u] * e;
            den += p0[u] * e;
        }
        return std::log(num) - std::log(den);
    }

    double pd0(double power1, double power2) const {
        const double w1 = std::sqrt(std::max(0.0, power1)) * g[0];
        const double w2 = std::sqrt(std::max(0.0, power2)) * g[1];
        std::vector<double> t0(sample->h0.size());
        for (std::size_t i = 0; i < t0.size(); ++i) t0[i] = statistic(sample->h0[i], w1, w2);
        const double tau = calibrate_tau0(std::move(t0), beta_F);
        std::size_t hits = 0;
        for (const auto& s : sample->h1) hits += statistic(s, w1, w2) > tau;
        return static_cast<double>(hits) / static_cast<double>(sample->h1.size());
    }
};

}  // namespace detail

/// P_D0-optimal power split of a two-sensor network under a total budget,
/// found per channel realization by search over P1 in [0, p_tot] on a common
/// Monte-Carlo sample. The DPA and UPA splits are scored on the same sample.
inline OpaResult brute_force_opa_2sensor(const NetworkModel& model, ChannelType type, double p_tot, double beta_F,
                                         FusionRule rule, const OpaConfig& cfg) {
    if (model.size() != 2) throw std::invalid_argument("brute_force_opa_2sensor: exactly two sensors required");
    if (!(p_tot > 0.0)) throw std::domain_error("brute_force_opa_2sensor: p_tot must be positive");
    if (cfg.realizations < 1 || cfg.grid_points < 3) throw std::invalid_argument("brute_force_opa_2sensor: bad config");
    const LocalStats stats = compute_local_stats(model);
    const Vector theta = pathloss_factors(model);
    const double both = stats.pbar_d(0, 1);
    const std::array<double, 4> p1{1.0 - stats.pd[0] - stats.pd[1] + both, stats.pd[1] - both,
                                   stats.pd[0] - both, both};
    const double f1 = stats.pf[0];
    const double f2 = stats.pf[1];
    const std::array<double, 4> p0{(1 - f1) * (1 - f2), (1 - f1) * f2, f1 * (1 - f2), f1 * f2};

    const std::size_t count = cfg.realizations;
    std::vector<double> opa(count), dpa(count), upa(count), share(count);
    const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(count)));
    std::vector<DecisionSampler> samplers(threads, DecisionSampler(model, stats));
    detail::parallel_for(count, threads, [&](std::size_t i) {
        auto rng = stream_rng(cfg.seed, i);
        auto& sampler = samplers[i % threads];
        sampler.reset();
        const ChannelRealization ch{draw_fading(cfg.fading, 2, rng), theta};
        const MdcForm form = build_mdc_form(stats, ch, type, model.sigma_n_sq);

        detail::TwoSensorSample sample;
        std::normal_distribution<double> noise(0.0, std::sqrt(0.5 * model.sigma_n_sq));
        Vector u;
        const auto fill = [&](Hypothesis h, std::vector<std::array<double, 4>>& out) {
            out.resize(cfg.trials);
            for (auto& s : out) {
                sampler.sample(h, rng, u);
                s = {u[0], u[1], noise(rng), noise(rng)};
            }
        };
        fill(Hypothesis::H0, sample.h0);
        fill(Hypothesis::H1, sample.h1);

        const detail::TwoSensorEvaluator eval{type, rule, beta_F, 0.5 * model.sigma_n_sq, p1, p0, ch.gains(), &sample};
        const Vector dpa_powers = solve_tpc(form, p_tot).powers;
        dpa[i] = eval.pd0(dpa_powers[0], dpa_powers[1]);
        upa[i] = eval.pd0(0.5 * p_tot, 0.5 * p_tot);

        double best = std::max(dpa[i], upa[i]);
        double best_p1 = dpa[i] >= upa[i] ? dpa_powers[0] : 0.5 * p_tot;
        const auto scan = [&](double lo, double hi, std::size_t points) {
            for (std::size_t j = 0; j < points; ++j) {
                const double x = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(points - 1);
                const double v = eval.pd0(x, p_tot - x);
                if (v > best) {
                    best = v;
                    best_p1 = x;
                }
            }
        };
        scan(0.0, p_tot, cfg.grid_points);
        double half = p_tot / static_cast<double>(cfg.grid_points - 1);
        for (int level = 0; level < 2; ++level) {
            scan(std::max(0.0, best_p1 - half), std::min(p_tot, best_p1 + half), 21);
            half /= 10.0;
        }
        opa[i] = best;
        share[i] = best_p1;
    });

    OpaResult out;
    out.pd0 = detail::mean_of(opa);
    out.pd0_dpa = detail::mean_of(dpa);
    out.pd0_upa = detail::mean_of(upa);
    const auto se = [&](const std::vector<double>& v, double mean) {
        if (count >= 2) return detail::stderr_of(v);
        return std::sqrt(mean * (1.0 - mean) / static_cast<double>(cfg.trials));
    };
    out.pd0_stderr = se(opa, out.pd0);
    out.pd0_dpa_stderr = se(dpa, out.pd0_dpa);
    out.pd0_upa_stderr = se(upa, out.pd0_upa);
    const double p1_mean = detail::mean_of(share);
    out.powers = Vector(2);
    out.powers << p1_mean, p_tot - p1_mean;
    return out;
}

}  // namespace deflect
