#pragma once

// Monte-Carlo simulation of the detection chain: correlated observations,
// local energy decisions, coherent fading channels, linear fusion and a
// Neyman-Pearson threshold at the fusion center.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "deflect/solvers.hpp"

namespace deflect {

enum class Fading { RayleighCN01, UnitGain };

/// How the fusion threshold is set for each channel realization.
enum class ThresholdRule { EmpiricalQuantile, GaussianApprox };

struct SimConfig {
    std::size_t n_channel_realizations = 1000;
    std::size_t n_monte_carlo_per_realization = 10000;
    std::uint64_t seed = 1;
    Fading fading = Fading::RayleighCN01;
    ThresholdRule threshold = ThresholdRule::EmpiricalQuantile;
    unsigned threads = 1;

    void validate() const {
        if (n_channel_realizations < 1 || n_monte_carlo_per_realization < 1) {
            throw std::invalid_argument("sim: counts must be at least 1");
        }
        if (threads < 1) throw std::invalid_argument("sim: threads must be at least 1");
    }
};

struct DetectionEstimate {
    double pd0 = 0.0;
    double pf0 = 0.0;
    double pd0_stderr = 0.0;
    double pf0_stderr = 0.0;
    double threshold_tau0 = 0.0;  // mean over realizations
    double mean_mdc = 0.0;
    double mdc_stderr = 0.0;
};

/// Power allocation applied to each channel realization.
enum class Policy {
    DPA,            // analytic procedures (TIPC on the power shell)
    DPAInequality,  // convex program with the total budget as an inequality
    UPA,            // equal split
    Fixed,          // caller-supplied powers
};

struct AllocationSpec {
    Policy policy = Policy::DPA;
    ConstraintSet constraints;
    Vector fixed_powers;  // Policy::Fixed only

    PowerAllocation allocate(const MdcForm& form) const {
        switch (policy) {
            case Policy::DPA: return solve(form, constraints);
            case Policy::DPAInequality: return solve_qp(form, constraints);
            case Policy::UPA: return uniform_allocation(form, constraints);
            case Policy::Fixed: {
                if (fixed_powers.size() != form.size()) throw std::invalid_argument("fixed powers: dimension mismatch");
                PowerAllocation out;
                out.a_t = fixed_powers.cwiseMax(0.0).cwiseSqrt();
                out.powers = out.a_t.cwiseAbs2();
                out.mdc = mdc_value(form, out.a_t);
                out.method = SolveMethod::Uniform;
                out.kkt_residual = std::numeric_limits<double>::quiet_NaN();
                out.regime = constraints.regime;
                return out;
            }
        }
        throw std::logic_error("allocate: unknown policy");
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Independent generator for stream `index` of a run seeded with `seed`.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

/// Draws local decision vectors from a fixed scenario.
class DecisionSampler {
public:
    DecisionSampler(const NetworkModel& model, const LocalStats& stats)
        : thresholds_(stats.thresholds), sigma0_(std::sqrt(model.sigma0_sq)) {
        const Matrix cov = observation_covariance(model, Hypothesis::H1);
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() != Eigen::Success) throw std::domain_error("sample_decisions: covariance is not positive definite");
        chol_h1_ = llt.matrixL();
        z_.resize(cov.rows());
    }

    std::size_t size() const { return static_cast<std::size_t>(thresholds_.size()); }

    /// Drops the cached normal variate so the next draws depend only on the rng.
    void reset() { normal_.reset(); }

    template <class Rng>
    void sample(Hypothesis h, Rng& rng, Vector& u) {
        const auto m = thresholds_.size();
        for (Eigen::Index k = 0; k < m; ++k) z_[k] = normal_(rng);
        u.resize(m);
        if (h == Hypothesis::H1) {
            const Vector x = chol_h1_.triangularView<Eigen::Lower>() * z_;
            for (Eigen::Index k = 0; k < m; ++k) u[k] = x[k] * x[k] > thresholds_[k] ? 1.0 : 0.0;
        } else {
            for (Eigen::Index k = 0; k < m; ++k) {
                const double x = sigma0_ * z_[k];
                u[k] = x * x > thresholds_[k] ? 1.0 : 0.0;
            }
        }
    }

private:
    Vector thresholds_;
    double sigma0_;
    Matrix chol_h1_;
    Vector z_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// One decision vector u with u_k = 1{x_k^2 > tau_k}.
template <class Rng>
Vector sample_decisions(const NetworkModel& model, const LocalStats& stats, Hypothesis h, Rng& rng) {
    DecisionSampler sampler(model, stats);
    Vector u;
    sampler.sample(h, rng, u);
    return u;
}

/// Fused statistic T = sum_k a_k g_k u_k plus channel noise, N(0, sigma_n^2/2)
/// on every PAC branch or once for the MAC.
template <class Rng>
double fuse(ChannelType type, const Vector& a_t, const ChannelRealization& channel, const Vector& u,
            double sigma_n_sq, Rng& rng) {
    const auto m = a_t.size();
    if (u.size() != m || channel.h_mag.size() != m || channel.theta.size() != m) {
        throw std::invalid_argument("fuse: dimension mismatch");
    }
    double t = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) t += a_t[k] * std::sqrt(channel.theta[k]) * channel.h_mag[k] * u[k];
    if (sigma_n_sq > 0.0) {
        std::normal_distribution<double> noise(0.0, std::sqrt(0.5 * sigma_n_sq));
        const Eigen::Index draws = type == ChannelType::PAC ? m : 1;
        for (Eigen::Index k = 0; k < draws; ++k) t += noise(rng);
    }
    return t;
}

/// Type-7 empirical (1 - beta_F) quantile of fused statistics under H0.
inline double calibrate_tau0(std::vector<double> samples, double beta_F) {
    if (!(beta_F > 0.0 && beta_F < 1.0)) throw std::domain_error("calibrate_tau0: beta_F must lie in (0,1)");
    const double needed = std::ceil(10.0 / beta_F - 1e-9);
    if (static_cast<double>(samples.size()) < needed) {
        throw std::invalid_argument("calibrate_tau0: need at least 10/beta_F samples");
    }
    const double h = static_cast<double>(samples.size() - 1) * (1.0 - beta_F);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(lo), samples.end());
    const double x_lo = samples[lo];
    if (lo + 1 >= samples.size() || frac == 0.0) return x_lo;
    const double x_hi = *std::min_element(samples.begin() + static_cast<std::ptrdiff_t>(lo) + 1, samples.end());
    return x_lo + frac * (x_hi - x_lo);
}

/// Gaussian approximation of the threshold: E{T|H0} + Phi^{-1}(1-beta_F) sd{T|H0}.
inline double gaussian_tau0(const LocalStats& stats, const ChannelRealization& channel, ChannelType type,
                            double sigma_n_sq, const Vector& a_t, double beta_F) {
    const Vector w = a_t.cwiseProduct(channel.gains());
    const Matrix cov_h0 = stats.pbar_f - stats.pf * stats.pf.transpose();
    const double var = channel_noise_term(type, stats.size(), sigma_n_sq) + w.dot(cov_h0 * w);
    return w.dot(stats.pf) + norm_quantile(1.0 - beta_F) * std::sqrt(var);
}

template <class Rng>
Vector draw_fading(Fading fading, Eigen::Index m, Rng& rng) {
    if (fading == Fading::UnitGain) return Vector::Ones(m);
    // |h| for h ~ CN(0,1): real and imaginary parts N(0, 1/2)
    std::normal_distribution<double> half(0.0, std::sqrt(0.5));
    Vector h(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const double re = half(rng);
        const double im = half(rng);
        h[k] = std::hypot(re, im);
    }
    return h;
}

/// Per-realization outcome; exposed for tests and custom reductions.
struct RealizationResult {
    double pd0 = 0.0;
    double pf0 = 0.0;
    double tau0 = 0.0;
    double mdc = 0.0;
};

namespace detail {

/// Runs `body(i)` for i in [0, count) over `threads` workers and rethrows the
/// first failure in index order.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    std::vector<std::exception_ptr> errors(count);
    const auto worker = [&](unsigned w) {
        for (std::size_t i = w; i < count; i += threads) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace detail

/// Mean of the maximized MDC over channel realizations (no detection trials).
inline DetectionEstimate estimate_mdc(const NetworkModel& model, const AllocationSpec& spec, const SimConfig& cfg,
                                      ChannelType type) {
    cfg.validate();
    const LocalStats stats = compute_local_stats(model);
    const Vector theta = pathloss_factors(model);
    const auto m = static_cast<Eigen::Index>(model.size());
    std::vector<double> mdc(cfg.n_channel_realizations);
    detail::parallel_for(cfg.n_channel_realizations, cfg.threads, [&](std::size_t i) {
        auto rng = stream_rng(cfg.seed, i);
        const ChannelRealization ch{draw_fading(cfg.fading, m, rng), theta};
        const MdcForm form = build_mdc_form(stats, ch, type, model.sigma_n_sq);
        mdc[i] = spec.allocate(form).mdc;
    });
    DetectionEstimate out;
    out.mean_mdc = detail::mean_of(mdc);
    out.mdc_stderr = detail::stderr_of(mdc);
    return out;
}

/// One channel realization: allocate, set tau0 on an H0 sample, then estimate
/// P_F0 and P_D0 on independent H0 and H1 samples.
template <class Rng>
RealizationResult simulate_realization(const NetworkModel& model, const LocalStats& stats, const Vector& theta,
                                       DecisionSampler& sampler, const AllocationSpec& spec, const SimConfig& cfg,
                                       ChannelType type, Rng& rng) {
    const auto m = static_cast<Eigen::Index>(model.size());
    sampler.reset();
    const ChannelRealization ch{draw_fading(cfg.fading, m, rng), theta};
    const MdcForm form = build_mdc_form(stats, ch, type, model.sigma_n_sq);
    const PowerAllocation alloc = spec.allocate(form);
    const std::size_t n = cfg.n_monte_carlo_per_realization;

    Vector u;
    const auto draw = [&](Hypothesis h) {
        sampler.sample(h, rng, u);
        return fuse(type, alloc.a_t, ch, u, model.sigma_n_sq, rng);
    };
    RealizationResult r;
    r.mdc = alloc.mdc;
    if (cfg.threshold == ThresholdRule::EmpiricalQuantile) {
        std::vector<double> cal(n);
        for (auto& t : cal) t = draw(Hypothesis::H0);
        r.tau0 = calibrate_tau0(std::move(cal), model.beta_F);
    } else {
        r.tau0 = gaussian_tau0(stats, ch, type, model.sigma_n_sq, alloc.a_t, model.beta_F);
    }
    std::size_t false_alarms = 0;
    std::size_t detections = 0;
    for (std::size_t j = 0; j < n; ++j) false_alarms += draw(Hypothesis::H0) > r.tau0;
    for (std::size_t j = 0; j < n; ++j) detections += draw(Hypothesis::H1) > r.tau0;
    r.pf0 = static_cast<double>(false_alarms) / static_cast<double>(n);
    r.pd0 = static_cast<double>(detections) / static_cast<double>(n);
    return r;
}

/// Averages P_D0, P_F0 and the MDC over independent channel realizations.
/// Results depend only on the seed, not on the thread count.
inline DetectionEstimate estimate_performance(const NetworkModel& model, const AllocationSpec& spec,
                                              const SimConfig& cfg, ChannelType type) {
    cfg.validate();
    const LocalStats stats = compute_local_stats(model);
    const Vector theta = pathloss_factors(model);
    const std::size_t count = cfg.n_channel_realizations;
    std::vector<RealizationResult> results(count);
    const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(count)));
    std::vector<DecisionSampler> samplers(threads, DecisionSampler(model, stats));
    detail::parallel_for(count, threads, [&](std::size_t i) {
        auto rng = stream_rng(cfg.seed, i);
        results[i] = simulate_realization(model, stats, theta, samplers[i % threads], spec, cfg, type, rng);
    });

    std::vector<double> pd(count), pf(count), mdc(count);
    double tau = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        pd[i] = results[i].pd0;
        pf[i] = results[i].pf0;
        mdc[i] = results[i].mdc;
        tau += results[i].tau0;
    }
    DetectionEstimate out;
    out.pd0 = detail::mean_of(pd);
    out.pf0 = detail::mean_of(pf);
    out.mean_mdc = detail::mean_of(mdc);
    out.threshold_tau0 = tau / static_cast<double>(count);
    const double n = static_cast<double>(cfg.n_monte_carlo_per_realization);
    if (count >= 2) {
        out.pd0_stderr = detail::stderr_of(pd);
        out.pf0_stderr = detail::stderr_of(pf);
        out.mdc_stderr = detail::stderr_of(mdc);
    } else {
        out.pd0_stderr = std::sqrt(out.pd0 * (1.0 - out.pd0) / n);
        out.pf0_stderr = std::sqrt(out.pf0 * (1.0 - out.pf0) / n);
    }
    return out;
}

}  // namespace deflect
