#pragma once

// Modified deflection coefficient of the linear-fusion statistic at the FC.
//
//   MDC(a_t) = (b_t' a_t)^2 / (a_t' K_t a_t + c)
//
// b_t and K_t are shared by the parallel and multiple access channels; only
// the channel-noise term c differs (M sigma_n^2 / 2 vs sigma_n^2 / 2).

#include <cmath>
#include <random>
#include <stdexcept>
#include <string_view>

#include "deflect/model.hpp"

namespace deflect {

enum class ChannelType { PAC, MAC };

inline std::string_view to_string(ChannelType t) { return t == ChannelType::PAC ? "PAC" : "MAC"; }

/// Channel-noise variance of the fused statistic.
inline double channel_noise_term(ChannelType type, std::size_t sensors, double sigma_n_sq) {
    const double per_branch = 0.5 * sigma_n_sq;
    return type == ChannelType::PAC ? static_cast<double>(sensors) * per_branch : per_branch;
}

struct MdcForm {
    Vector b_t;
    Matrix K_t;
    double c = 0.0;
    ChannelType channel_type = ChannelType::PAC;

    Eigen::Index size() const { return b_t.size(); }
};

/// Eigenvalues of the decision covariance below this are rejected; those in
/// [-tolerance, 0) are clamped to zero.
inline constexpr double kPsdTolerance = 1e-9;

/// Returns a PSD copy of a symmetric matrix, clamping small negative eigenvalues.
inline Matrix enforce_psd(const Matrix& sym, double tolerance = kPsdTolerance) {
    Matrix s = 0.5 * (sym + sym.transpose());
    if (s.size() == 0) return s;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
    const Vector& lambda = eig.eigenvalues();
    if (lambda.minCoeff() < -tolerance) {
        throw std::domain_error("decision covariance is not positive semi-definite");
    }
    if (lambda.minCoeff() >= 0.0) return s;
    return eig.eigenvectors() * lambda.cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
}

inline MdcForm build_mdc_form(const LocalStats& stats, const ChannelRealization& channel,
                              ChannelType type, double sigma_n_sq) {
    const auto m = stats.pd.size();
    if (stats.pf.size() != m || stats.pbar_d.rows() != m || stats.pbar_d.cols() != m ||
        channel.h_mag.size() != m || channel.theta.size() != m) {
        throw std::invalid_argument("build_mdc_form: dimension mismatch");
    }
    if (!(sigma_n_sq > 0.0)) throw std::invalid_argument("build_mdc_form: sigma_n^2 must be positive");
    const Matrix decision_cov = enforce_psd(stats.decision_covariance());
    const Vector g = channel.gains();
    MdcForm form;
    form.b_t = g.cwiseProduct(stats.pd - stats.pf);
    form.K_t = g.asDiagonal() * decision_cov * g.asDiagonal();
    form.c = channel_noise_term(type, static_cast<std::size_t>(m), sigma_n_sq);
    form.channel_type = type;
    return form;
}

inline double mdc_value(const MdcForm& form, const Vector& a_t) {
    if (a_t.size() != form.size()) throw std::invalid_argument("mdc_value: dimension mismatch");
    const double num = form.b_t.dot(a_t);
    const double den = a_t.dot(form.K_t * a_t) + form.c;
    return num * num / den;
}

/// First and second moments of the fused statistic T given the channel.
struct StatisticMoments {
    double mean_h0 = 0.0;
    double mean_h1 = 0.0;
    double var_h1 = 0.0;
    // standard errors; zero for closed-form values
    double mean_h0_se = 0.0;
    double mean_h1_se = 0.0;
    double var_h1_se = 0.0;
};

/// Closed-form E{T|H_i,h} and Var{T|H1,h}.
inline StatisticMoments closed_form_moments(const LocalStats& stats, const ChannelRealization& channel,
                                            ChannelType type, double sigma_n_sq, const Vector& a_t) {
    const Vector w = a_t.cwiseProduct(channel.gains());
    StatisticMoments out;
    out.mean_h1 = w.dot(stats.pd);
    out.mean_h0 = w.dot(stats.pf);
    out.var_h1 = channel_noise_term(type, stats.size(), sigma_n_sq) +
                 w.dot(enforce_psd(stats.decision_covariance()) * w);
    return out;
}

namespace detail {

struct RunningMoments {
    double n = 0.0, mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;

    void push(double x) {
        const double n1 = n;
        n += 1.0;
        const double delta = x - mean;
        const double dn = delta / n;
        const double dn2 = dn * dn;
        const double term1 = delta * dn * n1;
        mean += dn;
        m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * m3;
        m3 += term1 * dn * (n - 2.0) - 3.0 * dn * m2;
        m2 += term1;
    }
    double variance() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
    double mean_se() const { return std::sqrt(variance() / n); }
    double variance_se() const {
        const double s2 = m2 / n;
        const double mu4 = m4 / n;
        return std::sqrt(std::max(0.0, mu4 - s2 * s2) / n);
    }
};

}  // namespace detail

/// Monte-Carlo estimates of the statistic moments.
///
/// `sampler(Hypothesis, rng)` must return a decision vector u drawn under the
/// given hypothesis. Channel noise is N(0, sigma_n^2/2) per PAC branch or a
/// single draw for the MAC.
template <class DecisionSampler, class Rng>
StatisticMoments empirical_moments_check(const ChannelRealization& channel, ChannelType type,
                                         double sigma_n_sq, const Vector& a_t,
                                         DecisionSampler&& sampler, std::size_t draws, Rng& rng) {
    const Vector w = a_t.cwiseProduct(channel.gains());
    const auto m = w.size();
    const bool noisy = sigma_n_sq > 0.0;
    std::normal_distribution<double> noise(0.0, noisy ? std::sqrt(0.5 * sigma_n_sq) : 1.0);
    const auto statistic = [&](const Vector& u) {
        double t = w.dot(u);
        if (!noisy) return t;
        if (type == ChannelType::PAC) {
            for (Eigen::Index k = 0; k < m; ++k) t += noise(rng);
        } else {
            t += noise(rng);
        }
        return t;
    };
    detail::RunningMoments h0, h1;
    for (std::size_t i = 0; i < draws; ++i) {
        h0.push(statistic(sampler(Hypothesis::H0, rng)));
        h1.push(statistic(sampler(Hypothesis::H1, rng)));
    }
    StatisticMoments out;
    out.mean_h0 = h0.mean;
    out.mean_h1 = h1.mean;
    out.var_h1 = h1.variance();
    out.mean_h0_se = h0.mean_se();
    out.mean_h1_se = h1.mean_se();
    out.var_h1_se = h1.variance_se();
    return out;
}

}  // namespace deflect
