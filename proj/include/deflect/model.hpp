#pragma once

// Physical scenario: geometry, sensing covariance, local energy detectors and
// the first/second order statistics of the local decisions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deflect/normal.hpp"

namespace deflect {

using Vec3 = Eigen::Vector3d;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Hypothesis { H0, H1 };

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Scenario description. All powers and variances are linear milliwatts.
struct NetworkModel {
    std::vector<Vec3> sensor_positions;
    Vec3 fc_position = Vec3::Zero();
    Vec3 source_position = Vec3::Zero();
    double sigma0_sq = 1.0;   // sensing noise variance
    double sigma_s_sq = 1.0;  // source power at unit distance
    double sigma_n_sq = 1.0;  // channel noise variance (complex)
    double eps_s = 2.0;
    double eps_c = 2.0;
    double gain_G = 1.0;
    double rho = 0.0;  // correlation at unit distance
    double beta_F = 0.05;
    double pf_target = 0.1;

    std::size_t size() const { return sensor_positions.size(); }

    void validate() const {
        if (sensor_positions.empty()) throw std::invalid_argument("model: at least one sensor required");
        const auto finite = [](const Vec3& p) { return p.allFinite(); };
        for (const auto& p : sensor_positions) {
            if (!finite(p)) throw std::invalid_argument("model: sensor position is not finite");
        }
        if (!finite(fc_position) || !finite(source_position)) {
            throw std::invalid_argument("model: fc/source position is not finite");
        }
        if (!(sigma0_sq > 0.0) || !(sigma_s_sq > 0.0) || !(sigma_n_sq > 0.0)) {
            throw std::invalid_argument("model: variances must be positive");
        }
        if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("model: rho must lie in [0,1]");
        if (!(beta_F > 0.0 && beta_F < 1.0)) throw std::invalid_argument("model: beta_F must lie in (0,1)");
        if (!(pf_target > 0.0 && pf_target < 1.0)) {
            throw std::invalid_argument("model: pf_target must lie in (0,1)");
        }
        if (!(gain_G > 0.0)) throw std::invalid_argument("model: gain must be positive");
        if (!std::isfinite(eps_s) || !std::isfinite(eps_c)) {
            throw std::invalid_argument("model: pathloss exponents must be finite");
        }
    }
};

/// Pathloss factor gain * distance^(-exponent).
inline double pathloss(double distance, double exponent, double gain) {
    if (!(distance > 0.0)) throw std::domain_error("pathloss: distance must be positive");
    if (!(gain > 0.0)) throw std::domain_error("pathloss: gain must be positive");
    return gain * std::pow(distance, -exponent);
}

/// Per-sensor signal variance sigma_s^2 / d_S^eps_s.
inline Vector sensor_signal_variances(const NetworkModel& model) {
    Vector out(model.size());
    for (std::size_t k = 0; k < model.size(); ++k) {
        const double d = (model.sensor_positions[k] - model.source_position).norm();
        if (!(d > 0.0)) throw std::domain_error("signal covariance: source coincides with a sensor");
        out[k] = model.sigma_s_sq / std::pow(d, model.eps_s);
    }
    return out;
}

/// Source covariance K_s with [K_s]_ij = rho^{d_ij} sqrt(s_i s_j).
inline Matrix build_signal_covariance(const NetworkModel& model) {
    const Vector var = sensor_signal_variances(model);
    const auto m = static_cast<Eigen::Index>(model.size());
    Matrix ks(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        ks(i, i) = var[i];
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double dij = (model.sensor_positions[i] - model.sensor_positions[j]).norm();
            const double corr = std::pow(model.rho, dij);
            ks(i, j) = ks(j, i) = corr * std::sqrt(var[i] * var[j]);
        }
    }
    return ks;
}

/// Covariance of the observation vector under the given hypothesis.
inline Matrix observation_covariance(const NetworkModel& model, Hypothesis h) {
    const auto m = static_cast<Eigen::Index>(model.size());
    Matrix cov = model.sigma0_sq * Matrix::Identity(m, m);
    if (h == Hypothesis::H1) cov += build_signal_covariance(model);
    return cov;
}

struct DetectorCalibration {
    double tau = 0.0;  // energy threshold on x^2
    double pd = 0.0;
    double pf = 0.0;
};

/// Energy detector u = 1{x^2 > tau} with the false-alarm constraint held at equality.
inline DetectorCalibration calibrate_energy_detector(double sigma0_sq, double sigma_sk_sq,
                                                     double pf_target) {
    if (!(sigma0_sq > 0.0) || !(sigma_sk_sq >= 0.0)) {
        throw std::domain_error("calibrate_energy_detector: invalid variances");
    }
    if (!(pf_target > 0.0 && pf_target < 1.0)) {
        throw std::domain_error("calibrate_energy_detector: pf_target must lie in (0,1)");
    }
    const double z = norm_quantile(1.0 - 0.5 * pf_target);
    DetectorCalibration cal;
    cal.tau = sigma0_sq * z * z;
    cal.pf = pf_target;
    cal.pd = 2.0 * norm_sf(std::sqrt(cal.tau) / std::sqrt(sigma0_sq + sigma_sk_sq));
    return cal;
}

/// Matrix of joint exceedance probabilities P(x_i^2 > tau_i, x_j^2 > tau_j) for
/// zero-mean Gaussian observations with the given covariance.
inline Matrix joint_detection_matrix(const Matrix& covariance, const Vector& thresholds,
                                     double tol = 1e-12) {
    const auto m = covariance.rows();
    if (covariance.cols() != m || thresholds.size() != m) {
        throw std::invalid_argument("joint_detection_matrix: dimension mismatch");
    }
    if (Eigen::LLT<Matrix>(covariance).info() != Eigen::Success) {
        throw std::domain_error("joint_detection_matrix: covariance is not positive definite");
    }
    Vector scaled(m);
    Vector marginal(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!(thresholds[i] > 0.0)) throw std::domain_error("joint_detection_matrix: thresholds must be positive");
        scaled[i] = std::sqrt(thresholds[i]) / std::sqrt(covariance(i, i));
        marginal[i] = 2.0 * norm_sf(scaled[i]);
    }
    Matrix out(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        out(i, i) = marginal[i];
        for (Eigen::Index j = i + 1; j < m; ++j) {
            double v;
            if (covariance(i, j) == 0.0) {
                v = marginal[i] * marginal[j];
            } else {
                double r = covariance(i, j) / std::sqrt(covariance(i, i) * covariance(j, j));
                r = std::clamp(r, -1.0, 1.0);
                v = bivariate_two_sided_exceedance(scaled[i], scaled[j], r, tol);
                // Frechet bounds absorb quadrature noise
                v = std::clamp(v, std::max(0.0, marginal[i] + marginal[j] - 1.0),
                               std::min(marginal[i], marginal[j]));
            }
            out(i, j) = out(j, i) = v;
        }
    }
    return out;
}

/// Per-sensor decision statistics.
struct LocalStats {
    Vector pd;
    Vector pf;
    Matrix pbar_d;      // E{u u^T | H1}
    Matrix pbar_f;      // E{u u^T | H0}
    Vector thresholds;
    std::vector<std::string> warnings;

    std::size_t size() const { return static_cast<std::size_t>(pd.size()); }

    /// Covariance of the decision vector under H1.
    Matrix decision_covariance() const { return pbar_d - pd * pd.transpose(); }
};

inline LocalStats compute_local_stats(const NetworkModel& model) {
    model.validate();
    const Vector var = sensor_signal_variances(model);
    const auto m = static_cast<Eigen::Index>(model.size());
    LocalStats st;
    st.pd.resize(m);
    st.pf.resize(m);
    st.thresholds.resize(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto cal = calibrate_energy_detector(model.sigma0_sq, var[k], model.pf_target);
        st.pd[k] = cal.pd;
        st.pf[k] = cal.pf;
        st.thresholds[k] = cal.tau;
        if (!(cal.pd > cal.pf)) {
            st.warnings.push_back("sensor " + std::to_string(k + 1) +
                                  " has p_d <= p_f; its decisions carry no information");
        }
    }
    st.pbar_d = joint_detection_matrix(observation_covariance(model, Hypothesis::H1), st.thresholds);
    st.pd = st.pbar_d.diagonal();
    // independent under H0
    st.pbar_f = st.pf * st.pf.transpose();
    st.pbar_f.diagonal() = st.pf;
    return st;
}

/// Channel amplitudes |h_k| and pathloss factors theta_k.
struct ChannelRealization {
    Vector h_mag;
    Vector theta;

    /// Effective amplitudes g_k = sqrt(theta_k) |h_k|.
    Vector gains() const { return theta.cwiseSqrt().cwiseProduct(h_mag); }

    void validate() const {
        if (h_mag.size() != theta.size()) throw std::invalid_argument("channel: dimension mismatch");
        if ((h_mag.array() < 0.0).any()) throw std::invalid_argument("channel: |h| must be nonnegative");
        if (!(theta.array() > 0.0).all()) throw std::invalid_argument("channel: theta must be positive");
    }
};

/// Pathloss factors toward the fusion center.
inline Vector pathloss_factors(const NetworkModel& model) {
    Vector theta(model.size());
    for (std::size_t k = 0; k < model.size(); ++k) {
        theta[k] = pathloss((model.sensor_positions[k] - model.fc_position).norm(), model.eps_c,
                            model.gain_G);
    }
    return theta;
}

inline ChannelRealization make_channel(const NetworkModel& model, const Vector& h_mag) {
    ChannelRealization ch{h_mag, pathloss_factors(model)};
    ch.validate();
    return ch;
}

inline ChannelRealization unit_gain_channel(const NetworkModel& model) {
    return make_channel(model, Vector::Ones(static_cast<Eigen::Index>(model.size())));
}

/// Sensors evenly spaced on a circle in the z = 0 plane, the first on the +x axis.
inline std::vector<Vec3> circle_layout(std::size_t count, double radius) {
    std::vector<Vec3> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
        out.emplace_back(radius * std::cos(phi), radius * std::sin(phi), 0.0);
    }
    return out;
}

}  // namespace deflect
