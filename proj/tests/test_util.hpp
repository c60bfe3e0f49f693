#pragma once

#include <cmath>
#include <random>

#include "deflect/deflect.hpp"

namespace deflect::fixtures {

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

/// Random MDC form with pd > pf. `correlated` draws a dense decision
/// covariance; otherwise K is diagonal. c is log-uniform on [1e-2, 1e2].
inline MdcForm random_form(std::mt19937_64& rng, Eigen::Index m, bool correlated,
                           ChannelType type = ChannelType::PAC, Vector* gains = nullptr) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Vector pf(m), pd(m), g(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        pf[k] = 0.05 + 0.15 * u01(rng);
        pd[k] = pf[k] + 0.05 + (0.9 - pf[k]) * u01(rng);
        g[k] = log_uniform(rng, 0.2, 5.0);
    }
    Matrix cov = Matrix::Zero(m, m);
    for (Eigen::Index k = 0; k < m; ++k) cov(k, k) = pd[k] * (1.0 - pd[k]);
    if (correlated) {
        // correlation matrix from random factors, mixed with the identity
        std::normal_distribution<double> n01;
        Matrix f(m, m);
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) f(i, j) = n01(rng);
        }
        Matrix r = f * f.transpose();
        const Vector d = r.diagonal().cwiseSqrt().cwiseInverse();
        r = d.asDiagonal() * r * d.asDiagonal();
        const double w = 0.2 + 0.7 * u01(rng);
        r = w * r + (1.0 - w) * Matrix::Identity(m, m);
        const Vector sd = cov.diagonal().cwiseSqrt();
        cov = sd.asDiagonal() * r * sd.asDiagonal();
    }
    MdcForm form;
    form.b_t = g.cwiseProduct(pd - pf);
    form.K_t = g.asDiagonal() * cov * g.asDiagonal();
    form.c = log_uniform(rng, 1e-2, 1e2);
    form.channel_type = type;
    if (gains) *gains = g;
    return form;
}

/// Applies a sensor permutation (out[k] = in[perm[k]]) to a form.
inline MdcForm permuted(const MdcForm& f, const std::vector<Eigen::Index>& perm) {
    const auto m = f.size();
    MdcForm out = f;
    for (Eigen::Index i = 0; i < m; ++i) {
        out.b_t[i] = f.b_t[perm[static_cast<std::size_t>(i)]];
        for (Eigen::Index j = 0; j < m; ++j) {
            out.K_t(i, j) = f.K_t(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

inline Vector permuted(const Vector& v, const std::vector<Eigen::Index>& perm) {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v[perm[static_cast<std::size_t>(i)]];
    return out;
}

inline Vector unpermuted(const Vector& v, const std::vector<Eigen::Index>& perm) {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[perm[static_cast<std::size_t>(i)]] = v[i];
    return out;
}

/// Eight sensors on a circle of diameter 5 m, source above the center, FC below.
inline NetworkModel symmetric_model(double sigma0_sq_mw) {
    NetworkModel m;
    m.sensor_positions = circle_layout(8, 2.5);
    m.source_position = Vec3(0, 0, 3);
    m.fc_position = Vec3(0, 0, -10);
    m.sigma_s_sq = dbm_to_mw(5.0);
    m.sigma0_sq = sigma0_sq_mw;
    m.sigma_n_sq = dbm_to_mw(-70.0);
    m.gain_G = db_to_linear(-55.0);
    m.eps_s = 2.0;
    m.eps_c = 2.0;
    m.rho = 0.1;
    m.pf_target = 0.1;
    m.beta_F = 0.05;
    return m;
}

}  // namespace deflect::fixtures
