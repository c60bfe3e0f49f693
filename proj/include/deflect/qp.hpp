#pragma once

// Small dense convex program
//
//   minimize    z' D z
//   subject to  e' z = r
//               G z <= h
//               || z[0:k) || <= s * z[k]        (optional second-order cone)
//
// solved by a primal-dual interior point method and then polished by Newton's
// method on the KKT system of the identified active set.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace deflect::qp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Cone {
    Eigen::Index head = 0;  // cone acts on z[0:head) and z[head]
    double slope = 1.0;
};

struct Problem {
    Matrix D;
    Vector eq;
    double eq_rhs = 1.0;
    Matrix G;  // may have zero rows
    Vector h;
    std::optional<Cone> cone;

    Eigen::Index dim() const { return D.rows(); }
    Eigen::Index inequality_count() const { return G.rows() + (cone ? 1 : 0); }
};

struct Options {
    double tolerance = 1e-13;
    int max_iterations = 500;
    bool polish = true;
};

struct Result {
    Vector z;
    Vector lambda;  // inequality multipliers, linear rows first then the cone
    double nu = 0.0;
    std::vector<bool> active;
    int iterations = 0;
    bool converged = false;
    bool polished = false;
};

namespace detail {

inline Vector constraint_values(const Problem& p, const Vector& z) {
    Vector f(p.inequality_count());
    const auto nl = p.G.rows();
    if (nl > 0) f.head(nl) = p.G * z - p.h;
    if (p.cone) f[nl] = z.head(p.cone->head).norm() - p.cone->slope * z[p.cone->head];
    return f;
}

inline Matrix constraint_jacobian(const Problem& p, const Vector& z) {
    const auto nl = p.G.rows();
    Matrix J = Matrix::Zero(p.inequality_count(), p.dim());
    if (nl > 0) J.topRows(nl) = p.G;
    if (p.cone) {
        const auto k = p.cone->head;
        const double nx = z.head(k).norm();
        if (nx > 0.0) J.row(nl).head(k) = z.head(k).transpose() / nx;
        J(nl, k) = -p.cone->slope;
    }
    return J;
}

inline Matrix cone_hessian(const Problem& p, const Vector& z) {
    Matrix Hc = Matrix::Zero(p.dim(), p.dim());
    if (!p.cone) return Hc;
    const auto k = p.cone->head;
    const Vector x = z.head(k);
    const double nx = x.norm();
    if (nx <= 0.0) return Hc;
    Hc.topLeftCorner(k, k) = (Matrix::Identity(k, k) - x * x.transpose() / (nx * nx)) / nx;
    return Hc;
}

inline double residual_norm(const Problem& p, const Vector& z, const Vector& lambda, double nu,
                            double tau) {
    const Vector f = constraint_values(p, z);
    const Matrix J = constraint_jacobian(p, z);
    const Vector r_dual = 2.0 * p.D * z + J.transpose() * lambda + p.eq * nu;
    const Vector r_cent = -lambda.cwiseProduct(f).array() - 1.0 / tau;
    const double r_pri = p.eq.dot(z) - p.eq_rhs;
    return std::sqrt(r_dual.squaredNorm() + r_cent.squaredNorm() + r_pri * r_pri);
}

/// Newton iterations on the equality-constrained KKT system of an active set.
/// On success `res` holds an exact KKT point.
inline bool polish(const Problem& p, Result& res, const std::vector<bool>& active) {
    const auto n = p.dim();
    const auto m = p.inequality_count();
    const auto nl = p.G.rows();
    std::vector<Eigen::Index> act;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (active[static_cast<std::size_t>(i)]) act.push_back(i);
    }
    const auto na = static_cast<Eigen::Index>(act.size());
    Vector z = res.z;
    double nu = res.nu;
    Vector lam(na);
    for (Eigen::Index a = 0; a < na; ++a) lam[a] = res.lambda[act[a]];

    const auto kkt_residual = [&](const Vector& zz, double nn, const Vector& ll, Vector& F) {
        const Vector f = constraint_values(p, zz);
        const Matrix J = constraint_jacobian(p, zz);
        F.resize(n + 1 + na);
        Vector grad = 2.0 * p.D * zz + p.eq * nn;
        for (Eigen::Index a = 0; a < na; ++a) grad += ll[a] * J.row(act[a]).transpose();
        F.head(n) = grad;
        F[n] = p.eq.dot(zz) - p.eq_rhs;
        for (Eigen::Index a = 0; a < na; ++a) F[n + 1 + a] = f[act[a]];
    };

    Vector F;
    kkt_residual(z, nu, lam, F);
    double best = F.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < 30 && best > 1e-15; ++it) {
        const Matrix J = constraint_jacobian(p, z);
        Matrix H = 2.0 * p.D;
        for (Eigen::Index a = 0; a < na; ++a) {
            if (p.cone && act[a] == nl) H += lam[a] * cone_hessian(p, z);
        }
        Matrix K = Matrix::Zero(n + 1 + na, n + 1 + na);
        K.topLeftCorner(n, n) = H;
        K.block(0, n, n, 1) = p.eq;
        K.block(n, 0, 1, n) = p.eq.transpose();
        for (Eigen::Index a = 0; a < na; ++a) {
            K.block(0, n + 1 + a, n, 1) = J.row(act[a]).transpose();
            K.block(n + 1 + a, 0, 1, n) = J.row(act[a]);
        }
        const Vector step = K.fullPivLu().solve(-F);
        if (!step.allFinite()) return false;
        Vector z_new = z + step.head(n);
        double nu_new = nu + step[n];
        Vector lam_new = lam + step.tail(na);
        Vector F_new;
        kkt_residual(z_new, nu_new, lam_new, F_new);
        const double r = F_new.lpNorm<Eigen::Infinity>();
        if (!(r < best)) break;
        z = z_new;
        nu = nu_new;
        lam = lam_new;
        F = F_new;
        best = r;
    }
    if (best > 1e-11) return false;
    if (na > 0 && lam.minCoeff() < -1e-12) return false;
    const Vector f = constraint_values(p, z);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!active[static_cast<std::size_t>(i)] && f[i] > 1e-14) return false;
    }
    res.active = active;
    res.z = z;
    res.nu = nu;
    res.lambda.setZero();
    for (Eigen::Index a = 0; a < na; ++a) res.lambda[act[a]] = std::max(0.0, lam[a]);
    return true;
}

}  // namespace detail

/// Solves the program from a strictly feasible start `z0` (e'z0 = r, all
/// inequalities strict).
inline Result solve(const Problem& p, const Vector& z0, const Options& opt = {}) {
    const auto n = p.dim();
    const auto m = p.inequality_count();
    Result res;
    Vector z = z0;
    Vector f = detail::constraint_values(p, z);
    if (m > 0 && f.maxCoeff() >= 0.0) throw std::invalid_argument("qp::solve: start is not strictly feasible");
    Vector lambda = (-f).cwiseInverse();
    double nu = 0.0;
    constexpr double mu = 10.0;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        f = detail::constraint_values(p, z);
        const Matrix J = detail::constraint_jacobian(p, z);
        const double gap = m > 0 ? -f.dot(lambda) : 0.0;
        const Vector r_dual = 2.0 * p.D * z + J.transpose() * lambda + p.eq * nu;
        const double r_pri = p.eq.dot(z) - p.eq_rhs;
        if (r_dual.lpNorm<Eigen::Infinity>() <= opt.tolerance && std::abs(r_pri) <= opt.tolerance &&
            gap <= opt.tolerance) {
            res.converged = true;
            break;
        }
        const double tau = m > 0 ? mu * static_cast<double>(m) / std::max(gap, 1e-300) : 1.0;

        Matrix H = 2.0 * p.D;
        if (p.cone) H += lambda[m - 1] * detail::cone_hessian(p, z);
        Vector rhs = -(2.0 * p.D * z + p.eq * nu);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double w = lambda[i] / (-f[i]);
            H += w * J.row(i).transpose() * J.row(i);
            rhs -= J.row(i).transpose() * (-1.0 / (tau * f[i]));
        }
        Matrix K = Matrix::Zero(n + 1, n + 1);
        K.topLeftCorner(n, n) = H;
        K.block(0, n, n, 1) = p.eq;
        K.block(n, 0, 1, n) = p.eq.transpose();
        Vector b(n + 1);
        b.head(n) = rhs;
        b[n] = -r_pri;
        const Vector step = K.fullPivLu().solve(b);
        if (!step.allFinite()) break;
        const Vector dz = step.head(n);
        const double dnu = step[n];
        Vector dlambda(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            dlambda[i] = -(lambda[i] / f[i]) * J.row(i).dot(dz) - lambda[i] - 1.0 / (tau * f[i]);
        }

        double s_max = 1.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (dlambda[i] < 0.0) s_max = std::min(s_max, -lambda[i] / dlambda[i]);
        }
        double s = 0.99 * s_max;
        for (int k = 0; k < 80; ++k) {
            if (m == 0 || detail::constraint_values(p, z + s * dz).maxCoeff() < 0.0) break;
            s *= 0.5;
        }
        const double r0 = detail::residual_norm(p, z, lambda, nu, tau);
        for (int k = 0; k < 60; ++k) {
            const double nu_s = nu + s * dnu;
            if (detail::residual_norm(p, z + s * dz, lambda + s * dlambda, nu_s, tau) <= (1.0 - 0.01 * s) * r0) {
                break;
            }
            s *= 0.5;
        }
        // ill-conditioned tail: leave the rest to the polish
        if (s < 1e-12) break;
        z += s * dz;
        lambda += s * dlambda;
        nu += s * dnu;
    }
    res.iterations = it;
    res.z = z;
    res.lambda = lambda;
    res.nu = nu;
    f = detail::constraint_values(p, z);
    res.active.assign(static_cast<std::size_t>(m), false);
    for (Eigen::Index i = 0; i < m; ++i) res.active[static_cast<std::size_t>(i)] = lambda[i] > -f[i];
    if (!opt.polish) return res;

    // Candidate active sets: complementarity guess first, then slack thresholds.
    std::vector<std::vector<bool>> candidates{res.active};
    const double zscale = 1.0 + z.lpNorm<Eigen::Infinity>();
    for (const double thr : {1e-12, 1e-10, 1e-8, 1e-6, 1e-4}) {
        std::vector<bool> act(static_cast<std::size_t>(m));
        for (Eigen::Index i = 0; i < m; ++i) act[static_cast<std::size_t>(i)] = -f[i] <= thr * zscale;
        if (std::find(candidates.begin(), candidates.end(), act) == candidates.end()) candidates.push_back(act);
    }
    // A constraint whose objective weight is below the IPM resolution can sit
    // far from its bound; try adding inactive ones, tightest first.
    std::vector<Eigen::Index> order;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!res.active[static_cast<std::size_t>(i)]) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return f[i] > f[j]; });
    for (const auto i : order) {
        auto act = res.active;
        act[static_cast<std::size_t>(i)] = true;
        if (std::find(candidates.begin(), candidates.end(), act) == candidates.end()) candidates.push_back(act);
    }
    for (const auto& act : candidates) {
        if (detail::polish(p, res, act)) {
            res.polished = true;
            break;
        }
    }
    return res;
}

}  // namespace deflect::qp
