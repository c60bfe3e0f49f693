#pragma once

// MDC-maximizing transmit power allocation.
//
// Three constraint regimes on the amplitude vector a_t (powers are a_t^2):
//   TPC   ||a_t||^2 <= p_tot,                 a_t >= 0
//   TIPC  ||a_t||^2 <= p_tot,  0 <= a_t <= sqrt(p0)
//   IPC                        0 <= a_t <= sqrt(p0)
//
// Analytic procedures are used where they apply; everything else goes through
// an equivalent convex program in z = [a_t; 1] / (b_t' a_t).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deflect/mdc.hpp"
#include "deflect/qp.hpp"

namespace deflect {

enum class Regime { TPC, TIPC, IPC };

inline std::string_view to_string(Regime r) {
    switch (r) {
        case Regime::TPC: return "TPC";
        case Regime::TIPC: return "TIPC";
        case Regime::IPC: return "IPC";
    }
    return "?";
}

enum class SolveMethod { AnalyticClosedForm, AnalyticProjection, AnalyticEta, QPFallback, Uniform, GridSearch };

inline std::string_view to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::AnalyticClosedForm: return "analytic-closed-form";
        case SolveMethod::AnalyticProjection: return "analytic-projection";
        case SolveMethod::AnalyticEta: return "analytic-eta";
        case SolveMethod::QPFallback: return "qp";
        case SolveMethod::Uniform: return "uniform";
        case SolveMethod::GridSearch: return "grid";
    }
    return "?";
}

struct ConstraintSet {
    Regime regime = Regime::TPC;
    double p_tot = 0.0;  // TPC, TIPC
    Vector p0;           // TIPC, IPC

    static ConstraintSet tpc(double p_tot) { return {Regime::TPC, p_tot, {}}; }
    static ConstraintSet tipc(double p_tot, Vector p0) { return {Regime::TIPC, p_tot, std::move(p0)}; }
    static ConstraintSet ipc(Vector p0) { return {Regime::IPC, 0.0, std::move(p0)}; }

    bool has_total() const { return regime != Regime::IPC; }
    bool has_caps() const { return regime != Regime::TPC; }

    void validate(Eigen::Index sensors) const {
        if (has_total() && !(p_tot > 0.0 && std::isfinite(p_tot))) {
            throw std::domain_error("constraints: p_tot must be positive");
        }
        if (has_caps()) {
            if (p0.size() != sensors) throw std::invalid_argument("constraints: p0 has wrong dimension");
            if (!(p0.array() > 0.0).all() || !p0.allFinite()) {
                throw std::domain_error("constraints: p0 must be positive");
            }
        }
        if (regime == Regime::TIPC && !(p_tot < p0.sum())) {
            throw std::domain_error("constraints: TIPC requires p_tot < sum(p0)");
        }
    }
};

struct PowerAllocation {
    Vector a_t;
    Vector powers;
    double mdc = 0.0;
    SolveMethod method = SolveMethod::AnalyticClosedForm;
    double kkt_residual = 0.0;
    Regime regime = Regime::TPC;
};

class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual)
        : std::runtime_error(what + " (KKT residual " + std::to_string(residual) + ")"), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

/// Tolerances of the KKT certificates.
inline constexpr double kAnalyticKktTolerance = 1e-9;
inline constexpr double kQpKktTolerance = 1e-8;
inline constexpr double kFeasibilityTolerance = 1e-9;

namespace detail {

enum class Ball { None, Inequality, Equality };

struct KktGeometry {
    Ball ball = Ball::None;
    double p_tot = 0.0;
    Vector p0;  // empty when there are no caps
};

/// Common scale so that the residual does not depend on power units.
inline double geometry_scale(const KktGeometry& geo) {
    if (geo.ball != Ball::None) return geo.p_tot;
    return geo.p0.maxCoeff();
}

inline void check_feasible(const Vector& a, const KktGeometry& geo) {
    const double scale = std::sqrt(geometry_scale(geo));
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        if (a[k] < -kFeasibilityTolerance * scale) throw std::domain_error("kkt_residual: negative amplitude");
        if (geo.p0.size() > 0 && a[k] > std::sqrt(geo.p0[k]) * (1.0 + kFeasibilityTolerance)) {
            throw std::domain_error("kkt_residual: individual power cap violated");
        }
    }
    if (geo.ball == Ball::Inequality && a.squaredNorm() > geo.p_tot * (1.0 + kFeasibilityTolerance)) {
        throw std::domain_error("kkt_residual: total power budget violated");
    }
    if (geo.ball == Ball::Equality &&
        std::abs(a.squaredNorm() - geo.p_tot) > geo.p_tot * kFeasibilityTolerance) {
        throw std::domain_error("kkt_residual: point is off the power shell");
    }
}

/// Largest KKT violation of a minimization with objective gradient `grad`,
/// with the multipliers chosen to make it as small as possible. `term_scale`
/// is the magnitude of the terms that cancel inside `grad`; the gradient is
/// measured relative to it.
inline double kkt_violation(const Vector& grad, const Vector& a, const KktGeometry& geo, double term_scale) {
    const double scale = geometry_scale(geo);
    const double gmax = std::max(grad.lpNorm<Eigen::Infinity>(), term_scale);
    if (!(gmax > 0.0)) return 0.0;
    const Vector g = grad / gmax;
    const Vector x = a / std::sqrt(scale);
    const auto m = x.size();
    const bool capped = geo.p0.size() > 0;
    const Vector upper = capped ? Vector((geo.p0 / scale).cwiseSqrt()) : Vector();
    const double radius_sq = geo.ball != Ball::None ? geo.p_tot / scale : 0.0;
    constexpr double act_tol = 1e-9;

    std::vector<char> at_lo(static_cast<std::size_t>(m)), at_up(static_cast<std::size_t>(m));
    double primal = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
        at_lo[k] = x[k] <= act_tol;
        at_up[k] = capped && upper[k] - x[k] <= act_tol * std::max(1.0, upper[k]);
        primal = std::max(primal, -x[k]);
        if (capped) primal = std::max(primal, x[k] - upper[k]);
    }
    const double shell_gap = radius_sq - x.squaredNorm();
    if (geo.ball == Ball::Inequality) primal = std::max(primal, -shell_gap / radius_sq);
    if (geo.ball == Ball::Equality) primal = std::max(primal, std::abs(shell_gap) / radius_sq);

    const auto residual = [&](double mu) {
        double worst = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            const double r = g[k] + 2.0 * mu * x[k];
            if (at_up[k] && at_lo[k]) continue;
            if (at_up[k]) {
                worst = std::max({worst, std::max(0.0, r), std::max(0.0, -r) * (upper[k] - x[k])});
            } else if (at_lo[k]) {
                worst = std::max({worst, std::max(0.0, -r), std::max(0.0, r) * x[k]});
            } else {
                worst = std::max(worst, std::abs(r));
            }
        }
        if (geo.ball == Ball::Inequality) worst = std::max(worst, mu * std::abs(shell_gap));
        return worst;
    };

    double best_mu = 0.0;
    if (geo.ball != Ball::None) {
        double hi = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            if (x[k] > act_tol) hi = std::max(hi, std::abs(g[k]) / (2.0 * x[k]));
        }
        hi = 2.0 * hi + 1.0;
        double lo = geo.ball == Ball::Equality ? -hi : 0.0;
        // golden section on a convex piecewise-linear function
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double c1 = hi - phi * (hi - lo);
        double c2 = lo + phi * (hi - lo);
        double f1 = residual(c1), f2 = residual(c2);
        for (int it = 0; it < 200; ++it) {
            if (f1 <= f2) {
                hi = c2;
                c2 = c1;
                f2 = f1;
                c1 = hi - phi * (hi - lo);
                f1 = residual(c1);
            } else {
                lo = c1;
                c1 = c2;
                f1 = f2;
                c2 = lo + phi * (hi - lo);
                f2 = residual(c2);
            }
        }
        best_mu = 0.5 * (lo + hi);
        if (geo.ball == Ball::Inequality && residual(0.0) <= residual(best_mu)) best_mu = 0.0;
    }
    return std::max(primal, residual(best_mu));
}

inline KktGeometry geometry_of(const ConstraintSet& cs) {
    KktGeometry geo;
    geo.ball = cs.has_total() ? Ball::Inequality : Ball::None;
    geo.p_tot = cs.p_tot;
    if (cs.has_caps()) geo.p0 = cs.p0;
    return geo;
}

inline bool is_zero(const Vector& v) { return v.size() == 0 || v.cwiseAbs().maxCoeff() == 0.0; }

inline bool is_diagonal(const Matrix& K) {
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
        for (Eigen::Index j = 0; j < K.cols(); ++j) {
            if (i == j) continue;
            if (std::abs(K(i, j)) > 1e-14 * std::sqrt(std::abs(K(i, i) * K(j, j)))) return false;
        }
    }
    return true;
}

inline PowerAllocation finish(const MdcForm& form, const ConstraintSet& cs, Vector a, SolveMethod method,
                              double residual) {
    PowerAllocation out;
    out.a_t = std::move(a);
    out.powers = out.a_t.cwiseAbs2();
    out.mdc = mdc_value(form, out.a_t);
    out.method = method;
    out.kkt_residual = residual;
    out.regime = cs.regime;
    return out;
}

inline PowerAllocation zero_allocation(const MdcForm& form, const ConstraintSet& cs) {
    return finish(form, cs, Vector::Zero(form.size()), SolveMethod::AnalyticClosedForm, 0.0);
}

}  // namespace detail

/// Largest violation of the first-order conditions of maximizing the MDC under
/// `constraints` at a feasible point. Scale free; zero at an exact KKT point.
inline double kkt_residual(const MdcForm& form, const ConstraintSet& constraints, const Vector& a_t) {
    if (a_t.size() != form.size()) throw std::invalid_argument("kkt_residual: dimension mismatch");
    constraints.validate(form.size());
    const auto geo = detail::geometry_of(constraints);
    detail::check_feasible(a_t, geo);
    if (detail::is_zero(form.b_t)) return 0.0;
    const double s = form.b_t.dot(a_t);
    if (s == 0.0) return 1.0;
    // minimize f = 1/MDC = (a'Ka + c) / (b'a)^2
    const double eta = (a_t.dot(form.K_t * a_t) + form.c) / s;
    const Vector ka = form.K_t * a_t;
    const Vector grad = 2.0 * (ka - eta * form.b_t) / (s * s);
    const double terms = 2.0 * std::max(ka.lpNorm<Eigen::Infinity>(), std::abs(eta) * form.b_t.lpNorm<Eigen::Infinity>()) / (s * s);
    return detail::kkt_violation(grad, a_t, geo, terms);
}

/// KKT violation of the nearest-point problem min ||a - a_star||^2 on the
/// power shell ||a||^2 = p_tot intersected with the box [0, sqrt(p0)].
inline double projection_kkt_residual(const Vector& a, const Vector& a_star, double p_tot, const Vector& p0) {
    detail::KktGeometry geo{detail::Ball::Equality, p_tot, p0};
    detail::check_feasible(a, geo);
    const double terms = 2.0 * std::max(a.lpNorm<Eigen::Infinity>(), a_star.lpNorm<Eigen::Infinity>());
    return detail::kkt_violation(2.0 * (a - a_star), a, geo, terms);
}

/// Uniform split: p_tot / M per sensor (capped by p0 under TIPC), or p0 under IPC.
inline PowerAllocation uniform_allocation(const MdcForm& form, const ConstraintSet& cs) {
    cs.validate(form.size());
    const auto m = form.size();
    Vector powers(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        switch (cs.regime) {
            case Regime::TPC: powers[k] = cs.p_tot / static_cast<double>(m); break;
            case Regime::TIPC: powers[k] = std::min(cs.p_tot / static_cast<double>(m), cs.p0[k]); break;
            case Regime::IPC: powers[k] = cs.p0[k]; break;
        }
    }
    auto out = detail::finish(form, cs, powers.cwiseSqrt(), SolveMethod::Uniform, 0.0);
    out.kkt_residual = std::numeric_limits<double>::quiet_NaN();
    return out;
}

/// q = (K_t + c/p_tot I)^{-1} b_t.
inline Vector tpc_direction_raw(const MdcForm& form, double p_tot) {
    const auto m = form.size();
    const Matrix Q = form.K_t + (form.c / p_tot) * Matrix::Identity(m, m);
    Eigen::LLT<Matrix> llt(Q);
    if (llt.info() != Eigen::Success) throw std::logic_error("tpc: Q_a is not positive definite");
    return llt.solve(form.b_t);
}

/// sqrt(p_tot) q / ||q|| if q has a single sign, otherwise nothing.
inline std::optional<Vector> tpc_candidate(const MdcForm& form, double p_tot) {
    const Vector q = tpc_direction_raw(form, p_tot);
    const double nq = q.norm();
    if (!(nq > 0.0)) return std::nullopt;
    if ((q.array() >= 0.0).all()) return Vector(std::sqrt(p_tot) * q / nq);
    if ((q.array() <= 0.0).all()) return Vector(-std::sqrt(p_tot) * q / nq);
    return std::nullopt;
}

/// Independent-observation closed form q_k = b_k / ([K_t]_kk + c / p_tot).
inline Vector tpc_independent_qk(const MdcForm& form, double p_tot) {
    if (!detail::is_diagonal(form.K_t)) {
        throw std::invalid_argument("tpc_independent_qk: K_t must be diagonal");
    }
    if (!(p_tot > 0.0)) throw std::domain_error("tpc_independent_qk: p_tot must be positive");
    return form.b_t.array() / (form.K_t.diagonal().array() + form.c / p_tot);
}

/// Nearest point to `a_star` (with ||a_star||^2 = p_tot) on the shell
/// ||a||^2 = p_tot inside the box [0, sqrt(p0)].
///
/// Sensors are visited in decreasing a*_k / sqrt(p0_k); the first m saturate
/// and the rest shrink by a common factor 1/(2 mu). Returns nothing when no
/// saturation count is consistent.
inline std::optional<Vector> closest_feasible_on_shell(const Vector& a_star, double p_tot, const Vector& p0) {
    const auto m = a_star.size();
    if (p0.size() != m) throw std::invalid_argument("closest_feasible_on_shell: dimension mismatch");
    if (!(p_tot < p0.sum())) throw std::domain_error("closest_feasible_on_shell: p_tot must be below sum(p0)");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Vector ratio = a_star.array() / p0.array().sqrt();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return ratio[i] > ratio[j]; });

    // suffix sums of a*^2 in sorted order; a running difference would cancel
    std::vector<double> tail(static_cast<std::size_t>(m) + 1, 0.0);
    for (Eigen::Index j = m - 1; j >= 0; --j) {
        const auto k = order[static_cast<std::size_t>(j)];
        tail[static_cast<std::size_t>(j)] = tail[static_cast<std::size_t>(j + 1)] + a_star[k] * a_star[k];
    }
    constexpr double rel = 1e-12;
    double saturated_power = 0.0;
    for (Eigen::Index count = 1; count < m; ++count) {
        const auto last = order[static_cast<std::size_t>(count - 1)];
        const auto next = order[static_cast<std::size_t>(count)];
        saturated_power += p0[last];
        const double tail_sq = tail[static_cast<std::size_t>(count)];
        const double remaining = p_tot - saturated_power;
        if (!(remaining > 0.0)) break;
        if (!(tail_sq > 0.0)) {
            // the rest of a* is zero, so every split of the leftover power is
            // equally close; fill those sensors to a common level
            Vector a = Vector::Zero(m);
            std::vector<Eigen::Index> rest;
            for (Eigen::Index j = 0; j < m; ++j) {
                const auto k = order[static_cast<std::size_t>(j)];
                if (j < count) {
                    a[k] = std::sqrt(p0[k]);
                } else {
                    rest.push_back(k);
                }
            }
            std::stable_sort(rest.begin(), rest.end(), [&](Eigen::Index i, Eigen::Index j) { return p0[i] < p0[j]; });
            double left = remaining;
            for (std::size_t j = 0; j < rest.size(); ++j) {
                const double level = left / static_cast<double>(rest.size() - j);
                const double power = std::min(level, p0[rest[j]]);
                a[rest[j]] = std::sqrt(power);
                left -= power;
            }
            return a;
        }
        const double mu = std::sqrt(tail_sq / (4.0 * remaining));
        const double mu_lo = 0.5 * ratio[next];
        const double mu_hi = 0.5 * ratio[last];
        if (mu < mu_lo * (1.0 - rel) || mu > mu_hi * (1.0 + rel)) continue;
        Vector a(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto k = order[static_cast<std::size_t>(j)];
            a[k] = j < count ? std::sqrt(p0[k]) : std::min(a_star[k] / (2.0 * mu), std::sqrt(p0[k]));
        }
        return a;
    }
    return std::nullopt;
}

/// Convex reformulation in z = [a_t; 1] / (b_t' a_t); valid for every regime.
inline PowerAllocation solve_qp(const MdcForm& form, const ConstraintSet& cs) {
    const auto m = form.size();
    cs.validate(m);
    if (detail::is_zero(form.b_t)) return detail::zero_allocation(form, cs);

    // Work in units where the amplitudes, b_t and the quadratic form are O(1).
    const double scale = cs.has_total() ? cs.p_tot : cs.p0.maxCoeff();
    const double kmax = form.K_t.size() > 0 ? form.K_t.cwiseAbs().maxCoeff() : 0.0;
    const double norm = std::max(scale * kmax, form.c);
    const Vector b_hat = form.b_t / form.b_t.lpNorm<Eigen::Infinity>();
    const Matrix K_hat = form.K_t * (scale / norm);
    const double c_hat = form.c / norm;
    const double radius_sq = cs.has_total() ? cs.p_tot / scale : 0.0;
    const Vector upper = cs.has_caps() ? Vector((cs.p0 / scale).cwiseSqrt()) : Vector();

    qp::Problem prob;
    prob.D = Matrix::Zero(m + 1, m + 1);
    prob.D.topLeftCorner(m, m) = 0.5 * (K_hat + K_hat.transpose());
    prob.D(m, m) = c_hat;
    const Eigen::Index rows = cs.has_caps() ? 2 * m : m;
    prob.G = Matrix::Zero(rows, m + 1);
    prob.h = Vector::Zero(rows);
    for (Eigen::Index k = 0; k < m; ++k) {
        prob.G(k, k) = -1.0;
        if (cs.has_caps()) {
            prob.G(m + k, k) = 1.0;
            prob.G(m + k, m) = -upper[k];
        }
    }
    if (cs.has_total()) prob.cone = qp::Cone{m, std::sqrt(radius_sq)};

    std::optional<PowerAllocation> best;
    double best_residual = std::numeric_limits<double>::infinity();
    const bool mixed = (form.b_t.array() < 0.0).any();
    for (const double sign : {1.0, -1.0}) {
        if (sign < 0.0 && !mixed) break;
        const Vector b = sign * b_hat;
        Vector a0(m);
        for (Eigen::Index k = 0; k < m; ++k) {
            double cap = std::numeric_limits<double>::infinity();
            if (cs.has_caps()) cap = upper[k];
            if (cs.has_total()) cap = std::min(cap, std::sqrt(radius_sq / static_cast<double>(m)));
            a0[k] = 0.5 * cap * (b[k] > 0.0 ? 1.0 : 1e-3);
        }
        const double s0 = b.dot(a0);
        if (!(s0 > 0.0)) continue;
        prob.eq = Vector::Zero(m + 1);
        prob.eq.head(m) = b;
        Vector z0(m + 1);
        z0.head(m) = a0 / s0;
        z0[m] = 1.0 / s0;

        const qp::Result res = qp::solve(prob, z0);
        const double t = res.z[m];
        if (!(t > 0.0)) continue;
        Vector x = res.z.head(m) / t;
        if (res.polished) {
            for (Eigen::Index k = 0; k < m; ++k) {
                if (res.active[static_cast<std::size_t>(k)]) x[k] = 0.0;
                if (cs.has_caps() && res.active[static_cast<std::size_t>(m + k)]) x[k] = upper[k];
            }
        }
        x = x.cwiseMax(0.0);
        if (cs.has_caps()) x = x.cwiseMin(upper);
        Vector a = std::sqrt(scale) * x;
        if (cs.regime == Regime::TPC) {
            // optimum lies on the budget shell
            a *= std::sqrt(cs.p_tot) / a.norm();
        } else if (cs.has_total() && a.squaredNorm() > cs.p_tot) {
            a *= std::sqrt(cs.p_tot) / a.norm();
        }
        const double residual = kkt_residual(form, cs, a);
        auto alloc = detail::finish(form, cs, a, SolveMethod::QPFallback, residual);
        if (!best || alloc.mdc > best->mdc) {
            best = alloc;
            best_residual = residual;
        }
    }
    if (!best) throw SolverError("solve_qp: no strictly feasible start", std::numeric_limits<double>::infinity());
    if (!(best_residual <= kQpKktTolerance)) throw SolverError("solve_qp: did not reach KKT tolerance", best_residual);
    return *best;
}

/// Total power constraint only.
inline PowerAllocation solve_tpc(const MdcForm& form, double p_tot) {
    const auto cs = ConstraintSet::tpc(p_tot);
    cs.validate(form.size());
    if (detail::is_zero(form.b_t)) return detail::zero_allocation(form, cs);
    if (auto a = tpc_candidate(form, p_tot)) {
        const double r = kkt_residual(form, cs, *a);
        return detail::finish(form, cs, std::move(*a), SolveMethod::AnalyticClosedForm, r);
    }
    return solve_qp(form, cs);
}

/// Total and individual power constraints, with the total held at equality.
inline PowerAllocation solve_tipc(const MdcForm& form, double p_tot, const Vector& p0) {
    const auto cs = ConstraintSet::tipc(p_tot, p0);
    cs.validate(form.size());
    if (detail::is_zero(form.b_t)) return detail::zero_allocation(form, cs);
    // a mixed-sign direction means the nonnegative TPC optimum comes from the QP;
    // it is then projected like the closed-form one
    auto candidate = tpc_candidate(form, p_tot);
    const bool analytic = candidate.has_value();
    const Vector a1 = analytic ? *candidate : solve_qp(form, ConstraintSet::tpc(p_tot)).a_t;
    const Vector cap = p0.cwiseSqrt();
    if ((a1.array() <= cap.array() * (1.0 + 1e-12)).all()) {
        Vector a = a1.cwiseMin(cap);
        const double r = kkt_residual(form, cs, a);
        return detail::finish(form, cs, std::move(a),
                              analytic ? SolveMethod::AnalyticClosedForm : SolveMethod::QPFallback, r);
    }
    auto projected = closest_feasible_on_shell(a1, p_tot, p0);
    if (!projected) return solve_qp(form, cs);
    const double r = projection_kkt_residual(*projected, a1, p_tot, p0);
    return detail::finish(form, cs, std::move(*projected),
                          analytic ? SolveMethod::AnalyticProjection : SolveMethod::QPFallback, r);
}

/// Individual power constraints only.
///
/// With independent observations and a common cap the KKT system is solved
/// directly: sensors ordered by b_k / K_kk saturate first and the rest follow
/// a_k = eta b_k / K_kk. Other instances use the convex program.
inline PowerAllocation solve_ipc(const MdcForm& form, const Vector& p0) {
    const auto cs = ConstraintSet::ipc(p0);
    const auto m = form.size();
    cs.validate(m);
    if (detail::is_zero(form.b_t)) return detail::zero_allocation(form, cs);
    const Vector kd = form.K_t.diagonal();
    const bool analytic = detail::is_diagonal(form.K_t) &&
                          (p0.maxCoeff() - p0.minCoeff()) <= 1e-12 * p0.maxCoeff() &&
                          (form.b_t.array() > 0.0).all() && (kd.array() > 0.0).all();
    if (!analytic) return solve_qp(form, cs);

    const double cap_power = p0[0];
    const double cap = std::sqrt(cap_power);
    const Vector ratio = form.b_t.array() / kd.array();  // b_k / K_kk
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return ratio[i] > ratio[j]; });

    constexpr double rel = 1e-12;
    double k_sum = 0.0;
    double b_sum = 0.0;
    for (Eigen::Index count = 1; count <= m; ++count) {
        const auto last = order[static_cast<std::size_t>(count - 1)];
        k_sum += kd[last];
        b_sum += form.b_t[last];
        const double eta = (cap_power * k_sum + form.c) / (cap * b_sum);
        const double lo = cap / ratio[last];
        const double hi = count < m ? cap / ratio[order[static_cast<std::size_t>(count)]]
                                    : std::numeric_limits<double>::infinity();
        if (eta < lo * (1.0 - rel) || eta > hi * (1.0 + rel)) continue;
        Vector a(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto k = order[static_cast<std::size_t>(j)];
            a[k] = j < count ? cap : std::min(cap, eta * ratio[k]);
        }
        const double r = kkt_residual(form, cs, a);
        return detail::finish(form, cs, std::move(a), SolveMethod::AnalyticEta, r);
    }
    throw std::logic_error("solve_ipc: no consistent saturation set");
}

/// Dispatch on the constraint regime.
inline PowerAllocation solve(const MdcForm& form, const ConstraintSet& cs) {
    switch (cs.regime) {
        case Regime::TPC: return solve_tpc(form, cs.p_tot);
        case Regime::TIPC: return solve_tipc(form, cs.p_tot, cs.p0);
        case Regime::IPC: return solve_ipc(form, cs.p0);
    }
    throw std::logic_error("solve: unknown regime");
}

}  // namespace deflect
