#pragma once

// Sweep runner: one CSV per (channel, rho, regime), plus the built-in presets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "deflect/config.hpp"

namespace deflect {

namespace detail {

struct PresetSpec {
    const char* name;
    const char* body;  // everything except the sensing noise line
};

// Source power over (distance^2 * 13.13) at the symmetric sensing distance,
// which gives p_d = 0.6615 per sensor.
inline double calibrated_sigma0_mw() { return dbm_to_mw(5.0) / (2.5 * 2.5 + 3.0 * 3.0) / 13.13; }

inline constexpr PresetSpec kPresets[] = {
    {"paper-sec5-symmetric", R"([geometry]
sensors = circle 8 2.5
source = 0 0 3
fc = 0 0 -10

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1, 0.9
beta_f = 0.05

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = PAC, MAC
regime = TPC

[sweep]
kind = mdc_vs_ptot
budgets = -10, -5, 0, 5, 10, 15, 20, 25, 30 dBm

[sim]
realizations = 10000
trials = 10000
seed = 1
fading = rayleigh
threshold = empirical
threads = 1
)"},
    {"paper-fig2-pd0", R"([geometry]
sensors = circle 8 2.5
source = 0 0 3
fc = 0 0 -10

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1, 0.9
beta_f = 0.05

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = PAC, MAC
regime = TPC

[sweep]
kind = pd0_vs_ptot
budgets = -10, -5, 0, 5, 10, 15, 20, 25, 30 dBm

[sim]
realizations = 1000
trials = 2000
seed = 1
fading = rayleigh
threshold = empirical
threads = 1
)"},
    {"paper-fig4-tipc", R"([geometry]
sensors = circle 8 2.5
source = 0 0 3
fc = 0 0 -10

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1, 0.9
beta_f = 0.05

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = PAC, MAC
regime = TIPC

[sweep]
kind = mdc_vs_ptot
budgets = 10, 30, 60, 90, 120, 150, 180, 210, 235 mW
cap = 30 mW

[sim]
realizations = 10000
trials = 10000
seed = 1
fading = rayleigh
threshold = empirical
threads = 1
)"},
    {"paper-fig5-ipc", R"([geometry]
sensors = circle 8 2.5
source = 0 0 3
fc = 0 0 -10

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1, 0.9
beta_f = 0.05

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = PAC, MAC
regime = IPC

[sweep]
kind = mdc_vs_p0
caps = -10, -5, 0, 5, 10, 15, 20, 25, 30 dBm

[sim]
realizations = 10000
trials = 10000
seed = 1
fading = rayleigh
threshold = empirical
threads = 1
)"},
    {"paper-sec5-offset-source", R"([geometry]
sensors = circle 8 2.5
source = 2.5 0 3
fc = 0 0 -10

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1, 0.9
beta_f = 0.05

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = MAC, PAC
regime = TPC, TIPC, IPC

[sweep]
kind = power_profile
budgets = 30, 120, 239 mW
cap = 30 mW
caps = 4, 15, 30 mW

[sim]
realizations = 1
trials = 1
seed = 1
fading = unit
threshold = empirical
threads = 1
)"},
    {"paper-sec5-offset-fc", R"([geometry]
sensors = circle 8 2.5
source = 0 0 3
fc = 2.5 0 -3

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1
beta_f = 0.05

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = MAC, PAC
regime = TPC, TIPC, IPC

[sweep]
kind = power_profile
budgets = 30, 120, 239 mW
cap = 30 mW
caps = 4, 15, 30 mW

[sim]
realizations = 1
trials = 1
seed = 1
fading = unit
threshold = empirical
threads = 1
)"},
    {"paper-sec5-far-fc", R"([geometry]
sensors = circle 8 2.5
source = 0 0 3
fc = 2.5 0 -10

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1
beta_f = 0.05

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = MAC, PAC
regime = TPC, TIPC, IPC

[sweep]
kind = power_profile
budgets = 30, 120, 239 mW
cap = 30 mW
caps = 4, 15, 30 mW

[sim]
realizations = 1
trials = 1
seed = 1
fading = unit
threshold = empirical
threads = 1
)"},
    {"paper-fig1-opa", R"([geometry]
# sensors 1 and 5 of the eight-sensor circle
sensors = 2.5 0 0; -2.5 0 0
source = 0 0 3
fc = 0 0 -10

[sensing]
sigma_s = 5 dBm
@SIGMA0@
eps_s = 2
pf_target = 0.1
rho = 0.1
beta_f = 0.1

[comm]
sigma_n = -70 dBm
gain = -55 dB
eps_c = 2
channel = PAC
regime = TPC

[sweep]
kind = opa_compare
budgets = -10, -5, 0, 5, 10, 15, 20, 25, 30, 35 dBm
rule = linear

[sim]
realizations = 100
trials = 1000
seed = 1
fading = rayleigh
threshold = empirical
threads = 1
)"},
};

inline constexpr const char* kCalibratedSuffix = "-calibrated";

}  // namespace detail

/// Names of the built-in scenarios. Each also exists with a "-calibrated"
/// suffix, where the sensing noise is set so that p_d = 0.6615 at the
/// symmetric sensing distance.
inline std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& p : detail::kPresets) out.emplace_back(p.name);
    for (const auto& p : detail::kPresets) out.push_back(std::string(p.name) + detail::kCalibratedSuffix);
    return out;
}

inline std::optional<std::string> preset_text(std::string_view name) {
    bool calibrated = false;
    std::string_view base = name;
    const std::string_view suffix = detail::kCalibratedSuffix;
    if (base.size() > suffix.size() && base.substr(base.size() - suffix.size()) == suffix) {
        calibrated = true;
        base = base.substr(0, base.size() - suffix.size());
    }
    for (const auto& p : detail::kPresets) {
        if (base != p.name) continue;
        std::string text = p.body;
        const std::string line = calibrated ? "sigma0 = " + detail::fmt(detail::calibrated_sigma0_mw()) + " mW"
                                            : std::string("sigma0 = -70 dBm");
        text.replace(text.find("@SIGMA0@"), 8, line);
        return text;
    }
    return std::nullopt;
}

struct PowerProfileRow {
    std::size_t sensor_index = 0;  // 1-based
    double p_d = 0.0;
    double pathloss_theta = 0.0;
    Regime regime = Regime::TPC;
    double budget_mw = 0.0;
    double power_mw = 0.0;
};

namespace detail {

inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

inline void close_csv(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// Mean DPA powers over channel realizations.
inline Vector mean_powers(const NetworkModel& model, const AllocationSpec& spec, const SimConfig& cfg,
                          ChannelType type) {
    const LocalStats stats = compute_local_stats(model);
    const Vector theta = pathloss_factors(model);
    const auto m = static_cast<Eigen::Index>(model.size());
    // fixed channel: one realization is exact
    const std::size_t count = cfg.fading == Fading::UnitGain ? 1 : cfg.n_channel_realizations;
    std::vector<Vector> powers(count);
    parallel_for(count, cfg.threads, [&](std::size_t i) {
        auto rng = stream_rng(cfg.seed, i);
        const ChannelRealization ch{draw_fading(cfg.fading, m, rng), theta};
        powers[i] = spec.allocate(build_mdc_form(stats, ch, type, model.sigma_n_sq)).powers;
    });
    Vector sum = Vector::Zero(m);
    for (const auto& p : powers) sum += p;
    return sum / static_cast<double>(count);
}

}  // namespace detail

/// Writes power-profile rows with a fixed header and the given row order.
inline void emit_power_profile(const std::vector<PowerProfileRow>& rows, const std::filesystem::path& path) {
    auto out = detail::open_csv(path);
    out << "sensor_index,p_d,pathloss_theta,regime,budget_mw,power_mw\n";
    for (const auto& r : rows) {
        out << r.sensor_index << ',' << detail::num(r.p_d) << ',' << detail::num(r.pathloss_theta) << ','
            << to_string(r.regime) << ',' << detail::num(r.budget_mw) << ',' << detail::num(r.power_mw) << '\n';
    }
    detail::close_csv(out, path);
}

inline std::string sweep_file_name(const ScenarioConfig& cfg, ChannelType channel, double rho, Regime regime) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s_%s_rho%g_%s.csv", std::string(to_string(cfg.kind)).c_str(),
                  std::string(to_string(channel)).c_str(), rho, std::string(to_string(regime)).c_str());
    return buf;
}

/// Runs every (channel, rho, regime) combination and returns the files written.
inline std::vector<std::filesystem::path> run_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    const auto caps = [&](double cap) { return Vector::Constant(static_cast<Eigen::Index>(cfg.model.size()), cap); };
    const auto constraints = [&](Regime r, double level) {
        switch (r) {
            case Regime::TPC: return ConstraintSet::tpc(level);
            case Regime::TIPC: return ConstraintSet::tipc(level, caps(cfg.cap_mw));
            case Regime::IPC: return ConstraintSet::ipc(caps(level));
        }
        throw std::logic_error("unknown regime");
    };

    for (const ChannelType channel : cfg.channels) {
        for (const double rho : cfg.rho_values) {
            NetworkModel model = cfg.model;
            model.rho = rho;
            for (const Regime regime : cfg.regimes) {
                const auto path = out_dir / sweep_file_name(cfg, channel, rho, regime);
                const auto& levels = regime == Regime::IPC ? cfg.caps_mw : cfg.budgets_mw;
                const auto spec = [&](Policy p, double level) { return AllocationSpec{p, constraints(regime, level), {}}; };
                using detail::num;

                if (cfg.kind == SweepKind::PowerProfile) {
                    const LocalStats stats = compute_local_stats(model);
                    const Vector theta = pathloss_factors(model);
                    std::vector<PowerProfileRow> rows;
                    for (const double level : levels) {
                        const Vector p = detail::mean_powers(model, spec(Policy::DPA, level), cfg.sim, channel);
                        for (Eigen::Index k = 0; k < p.size(); ++k) {
                            rows.push_back({static_cast<std::size_t>(k + 1), stats.pd[k], theta[k], regime, level, p[k]});
                        }
                    }
                    emit_power_profile(rows, path);
                    written.push_back(path);
                    continue;
                }

                auto out = detail::open_csv(path);
                switch (cfg.kind) {
                    case SweepKind::MdcVsPtot:
                    case SweepKind::MdcVsP0: {
                        out << (cfg.kind == SweepKind::MdcVsP0 ? "cap_mw" : "budget_mw")
                            << ",mdc_dpa,mdc_dpa_se,mdc_dpa_ineq,mdc_dpa_ineq_se,mdc_upa,mdc_upa_se\n";
                        for (const double level : levels) {
                            const auto dpa = estimate_mdc(model, spec(Policy::DPA, level), cfg.sim, channel);
                            const auto ineq = estimate_mdc(model, spec(Policy::DPAInequality, level), cfg.sim, channel);
                            const auto upa = estimate_mdc(model, spec(Policy::UPA, level), cfg.sim, channel);
                            out << num(level) << ',' << num(dpa.mean_mdc) << ',' << num(dpa.mdc_stderr) << ','
                                << num(ineq.mean_mdc) << ',' << num(ineq.mdc_stderr) << ',' << num(upa.mean_mdc) << ','
                                << num(upa.mdc_stderr) << '\n';
                        }
                        break;
                    }
                    case SweepKind::Pd0VsPtot: {
                        out << "budget_mw,pd0_dpa,pd0_dpa_se,pf0_dpa,mdc_dpa,pd0_upa,pd0_upa_se,pf0_upa,mdc_upa\n";
                        for (const double level : levels) {
                            const auto dpa = estimate_performance(model, spec(Policy::DPA, level), cfg.sim, channel);
                            const auto upa = estimate_performance(model, spec(Policy::UPA, level), cfg.sim, channel);
                            out << num(level) << ',' << num(dpa.pd0) << ',' << num(dpa.pd0_stderr) << ','
                                << num(dpa.pf0) << ',' << num(dpa.mean_mdc) << ',' << num(upa.pd0) << ','
                                << num(upa.pd0_stderr) << ',' << num(upa.pf0) << ',' << num(upa.mean_mdc) << '\n';
                        }
                        break;
                    }
                    case SweepKind::OpaCompare: {
                        out << "budget_mw,pd0_opa,pd0_opa_se,pd0_dpa,pd0_dpa_se,pd0_upa,pd0_upa_se,opa_p1_mw,opa_p2_mw,"
                               "rule\n";
                        OpaConfig oc;
                        oc.realizations = cfg.sim.n_channel_realizations;
                        oc.trials = cfg.sim.n_monte_carlo_per_realization;
                        oc.seed = cfg.sim.seed;
                        oc.fading = cfg.sim.fading;
                        oc.threads = cfg.sim.threads;
                        for (const double level : levels) {
                            const auto r =
                                brute_force_opa_2sensor(model, channel, level, model.beta_F, cfg.rule, oc);
                            out << num(level) << ',' << num(r.pd0) << ',' << num(r.pd0_stderr) << ','
                                << num(r.pd0_dpa) << ',' << num(r.pd0_dpa_stderr) << ',' << num(r.pd0_upa) << ','
                                << num(r.pd0_upa_stderr) << ',' << num(r.powers[0]) << ',' << num(r.powers[1]) << ','
                                << (cfg.rule == FusionRule::Linear ? "linear" : "lrt") << '\n';
                        }
                        break;
                    }
                    case SweepKind::PowerProfile: break;
                }
                detail::close_csv(out, path);
                written.push_back(path);
            }
        }
    }
    return written;
}

}  // namespace deflect
