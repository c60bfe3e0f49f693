#pragma once

// Scenario files: INI-style sections with `key = value` lines.
//
//   [geometry]  sensors, source, fc
//   [sensing]   sigma_s, sigma0, eps_s, pf_target, rho, beta_f
//   [comm]      sigma_n, gain, eps_c, channel, regime
//   [sweep]     kind, budgets, caps, cap, rule
//   [sim]       realizations, trials, seed, fading, threshold, threads
//
// Powers carry an explicit unit (mW or dBm) and are stored in mW.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deflect/oracle.hpp"

namespace deflect {

enum class SweepKind { MdcVsPtot, Pd0VsPtot, MdcVsP0, PowerProfile, OpaCompare };

inline std::string_view to_string(SweepKind k) {
    switch (k) {
        case SweepKind::MdcVsPtot: return "mdc_vs_ptot";
        case SweepKind::Pd0VsPtot: return "pd0_vs_ptot";
        case SweepKind::MdcVsP0: return "mdc_vs_p0";
        case SweepKind::PowerProfile: return "power_profile";
        case SweepKind::OpaCompare: return "opa_compare";
    }
    return "?";
}

class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct ScenarioConfig {
    NetworkModel model;  // rho is taken from rho_values per run
    std::vector<double> rho_values{0.1};
    std::vector<ChannelType> channels{ChannelType::PAC};
    std::vector<Regime> regimes{Regime::TPC};
    SweepKind kind = SweepKind::MdcVsPtot;
    std::vector<double> budgets_mw;  // p_tot values (TPC, TIPC)
    std::vector<double> caps_mw;     // common per-sensor cap values (IPC)
    double cap_mw = 0.0;             // common per-sensor cap under TIPC
    FusionRule rule = FusionRule::Linear;
    SimConfig sim;

    // source line of each key, for anchoring validation messages
    std::map<std::string, int> key_lines;

    int line_of(const std::string& key) const {
        const auto it = key_lines.find(key);
        return it == key_lines.end() ? 0 : it->second;
    }

    void validate() const;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::string_view> words(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        const auto b = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > b) out.push_back(s.substr(b, i - b));
    }
    return out;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline double parse_number(std::string_view s, int line) {
    double v = 0.0;
    const auto* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ConfigError(line, "expected a number, got '" + std::string(s) + "'");
    }
    return v;
}

inline std::uint64_t parse_count(std::string_view s, int line) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError(line, "expected a non-negative integer, got '" + std::string(s) + "'");
    }
    return v;
}

/// "<number> <unit>" with unit mW or dBm, returned in mW.
inline double parse_power_item(std::string_view item, std::string_view default_unit, int line) {
    const auto w = words(item);
    if (w.empty() || w.size() > 2) throw ConfigError(line, "expected '<value> mW|dBm', got '" + std::string(item) + "'");
    const double v = parse_number(w[0], line);
    const std::string unit = lower(w.size() == 2 ? w[1] : default_unit);
    if (unit == "mw") {
        if (!(v > 0.0)) throw ConfigError(line, "power must be positive");
        return v;
    }
    if (unit == "dbm") return dbm_to_mw(v);
    if (unit.empty()) throw ConfigError(line, "power '" + std::string(item) + "' needs a unit (mW or dBm)");
    throw ConfigError(line, "unknown power unit '" + std::string(w.size() == 2 ? w[1] : default_unit) + "'");
}

inline double parse_power(std::string_view value, int line) { return parse_power_item(value, "", line); }

/// Comma separated powers; items without a unit take the unit of the last item.
inline std::vector<double> parse_power_list(std::string_view value, int line) {
    const auto items = split(value, ',');
    std::string_view trailing_unit;
    const auto last = words(items.back());
    if (last.size() == 2) trailing_unit = last[1];
    std::vector<double> out;
    for (const auto item : items) {
        if (item.empty()) throw ConfigError(line, "empty item in list");
        out.push_back(parse_power_item(item, trailing_unit, line));
    }
    return out;
}

inline std::vector<double> parse_number_list(std::string_view value, int line) {
    std::vector<double> out;
    for (const auto item : split(value, ',')) {
        if (item.empty()) throw ConfigError(line, "empty item in list");
        out.push_back(parse_number(item, line));
    }
    return out;
}

inline Vec3 parse_point(std::string_view value, int line) {
    const auto w = words(value);
    if (w.size() != 3) throw ConfigError(line, "expected three coordinates 'x y z'");
    return {parse_number(w[0], line), parse_number(w[1], line), parse_number(w[2], line)};
}

inline std::vector<Vec3> parse_sensors(std::string_view value, int line) {
    const auto w = words(value);
    if (!w.empty() && lower(w[0]) == "circle") {
        if (w.size() != 3) throw ConfigError(line, "expected 'circle <count> <radius>'");
        const auto count = parse_count(w[1], line);
        const double radius = parse_number(w[2], line);
        if (count < 1) throw ConfigError(line, "sensor count must be at least 1");
        if (!(radius > 0.0)) throw ConfigError(line, "circle radius must be positive");
        return circle_layout(static_cast<std::size_t>(count), radius);
    }
    std::vector<Vec3> out;
    for (const auto item : split(value, ';')) {
        if (item.empty()) continue;
        out.push_back(parse_point(item, line));
    }
    if (out.empty()) throw ConfigError(line, "no sensors given");
    return out;
}

inline double parse_gain(std::string_view value, int line) {
    const auto w = words(value);
    if (w.empty() || w.size() > 2) throw ConfigError(line, "expected '<value> dB' or a linear gain");
    const double v = parse_number(w[0], line);
    if (w.size() == 2) {
        if (lower(w[1]) != "db") throw ConfigError(line, "unknown gain unit '" + std::string(w[1]) + "'");
        return db_to_linear(v);
    }
    if (!(v > 0.0)) throw ConfigError(line, "linear gain must be positive");
    return v;
}

template <class Enum, std::size_t N>
Enum parse_choice(std::string_view value, const std::pair<const char*, Enum> (&choices)[N], int line) {
    const std::string v = lower(trim(value));
    for (const auto& [name, e] : choices) {
        if (v == name) return e;
    }
    std::string allowed;
    for (const auto& [name, e] : choices) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    throw ConfigError(line, "unknown value '" + std::string(trim(value)) + "' (expected one of: " + allowed + ")");
}

inline constexpr std::pair<const char*, ChannelType> kChannels[] = {{"pac", ChannelType::PAC}, {"mac", ChannelType::MAC}};
inline constexpr std::pair<const char*, Regime> kRegimes[] = {
    {"tpc", Regime::TPC}, {"tipc", Regime::TIPC}, {"ipc", Regime::IPC}};
inline constexpr std::pair<const char*, SweepKind> kKinds[] = {{"mdc_vs_ptot", SweepKind::MdcVsPtot},
                                                               {"pd0_vs_ptot", SweepKind::Pd0VsPtot},
                                                               {"mdc_vs_p0", SweepKind::MdcVsP0},
                                                               {"power_profile", SweepKind::PowerProfile},
                                                               {"opa_compare", SweepKind::OpaCompare}};
inline constexpr std::pair<const char*, Fading> kFadings[] = {{"rayleigh", Fading::RayleighCN01},
                                                              {"unit", Fading::UnitGain}};
inline constexpr std::pair<const char*, ThresholdRule> kThresholds[] = {
    {"empirical", ThresholdRule::EmpiricalQuantile}, {"gaussian", ThresholdRule::GaussianApprox}};
inline constexpr std::pair<const char*, FusionRule> kRules[] = {{"linear", FusionRule::Linear},
                                                                {"lrt", FusionRule::LRT}};

template <class Enum, std::size_t N>
std::vector<Enum> parse_choice_list(std::string_view value, const std::pair<const char*, Enum> (&choices)[N],
                                    int line) {
    std::vector<Enum> out;
    for (const auto item : split(value, ',')) {
        const Enum e = parse_choice(item, choices, line);
        if (std::find(out.begin(), out.end(), e) != out.end()) throw ConfigError(line, "duplicate list entry");
        out.push_back(e);
    }
    return out;
}

template <class Enum, std::size_t N>
const char* choice_name(Enum e, const std::pair<const char*, Enum> (&choices)[N]) {
    for (const auto& [name, v] : choices) {
        if (v == e) return name;
    }
    return "?";
}

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline void ScenarioConfig::validate() const {
    const auto fail = [&](const std::string& key, const std::string& msg) { throw ConfigError(line_of(key), msg); };
    if (model.sensor_positions.empty()) fail("geometry.sensors", "at least one sensor required");
    for (const auto& p : model.sensor_positions) {
        if ((p - model.source_position).norm() == 0.0) fail("geometry.source", "source coincides with a sensor");
        if ((p - model.fc_position).norm() == 0.0) fail("geometry.fc", "fusion center coincides with a sensor");
    }
    if (rho_values.empty()) fail("sensing.rho", "rho list is empty");
    for (double r : rho_values) {
        if (!(r >= 0.0 && r <= 1.0)) fail("sensing.rho", "rho must lie in [0,1]");
    }
    if (!(model.beta_F > 0.0 && model.beta_F < 1.0)) fail("sensing.beta_f", "beta_f must lie in (0,1)");
    if (!(model.pf_target > 0.0 && model.pf_target < 1.0)) fail("sensing.pf_target", "pf_target must lie in (0,1)");
    if (channels.empty()) fail("comm.channel", "channel list is empty");
    if (regimes.empty()) fail("comm.regime", "regime list is empty");
    for (double b : budgets_mw) {
        if (!(b > 0.0)) fail("sweep.budgets", "budgets must be positive");
    }
    for (double b : caps_mw) {
        if (!(b > 0.0)) fail("sweep.caps", "caps must be positive");
    }
    const auto m = static_cast<double>(model.size());
    for (const Regime r : regimes) {
        if (kind == SweepKind::MdcVsP0 && r != Regime::IPC) fail("comm.regime", "mdc_vs_p0 sweeps the IPC cap; use regime = IPC");
        if ((kind == SweepKind::MdcVsPtot || kind == SweepKind::Pd0VsPtot) && r == Regime::IPC) {
            fail("comm.regime", "IPC has no total budget; use kind = mdc_vs_p0");
        }
        if (r == Regime::IPC && caps_mw.empty()) fail("sweep.caps", "sweep grid is empty: IPC needs caps");
        if (r != Regime::IPC && budgets_mw.empty()) fail("sweep.budgets", "sweep grid is empty: no budgets");
        if (r == Regime::TIPC) {
            if (!(cap_mw > 0.0)) fail("sweep.cap", "TIPC needs a per-sensor cap");
            for (double b : budgets_mw) {
                if (!(b < m * cap_mw)) fail("sweep.budgets", "TIPC requires every budget below M * cap");
            }
        }
    }
    if (kind == SweepKind::OpaCompare) {
        if (model.size() != 2) fail("geometry.sensors", "opa_compare needs exactly two sensors");
        if (regimes.size() != 1 || regimes[0] != Regime::TPC) fail("comm.regime", "opa_compare runs under TPC only");
        if (static_cast<double>(sim.n_monte_carlo_per_realization) < std::ceil(10.0 / model.beta_F - 1e-9)) {
            fail("sim.trials", "trials must be at least 10 / beta_f");
        }
    }
    if (kind == SweepKind::Pd0VsPtot && sim.threshold == ThresholdRule::EmpiricalQuantile &&
        static_cast<double>(sim.n_monte_carlo_per_realization) < std::ceil(10.0 / model.beta_F - 1e-9)) {
        fail("sim.trials", "trials must be at least 10 / beta_f");
    }
    if (sim.n_channel_realizations < 1) fail("sim.realizations", "realizations must be at least 1");
    if (sim.n_monte_carlo_per_realization < 1) fail("sim.trials", "trials must be at least 1");
    if (sim.threads < 1) fail("sim.threads", "threads must be at least 1");
    try {
        NetworkModel probe = model;
        probe.rho = rho_values.front();
        probe.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(0, e.what());
    }
}

/// Parses and validates a scenario. Errors carry the offending line.
inline ScenarioConfig parse_config(std::string_view text) {
    using namespace detail;
    ScenarioConfig cfg;
    std::string section;
    int line_no = 0;
    bool have_sensors = false, have_source = false, have_fc = false, have_kind = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        const auto line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(line_no, "malformed section header");
            section = lower(trim(line.substr(1, line.size() - 2)));
            if (section != "geometry" && section != "sensing" && section != "comm" && section != "sweep" &&
                section != "sim") {
                throw ConfigError(line_no, "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
        if (section.empty()) throw ConfigError(line_no, "key outside of any section");
        const std::string key = lower(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        if (value.empty()) throw ConfigError(line_no, "empty value for '" + key + "'");
        const std::string full = section + "." + key;
        if (cfg.key_lines.count(full)) throw ConfigError(line_no, "duplicate key '" + key + "'");
        cfg.key_lines[full] = line_no;
        auto& m = cfg.model;

        if (full == "geometry.sensors") {
            m.sensor_positions = parse_sensors(value, line_no);
            have_sensors = true;
        } else if (full == "geometry.source") {
            m.source_position = parse_point(value, line_no);
            have_source = true;
        } else if (full == "geometry.fc") {
            m.fc_position = parse_point(value, line_no);
            have_fc = true;
        } else if (full == "sensing.sigma_s") {
            m.sigma_s_sq = parse_power(value, line_no);
        } else if (full == "sensing.sigma0") {
            m.sigma0_sq = parse_power(value, line_no);
        } else if (full == "sensing.eps_s") {
            m.eps_s = parse_number(value, line_no);
        } else if (full == "sensing.pf_target") {
            m.pf_target = parse_number(value, line_no);
        } else if (full == "sensing.rho") {
            cfg.rho_values = parse_number_list(value, line_no);
        } else if (full == "sensing.beta_f") {
            m.beta_F = parse_number(value, line_no);
        } else if (full == "comm.sigma_n") {
            m.sigma_n_sq = parse_power(value, line_no);
        } else if (full == "comm.gain") {
            m.gain_G = parse_gain(value, line_no);
        } else if (full == "comm.eps_c") {
            m.eps_c = parse_number(value, line_no);
        } else if (full == "comm.channel") {
            cfg.channels = parse_choice_list(value, kChannels, line_no);
        } else if (full == "comm.regime") {
            cfg.regimes = parse_choice_list(value, kRegimes, line_no);
        } else if (full == "sweep.kind") {
            cfg.kind = parse_choice(value, kKinds, line_no);
            have_kind = true;
        } else if (full == "sweep.budgets") {
            cfg.budgets_mw = parse_power_list(value, line_no);
        } else if (full == "sweep.caps") {
            cfg.caps_mw = parse_power_list(value, line_no);
        } else if (full == "sweep.cap") {
            cfg.cap_mw = parse_power(value, line_no);
        } else if (full == "sweep.rule") {
            cfg.rule = parse_choice(value, kRules, line_no);
        } else if (full == "sim.realizations") {
            cfg.sim.n_channel_realizations = parse_count(value, line_no);
        } else if (full == "sim.trials") {
            cfg.sim.n_monte_carlo_per_realization = parse_count(value, line_no);
        } else if (full == "sim.seed") {
            cfg.sim.seed = parse_count(value, line_no);
        } else if (full == "sim.fading") {
            cfg.sim.fading = parse_choice(value, kFadings, line_no);
        } else if (full == "sim.threshold") {
            cfg.sim.threshold = parse_choice(value, kThresholds, line_no);
        } else if (full == "sim.threads") {
            cfg.sim.threads = static_cast<unsigned>(parse_count(value, line_no));
        } else {
            throw ConfigError(line_no, "unknown key '" + key + "' in [" + section + "]");
        }
    }
    const int end = line_no;
    if (!have_sensors) throw ConfigError(end, "missing [geometry] sensors");
    if (!have_source) throw ConfigError(end, "missing [geometry] source");
    if (!have_fc) throw ConfigError(end, "missing [geometry] fc");
    if (!have_kind) throw ConfigError(end, "missing [sweep] kind");
    cfg.model.rho = cfg.rho_values.empty() ? 0.0 : cfg.rho_values.front();
    cfg.validate();
    return cfg;
}

/// Canonical text form: every value explicit, powers in mW, full precision.
inline std::string serialize_config(const ScenarioConfig& cfg) {
    using namespace detail;
    const auto& m = cfg.model;
    std::ostringstream os;
    const auto point = [](const Vec3& p) { return fmt(p.x()) + " " + fmt(p.y()) + " " + fmt(p.z()); };
    os << "[geometry]\nsensors = ";
    for (std::size_t k = 0; k < m.size(); ++k) os << (k ? "; " : "") << point(m.sensor_positions[k]);
    os << "\nsource = " << point(m.source_position) << "\nfc = " << point(m.fc_position) << "\n\n";

    os << "[sensing]\nsigma_s = " << fmt(m.sigma_s_sq) << " mW\nsigma0 = " << fmt(m.sigma0_sq)
       << " mW\neps_s = " << fmt(m.eps_s) << "\npf_target = " << fmt(m.pf_target) << "\nrho = ";
    for (std::size_t i = 0; i < cfg.rho_values.size(); ++i) os << (i ? ", " : "") << fmt(cfg.rho_values[i]);
    os << "\nbeta_f = " << fmt(m.beta_F) << "\n\n";

    os << "[comm]\nsigma_n = " << fmt(m.sigma_n_sq) << " mW\ngain = " << fmt(m.gain_G) << "\neps_c = " << fmt(m.eps_c)
       << "\nchannel = ";
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) os << (i ? ", " : "") << to_string(cfg.channels[i]);
    os << "\nregime = ";
    for (std::size_t i = 0; i < cfg.regimes.size(); ++i) os << (i ? ", " : "") << to_string(cfg.regimes[i]);
    os << "\n\n";

    const auto power_list = [&](const char* key, const std::vector<double>& v) {
        if (v.empty()) return;
        os << key << " = ";
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << fmt(v[i]) << " mW";
        os << "\n";
    };
    os << "[sweep]\nkind = " << to_string(cfg.kind) << "\n";
    power_list("budgets", cfg.budgets_mw);
    power_list("caps", cfg.caps_mw);
    if (cfg.cap_mw > 0.0) os << "cap = " << fmt(cfg.cap_mw) << " mW\n";
    os << "rule = " << choice_name(cfg.rule, kRules) << "\n\n";

    os << "[sim]\nrealizations = " << cfg.sim.n_channel_realizations
       << "\ntrials = " << cfg.sim.n_monte_carlo_per_realization << "\nseed = " << cfg.sim.seed
       << "\nfading = " << choice_name(cfg.sim.fading, kFadings)
       << "\nthreshold = " << choice_name(cfg.sim.threshold, kThresholds) << "\nthreads = " << cfg.sim.threads
       << "\n";
    return os.str();
}

}  // namespace deflect
