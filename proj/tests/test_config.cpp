#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "test_util.hpp"

using namespace deflect;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(# two sensors
[geometry]
sensors = 1 0 0; -1 0 0
source = 0 0 2
fc = 0 0 -5

[sensing]
sigma_s = 5 dBm
sigma0 = 0.0158 mW
rho = 0.1, 0.9

[comm]
sigma_n = -70 dBm
gain = -55 dB
channel = pac, mac

[sweep]
kind = mdc_vs_ptot
budgets = -10, 0, 10 dBm

[sim]
realizations = 5
seed = 3
)";

int error_line(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    if (at == std::string::npos) throw std::logic_error("pattern not found: " + from);
    return text.replace(at, from.size(), to);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("deflect_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST(Config, ParsesUnitsAndLists) {
    const auto cfg = parse_config(kMinimal);
    EXPECT_EQ(cfg.model.size(), 2u);
    EXPECT_NEAR(cfg.model.sigma_s_sq, 3.1622776601683795, 1e-15);
    EXPECT_NEAR(cfg.model.sigma_n_sq, 1e-7, 1e-22);
    EXPECT_NEAR(cfg.model.gain_G, std::pow(10.0, -5.5), 1e-20);
    ASSERT_EQ(cfg.budgets_mw.size(), 3u);
    EXPECT_NEAR(cfg.budgets_mw[0], 0.1, 1e-16);
    EXPECT_NEAR(cfg.budgets_mw[2], 10.0, 1e-14);
    EXPECT_EQ(cfg.rho_values, (std::vector<double>{0.1, 0.9}));
    EXPECT_EQ(cfg.channels, (std::vector<ChannelType>{ChannelType::PAC, ChannelType::MAC}));
    EXPECT_EQ(cfg.sim.seed, 3u);
    EXPECT_EQ(cfg.line_of("sweep.budgets"), 19);
}

TEST(Config, MixedUnitsInList) {
    const auto cfg = parse_config(replace(kMinimal, "budgets = -10, 0, 10 dBm", "budgets = 2 mW, 0 dBm, 3 mW"));
    EXPECT_EQ(cfg.budgets_mw, (std::vector<double>{2.0, 1.0, 3.0}));
    // a bare number only inherits a unit from the last item
    EXPECT_THROW(parse_config(replace(kMinimal, "budgets = -10, 0, 10 dBm", "budgets = 2 mW, 3")), ConfigError);
}

TEST(Config, RoundTripIsSemanticallyIdentical) {
    for (const auto& name : preset_names()) {
        const auto a = parse_config(*preset_text(name));
        const auto text = serialize_config(a);
        const auto b = parse_config(text);
        EXPECT_EQ(serialize_config(b), text) << name;
        EXPECT_EQ(a.model.sigma0_sq, b.model.sigma0_sq) << name;
        EXPECT_EQ(a.model.gain_G, b.model.gain_G) << name;
        EXPECT_EQ(a.budgets_mw, b.budgets_mw) << name;
        EXPECT_EQ(a.caps_mw, b.caps_mw) << name;
        EXPECT_EQ(a.cap_mw, b.cap_mw) << name;
        EXPECT_EQ(a.rho_values, b.rho_values) << name;
        EXPECT_EQ(a.regimes, b.regimes) << name;
        EXPECT_EQ(a.kind, b.kind) << name;
        EXPECT_EQ(a.sim.n_channel_realizations, b.sim.n_channel_realizations) << name;
        for (std::size_t k = 0; k < a.model.size(); ++k) {
            EXPECT_EQ(a.model.sensor_positions[k], b.model.sensor_positions[k]) << name;
        }
    }
}

TEST(Config, ErrorsAreLineAnchored) {
    EXPECT_EQ(error_line(replace(kMinimal, "seed = 3", "colour = blue")), 23);
    EXPECT_EQ(error_line(replace(kMinimal, "sigma_s = 5 dBm", "sigma_s = 5")), 8);
    EXPECT_EQ(error_line(replace(kMinimal, "channel = pac, mac", "channel = pac, fm")), 15);
    EXPECT_EQ(error_line(replace(kMinimal, "[sim]", "[simulation]")), 21);
    EXPECT_EQ(error_line(replace(kMinimal, "seed = 3", "seed = 3\nseed = 4")), 24);
    EXPECT_EQ(error_line(replace(kMinimal, "rho = 0.1, 0.9", "rho = 0.1, 1.9")), 10);
    EXPECT_EQ(error_line(replace(kMinimal, "rho = 0.1, 0.9", "rho = 0.1 0.9")), 10);
    EXPECT_EQ(error_line(replace(kMinimal, "sensors = 1 0 0; -1 0 0", "sensors = 1 0; -1 0 0")), 3);
}

TEST(Config, EmptySweepGridIsRejected) {
    const auto text = replace(kMinimal, "budgets = -10, 0, 10 dBm\n", "");
    try {
        parse_config(text);
        FAIL() << "expected a validation error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("sweep grid is empty"), std::string::npos);
    }
    auto ipc = replace(kMinimal, "kind = mdc_vs_ptot", "kind = mdc_vs_p0");
    ipc = replace(ipc, "channel = pac, mac", "channel = pac\nregime = ipc");
    EXPECT_THROW(parse_config(ipc), ConfigError);
}

TEST(Config, RegimeAndKindConsistency) {
    EXPECT_THROW(parse_config(replace(kMinimal, "channel = pac, mac", "channel = pac\nregime = ipc")), ConfigError);
    const auto tipc = replace(kMinimal, "channel = pac, mac", "channel = pac\nregime = tipc");
    EXPECT_THROW(parse_config(tipc), ConfigError);  // no cap
    EXPECT_THROW(parse_config(replace(tipc, "[sim]", "cap = 4 mW\n[sim]")), ConfigError);  // 10 mW >= 2 * 4 mW
    EXPECT_NO_THROW(parse_config(replace(tipc, "[sim]", "cap = 6 mW\n[sim]")));
}

TEST(Config, MissingGeometryIsRejected) {
    EXPECT_THROW(parse_config(replace(kMinimal, "fc = 0 0 -5", "")), ConfigError);
}

TEST(Presets, SymmetricScenarioGeometry) {
    const auto cfg = parse_config(*preset_text("paper-sec5-symmetric"));
    ASSERT_EQ(cfg.model.size(), 8u);
    EXPECT_NEAR((cfg.model.sensor_positions[0] - cfg.model.sensor_positions[4]).norm(), 5.0, 1e-14);
    EXPECT_EQ(cfg.model.source_position, Vec3(0, 0, 3));
    EXPECT_EQ(cfg.model.fc_position, Vec3(0, 0, -10));
    EXPECT_NEAR(cfg.model.sigma0_sq, 1e-7, 1e-22);
    const auto cal = parse_config(*preset_text("paper-sec5-symmetric-calibrated"));
    EXPECT_NEAR(compute_local_stats(cal.model).pd[0], 0.6615, 1e-3);
    EXPECT_FALSE(preset_text("no-such-preset").has_value());
}

TEST(Presets, OffsetSourceTopDetectors) {
    const auto cfg = parse_config(*preset_text("paper-sec5-offset-source"));
    const auto st = compute_local_stats(cfg.model);
    std::vector<int> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return st.pd[a] > st.pd[b]; });
    std::vector<int> top(idx.begin(), idx.begin() + 3);
    std::sort(top.begin(), top.end());
    EXPECT_EQ(top, (std::vector<int>{0, 1, 7}));
}

TEST(Presets, FigureSpecificFalseAlarmTargets) {
    EXPECT_DOUBLE_EQ(parse_config(*preset_text("paper-fig1-opa")).model.beta_F, 0.1);
    EXPECT_DOUBLE_EQ(parse_config(*preset_text("paper-fig2-pd0")).model.beta_F, 0.05);
}

TEST(Scenario, WritesOneFilePerCombination) {
    const auto dir = scratch_dir("combos");
    const auto files = run_scenario(parse_config(kMinimal), dir);
    ASSERT_EQ(files.size(), 4u);
    EXPECT_EQ(files[0].filename(), "mdc_vs_ptot_PAC_rho0.1_TPC.csv");
    EXPECT_EQ(files[3].filename(), "mdc_vs_ptot_MAC_rho0.9_TPC.csv");
    const auto rows = read_csv(files[0]);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"budget_mw", "mdc_dpa", "mdc_dpa_se", "mdc_dpa_ineq",
                                                 "mdc_dpa_ineq_se", "mdc_upa", "mdc_upa_se"}));
    EXPECT_EQ(rows[1][0], "0.1");
    EXPECT_GE(std::stod(rows[3][1]), std::stod(rows[3][5]));  // DPA >= UPA on common channels
    fs::remove_all(dir);
}

TEST(Scenario, IdenticalSeedGivesIdenticalBytes) {
    auto cfg = parse_config(kMinimal);
    const auto a = run_scenario(cfg, scratch_dir("det_a"));
    cfg.sim.threads = 3;
    const auto b = run_scenario(cfg, scratch_dir("det_b"));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(slurp(a[i]), slurp(b[i]));
    cfg.sim.seed = 4;
    const auto c = run_scenario(cfg, scratch_dir("det_c"));
    EXPECT_NE(slurp(a[0]), slurp(c[0]));
}

TEST(Scenario, HomogeneousProfileIsFlat) {
    auto cfg = parse_config(*preset_text("paper-sec5-symmetric-calibrated"));
    cfg.kind = SweepKind::PowerProfile;
    cfg.sim.fading = Fading::UnitGain;
    cfg.channels = {ChannelType::MAC};
    cfg.rho_values = {0.1};
    cfg.budgets_mw = {1.0, 100.0};
    const auto files = run_scenario(cfg, scratch_dir("flat"));
    const auto rows = read_csv(files.at(0));
    ASSERT_EQ(rows.size(), 17u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"sensor_index", "p_d", "pathloss_theta", "regime", "budget_mw",
                                                 "power_mw"}));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        EXPECT_EQ(rows[r][0], std::to_string((r - 1) % 8 + 1));
        EXPECT_NEAR(std::stod(rows[r][5]), std::stod(rows[r][4]) / 8.0, 1e-9 * std::stod(rows[r][4]));
    }
}

TEST(Scenario, OffsetSourceTpcPowerFollowsDetection) {
    auto cfg = parse_config(*preset_text("paper-sec5-offset-source-calibrated"));
    cfg.regimes = {Regime::TPC};
    const auto files = run_scenario(cfg, scratch_dir("offset"));
    for (const auto& f : files) {
        const auto rows = read_csv(f);
        std::vector<std::pair<double, double>> pts;  // (p_d, power) for the first budget
        for (std::size_t r = 1; r <= 8; ++r) pts.emplace_back(std::stod(rows[r][1]), std::stod(rows[r][5]));
        std::sort(pts.begin(), pts.end());
        for (std::size_t k = 1; k < pts.size(); ++k) {
            EXPECT_GE(pts[k].second, pts[k - 1].second * (1.0 - 1e-9)) << f;
        }
    }
}

TEST(Scenario, OffsetFusionCenterMacIpcIsNonUniformAtSmallCap) {
    auto cfg = parse_config(*preset_text("paper-sec5-offset-fc-calibrated"));
    cfg.regimes = {Regime::IPC};
    cfg.channels = {ChannelType::MAC};
    cfg.caps_mw = {4.0};
    const auto files = run_scenario(cfg, scratch_dir("offset_fc"));
    const auto rows = read_csv(files.at(0));
    double lo = 1e300, hi = 0.0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        lo = std::min(lo, std::stod(rows[r][5]));
        hi = std::max(hi, std::stod(rows[r][5]));
    }
    EXPECT_DOUBLE_EQ(hi, 4.0);
    EXPECT_LT(lo, 0.99 * hi);
}

TEST(Scenario, OpaCompareColumns) {
    auto cfg = parse_config(*preset_text("paper-fig1-opa-calibrated"));
    cfg.sim.n_channel_realizations = 3;
    cfg.sim.n_monte_carlo_per_realization = 200;
    cfg.budgets_mw = {1.0};
    const auto files = run_scenario(cfg, scratch_dir("opa"));
    const auto rows = read_csv(files.at(0));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].size(), 10u);
    EXPECT_EQ(rows[0][0], "budget_mw");
    EXPECT_EQ(rows[1][9], "linear");
    EXPECT_GE(std::stod(rows[1][1]), std::stod(rows[1][3]));
}

TEST(Scenario, Pd0Columns) {
    auto cfg = parse_config(*preset_text("paper-fig2-pd0-calibrated"));
    cfg.sim.n_channel_realizations = 2;
    cfg.sim.n_monte_carlo_per_realization = 200;
    cfg.budgets_mw = {10.0};
    cfg.channels = {ChannelType::PAC};
    cfg.rho_values = {0.1};
    const auto files = run_scenario(cfg, scratch_dir("pd0"));
    const auto rows = read_csv(files.at(0));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][1], "pd0_dpa");
    EXPECT_EQ(rows[0].size(), 9u);
}

TEST(Scenario, UnwritablePathFails) {
    EXPECT_THROW(emit_power_profile({}, "/nonexistent-dir/x/profile.csv"), std::runtime_error);
}
