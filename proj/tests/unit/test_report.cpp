#include <doctest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"
#include "stacktherm/grid.hpp"
#include "stacktherm/report.hpp"
#include "stacktherm/solver.hpp"

using namespace stacktherm;
using namespace test_helpers;

namespace {

StackSpec two_block_stack(int rows, int cols) {
    StackSpec s;
    s.grid_rows = rows;
    s.grid_cols = cols;
    s.sink_resistance_top = 0.5;
    Floorplan fp;
    fp.blocks.push_back(Block{"L", 1e-3, 2e-3, 0.0, 0.0});
    fp.blocks.push_back(Block{"R", 1e-3, 2e-3, 1e-3, 0.0});
    fp.die_width = 2e-3;
    fp.die_height = 2e-3;
    s.layers.push_back(active_layer(std::make_shared<Floorplan>(fp), 150e-6));
    validate_stack(s);
    return s;
}

}  // namespace

TEST_CASE("blocks: uniform 350 K field reports 76.85 C everywhere") {
    StackSpec s = two_block_stack(4, 4);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field(m.dims.cells(), 350.0);
    std::vector<double> watts(m.power_blocks.size(), 1.0);
    std::vector<BlockStats> stats = aggregate_blocks(m, field, watts);
    REQUIRE(stats.size() == 2);
    for (const BlockStats& b : stats) {
        CHECK(b.mean_c == doctest::Approx(76.85).epsilon(1e-12));
        CHECK(b.max_c == doctest::Approx(76.85).epsilon(1e-12));
        CHECK(b.mean_c <= b.max_c);
    }
}

TEST_CASE("blocks: half-and-half block averages 340/360 K") {
    StackSpec s2;
    s2.grid_rows = 1;
    s2.grid_cols = 2;
    s2.sink_resistance_top = 0.5;
    s2.layers.push_back(active_layer(single_block_plan(2e-3, 2e-3, "A"), 150e-6));
    validate_stack(s2);
    ThermalGridModel m2 = build_grid_model(s2);

    std::vector<double> field{340.0, 360.0};
    std::vector<double> watts{1.0};
    std::vector<BlockStats> stats = aggregate_blocks(m2, field, watts);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].mean_c == doctest::Approx(76.85).epsilon(1e-12));
    CHECK(stats[0].max_c == doctest::Approx(86.85).epsilon(1e-12));
}

TEST_CASE("blocks: means match a direct-summation oracle") {
    std::mt19937 gen(55);
    std::uniform_real_distribution<double> temp(300.0, 400.0);
    StackSpec s = two_block_stack(8, 8);
    ThermalGridModel m = build_grid_model(s);

    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> field(m.dims.cells());
        for (double& t : field) t = temp(gen);
        std::vector<double> watts(m.power_blocks.size(), 0.0);
        std::vector<BlockStats> stats = aggregate_blocks(m, field, watts);

        for (std::size_t b = 0; b < m.power_blocks.size(); ++b) {
            double mean = 0.0, mx = -1e300;
            for (const auto& [cell, frac] : m.power_blocks[b].cells) {
                mean += frac * field[cell];
                mx = std::max(mx, field[cell]);
            }
            CHECK(std::abs((stats[b].mean_c) - (mean - 273.15)) <= 1e-9);
            CHECK(std::abs((stats[b].max_c) - (mx - 273.15)) <= 1e-9);
        }
    }
}

TEST_CASE("blocks: global max identity over powered cells") {
    std::mt19937 gen(66);
    std::uniform_real_distribution<double> temp(300.0, 380.0);
    StackSpec s = two_block_stack(6, 6);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field(m.dims.cells());
    for (double& t : field) t = temp(gen);
    std::vector<double> watts(m.power_blocks.size(), 0.0);
    std::vector<BlockStats> stats = aggregate_blocks(m, field, watts);

    double stats_max = -1e300;
    for (const BlockStats& b : stats) stats_max = std::max(stats_max, b.max_c);
    double cells_max = -1e300;
    for (const PowerBlockCells& pb : m.power_blocks)
        for (const auto& [cell, frac] : pb.cells)
            if (frac > 0.0) cells_max = std::max(cells_max, field[cell] - 273.15);
    CHECK(std::abs((stats_max) - (cells_max)) <= 1e-12);
}

TEST_CASE("csv: single boiling cell prints 100.000000") {
    StackSpec s;
    s.grid_rows = 1;
    s.grid_cols = 1;
    s.sink_resistance_top = 0.5;
    s.layers.push_back(active_layer(single_block_plan(2e-3, 2e-3), 150e-6));
    validate_stack(s);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field{373.15};
    std::ostringstream out;
    emit_csv_grid(m, field, 0, out);
    CHECK(out.str() == "100.000000\n");
}

TEST_CASE("csv: 2x2 grid prints the top row first") {
    StackSpec s = two_block_stack(2, 2);
    ThermalGridModel m = build_grid_model(s);
    // row 0 = bottom (y=0), row 1 = top.
    std::vector<double> field{274.15, 275.15, 276.15, 277.15};
    std::ostringstream out;
    emit_csv_grid(m, field, 0, out);
    CHECK(out.str() == "3.000000,4.000000\n1.000000,2.000000\n");
}

TEST_CASE("csv: emitted grid reparses within 1e-6") {
    std::mt19937 gen(88);
    std::uniform_real_distribution<double> temp(290.0, 420.0);
    StackSpec s = two_block_stack(5, 7);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field(m.dims.cells());
    for (double& t : field) t = temp(gen);

    std::ostringstream out;
    emit_csv_grid(m, field, 0, out);
    std::istringstream in(out.str());
    auto plane = parse_csv_grid(in);
    REQUIRE(plane.size() == 5);
    REQUIRE(plane[0].size() == 7);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 7; ++c) {
            double expected = field[m.dims.flat(0, 4 - r, c)] - 273.15;
            CHECK(std::abs((plane[r][c]) - (expected)) <= 1e-6);
        }
}

TEST_CASE("ppm: uniform field renders all blue under the degenerate range rule") {
    StackSpec s = two_block_stack(2, 2);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field(4, 350.0);
    std::ostringstream out;
    emit_ppm_heatmap(m, field, 0, std::nullopt, out);
    CHECK(out.str() == "P3\n2 2\n255\n0 0 255\n0 0 255\n0 0 255\n0 0 255\n");
}

TEST_CASE("ppm: range endpoints render pure blue and pure red") {
    StackSpec s;
    s.grid_rows = 1;
    s.grid_cols = 2;
    s.sink_resistance_top = 0.5;
    s.layers.push_back(active_layer(single_block_plan(2e-3, 2e-3), 150e-6));
    validate_stack(s);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field{300.0, 400.0};
    std::ostringstream out;
    emit_ppm_heatmap(m, field, 0, std::nullopt, out);
    CHECK(out.str() == "P3\n2 1\n255\n0 0 255\n255 0 0\n");
}

TEST_CASE("ppm: identical (T, range) inputs give bit-identical colors") {
    StackSpec s = two_block_stack(3, 3);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> f1(9), f2(9);
    for (int i = 0; i < 9; ++i) {
        f1[i] = 320.0 + i;
        f2[i] = 328.0 - i;  // same value set, different arrangement
    }
    auto range = std::make_pair(40.0, 60.0);
    std::ostringstream a, b;
    emit_ppm_heatmap(m, f1, 0, range, a);
    emit_ppm_heatmap(m, f2, 0, range, b);

    // Pixel color depends only on the temperature and the fixed range:
    // f1 read forward equals f2 read backward per image row.
    auto lines_of = [](const std::string& s) {
        std::vector<std::string> lines;
        std::istringstream in(s);
        std::string l;
        while (std::getline(in, l)) lines.push_back(l);
        return lines;
    };
    auto la = lines_of(a.str()), lb = lines_of(b.str());
    REQUIRE(la.size() == lb.size());
    // skip 3 header lines; 9 pixels follow
    for (int i = 0; i < 9; ++i) {
        int r = i / 3, c = i % 3;
        int mirrored = (2 - r) * 3 + (2 - c);
        CHECK(la[3 + i] == lb[3 + mirrored]);
    }

    std::ostringstream a2;
    emit_ppm_heatmap(m, f1, 0, range, a2);
    CHECK(a.str() == a2.str());  // byte determinism
}

TEST_CASE("ppm: render of an emitted csv is byte-identical to the direct heat map") {
    std::mt19937 gen(123);
    std::uniform_real_distribution<double> temp(300.0, 390.0);
    StackSpec s = two_block_stack(6, 5);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field(m.dims.cells());
    for (double& t : field) t = temp(gen);

    std::ostringstream direct;
    emit_ppm_heatmap(m, field, 0, std::nullopt, direct);

    std::ostringstream csv;
    emit_csv_grid(m, field, 0, csv);
    std::istringstream csv_in(csv.str());
    auto plane = parse_csv_grid(csv_in);
    std::ostringstream composed;
    write_ppm(plane, std::nullopt, composed);

    CHECK(direct.str() == composed.str());
}

TEST_CASE("summary: cooled run lists outlets at or above the inlet") {
    StackSpec s;
    s.grid_rows = 8;
    s.grid_cols = 8;
    s.sink_resistance_top = 0.5;
    auto fp = single_block_plan(2e-3, 2e-3);
    s.layers.push_back(active_layer(fp, 150e-6, 6.0));
    s.layers.push_back(microchannel_layer(100e-6, 300e-6, 200e-6, 3, 1e-7, 300.0));
    validate_stack(s);
    ThermalGridModel m = build_grid_model(s);
    std::vector<LayerPowerSample> rep = representative_block_max(s);
    std::vector<double> power =
        instantaneous_power_vector(m, std::span<const LayerPowerSample>(rep.data(), rep.size()));
    SolveSettings st;
    st.rel_tolerance = 1e-11;
    SimResult res = steady_solve(m, power, st);

    for (const ChannelLane& lane : m.lanes)
        CHECK(res.fields[0][lane.cells.back()] >= 300.0 - 1e-9);

    std::vector<double> watts(m.power_blocks.size(), 6.0);
    auto stats = aggregate_blocks(m, res.fields[0], watts);
    std::string text = run_summary(m, res, stats);
    CHECK(text.find("channel") != std::string::npos);
    CHECK(text.find("pumping power") != std::string::npos);
    CHECK(text.find("hottest block") != std::string::npos);
}

TEST_CASE("summary: conduction-only run omits the coolant columns") {
    StackSpec s = two_block_stack(4, 4);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> power(m.dims.cells(), 0.0);
    SimResult res = steady_solve(m, power);
    std::vector<double> watts(m.power_blocks.size(), 0.0);
    auto stats = aggregate_blocks(m, res.fields[0], watts);
    std::string text = run_summary(m, res, stats);
    CHECK(text.find("channel") == std::string::npos);

    // Zero power: the peak sits at ambient on every layer.
    CHECK(text.find("45.0000") != std::string::npos);  // 318.15 K
}

TEST_CASE("block stats csv is deterministic") {
    StackSpec s = two_block_stack(2, 2);
    ThermalGridModel m = build_grid_model(s);
    std::vector<double> field(4, 350.0);
    std::vector<double> watts(m.power_blocks.size(), 1.5);
    auto stats = aggregate_blocks(m, field, watts);
    std::ostringstream a, b;
    write_block_stats_csv(stats, a);
    write_block_stats_csv(stats, b);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("block,layer,mean_c,max_c,area_m2,power_w\n", 0) == 0);
}
