#include "stacktherm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

namespace stacktherm {

double quantize_celsius(double c) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", c);
    return std::strtod(buf, nullptr);
}

std::vector<BlockStats> aggregate_blocks(const ThermalGridModel& model,
                                         std::span<const double> field,
                                         std::span<const double> block_watts) {
    std::vector<BlockStats> out;
    out.reserve(model.power_blocks.size());
    auto mm = block_mean_max(model, field);
    for (std::size_t i = 0; i < model.power_blocks.size(); ++i) {
        const PowerBlockCells& pb = model.power_blocks[i];
        BlockStats s;
        s.name = pb.name;
        s.layer = pb.layer;
        s.mean_c = kelvin_to_celsius(mm[i].first);
        s.max_c = kelvin_to_celsius(mm[i].second);
        s.area_m2 = pb.area;
        s.power_w = i < block_watts.size() ? block_watts[i] : 0.0;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<std::vector<double>> layer_plane_celsius(const ThermalGridModel& model,
                                                     std::span<const double> field,
                                                     int layer) {
    const GridDims& d = model.dims;
    std::vector<std::vector<double>> plane(d.rows, std::vector<double>(d.cols));
    for (int r = d.rows - 1; r >= 0; --r) {
        int img_row = d.rows - 1 - r;
        for (int c = 0; c < d.cols; ++c)
            plane[img_row][c] =
                quantize_celsius(kelvin_to_celsius(field[d.flat(layer, r, c)]));
    }
    return plane;
}

void emit_csv_grid(const ThermalGridModel& model, std::span<const double> field,
                   int layer, std::ostream& out) {
    const GridDims& d = model.dims;
    char buf[64];
    for (int r = d.rows - 1; r >= 0; --r) {
        for (int c = 0; c < d.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.6f", kelvin_to_celsius(field[d.flat(layer, r, c)]));
            if (c) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

void write_ppm(const std::vector<std::vector<double>>& plane_c,
               std::optional<std::pair<double, double>> range_c, std::ostream& out) {
    const int rows = static_cast<int>(plane_c.size());
    const int cols = rows ? static_cast<int>(plane_c.front().size()) : 0;

    double lo, hi;
    if (range_c) {
        lo = range_c->first;
        hi = range_c->second;
    } else {
        lo = 1e300;
        hi = -1e300;
        for (const auto& row : plane_c)
            for (double v : row) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    }

    out << "P3\n" << cols << ' ' << rows << "\n255\n";
    for (const auto& row : plane_c) {
        for (double v : row) {
            double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            long red = std::lround(255.0 * t);
            long blue = std::lround(255.0 * (1.0 - t));
            out << red << " 0 " << blue << '\n';
        }
    }
}

void emit_ppm_heatmap(const ThermalGridModel& model, std::span<const double> field,
                      int layer, std::optional<std::pair<double, double>> range_c,
                      std::ostream& out) {
    write_ppm(layer_plane_celsius(model, field, layer), range_c, out);
}

std::vector<std::vector<double>> parse_csv_grid(std::istream& in) {
    std::vector<std::vector<double>> plane;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            row.push_back(parse_number(cell, lineno, "csv cell"));
        if (!plane.empty() && row.size() != plane.front().size())
            throw ConfigError(lineno, "csv grid: ragged row");
        plane.push_back(std::move(row));
    }
    if (plane.empty()) throw ConfigError("csv grid: empty input");
    return plane;
}

void write_block_stats_csv(std::span<const BlockStats> stats, std::ostream& out) {
    out << "block,layer,mean_c,max_c,area_m2,power_w\n";
    char buf[160];
    for (const BlockStats& s : stats) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6e,%.6f\n", s.name.c_str(),
                      s.layer, s.mean_c, s.max_c, s.area_m2, s.power_w);
        out << buf;
    }
}

std::string run_summary(const ThermalGridModel& model, const SimResult& result,
                        std::span<const BlockStats> stats) {
    const GridDims& d = model.dims;
    const std::vector<double>& field = result.fields.back();
    std::ostringstream out;
    char buf[256];

    out << "layer  kind          label             peak_c      mean_c\n";
    for (int li = 0; li < d.layers; ++li) {
        double peak = -1e300, sum = 0.0;
        for (int r = 0; r < d.rows; ++r)
            for (int c = 0; c < d.cols; ++c) {
                double t = field[d.flat(li, r, c)];
                peak = std::max(peak, t);
                sum += t;
            }
        std::snprintf(buf, sizeof(buf), "%-6d %-13s %-16s %10.4f  %10.4f\n", li,
                      to_string(model.layer_kinds[li]), model.layer_labels[li].c_str(),
                      kelvin_to_celsius(peak), kelvin_to_celsius(sum / (d.rows * d.cols)));
        out << buf;
    }

    if (!stats.empty()) {
        const BlockStats* hottest = &stats[0];
        for (const BlockStats& s : stats)
            if (s.max_c > hottest->max_c) hottest = &s;
        std::snprintf(buf, sizeof(buf), "\nhottest block: %s (layer %d) peak %.4f C\n",
                      hottest->name.c_str(), hottest->layer, hottest->max_c);
        out << buf;
    }

    const EnergyBalance& e = result.energy;
    std::snprintf(buf, sizeof(buf),
                  "\nenergy balance [W]: in %.6f  sink %.6f  coolant %.6f  residual %.3e\n",
                  e.power_in, e.sink_out, e.coolant_out, e.residual);
    out << buf;

    if (!model.channels.empty()) {
        out << "\nchannel  layer  outlet_c   dP_pa      pump_w\n";
        double pump_total = 0.0;
        for (const ChannelInfo& ch : model.channels) {
            // Outlet = mean over the channel's lanes (even mass-flow split).
            double outlet = 0.0;
            int lanes_used = 0;
            for (const ChannelLane& lane : model.lanes)
                if (lane.layer == ch.layer &&
                    std::find(ch.lane_rows.begin(), ch.lane_rows.end(), lane.row) !=
                        ch.lane_rows.end()) {
                    outlet += field[lane.cells.back()];
                    ++lanes_used;
                }
            outlet = lanes_used ? outlet / lanes_used : model.ambient;
            pump_total += ch.pumping_power;
            std::snprintf(buf, sizeof(buf), "%-8d %-6d %9.4f  %9.3f  %.6e\n", ch.index,
                          ch.layer, kelvin_to_celsius(outlet), ch.pressure_drop,
                          ch.pumping_power);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "total pumping power estimate: %.6e W\n", pump_total);
        out << buf;
    }

    if (!result.dtm_log.empty()) {
        out << "\ndtm events:\n";
        for (const DtmEvent& ev : result.dtm_log) {
            std::snprintf(buf, sizeof(buf), "  t=%.6f s  %-12s %s\n", ev.time,
                          ev.block.c_str(), ev.throttled ? "throttle" : "release");
            out << buf;
        }
    }
    return out.str();
}

}  // namespace stacktherm
