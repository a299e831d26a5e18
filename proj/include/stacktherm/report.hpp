#ifndef STACKTHERM_REPORT_HPP
#define STACKTHERM_REPORT_HPP

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stacktherm/grid.hpp"
#include "stacktherm/solver.hpp"

namespace stacktherm {

struct BlockStats {
    std::string name;
    int layer = 0;
    double mean_c = 0.0;
    double max_c = 0.0;
    double area_m2 = 0.0;
    double power_w = 0.0;
};

inline double kelvin_to_celsius(double k) { return k - 273.15; }

/// Snaps a Celsius value to the 6-decimal precision of the CSV emitter.
/// Both the direct PPM path and the CSV->PPM path normalize on snapped
/// values, which makes the two emissions byte-identical.
double quantize_celsius(double c);

/// Area-fraction weighted mean and cell max per block, in Celsius.
/// `block_watts` lists the instant's power in power_blocks order.
std::vector<BlockStats> aggregate_blocks(const ThermalGridModel& model,
                                         std::span<const double> field,
                                         std::span<const double> block_watts);

/// One layer of the field as an image-ordered matrix: rows top (max y)
/// to bottom, columns left to right, quantized Celsius.
std::vector<std::vector<double>> layer_plane_celsius(const ThermalGridModel& model,
                                                     std::span<const double> field,
                                                     int layer);

/// grid_rows lines of grid_cols comma-separated values, 6 decimals.
void emit_csv_grid(const ThermalGridModel& model, std::span<const double> field,
                   int layer, std::ostream& out);

/// ASCII PPM (P3), one pixel per cell, blue (coldest) to red (hottest).
/// `range_c` fixes the color scale; default is the plane's own extremes.
void emit_ppm_heatmap(const ThermalGridModel& model, std::span<const double> field,
                      int layer, std::optional<std::pair<double, double>> range_c,
                      std::ostream& out);

/// Reads a grid emitted by emit_csv_grid (Celsius, image row order).
std::vector<std::vector<double>> parse_csv_grid(std::istream& in);

/// PPM emission from an image-ordered Celsius matrix (shared by the
/// heatmap and render paths).
void write_ppm(const std::vector<std::vector<double>>& plane_c,
               std::optional<std::pair<double, double>> range_c, std::ostream& out);

void write_block_stats_csv(std::span<const BlockStats> stats, std::ostream& out);

/// Human-readable run summary: per-layer peak/mean, hottest block, energy
/// balance, coolant outlets and pumping power when channels are present.
std::string run_summary(const ThermalGridModel& model, const SimResult& result,
                        std::span<const BlockStats> stats);

}  // namespace stacktherm

#endif
