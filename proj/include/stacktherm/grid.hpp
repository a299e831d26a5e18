#ifndef STACKTHERM_GRID_HPP
#define STACKTHERM_GRID_HPP

#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "stacktherm/config.hpp"

namespace stacktherm {

struct GridDims {
    int layers = 0;
    int rows = 0;
    int cols = 0;

    int cells() const { return layers * rows * cols; }
    int flat(int layer, int row, int col) const {
        return layer * rows * cols + row * cols + col;
    }
};

struct CellId {
    int layer = 0;
    int row = 0;  // y
    int col = 0;  // x
};

inline CellId unflatten(const GridDims& d, int idx) {
    int per_layer = d.rows * d.cols;
    return CellId{idx / per_layer, (idx % per_layer) / d.cols, idx % d.cols};
}

/// Compressed sparse rows, columns sorted within each row.
struct CsrMatrix {
    int n = 0;
    std::vector<int> row_ptr;
    std::vector<int> col;
    std::vector<double> val;

    void multiply(std::span<const double> x, std::span<double> y) const;
    double entry(int r, int c) const;  // 0 when absent
    double diagonal(int r) const;
};

/// Coupling collector for model construction. Finalization derives each
/// diagonal as the negated sum of the row's off-diagonals plus the
/// explicitly added diagonal extras (boundary and advective outflow),
/// which keeps interior row balance exact in floating point.
class MatrixAssembly {
public:
    explicit MatrixAssembly(int n) : n_(n), diag_extra_(n, 0.0) {}

    /// Symmetric conductance g between cells a and b.
    void add_coupling(int a, int b, double g);
    /// One-way coupling: row `cell` picks up -g against `upstream`
    /// (advection; the matching outflow lands on the diagonal).
    void add_directed_coupling(int cell, int upstream, double g);
    /// Extra diagonal conductance (boundary sink, inlet outflow).
    void add_diagonal(int cell, double g);

    int size() const { return n_; }
    CsrMatrix finalize() const;

private:
    int n_;
    std::vector<std::tuple<int, int, double>> off_;  // (row, col, conductance)
    std::vector<double> diag_extra_;
};

/// Cells of one block with their share of the block area.
struct PowerBlockCells {
    int layer = 0;
    std::string name;
    double area = 0.0;  // m^2
    std::vector<std::pair<int, double>> cells;  // (flat index, area fraction)
};

/// One advection lane: the fluid cells of a single grid row inside a
/// channel, ordered upstream to downstream. A channel spanning several
/// grid rows splits its mass flow evenly across its lanes.
struct ChannelLane {
    int layer = 0;
    int row = 0;
    double mdot_cp = 0.0;       // W/K (0 when stagnant)
    double inlet_temp = 0.0;    // K
    std::vector<int> cells;     // flat indices
};

/// Per-channel reporting data.
struct ChannelInfo {
    int layer = 0;
    int index = 0;
    double inlet_temp = 0.0;       // K
    double mdot_cp = 0.0;          // W/K total for the channel
    double hydraulic_diameter = 0.0;
    double h_conv = 0.0;           // W/(m^2 K)
    double pressure_drop = 0.0;    // Pa (laminar Poiseuille estimate)
    double pumping_power = 0.0;    // W
    std::vector<int> lane_rows;
};

/// The assembled compact model: conductance matrix (W/K, positive
/// diagonal, off-diagonals are negated couplings), per-cell capacitances
/// (J/K) and constant boundary/inlet heat terms (W).
struct ThermalGridModel {
    GridDims dims;
    CsrMatrix conductance;
    std::vector<double> capacitance;
    std::vector<double> boundary_injection;   // W per cell
    std::vector<double> boundary_conductance; // W/K per cell toward ambient
    std::vector<PowerBlockCells> power_blocks;
    std::vector<std::uint8_t> fluid_tag;      // 1 = coolant cell
    std::vector<ChannelLane> lanes;
    std::vector<ChannelInfo> channels;
    double ambient = 0.0;
    double cell_w = 0.0;  // x pitch
    double cell_h = 0.0;  // y pitch
    std::vector<double> layer_thickness;
    std::vector<LayerKind> layer_kinds;
    std::vector<std::string> layer_labels;
    std::vector<int> active_layers;  // layer indices carrying power

    bool has_flow() const;
    double total_boundary_conductance() const;
};

/// Discretize the stack and assemble conductances, capacitances, boundary
/// terms, fluid terms and the power-injection map.
ThermalGridModel build_grid_model(const StackSpec& spec);

/// Fills model.power_blocks by clipping each active block against the
/// cell footprints (fractions of the block area; they sum to 1).
void map_power_to_grid(ThermalGridModel& model, const StackSpec& spec);

/// Watts of every block of one active layer at one instant.
struct LayerPowerSample {
    int layer = 0;
    std::map<std::string, double> watts;
};

/// Per-cell watts from per-block watts. The sample set must name exactly
/// the mapped blocks of each active layer.
std::vector<double> instantaneous_power_vector(const ThermalGridModel& model,
                                               std::span<const LayerPowerSample> samples);

/// Convenience for single-active-layer stacks.
std::vector<double> instantaneous_power_vector(const ThermalGridModel& model,
                                               const std::map<std::string, double>& watts);

/// Per-cell watts from block watts listed in power_blocks order.
std::vector<double> power_vector_from_block_watts(const ThermalGridModel& model,
                                                  std::span<const double> block_watts);

/// (mean, max) kelvin per entry of power_blocks; mean is area-fraction
/// weighted, max runs over cells with nonzero fraction.
std::vector<std::pair<double, double>> block_mean_max(const ThermalGridModel& model,
                                                      std::span<const double> field);

}  // namespace stacktherm

#endif
