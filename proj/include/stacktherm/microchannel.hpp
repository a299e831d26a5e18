#ifndef STACKTHERM_MICROCHANNEL_HPP
#define STACKTHERM_MICROCHANNEL_HPP

#include <vector>

#include "stacktherm/config.hpp"
#include "stacktherm/grid.hpp"

namespace stacktherm {

/// Placement of one microchannel layer on the grid: which rows are fluid,
/// which channel owns each fluid row, and the convective closure.
struct ChannelLayout {
    int layer = 0;
    std::vector<int> fluid_rows;                 // ascending
    std::vector<std::vector<int>> channel_rows;  // per channel, its fluid rows
    double hydraulic_diameter = 0.0;  // D_h = 2 w t / (w + t)
    double h_conv = 0.0;              // Nu k_coolant / D_h
    double per_channel_mass_flow = 0.0;  // kg/s
    double channel_velocity = 0.0;       // m/s mean, for the pressure estimate
};

/// Centers the wall/channel pattern on the die and tags every grid row
/// whose y-center falls inside a channel span. Errors when some channel
/// captures no row (grid too coarse to resolve it).
ChannelLayout layout_channels(const LayerSpec& layer, const GridDims& dims,
                              double die_width, double die_height, int layer_index);

/// Adds the fluid contributions of one microchannel layer to the model
/// under construction: fluid-wall lateral coupling, fluid-vertical
/// coupling through the convective film, upwind advection along each
/// lane, coolant capacitance, and (for top/bottom layers) the film path
/// to the boundary sink. Solid conduction touching fluid cells must have
/// been skipped by the caller.
void contribute_fluid_terms(MatrixAssembly& assembly, ThermalGridModel& model,
                            const StackSpec& spec, const ChannelLayout& layout,
                            int layer_index);

}  // namespace stacktherm

#endif
