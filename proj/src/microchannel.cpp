#include "stacktherm/microchannel.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

namespace stacktherm {

namespace {

constexpr double kCoolantViscosity = 1.0e-3;  // Pa s, laminar water estimate

double film_coefficient(const CoolingParams& c, double thickness) {
    double dh = 2.0 * c.channel_width * thickness / (c.channel_width + thickness);
    return c.nusselt * c.coolant.conductivity / dh;
}

}  // namespace

ChannelLayout layout_channels(const LayerSpec& layer, const GridDims& dims,
                              double die_width, double die_height, int layer_index) {
    assert(layer.kind == LayerKind::Microchannel);
    const CoolingParams& c = *layer.cooling;

    ChannelLayout layout;
    layout.layer = layer_index;
    layout.hydraulic_diameter =
        2.0 * c.channel_width * layer.thickness / (c.channel_width + layer.thickness);
    layout.h_conv = c.nusselt * c.coolant.conductivity / layout.hydraulic_diameter;
    layout.per_channel_mass_flow = c.coolant.density * c.flow_rate / c.num_channels;
    layout.channel_velocity =
        (c.flow_rate / c.num_channels) / (c.channel_width * layer.thickness);
    (void)die_width;

    const double pattern =
        c.num_channels * c.channel_width + (c.num_channels + 1) * c.wall_width;
    const double offset = (die_height - pattern) / 2.0;
    const double cell_h = die_height / dims.rows;

    layout.channel_rows.resize(c.num_channels);
    for (int r = 0; r < dims.rows; ++r) {
        double yc = (r + 0.5) * cell_h;
        for (int ch = 0; ch < c.num_channels; ++ch) {
            double lo = offset + (ch + 1) * c.wall_width + ch * c.channel_width;
            double hi = lo + c.channel_width;
            if (yc >= lo && yc < hi) {
                layout.channel_rows[ch].push_back(r);
                layout.fluid_rows.push_back(r);
                break;  // spans are disjoint
            }
        }
    }
    for (int ch = 0; ch < c.num_channels; ++ch) {
        if (layout.channel_rows[ch].empty())
            throw ConfigError("[" + layer.label + "]: channel " + std::to_string(ch) +
                              " (width " + std::to_string(c.channel_width) +
                              " m) captures no grid row; raise grid_rows to resolve it");
    }
    return layout;
}

void contribute_fluid_terms(MatrixAssembly& assembly, ThermalGridModel& model,
                            const StackSpec& spec, const ChannelLayout& layout,
                            int layer_index) {
    const GridDims& d = model.dims;
    const LayerSpec& layer = spec.layers[layer_index];
    const CoolingParams& cool = *layer.cooling;
    const double t = layer.thickness;
    const double w = model.cell_w;
    const double h = model.cell_h;
    const double h_conv = layout.h_conv;
    const double k_wall = layer.material.conductivity;

    for (int r : layout.fluid_rows) {
        for (int c = 0; c < d.cols; ++c) {
            const int i = d.flat(layer_index, r, c);

            // (d) coolant thermal mass
            model.capacitance[i] = cool.coolant.density * cool.coolant.specific_heat * w * h * t;

            // (a) lateral film + half-cell wall conduction toward solid rows
            for (int dr : {-1, +1}) {
                int rn = r + dr;
                if (rn < 0 || rn >= d.rows) continue;
                int j = d.flat(layer_index, rn, c);
                if (model.fluid_tag[j]) continue;  // lanes do not couple laterally
                double face = w * t;
                double g = face / (1.0 / h_conv + (h / 2.0) / k_wall);
                assembly.add_coupling(i, j, g);
            }

            // (b) vertical coupling through the convective film
            for (int dl : {-1, +1}) {
                int ln = layer_index + dl;
                if (ln < 0 || ln >= d.layers) continue;
                int j = d.flat(ln, r, c);
                double face = w * h;
                if (model.fluid_tag[j]) {
                    // Stacked coolant layers meet film-to-film; insert once.
                    if (dl < 0) continue;
                    double h_other = film_coefficient(*spec.layers[ln].cooling,
                                                      spec.layers[ln].thickness);
                    assembly.add_coupling(i, j, face / (1.0 / h_conv + 1.0 / h_other));
                } else {
                    const LayerSpec& nb = spec.layers[ln];
                    double g = face / (1.0 / h_conv +
                                       (nb.thickness / 2.0) / nb.material.conductivity);
                    assembly.add_coupling(i, j, g);
                }
            }

            // Film path to an external boundary when this layer faces one.
            if (layer_index == d.layers - 1 && spec.sink_resistance_top) {
                double r_cell = *spec.sink_resistance_top * d.rows * d.cols +
                                1.0 / (h_conv * w * h);
                double g = 1.0 / r_cell;
                assembly.add_diagonal(i, g);
                model.boundary_injection[i] += g * spec.ambient;
                model.boundary_conductance[i] += g;
            }
            if (layer_index == 0 && spec.boundary_bottom) {
                double r_cell = *spec.boundary_bottom * d.rows * d.cols +
                                1.0 / (h_conv * w * h);
                double g = 1.0 / r_cell;
                assembly.add_diagonal(i, g);
                model.boundary_injection[i] += g * spec.ambient;
                model.boundary_conductance[i] += g;
            }
        }
    }

    // (c) upwind advection along each lane; one lane per captured grid row,
    // the channel's mass flow split evenly across its lanes.
    for (std::size_t ch = 0; ch < layout.channel_rows.size(); ++ch) {
        const std::vector<int>& rows = layout.channel_rows[ch];
        double mdot_lane = layout.per_channel_mass_flow / rows.size();
        double mdot_cp_lane = mdot_lane * cool.coolant.specific_heat;

        for (int r : rows) {
            ChannelLane lane;
            lane.layer = layer_index;
            lane.row = r;
            lane.inlet_temp = cool.inlet_temp;
            lane.mdot_cp = cool.flow_rate > 0.0 ? mdot_cp_lane : 0.0;
            lane.cells.reserve(d.cols);
            if (cool.flow_dir > 0)
                for (int c = 0; c < d.cols; ++c) lane.cells.push_back(d.flat(layer_index, r, c));
            else
                for (int c = d.cols - 1; c >= 0; --c) lane.cells.push_back(d.flat(layer_index, r, c));

            if (lane.mdot_cp > 0.0) {
                assembly.add_diagonal(lane.cells.front(), lane.mdot_cp);
                model.boundary_injection[lane.cells.front()] += lane.mdot_cp * cool.inlet_temp;
                for (std::size_t s = 1; s < lane.cells.size(); ++s)
                    assembly.add_directed_coupling(lane.cells[s], lane.cells[s - 1], lane.mdot_cp);
            }
            model.lanes.push_back(std::move(lane));
        }

        ChannelInfo info;
        info.layer = layer_index;
        info.index = static_cast<int>(ch);
        info.inlet_temp = cool.inlet_temp;
        info.mdot_cp = layout.per_channel_mass_flow * cool.coolant.specific_heat;
        info.hydraulic_diameter = layout.hydraulic_diameter;
        info.h_conv = h_conv;
        info.lane_rows = rows;
        // Laminar Poiseuille estimate, informational only.
        info.pressure_drop = 32.0 * kCoolantViscosity * spec.die_width *
                             layout.channel_velocity /
                             (layout.hydraulic_diameter * layout.hydraulic_diameter);
        info.pumping_power = info.pressure_drop * (cool.flow_rate / cool.num_channels);
        model.channels.push_back(std::move(info));
    }
}

}  // namespace stacktherm
