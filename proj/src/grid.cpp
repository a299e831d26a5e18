#include "stacktherm/grid.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "stacktherm/microchannel.hpp"

namespace stacktherm {

// ---------------------------------------------------------------------------
// Sparse matrix
// ---------------------------------------------------------------------------

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
    for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += val[k] * x[col[k]];
        y[r] = acc;
    }
}

double CsrMatrix::entry(int r, int c) const {
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        if (col[k] == c) return val[k];
    return 0.0;
}

double CsrMatrix::diagonal(int r) const { return entry(r, r); }

void MatrixAssembly::add_coupling(int a, int b, double g) {
    assert(a != b);
    off_.emplace_back(a, b, g);
    off_.emplace_back(b, a, g);
}

void MatrixAssembly::add_directed_coupling(int cell, int upstream, double g) {
    assert(cell != upstream);
    off_.emplace_back(cell, upstream, g);
}

void MatrixAssembly::add_diagonal(int cell, double g) { diag_extra_[cell] += g; }

CsrMatrix MatrixAssembly::finalize() const {
    std::vector<std::tuple<int, int, double>> trip = off_;
    std::sort(trip.begin(), trip.end(),
              [](const auto& a, const auto& b) {
                  if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
                  return std::get<1>(a) < std::get<1>(b);
              });

    CsrMatrix m;
    m.n = n_;
    m.row_ptr.assign(n_ + 1, 0);

    // Merge duplicate (row, col) couplings, count entries per row (+1 diagonal).
    std::vector<std::tuple<int, int, double>> merged;
    merged.reserve(trip.size());
    for (const auto& t : trip) {
        if (!merged.empty() && std::get<0>(merged.back()) == std::get<0>(t) &&
            std::get<1>(merged.back()) == std::get<1>(t)) {
            std::get<2>(merged.back()) += std::get<2>(t);
        } else {
            merged.push_back(t);
        }
    }
    for (const auto& t : merged) m.row_ptr[std::get<0>(t) + 1]++;
    for (int r = 0; r < n_; ++r) m.row_ptr[r + 1]++;  // diagonal slot
    for (int r = 0; r < n_; ++r) m.row_ptr[r + 1] += m.row_ptr[r];

    m.col.assign(m.row_ptr[n_], 0);
    m.val.assign(m.row_ptr[n_], 0.0);

    std::size_t k = 0;
    for (int r = 0; r < n_; ++r) {
        int at = m.row_ptr[r];
        int diag_slot = -1;
        double gsum = 0.0;
        while (k < merged.size() && std::get<0>(merged[k]) == r) {
            int c = std::get<1>(merged[k]);
            if (diag_slot < 0 && c > r) {
                diag_slot = at;
                m.col[at++] = r;
            }
            m.col[at] = c;
            m.val[at] = -std::get<2>(merged[k]);
            gsum += std::get<2>(merged[k]);  // accumulated in sorted-column order
            ++at;
            ++k;
        }
        if (diag_slot < 0) {
            diag_slot = at;
            m.col[at++] = r;
        }
        m.val[diag_slot] = gsum + diag_extra_[r];
        assert(at == m.row_ptr[r + 1]);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

bool ThermalGridModel::has_flow() const {
    for (const ChannelLane& l : lanes)
        if (l.mdot_cp > 0.0) return true;
    return false;
}

double ThermalGridModel::total_boundary_conductance() const {
    double s = 0.0;
    for (double g : boundary_conductance) s += g;
    return s;
}

namespace {

// Two half-cells in series along the coupling direction.
double series_conductance(double face_area, double half_len_a, double k_a,
                          double half_len_b, double k_b) {
    return face_area / (half_len_a / k_a + half_len_b / k_b);
}

}  // namespace

ThermalGridModel build_grid_model(const StackSpec& spec) {
    ThermalGridModel model;
    model.dims = GridDims{static_cast<int>(spec.layers.size()), spec.grid_rows, spec.grid_cols};
    const GridDims& d = model.dims;
    const int n = d.cells();

    model.ambient = spec.ambient;
    model.cell_w = spec.die_width / d.cols;
    model.cell_h = spec.die_height / d.rows;
    model.capacitance.assign(n, 0.0);
    model.boundary_injection.assign(n, 0.0);
    model.boundary_conductance.assign(n, 0.0);
    model.fluid_tag.assign(n, 0);
    for (const LayerSpec& l : spec.layers) {
        model.layer_thickness.push_back(l.thickness);
        model.layer_kinds.push_back(l.kind);
        model.layer_labels.push_back(l.label);
    }
    for (int li = 0; li < d.layers; ++li)
        if (spec.layers[li].kind == LayerKind::Active) model.active_layers.push_back(li);

    // Channel layouts first so conduction can skip fluid cells.
    std::vector<ChannelLayout> layouts;
    for (int li = 0; li < d.layers; ++li) {
        if (spec.layers[li].kind != LayerKind::Microchannel) continue;
        ChannelLayout layout =
            layout_channels(spec.layers[li], d, spec.die_width, spec.die_height, li);
        for (int r : layout.fluid_rows)
            for (int c = 0; c < d.cols; ++c) model.fluid_tag[d.flat(li, r, c)] = 1;
        layouts.push_back(std::move(layout));
    }

    MatrixAssembly assembly(n);
    const double w = model.cell_w;
    const double h = model.cell_h;

    for (int li = 0; li < d.layers; ++li) {
        const LayerSpec& layer = spec.layers[li];
        const double t = layer.thickness;
        const double k = layer.material.conductivity;
        const double cell_volume = w * h * t;

        for (int r = 0; r < d.rows; ++r) {
            for (int c = 0; c < d.cols; ++c) {
                const int i = d.flat(li, r, c);
                const bool fluid = model.fluid_tag[i];

                if (!fluid) model.capacitance[i] = layer.material.volumetric_heat_capacity * cell_volume;

                // Lateral conduction; pairs touching fluid are contributed
                // by the microchannel pass.
                if (c + 1 < d.cols) {
                    int j = d.flat(li, r, c + 1);
                    if (!fluid && !model.fluid_tag[j])
                        assembly.add_coupling(i, j, series_conductance(h * t, w / 2, k, w / 2, k));
                }
                if (r + 1 < d.rows) {
                    int j = d.flat(li, r + 1, c);
                    if (!fluid && !model.fluid_tag[j])
                        assembly.add_coupling(i, j, series_conductance(w * t, h / 2, k, h / 2, k));
                }

                // Vertical conduction to the layer above.
                if (li + 1 < d.layers) {
                    int j = d.flat(li + 1, r, c);
                    if (!fluid && !model.fluid_tag[j]) {
                        const LayerSpec& up = spec.layers[li + 1];
                        assembly.add_coupling(
                            i, j,
                            series_conductance(w * h, t / 2, k, up.thickness / 2,
                                               up.material.conductivity));
                    }
                }

                // Boundary couplings to ambient (solid cells; fluid cells get
                // a film path in the microchannel pass).
                if (!fluid && li == d.layers - 1 && spec.sink_resistance_top) {
                    double r_cell = *spec.sink_resistance_top * d.rows * d.cols +
                                    t / (2.0 * k * w * h);
                    double g = 1.0 / r_cell;
                    assembly.add_diagonal(i, g);
                    model.boundary_injection[i] += g * spec.ambient;
                    model.boundary_conductance[i] += g;
                }
                if (!fluid && li == 0 && spec.boundary_bottom) {
                    double r_cell = *spec.boundary_bottom * d.rows * d.cols +
                                    t / (2.0 * k * w * h);
                    double g = 1.0 / r_cell;
                    assembly.add_diagonal(i, g);
                    model.boundary_injection[i] += g * spec.ambient;
                    model.boundary_conductance[i] += g;
                }
            }
        }
    }

    for (const ChannelLayout& layout : layouts)
        contribute_fluid_terms(assembly, model, spec, layout, layout.layer);

    model.conductance = assembly.finalize();
    map_power_to_grid(model, spec);
    return model;
}

// ---------------------------------------------------------------------------
// Power mapping
// ---------------------------------------------------------------------------

void map_power_to_grid(ThermalGridModel& model, const StackSpec& spec) {
    const GridDims& d = model.dims;
    model.power_blocks.clear();

    for (int li : model.active_layers) {
        const Floorplan& fp = *spec.layers[li].floorplan;
        for (const Block& b : fp.blocks) {
            PowerBlockCells pb;
            pb.layer = li;
            pb.name = b.name;
            pb.area = b.area();

            int c0 = std::max(0, static_cast<int>(std::floor(b.left / model.cell_w)));
            int c1 = std::min(d.cols - 1, static_cast<int>(std::ceil(b.right() / model.cell_w)));
            int r0 = std::max(0, static_cast<int>(std::floor(b.bottom / model.cell_h)));
            int r1 = std::min(d.rows - 1, static_cast<int>(std::ceil(b.top() / model.cell_h)));

            double total = 0.0;
            for (int r = r0; r <= r1; ++r) {
                for (int c = c0; c <= c1; ++c) {
                    double ox = std::min(b.right(), (c + 1) * model.cell_w) -
                                std::max(b.left, c * model.cell_w);
                    double oy = std::min(b.top(), (r + 1) * model.cell_h) -
                                std::max(b.bottom, r * model.cell_h);
                    if (ox <= 0.0 || oy <= 0.0) continue;
                    double frac = (ox * oy) / pb.area;
                    pb.cells.emplace_back(d.flat(li, r, c), frac);
                    total += frac;
                }
            }
            if (pb.cells.empty())
                throw std::logic_error("block '" + b.name + "' maps to no cells");
            if (std::abs(total - 1.0) > 1e-9)
                throw std::logic_error("block '" + b.name + "' fractions sum to " +
                                       std::to_string(total));
            model.power_blocks.push_back(std::move(pb));
        }
    }
}

std::vector<double> instantaneous_power_vector(const ThermalGridModel& model,
                                               std::span<const LayerPowerSample> samples) {
    std::vector<double> block_watts(model.power_blocks.size(), 0.0);
    std::vector<bool> filled(model.power_blocks.size(), false);

    for (const LayerPowerSample& s : samples) {
        for (const auto& [name, watts] : s.watts) {
            bool found = false;
            for (std::size_t i = 0; i < model.power_blocks.size(); ++i) {
                if (model.power_blocks[i].layer == s.layer &&
                    model.power_blocks[i].name == name) {
                    block_watts[i] = watts;
                    filled[i] = true;
                    found = true;
                    break;
                }
            }
            if (!found)
                throw ConfigError("power sample names unknown block '" + name +
                                  "' on layer " + std::to_string(s.layer));
        }
    }
    for (std::size_t i = 0; i < filled.size(); ++i)
        if (!filled[i])
            throw ConfigError("power sample missing block '" + model.power_blocks[i].name +
                              "' on layer " + std::to_string(model.power_blocks[i].layer));
    return power_vector_from_block_watts(model, block_watts);
}

std::vector<double> instantaneous_power_vector(const ThermalGridModel& model,
                                               const std::map<std::string, double>& watts) {
    if (model.active_layers.size() != 1)
        throw ConfigError("single-sample power vector needs exactly one active layer");
    LayerPowerSample s{model.active_layers.front(), watts};
    return instantaneous_power_vector(model, std::span<const LayerPowerSample>(&s, 1));
}

std::vector<double> power_vector_from_block_watts(const ThermalGridModel& model,
                                                  std::span<const double> block_watts) {
    assert(block_watts.size() == model.power_blocks.size());
    std::vector<double> p(model.dims.cells(), 0.0);
    for (std::size_t i = 0; i < model.power_blocks.size(); ++i)
        for (const auto& [cell, frac] : model.power_blocks[i].cells)
            p[cell] += block_watts[i] * frac;
    return p;
}

std::vector<std::pair<double, double>> block_mean_max(const ThermalGridModel& model,
                                                      std::span<const double> field) {
    std::vector<std::pair<double, double>> out;
    out.reserve(model.power_blocks.size());
    for (const PowerBlockCells& pb : model.power_blocks) {
        double mean = 0.0;
        double mx = -1e300;
        for (const auto& [cell, frac] : pb.cells) {
            mean += frac * field[cell];
            mx = std::max(mx, field[cell]);
        }
        out.emplace_back(mean, mx);
    }
    return out;
}

}  // namespace stacktherm
