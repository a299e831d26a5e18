#ifndef STACKTHERM_TEST_HELPERS_HPP
#define STACKTHERM_TEST_HELPERS_HPP

#include <map>
#include <memory>
#include <random>
#include <string>

#include "stacktherm/config.hpp"

namespace test_helpers {

using namespace stacktherm;

/// Resolver over an in-memory name -> content map.
inline FileResolver map_resolver(std::map<std::string, std::string> files) {
    return [files = std::move(files)](const std::string& name) -> std::string {
        auto it = files.find(name);
        if (it == files.end()) throw ConfigError("unresolved file '" + name + "'");
        return it->second;
    };
}

inline Material silicon() { return MaterialTable::builtin().lookup("silicon"); }
inline Material tim_material() { return MaterialTable::builtin().lookup("tim"); }
inline Material water() { return MaterialTable::builtin().lookup("water"); }

inline std::shared_ptr<const Floorplan> single_block_plan(double w, double h,
                                                          const std::string& name = "die") {
    Floorplan fp;
    fp.die_width = w;
    fp.die_height = h;
    fp.blocks.push_back(Block{name, w, h, 0.0, 0.0});
    return std::make_shared<Floorplan>(std::move(fp));
}

inline std::shared_ptr<const PowerTrace> constant_trace(
    const std::shared_ptr<const Floorplan>& fp, double total_watts, double interval,
    std::size_t steps) {
    PowerTrace tr;
    tr.interval = interval;
    double per_block = total_watts / fp->blocks.size();
    for (const Block& b : fp->blocks) tr.block_names.push_back(b.name);
    tr.samples.assign(steps, std::vector<double>(fp->blocks.size(), per_block));
    return std::make_shared<PowerTrace>(std::move(tr));
}

inline LayerSpec active_layer(const std::shared_ptr<const Floorplan>& fp, double thickness,
                              double watts = 1.0, const std::string& label = "core") {
    LayerSpec l;
    l.kind = LayerKind::Active;
    l.thickness = thickness;
    l.material = silicon();
    l.floorplan = fp;
    l.power = constant_trace(fp, watts, 1e-3, 1);
    l.label = label;
    return l;
}

inline LayerSpec tim_layer(double thickness = 20e-6) {
    LayerSpec l;
    l.kind = LayerKind::Tim;
    l.thickness = thickness;
    l.material = tim_material();
    l.label = "tim";
    return l;
}

inline LayerSpec microchannel_layer(double thickness, double channel_width,
                                    double wall_width, int num_channels, double flow_rate,
                                    double inlet_temp, const std::string& label = "mc") {
    LayerSpec l;
    l.kind = LayerKind::Microchannel;
    l.thickness = thickness;
    l.material = silicon();
    l.label = label;
    CoolingParams c;
    c.channel_width = channel_width;
    c.wall_width = wall_width;
    c.num_channels = num_channels;
    c.flow_rate = flow_rate;
    c.inlet_temp = inlet_temp;
    c.coolant = water();
    l.cooling = c;
    return l;
}

/// Single active die over a sink: the simplest well-posed stack.
inline StackSpec simple_stack(int rows, int cols, double die = 2e-3, double watts = 1.0) {
    StackSpec s;
    s.grid_rows = rows;
    s.grid_cols = cols;
    s.sink_resistance_top = 0.5;
    s.layers.push_back(active_layer(single_block_plan(die, die), 150e-6, watts));
    validate_stack(s);
    return s;
}

}  // namespace test_helpers

#endif
