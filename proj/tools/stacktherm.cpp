// stacktherm: pre-RTL thermal simulation for 3D-stacked ICs with
// microfluidic cooling. Subcommands: simulate, sweep, render, validate.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stacktherm/config.hpp"
#include "stacktherm/grid.hpp"
#include "stacktherm/report.hpp"
#include "stacktherm/solver.hpp"
#include "stacktherm/sweep.hpp"

namespace fs = std::filesystem;
using namespace stacktherm;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitSolver = 2;

struct RangeOpt {
    bool set = false;
    double lo = 0.0;
    double hi = 0.0;
};

RangeOpt parse_range(const std::string& text) {
    RangeOpt r;
    if (text.empty()) return r;
    std::size_t colon = text.find(':');
    if (colon == std::string::npos)
        throw ConfigError("--range expects MIN:MAX in Celsius");
    r.lo = parse_number(text.substr(0, colon), 0, "range min");
    r.hi = parse_number(text.substr(colon + 1), 0, "range max");
    if (!(r.hi > r.lo)) throw ConfigError("--range needs MAX > MIN");
    r.set = true;
    return r;
}

std::optional<std::pair<double, double>> to_range(const RangeOpt& r) {
    if (!r.set) return std::nullopt;
    return std::make_pair(r.lo, r.hi);
}

void apply_grid_override(StackSpec& spec, const std::string& text) {
    if (text.empty()) return;
    std::size_t x = text.find('x');
    if (x == std::string::npos) throw ConfigError("--grid expects ROWSxCOLS");
    spec.grid_rows = static_cast<int>(parse_number(text.substr(0, x), 0, "grid rows"));
    spec.grid_cols = static_cast<int>(parse_number(text.substr(x + 1), 0, "grid cols"));
    if (spec.grid_rows < 1 || spec.grid_cols < 1)
        throw ConfigError("--grid needs positive dimensions");
}

StackSpec load_stack(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config '" + config_path + "'");
    fs::path dir = fs::path(config_path).parent_path();
    return parse_stack_config(in, directory_resolver(dir.string()));
}

SweepSpec load_sweep(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config '" + config_path + "'");
    fs::path dir = fs::path(config_path).parent_path();
    return parse_sweep_config(in, directory_resolver(dir.string()));
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
}

void write_field_outputs(const fs::path& dir, const ThermalGridModel& model,
                         const std::vector<double>& field,
                         std::span<const double> block_watts,
                         const std::optional<std::pair<double, double>>& range) {
    fs::create_directories(dir);
    for (int li = 0; li < model.dims.layers; ++li) {
        std::ostringstream csv;
        emit_csv_grid(model, field, li, csv);
        write_file(dir / ("layer" + std::to_string(li) + ".csv"), csv.str());
        std::ostringstream ppm;
        emit_ppm_heatmap(model, field, li, range, ppm);
        write_file(dir / ("layer" + std::to_string(li) + ".ppm"), ppm.str());
    }
    std::vector<BlockStats> stats = aggregate_blocks(model, field, block_watts);
    std::ostringstream blocks;
    write_block_stats_csv(stats, blocks);
    write_file(dir / "blocks.csv", blocks.str());
}

int threads_from_env() {
    const char* env = std::getenv("STACKTHERM_THREADS");
    if (!env) return 0;
    int v = std::atoi(env);
    return v > 0 ? v : 1;
}

void check_tolerance(double tolerance) {
    if (!(tolerance > 0.0 && tolerance < 1.0))
        throw ConfigError("--tolerance must lie in (0, 1)");
}

int cmd_simulate(const std::string& config, const std::string& mode, const std::string& out,
                 const std::string& dtm, const std::string& range_text,
                 const std::string& grid_text, double tolerance) {
    check_tolerance(tolerance);
    StackSpec spec = load_stack(config);
    apply_grid_override(spec, grid_text);
    RangeOpt range = parse_range(range_text);

    SolveSettings settings;
    settings.rel_tolerance = tolerance;
    if (dtm == "on") {
        DtmConfig d = spec.dtm.value_or(DtmConfig{});
        settings.dtm = DtmPolicy{d.trigger_temp, d.release_temp, d.throttle_factor,
                                 d.control_interval};
    }

    ThermalGridModel model = build_grid_model(spec);

    SimResult result;
    std::vector<std::vector<double>> step_watts;  // per emitted field
    if (mode == "steady") {
        std::vector<LayerPowerSample> rep = representative_block_max(spec);
        std::vector<double> block_watts(model.power_blocks.size(), 0.0);
        for (const LayerPowerSample& s : rep)
            for (std::size_t i = 0; i < model.power_blocks.size(); ++i)
                if (model.power_blocks[i].layer == s.layer)
                    block_watts[i] = s.watts.at(model.power_blocks[i].name);
        std::vector<double> power = power_vector_from_block_watts(model, block_watts);
        result = steady_solve(model, power, settings);
        step_watts.push_back(std::move(block_watts));
    } else {
        result = transient_run(model, active_traces(spec), settings);
        step_watts = result.block_watts;  // post-throttle, per interval
    }

    // Solve succeeded; only now touch the filesystem.
    fs::path out_dir(out);
    fs::create_directories(out_dir);
    std::optional<std::pair<double, double>> rng = to_range(range);
    if (mode == "steady") {
        write_field_outputs(out_dir, model, result.fields.back(), step_watts.back(), rng);
    } else {
        for (std::size_t s = 0; s < result.fields.size(); ++s) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%04zu", s);
            write_field_outputs(out_dir / name, model, result.fields[s], step_watts[s], rng);
        }
    }
    std::vector<BlockStats> stats =
        aggregate_blocks(model, result.fields.back(), step_watts.back());
    write_file(out_dir / "summary.txt", run_summary(model, result, stats));
    return 0;
}

int cmd_sweep(const std::string& config, const std::string& out, double tolerance, int maps) {
    check_tolerance(tolerance);
    SweepSpec spec = load_sweep(config);
    SolveSettings settings;
    settings.rel_tolerance = tolerance;
    std::vector<Candidate> ranked = run_sweep(spec, settings, threads_from_env());

    fs::path out_dir(out);
    fs::create_directories(out_dir);
    std::ostringstream csv;
    write_ranking_csv(ranked, csv);
    write_file(out_dir / "ranking.csv", csv.str());

    // Heat maps for the best N candidates, re-solved at the same settings.
    int written = 0;
    for (std::size_t rank = 0; rank < ranked.size() && written < maps; ++rank) {
        const Candidate& c = ranked[rank];
        if (c.status != "ok") break;  // failures sort last
        StackSpec stack = materialize(spec, c);
        ThermalGridModel model = build_grid_model(stack);
        std::vector<LayerPowerSample> rep = spec.representative == Representative::BlockMean
                                                ? representative_block_mean(stack)
                                                : representative_block_max(stack);
        std::vector<double> power = instantaneous_power_vector(
            model, std::span<const LayerPowerSample>(rep.data(), rep.size()));
        SimResult result = steady_solve(model, power, settings);
        std::vector<double> block_watts(model.power_blocks.size(), 0.0);
        for (const LayerPowerSample& sample : rep)
            for (std::size_t i = 0; i < model.power_blocks.size(); ++i)
                if (model.power_blocks[i].layer == sample.layer)
                    block_watts[i] = sample.watts.at(model.power_blocks[i].name);
        char name[32];
        std::snprintf(name, sizeof(name), "cand_%03zu", rank + 1);
        write_field_outputs(out_dir / name, model, result.fields.back(), block_watts,
                            std::nullopt);
        ++written;
    }
    return 0;
}

int cmd_render(const std::string& csv_path, const std::string& ppm_path,
               const std::string& range_text) {
    RangeOpt range = parse_range(range_text);
    std::ifstream in(csv_path);
    if (!in) throw ConfigError("cannot open csv '" + csv_path + "'");
    std::vector<std::vector<double>> plane = parse_csv_grid(in);
    std::ostringstream ppm;
    write_ppm(plane, to_range(range), ppm);
    write_file(ppm_path, ppm.str());
    return 0;
}

int cmd_validate(const std::string& config) {
    std::ifstream probe(config);
    if (!probe) throw ConfigError("cannot open config '" + config + "'");
    IniDoc doc = parse_ini(probe);
    bool has_layers = doc.find("layer.0") != nullptr;
    bool has_sweep = doc.find("sweep") != nullptr;
    if (!has_layers && !has_sweep)
        throw ConfigError("config has neither [layer.0] nor [sweep]");
    if (has_layers) load_stack(config);
    if (has_sweep) load_sweep(config);
    std::cout << "OK\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pre-RTL thermal simulator for microfluidically cooled 3D stacks"};
    app.require_subcommand(1);

    std::string config, out = "out", mode = "steady", dtm = "off";
    std::string range_text, grid_text, csv_path, ppm_path;
    double tolerance = 1e-8;
    int maps = 0;

    CLI::App* sim = app.add_subcommand("simulate", "solve one stack and write fields");
    sim->add_option("config", config, "unified stack config")->required();
    sim->add_option("--mode", mode, "steady|transient")
        ->check(CLI::IsMember({"steady", "transient"}));
    sim->add_option("--out", out, "output directory");
    sim->add_option("--dtm", dtm, "on|off (default off)")
        ->check(CLI::IsMember({"on", "off"}));
    sim->add_option("--range", range_text, "fixed colormap range MIN:MAX in Celsius");
    sim->add_option("--grid", grid_text, "grid override ROWSxCOLS");
    sim->add_option("--tolerance", tolerance, "solver relative tolerance");

    CLI::App* sw = app.add_subcommand("sweep", "rank stack orderings and cooling options");
    sw->add_option("config", config, "sweep config")->required();
    sw->add_option("--out", out, "output directory");
    sw->add_option("--tolerance", tolerance, "solver relative tolerance");
    sw->add_option("--maps", maps, "emit heat maps for the best N candidates");

    CLI::App* ren = app.add_subcommand("render", "turn an emitted CSV grid into a PPM heat map");
    ren->add_option("--csv", csv_path, "input CSV grid")->required();
    ren->add_option("--ppm", ppm_path, "output PPM path")->required();
    ren->add_option("--range", range_text, "fixed colormap range MIN:MAX in Celsius");

    CLI::App* val = app.add_subcommand("validate", "parse and validate a config");
    val->add_option("config", config, "config to check")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(config, mode, out, dtm, range_text, grid_text, tolerance);
        if (sw->parsed()) return cmd_sweep(config, out, tolerance, maps);
        if (ren->parsed()) return cmd_render(csv_path, ppm_path, range_text);
        if (val->parsed()) return cmd_validate(config);
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
