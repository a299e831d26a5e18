#ifndef STACKTHERM_CONFIG_HPP
#define STACKTHERM_CONFIG_HPP

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stacktherm {

/// Thrown by every parser/validator. Message carries a line or field
/// locator when one is known ("line 12: ...", "[layer.2]: ...").
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
    ConfigError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg) {}
};

// ---------------------------------------------------------------------------
// Floorplans
// ---------------------------------------------------------------------------

/// Named rectangle on a die. All coordinates in meters, origin at the
/// lower-left die corner.
struct Block {
    std::string name;
    double width = 0.0;
    double height = 0.0;
    double left = 0.0;
    double bottom = 0.0;

    double right() const { return left + width; }
    double top() const { return bottom + height; }
    double area() const { return width * height; }
};

/// A die outline tiled (possibly with gaps) by non-overlapping blocks.
/// The outline is the bounding box of the block extents.
struct Floorplan {
    double die_width = 0.0;
    double die_height = 0.0;
    std::vector<Block> blocks;

    const Block* find(const std::string& name) const;
};

/// Rectangle overlap area used for the pairwise-disjointness check.
double block_overlap_area(const Block& a, const Block& b);

/// One block per line: `name width_m height_m left_m bottom_m`.
/// `#` comments and blank lines are ignored.
Floorplan parse_floorplan(std::istream& in);
Floorplan parse_floorplan_text(const std::string& text);

/// Emits the same line format parse_floorplan reads, with enough digits
/// that reparsing reproduces every field exactly.
std::string serialize_floorplan(const Floorplan& fp);

// ---------------------------------------------------------------------------
// Power traces
// ---------------------------------------------------------------------------

/// Per-block power samples at a fixed interval. Row t holds the watts of
/// every block (header order) during interval t.
struct PowerTrace {
    std::vector<std::string> block_names;
    double interval = 0.0;  // seconds
    std::vector<std::vector<double>> samples;

    std::size_t steps() const { return samples.size(); }
};

/// Line 1 = whitespace-separated block names, later lines = watts.
PowerTrace parse_power_trace(std::istream& in, double interval);
PowerTrace parse_power_trace_text(const std::string& text, double interval);

// ---------------------------------------------------------------------------
// Materials
// ---------------------------------------------------------------------------

/// Bulk material properties. density/specific_heat are only meaningful
/// for coolants and stay zero otherwise.
struct Material {
    std::string name;
    double conductivity = 0.0;             // W/(m K)
    double volumetric_heat_capacity = 0.0; // J/(m^3 K)
    double density = 0.0;                  // kg/m^3 (coolants)
    double specific_heat = 0.0;            // J/(kg K) (coolants)
};

class MaterialTable {
public:
    /// Engineering defaults: silicon, tim, copper, water. Config sections
    /// may override or extend them.
    static MaterialTable builtin();

    void add(const Material& m);                 // insert or replace
    const Material& lookup(const std::string& name) const;  // throws ConfigError
    bool contains(const std::string& name) const;

private:
    std::map<std::string, Material> table_;
};

// ---------------------------------------------------------------------------
// Stack specification
// ---------------------------------------------------------------------------

enum class LayerKind { Active, Tim, Microchannel };

const char* to_string(LayerKind k);

/// Microchannel layer parameters. Channels run along x and repeat along y;
/// the wall/channel pattern is centered on the die.
struct CoolingParams {
    double channel_width = 0.0;  // m, > 0
    double wall_width = 0.0;     // m, >= 0 (0 = full-width channel patterns)
    int num_channels = 1;
    double flow_rate = 0.0;      // m^3/s total, split evenly across channels
    double inlet_temp = 0.0;     // K
    Material coolant;
    double nusselt = 3.66;       // laminar fully developed default
    int flow_dir = +1;           // +1 = +x, -1 = -x
};

struct LayerSpec {
    LayerKind kind = LayerKind::Active;
    double thickness = 0.0;  // m
    Material material;
    std::shared_ptr<const Floorplan> floorplan;  // required for active
    std::shared_ptr<const PowerTrace> power;     // active only
    std::optional<CoolingParams> cooling;        // microchannel only
    std::string label;  // config section name, used in reports
};

/// Optional [dtm] section; consumed by the solver's throttle policy.
struct DtmConfig {
    double trigger_temp = 358.15;   // K
    double release_temp = 353.15;   // K
    double throttle_factor = 0.7;
    double control_interval = 0.0;  // 0 = one control step per trace interval
};

/// The unified stack description: ordered layers (index 0 = bottom),
/// boundary model, and grid resolution.
struct StackSpec {
    std::vector<LayerSpec> layers;
    double ambient = 318.15;  // K
    std::optional<double> sink_resistance_top;  // K/W; nullopt = adiabatic
    std::optional<double> boundary_bottom;      // K/W; nullopt = adiabatic
    int grid_rows = 64;
    int grid_cols = 64;
    std::optional<DtmConfig> dtm;

    // Shared die outline (all layer floorplans agree within 1e-9 m).
    double die_width = 0.0;
    double die_height = 0.0;
};

/// Fetches the content of a file referenced by name from a config
/// (floorplans, power traces). Throws ConfigError when unresolvable.
using FileResolver = std::function<std::string(const std::string&)>;

/// Resolver rooted at a directory on disk.
FileResolver directory_resolver(const std::string& dir);

/// Parse the unified sectioned key-value config and link every referenced
/// floorplan/trace through `resolver`. All StackSpec invariants are
/// checked; partially constructed specs never escape.
StackSpec parse_stack_config(std::istream& in, const FileResolver& resolver);
StackSpec parse_stack_config_text(const std::string& text, const FileResolver& resolver);

/// Re-validates an already-built spec (used by sweep materialization).
void validate_stack(StackSpec& spec);

// ---------------------------------------------------------------------------
// Sectioned key-value reader (shared with the sweep config)
// ---------------------------------------------------------------------------

struct IniValue {
    std::string text;
    int line = 0;
};

struct IniSection {
    std::string name;
    int line = 0;
    std::map<std::string, IniValue> entries;

    bool has(const std::string& key) const { return entries.count(key) != 0; }
    const IniValue& require(const std::string& key) const;  // throws ConfigError
    double number(const std::string& key) const;
    double number_or(const std::string& key, double fallback) const;
    long integer(const std::string& key) const;
    std::string text_or(const std::string& key, const std::string& fallback) const;
    /// `adiabatic` -> nullopt, otherwise a positive resistance.
    std::optional<double> resistance_or_adiabatic(const std::string& key) const;
};

struct IniDoc {
    std::vector<IniSection> sections;  // file order
    const IniSection* find(const std::string& name) const;
};

IniDoc parse_ini(std::istream& in);

double parse_number(const std::string& text, int line, const std::string& what);

/// Builds one LayerSpec from a config section (also used for sweep templates,
/// whose sections carry no explicit `kind` key).
LayerSpec layer_from_section(const IniSection& s, LayerKind kind,
                             const MaterialTable& materials,
                             const FileResolver& resolver, double default_inlet);

/// Builtin materials plus every [material.NAME] override in the document.
MaterialTable materials_with_overrides(const IniDoc& doc);

}  // namespace stacktherm

#endif
