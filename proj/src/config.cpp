#include "stacktherm/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

namespace stacktherm {

namespace {

constexpr double kOverlapTolerance = 1e-12;   // m^2
constexpr double kOutlineTolerance = 1e-9;    // m

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_comment_or_blank(const std::string& line) {
    std::string t = trim(line);
    return t.empty() || t[0] == '#';
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream iss(line);
    std::vector<std::string> out;
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

double parse_number(const std::string& text, int line, const std::string& what) {
    const char* begin = text.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v))
        throw ConfigError(line, what + ": not a finite number: '" + text + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Floorplans
// ---------------------------------------------------------------------------

const Block* Floorplan::find(const std::string& name) const {
    for (const Block& b : blocks)
        if (b.name == name) return &b;
    return nullptr;
}

double block_overlap_area(const Block& a, const Block& b) {
    double ox = std::min(a.right(), b.right()) - std::max(a.left, b.left);
    double oy = std::min(a.top(), b.top()) - std::max(a.bottom, b.bottom);
    if (ox <= 0.0 || oy <= 0.0) return 0.0;
    return ox * oy;
}

namespace {

// Sort-by-left scan; the O(n^2) pair loop in the tests is the independent check.
void check_overlaps(const std::vector<Block>& blocks) {
    std::vector<const Block*> order;
    order.reserve(blocks.size());
    for (const Block& b : blocks) order.push_back(&b);
    std::sort(order.begin(), order.end(),
              [](const Block* a, const Block* b) { return a->left < b->left; });
    for (std::size_t i = 0; i < order.size(); ++i) {
        for (std::size_t j = i + 1; j < order.size(); ++j) {
            if (order[j]->left >= order[i]->right()) break;  // no x overlap beyond here
            double area = block_overlap_area(*order[i], *order[j]);
            if (area > kOverlapTolerance)
                throw ConfigError("floorplan: blocks '" + order[i]->name + "' and '" +
                                  order[j]->name + "' overlap (area " +
                                  std::to_string(area) + " m^2)");
        }
    }
}

}  // namespace

Floorplan parse_floorplan(std::istream& in) {
    Floorplan fp;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_comment_or_blank(line)) continue;
        std::vector<std::string> tok = split_ws(line);
        if (tok.size() != 5)
            throw ConfigError(lineno, "floorplan: expected 'name width height left bottom', got " +
                              std::to_string(tok.size()) + " fields");
        Block b;
        b.name = tok[0];
        b.width = parse_number(tok[1], lineno, "width");
        b.height = parse_number(tok[2], lineno, "height");
        b.left = parse_number(tok[3], lineno, "left");
        b.bottom = parse_number(tok[4], lineno, "bottom");
        if (b.width <= 0.0 || b.height <= 0.0)
            throw ConfigError(lineno, "floorplan: block '" + b.name + "' has non-positive dimension");
        if (b.left < 0.0 || b.bottom < 0.0)
            throw ConfigError(lineno, "floorplan: block '" + b.name + "' has negative position");
        for (const Block& prev : fp.blocks)
            if (prev.name == b.name)
                throw ConfigError(lineno, "floorplan: duplicate block name '" + b.name + "'");
        fp.blocks.push_back(std::move(b));
    }
    if (fp.blocks.empty()) throw ConfigError("floorplan: no blocks");
    check_overlaps(fp.blocks);
    for (const Block& b : fp.blocks) {
        fp.die_width = std::max(fp.die_width, b.right());
        fp.die_height = std::max(fp.die_height, b.top());
    }
    return fp;
}

Floorplan parse_floorplan_text(const std::string& text) {
    std::istringstream iss(text);
    return parse_floorplan(iss);
}

std::string serialize_floorplan(const Floorplan& fp) {
    std::string out;
    char buf[256];
    for (const Block& b : fp.blocks) {
        std::snprintf(buf, sizeof(buf), "%s %.17g %.17g %.17g %.17g\n",
                      b.name.c_str(), b.width, b.height, b.left, b.bottom);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Power traces
// ---------------------------------------------------------------------------

PowerTrace parse_power_trace(std::istream& in, double interval) {
    if (!(interval > 0.0)) throw ConfigError("power trace: interval must be positive");
    PowerTrace tr;
    tr.interval = interval;
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_comment_or_blank(line)) continue;
        std::vector<std::string> tok = split_ws(line);
        if (!header_seen) {
            tr.block_names = tok;
            for (std::size_t i = 0; i < tr.block_names.size(); ++i)
                for (std::size_t j = i + 1; j < tr.block_names.size(); ++j)
                    if (tr.block_names[i] == tr.block_names[j])
                        throw ConfigError(lineno, "power trace: duplicate block name '" +
                                          tr.block_names[i] + "'");
            header_seen = true;
            continue;
        }
        if (tok.size() != tr.block_names.size())
            throw ConfigError(lineno, "power trace: row has " + std::to_string(tok.size()) +
                              " values, header names " + std::to_string(tr.block_names.size()) +
                              " blocks");
        std::vector<double> row(tok.size());
        for (std::size_t i = 0; i < tok.size(); ++i) {
            row[i] = parse_number(tok[i], lineno, "power");
            if (row[i] < 0.0)
                throw ConfigError(lineno, "power trace: negative power for block '" +
                                  tr.block_names[i] + "'");
        }
        tr.samples.push_back(std::move(row));
    }
    if (!header_seen) throw ConfigError("power trace: missing header line");
    if (tr.samples.empty()) throw ConfigError("power trace: no samples");
    return tr;
}

PowerTrace parse_power_trace_text(const std::string& text, double interval) {
    std::istringstream iss(text);
    return parse_power_trace(iss, interval);
}

// ---------------------------------------------------------------------------
// Materials
// ---------------------------------------------------------------------------

MaterialTable MaterialTable::builtin() {
    MaterialTable t;
    t.add({"silicon", 130.0, 1.75e6, 0.0, 0.0});
    t.add({"tim", 4.0, 4.0e6, 0.0, 0.0});
    t.add({"copper", 400.0, 3.5e6, 0.0, 0.0});
    t.add({"water", 0.6, 998.0 * 4184.0, 998.0, 4184.0});
    return t;
}

void MaterialTable::add(const Material& m) {
    if (m.name.empty()) throw ConfigError("material without a name");
    if (!(m.conductivity > 0.0) || !std::isfinite(m.conductivity))
        throw ConfigError("material '" + m.name + "': conductivity must be finite and positive");
    if (!(m.volumetric_heat_capacity > 0.0) || !std::isfinite(m.volumetric_heat_capacity))
        throw ConfigError("material '" + m.name +
                          "': volumetric_heat_capacity must be finite and positive");
    table_[m.name] = m;
}

const Material& MaterialTable::lookup(const std::string& name) const {
    auto it = table_.find(name);
    if (it == table_.end()) throw ConfigError("unknown material '" + name + "'");
    return it->second;
}

bool MaterialTable::contains(const std::string& name) const {
    return table_.count(name) != 0;
}

// ---------------------------------------------------------------------------
// Sectioned key-value reader
// ---------------------------------------------------------------------------

const IniValue& IniSection::require(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end())
        throw ConfigError(line, "[" + name + "]: missing required key '" + key + "'");
    return it->second;
}

double IniSection::number(const std::string& key) const {
    const IniValue& v = require(key);
    return parse_number(v.text, v.line, "[" + name + "] " + key);
}

double IniSection::number_or(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return number(key);
}

long IniSection::integer(const std::string& key) const {
    double v = number(key);
    long n = std::lround(v);
    if (std::abs(v - static_cast<double>(n)) > 1e-9)
        throw ConfigError(require(key).line, "[" + name + "] " + key + ": expected an integer");
    return n;
}

std::string IniSection::text_or(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    return entries.at(key).text;
}

std::optional<double> IniSection::resistance_or_adiabatic(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    const IniValue& v = entries.at(key);
    if (v.text == "adiabatic") return std::nullopt;
    double r = parse_number(v.text, v.line, "[" + name + "] " + key);
    if (!(r > 0.0))
        throw ConfigError(v.line, "[" + name + "] " + key + ": resistance must be positive");
    return r;
}

IniDoc parse_ini(std::istream& in) {
    IniDoc doc;
    std::string line;
    int lineno = 0;
    IniSection* current = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        if (is_comment_or_blank(line)) continue;
        std::string t = trim(line);
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(lineno, "unterminated section header");
            std::string name = trim(t.substr(1, t.size() - 2));
            if (name.empty()) throw ConfigError(lineno, "empty section name");
            if (doc.find(name))
                throw ConfigError(lineno, "duplicate section [" + name + "]");
            doc.sections.push_back(IniSection{name, lineno, {}});
            current = &doc.sections.back();
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(lineno, "expected 'key = value' or '[section]'");
        if (!current)
            throw ConfigError(lineno, "key/value before any section header");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(lineno, "empty key");
        if (current->entries.count(key))
            throw ConfigError(lineno, "duplicate key '" + key + "' in [" + current->name + "]");
        current->entries[key] = IniValue{value, lineno};
    }
    return doc;
}

const IniSection* IniDoc::find(const std::string& name) const {
    for (const IniSection& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Stack config
// ---------------------------------------------------------------------------

const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Active: return "active";
        case LayerKind::Tim: return "tim";
        case LayerKind::Microchannel: return "microchannel";
    }
    return "?";
}

FileResolver directory_resolver(const std::string& dir) {
    return [dir](const std::string& name) -> std::string {
        std::string path = dir.empty() ? name : dir + "/" + name;
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open referenced file '" + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
}

MaterialTable materials_with_overrides(const IniDoc& doc) {
    MaterialTable table = MaterialTable::builtin();
    for (const IniSection& s : doc.sections) {
        if (s.name.rfind("material.", 0) != 0) continue;
        std::string name = s.name.substr(9);
        Material m;
        if (table.contains(name)) m = table.lookup(name);  // override on top of defaults
        m.name = name;
        if (s.has("conductivity")) m.conductivity = s.number("conductivity");
        if (s.has("volumetric_heat_capacity"))
            m.volumetric_heat_capacity = s.number("volumetric_heat_capacity");
        if (s.has("density")) m.density = s.number("density");
        if (s.has("specific_heat")) m.specific_heat = s.number("specific_heat");
        if (m.density > 0.0 && m.specific_heat > 0.0 && !s.has("volumetric_heat_capacity"))
            m.volumetric_heat_capacity = m.density * m.specific_heat;
        table.add(m);
    }
    return table;
}

namespace {

LayerKind parse_kind(const IniSection& s) {
    std::string k = s.require("kind").text;
    if (k == "active") return LayerKind::Active;
    if (k == "tim") return LayerKind::Tim;
    if (k == "microchannel") return LayerKind::Microchannel;
    throw ConfigError(s.require("kind").line,
                      "[" + s.name + "]: unknown layer kind '" + k + "'");
}

void reject_keys(const IniSection& s, std::initializer_list<const char*> keys,
                 const char* why) {
    for (const char* k : keys)
        if (s.has(k))
            throw ConfigError(s.entries.at(k).line,
                              "[" + s.name + "]: key '" + std::string(k) + "' " + why);
}

}  // namespace

// Shared by parse_stack_config and the sweep template reader.
LayerSpec layer_from_section(const IniSection& s, LayerKind kind,
                             const MaterialTable& materials,
                             const FileResolver& resolver, double default_inlet) {
    LayerSpec layer;
    layer.kind = kind;
    layer.label = s.name;
    layer.thickness = s.number("thickness");
    if (!(layer.thickness > 0.0))
        throw ConfigError(s.line, "[" + s.name + "]: thickness must be positive");
    layer.material = materials.lookup(s.require("material").text);

    if (s.has("floorplan")) {
        std::string ref = s.entries.at("floorplan").text;
        try {
            layer.floorplan = std::make_shared<Floorplan>(parse_floorplan_text(resolver(ref)));
        } catch (const ConfigError& e) {
            throw ConfigError("[" + s.name + "] floorplan '" + ref + "': " + e.what());
        }
    }

    if (kind == LayerKind::Active) {
        reject_keys(s, {"channel_width", "wall_width", "num_channels", "flow_rate",
                        "inlet_temp", "coolant", "nusselt", "flow_dir"},
                    "is only valid on microchannel layers");
        if (!layer.floorplan)
            throw ConfigError(s.line, "[" + s.name + "]: active layer requires 'floorplan'");
        std::string ref = s.text_or("power", "");
        if (ref.empty())
            throw ConfigError(s.line, "[" + s.name + "]: active layer requires 'power'");
        double interval = s.number("interval");
        try {
            layer.power = std::make_shared<PowerTrace>(
                parse_power_trace_text(resolver(ref), interval));
        } catch (const ConfigError& e) {
            throw ConfigError("[" + s.name + "] power '" + ref + "': " + e.what());
        }
        for (const std::string& bn : layer.power->block_names)
            if (!layer.floorplan->find(bn))
                throw ConfigError("[" + s.name + "]: trace block '" + bn +
                                  "' not in floorplan");
        for (const Block& b : layer.floorplan->blocks) {
            bool traced = std::find(layer.power->block_names.begin(),
                                    layer.power->block_names.end(),
                                    b.name) != layer.power->block_names.end();
            if (!traced)
                throw ConfigError("[" + s.name + "]: floorplan block '" + b.name +
                                  "' missing from power trace");
        }
    } else if (kind == LayerKind::Microchannel) {
        reject_keys(s, {"power", "interval"}, "is only valid on active layers");
        CoolingParams c;
        c.channel_width = s.number("channel_width");
        if (!(c.channel_width > 0.0))
            throw ConfigError(s.line, "[" + s.name + "]: channel_width must be positive");
        c.wall_width = s.number("wall_width");
        if (c.wall_width < 0.0)
            throw ConfigError(s.line, "[" + s.name + "]: wall_width must be non-negative");
        c.num_channels = static_cast<int>(s.integer("num_channels"));
        if (c.num_channels < 1)
            throw ConfigError(s.line, "[" + s.name + "]: num_channels must be >= 1");
        c.flow_rate = s.number_or("flow_rate", 0.0);
        if (c.flow_rate < 0.0)
            throw ConfigError(s.line, "[" + s.name + "]: flow_rate must be non-negative");
        c.inlet_temp = s.number_or("inlet_temp", default_inlet);
        c.coolant = materials.lookup(s.text_or("coolant", "water"));
        if (!(c.coolant.density > 0.0) || !(c.coolant.specific_heat > 0.0))
            throw ConfigError(s.line, "[" + s.name + "]: coolant '" + c.coolant.name +
                              "' needs density and specific_heat");
        c.nusselt = s.number_or("nusselt", 3.66);
        if (!(c.nusselt > 0.0))
            throw ConfigError(s.line, "[" + s.name + "]: nusselt must be positive");
        std::string dir = s.text_or("flow_dir", "+x");
        if (dir == "+x") c.flow_dir = +1;
        else if (dir == "-x") c.flow_dir = -1;
        else throw ConfigError(s.line, "[" + s.name + "]: flow_dir must be '+x' or '-x'");
        layer.cooling = c;
    } else {
        reject_keys(s, {"power", "interval", "channel_width", "wall_width", "num_channels",
                        "flow_rate", "inlet_temp", "coolant", "nusselt", "flow_dir"},
                    "is not valid on tim layers");
    }
    return layer;
}

void validate_stack(StackSpec& spec) {
    if (spec.layers.empty()) throw ConfigError("stack: no layers");
    if (spec.grid_rows < 1 || spec.grid_cols < 1)
        throw ConfigError("stack: grid_rows and grid_cols must be >= 1");
    if (!std::isfinite(spec.ambient)) throw ConfigError("stack: ambient must be finite");

    // One die outline for every layer that has a floorplan.
    spec.die_width = 0.0;
    spec.die_height = 0.0;
    for (const LayerSpec& l : spec.layers) {
        if (!l.floorplan) continue;
        if (spec.die_width == 0.0) {
            spec.die_width = l.floorplan->die_width;
            spec.die_height = l.floorplan->die_height;
        } else if (std::abs(l.floorplan->die_width - spec.die_width) > kOutlineTolerance ||
                   std::abs(l.floorplan->die_height - spec.die_height) > kOutlineTolerance) {
            throw ConfigError("[" + l.label + "]: die outline " +
                              std::to_string(l.floorplan->die_width) + " x " +
                              std::to_string(l.floorplan->die_height) +
                              " does not match the stack outline");
        }
    }
    if (spec.die_width <= 0.0)
        throw ConfigError("stack: at least one layer must carry a floorplan to fix the die outline");

    bool has_heat_path = spec.sink_resistance_top.has_value() || spec.boundary_bottom.has_value();
    for (const LayerSpec& l : spec.layers) {
        if (l.kind != LayerKind::Microchannel) continue;
        const CoolingParams& c = *l.cooling;
        double needed = c.num_channels * c.channel_width + (c.num_channels + 1) * c.wall_width;
        if (needed > spec.die_height + kOutlineTolerance)
            throw ConfigError("[" + l.label + "]: channel pattern needs " +
                              std::to_string(needed) + " m but the die is only " +
                              std::to_string(spec.die_height) + " m tall");
        if (c.flow_rate > 0.0) has_heat_path = true;
    }
    if (!has_heat_path)
        throw ConfigError("stack: every boundary is adiabatic and no coolant flows; "
                          "steady state is ill-posed");

    // Transient stepping requires mutually consistent traces.
    const PowerTrace* first = nullptr;
    for (const LayerSpec& l : spec.layers) {
        if (l.kind != LayerKind::Active) continue;
        if (!first) { first = l.power.get(); continue; }
        if (std::abs(l.power->interval - first->interval) > 1e-15)
            throw ConfigError("[" + l.label + "]: trace interval differs from other layers");
        if (l.power->steps() != first->steps())
            throw ConfigError("[" + l.label + "]: trace length differs from other layers");
    }
}

StackSpec parse_stack_config(std::istream& in, const FileResolver& resolver) {
    IniDoc doc = parse_ini(in);
    MaterialTable materials = materials_with_overrides(doc);

    StackSpec spec;
    if (const IniSection* s = doc.find("stack")) {
        spec.ambient = s->number_or("ambient", spec.ambient);
        if (s->has("grid_rows")) spec.grid_rows = static_cast<int>(s->integer("grid_rows"));
        if (s->has("grid_cols")) spec.grid_cols = static_cast<int>(s->integer("grid_cols"));
        spec.sink_resistance_top = s->resistance_or_adiabatic("sink_resistance_top");
        spec.boundary_bottom = s->resistance_or_adiabatic("boundary_bottom");
    }

    if (const IniSection* s = doc.find("dtm")) {
        DtmConfig d;
        d.trigger_temp = s->number_or("trigger_temp", d.trigger_temp);
        d.release_temp = s->number_or("release_temp", d.release_temp);
        d.throttle_factor = s->number_or("throttle_factor", d.throttle_factor);
        d.control_interval = s->number_or("control_interval", d.control_interval);
        if (!(d.release_temp < d.trigger_temp))
            throw ConfigError(s->line, "[dtm]: release_temp must be below trigger_temp");
        if (!(d.throttle_factor > 0.0 && d.throttle_factor <= 1.0))
            throw ConfigError(s->line, "[dtm]: throttle_factor must be in (0, 1]");
        spec.dtm = d;
    }

    // [layer.N], N contiguous from 0 (bottom).
    for (const IniSection& any : doc.sections) {
        if (any.name.rfind("layer.", 0) != 0) continue;
        std::string suffix = any.name.substr(6);
        if (suffix.empty() || suffix.find_first_not_of("0123456789") != std::string::npos)
            throw ConfigError(any.line, "[" + any.name + "]: layer index must be a number");
    }
    for (int n = 0;; ++n) {
        const IniSection* s = doc.find("layer." + std::to_string(n));
        if (!s) {
            for (const IniSection& any : doc.sections)
                if (any.name.rfind("layer.", 0) == 0 && std::stol(any.name.substr(6)) >= n)
                    throw ConfigError(any.line, "[" + any.name +
                                      "]: layer indices must be contiguous from 0");
            break;
        }
        spec.layers.push_back(
            layer_from_section(*s, parse_kind(*s), materials, resolver, spec.ambient));
    }

    validate_stack(spec);
    return spec;
}

StackSpec parse_stack_config_text(const std::string& text, const FileResolver& resolver) {
    std::istringstream iss(text);
    return parse_stack_config(iss, resolver);
}

}  // namespace stacktherm
