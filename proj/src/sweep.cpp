#include "stacktherm/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <thread>

#include "stacktherm/grid.hpp"

namespace stacktherm {

std::string Candidate::ordering_string() const {
    std::string s;
    for (std::size_t i = 0; i < ordering.size(); ++i) {
        if (i) s += '|';
        s += ordering[i];
    }
    return s;
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

namespace {

unsigned long long binomial(unsigned long long n, unsigned long long k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned long long r = 1;
    for (unsigned long long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

unsigned long long multiset_permutations(const std::vector<std::string>& dies) {
    std::map<std::string, unsigned long long> mult;
    for (const std::string& d : dies) ++mult[d];
    unsigned long long count = 1;
    unsigned long long placed = 0;
    for (const auto& [name, m] : mult) {
        for (unsigned long long i = 1; i <= m; ++i) count = count * (placed + i) / i;
        placed += m;
    }
    return count;
}

unsigned long long insertions_for(const SweepSpec& spec, int k) {
    unsigned long long gaps = spec.dies.size() + 1;
    if (k == 0) return 1;
    if (spec.rule == PlacementRule::Any) return binomial(gaps + k - 1, k);
    return binomial(gaps, k);  // distinct gaps keep cooling layers apart
}

// Next multiset/combination of k gap indices in [0, gaps). `repeats`
// allows the same gap twice (PlacementRule::Any).
bool next_positions(std::vector<int>& pos, int gaps, bool repeats) {
    int k = static_cast<int>(pos.size());
    for (int i = k - 1; i >= 0; --i) {
        int limit = repeats ? gaps - 1 : gaps - (k - i);
        if (pos[i] < limit) {
            ++pos[i];
            for (int j = i + 1; j < k; ++j) pos[j] = repeats ? pos[i] : pos[j - 1] + 1;
            return true;
        }
    }
    return false;
}

std::vector<int> first_positions(int k, bool repeats) {
    std::vector<int> pos(k);
    for (int i = 0; i < k; ++i) pos[i] = repeats ? 0 : i;
    return pos;
}

}  // namespace

unsigned long long candidate_count(const SweepSpec& spec) {
    unsigned long long perms = multiset_permutations(spec.dies);
    unsigned long long total = 0;
    for (int k = spec.cooling_min; k <= spec.cooling_max; ++k) {
        unsigned long long flows = k == 0 ? 1 : spec.flow_rates.size();
        total += perms * insertions_for(spec, k) * flows;
    }
    return total;
}

std::vector<Candidate> enumerate_candidates(const SweepSpec& spec) {
    if (spec.dies.empty()) throw ConfigError("sweep: at least one die is required");
    if (spec.cooling_max > 0 && spec.flow_rates.empty())
        throw ConfigError("sweep: flow_rates must be non-empty when cooling layers are swept");

    unsigned long long count = candidate_count(spec);
    if (count > static_cast<unsigned long long>(spec.cap))
        throw ConfigError("sweep: " + std::to_string(count) +
                          " candidates exceed the cap of " + std::to_string(spec.cap) +
                          "; constrain dies, cooling_count or flow_rates");

    std::vector<Candidate> out;
    out.reserve(count);

    std::vector<std::string> order = spec.dies;
    std::sort(order.begin(), order.end());
    do {
        const int gaps = static_cast<int>(order.size()) + 1;
        for (int k = spec.cooling_min; k <= spec.cooling_max; ++k) {
            const bool repeats = spec.rule == PlacementRule::Any;
            if (!repeats && k > gaps) continue;
            std::vector<int> pos = first_positions(k, repeats);
            bool more = k >= 0;
            while (more) {
                std::vector<std::string> ordering;
                for (int die = 0; die <= static_cast<int>(order.size()); ++die) {
                    for (int p : pos)
                        if (p == die) ordering.push_back(spec.cooling_label);
                    if (die < static_cast<int>(order.size())) ordering.push_back(order[die]);
                }
                if (k == 0) {
                    Candidate c;
                    c.ordering = ordering;
                    c.flow_rate = 0.0;
                    out.push_back(std::move(c));
                } else {
                    for (double fr : spec.flow_rates) {
                        Candidate c;
                        c.ordering = ordering;
                        c.flow_rate = fr;
                        out.push_back(std::move(c));
                    }
                }
                more = k > 0 && next_positions(pos, gaps, repeats);
            }
        }
    } while (std::next_permutation(order.begin(), order.end()));

    return out;
}

// ---------------------------------------------------------------------------
// Materialization and evaluation
// ---------------------------------------------------------------------------

StackSpec materialize(const SweepSpec& spec, const Candidate& cand) {
    StackSpec stack = spec.base;
    stack.layers.clear();

    bool prev_was_die = false;
    for (const std::string& name : cand.ordering) {
        if (name == spec.cooling_label) {
            LayerSpec cool = spec.cooling_template;
            cool.label = spec.cooling_label;
            cool.cooling->flow_rate = cand.flow_rate;
            if (cool.cooling->inlet_temp == 0.0) cool.cooling->inlet_temp = stack.ambient;
            stack.layers.push_back(std::move(cool));
            prev_was_die = false;
        } else {
            if (prev_was_die) {
                LayerSpec tim = spec.tim_template;
                tim.label = "tim";
                stack.layers.push_back(std::move(tim));
            }
            auto it = spec.die_templates.find(name);
            if (it == spec.die_templates.end())
                throw ConfigError("sweep: no [die." + name + "] template");
            LayerSpec die = it->second;
            die.label = name;
            stack.layers.push_back(std::move(die));
            prev_was_die = true;
        }
    }
    validate_stack(stack);
    return stack;
}

namespace {

void evaluate_candidate(const SweepSpec& spec, const SolveSettings& settings, Candidate& c) {
    try {
        StackSpec stack = materialize(spec, c);
        ThermalGridModel model = build_grid_model(stack);
        std::vector<LayerPowerSample> rep = spec.representative == Representative::BlockMean
                                                ? representative_block_mean(stack)
                                                : representative_block_max(stack);
        std::vector<double> power = instantaneous_power_vector(
            model, std::span<const LayerPowerSample>(rep.data(), rep.size()));
        SimResult result = steady_solve(model, power, settings);
        const std::vector<double>& field = result.fields.back();

        // Objective scope: active layers; peak_core_temp restricts further
        // to dies whose template name mentions "core" (all dies when none do).
        std::vector<int> scope;
        for (std::size_t li = 0; li < stack.layers.size(); ++li) {
            if (stack.layers[li].kind != LayerKind::Active) continue;
            if (spec.objective == Objective::PeakCoreTemp &&
                stack.layers[li].label.find("core") == std::string::npos)
                continue;
            scope.push_back(static_cast<int>(li));
        }
        if (scope.empty())
            for (std::size_t li = 0; li < stack.layers.size(); ++li)
                if (stack.layers[li].kind == LayerKind::Active)
                    scope.push_back(static_cast<int>(li));

        double peak = -1e300;
        for (int li : scope)
            for (int r = 0; r < model.dims.rows; ++r)
                for (int col = 0; col < model.dims.cols; ++col)
                    peak = std::max(peak, field[model.dims.flat(li, r, col)]);
        c.objective_c = peak - 273.15;

        auto mm = block_mean_max(model, field);
        double best = -1e300;
        for (std::size_t i = 0; i < mm.size(); ++i)
            if (mm[i].second > best) {
                best = mm[i].second;
                c.peak_block = model.power_blocks[i].name;
            }
        c.residual_w = result.energy.residual;
        c.status = "ok";
    } catch (const std::exception& e) {
        c.status = std::string("failed: ") + e.what();
        c.objective_c = std::nan("");
        c.residual_w = std::nan("");
        c.peak_block = "-";
    }
}

}  // namespace

std::vector<Candidate> run_sweep(const SweepSpec& spec, const SolveSettings& settings,
                                 int threads) {
    std::vector<Candidate> cands = enumerate_candidates(spec);

    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(cands.size())));

    if (threads == 1) {
        for (Candidate& c : cands) evaluate_candidate(spec, settings, c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= cands.size()) return;
                    evaluate_candidate(spec, settings, cands[i]);
                }
            });
        for (std::thread& t : pool) t.join();
    }

    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        bool a_ok = a.status == "ok";
        bool b_ok = b.status == "ok";
        if (a_ok != b_ok) return a_ok;
        if (a_ok && a.objective_c != b.objective_c) return a.objective_c < b.objective_c;
        std::string ao = a.ordering_string();
        std::string bo = b.ordering_string();
        if (ao != bo) return ao < bo;
        return a.flow_rate < b.flow_rate;
    });
    return cands;
}

void write_ranking_csv(std::span<const Candidate> ranked, std::ostream& out) {
    out << "rank,ordering,flow_rate,objective_c,peak_block,residual_w,status\n";
    char buf[128];
    int rank = 1;
    for (const Candidate& c : ranked) {
        out << rank++ << ',' << c.ordering_string() << ',';
        std::snprintf(buf, sizeof(buf), "%.6e", c.flow_rate);
        out << buf << ',';
        if (c.status == "ok") {
            std::snprintf(buf, sizeof(buf), "%.6f", c.objective_c);
            out << buf << ',' << c.peak_block << ',';
            std::snprintf(buf, sizeof(buf), "%.6e", c.residual_w);
            out << buf;
        } else {
            out << "nan,-,nan";
        }
        out << ',' << (c.status == "ok" ? "ok" : "failed") << '\n';
    }
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::istringstream iss(text);
    std::vector<std::string> out;
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

SweepSpec parse_sweep_config(std::istream& in, const FileResolver& resolver) {
    IniDoc doc = parse_ini(in);
    MaterialTable materials = materials_with_overrides(doc);

    const IniSection* sw = doc.find("sweep");
    if (!sw) throw ConfigError("sweep config: missing [sweep] section");

    SweepSpec spec;
    if (const IniSection* s = doc.find("stack")) {
        spec.base.ambient = s->number_or("ambient", spec.base.ambient);
        if (s->has("grid_rows")) spec.base.grid_rows = static_cast<int>(s->integer("grid_rows"));
        if (s->has("grid_cols")) spec.base.grid_cols = static_cast<int>(s->integer("grid_cols"));
        spec.base.sink_resistance_top = s->resistance_or_adiabatic("sink_resistance_top");
        spec.base.boundary_bottom = s->resistance_or_adiabatic("boundary_bottom");
    }

    spec.dies = split_list(sw->require("dies").text);
    if (spec.dies.empty()) throw ConfigError(sw->line, "[sweep]: dies list is empty");

    std::string cc = sw->text_or("cooling_count", "0");
    std::size_t dots = cc.find("..");
    if (dots == std::string::npos) {
        spec.cooling_min = spec.cooling_max =
            static_cast<int>(parse_number(cc, sw->line, "cooling_count"));
    } else {
        spec.cooling_min =
            static_cast<int>(parse_number(cc.substr(0, dots), sw->line, "cooling_count"));
        spec.cooling_max =
            static_cast<int>(parse_number(cc.substr(dots + 2), sw->line, "cooling_count"));
    }
    if (spec.cooling_min < 0 || spec.cooling_max < spec.cooling_min)
        throw ConfigError(sw->line, "[sweep]: cooling_count range is invalid");

    for (const std::string& t : split_list(sw->text_or("flow_rates", "")))
        spec.flow_rates.push_back(parse_number(t, sw->line, "flow_rates"));

    std::string rule = sw->text_or("placement_rule", "any");
    if (rule == "any") spec.rule = PlacementRule::Any;
    else if (rule == "no_adjacent_cooling") spec.rule = PlacementRule::NoAdjacentCooling;
    else throw ConfigError(sw->line, "[sweep]: unknown placement_rule '" + rule + "'");

    std::string obj = sw->text_or("objective", "peak_temp");
    if (obj == "peak_temp") spec.objective = Objective::PeakTemp;
    else if (obj == "peak_core_temp") spec.objective = Objective::PeakCoreTemp;
    else throw ConfigError(sw->line, "[sweep]: unknown objective '" + obj + "'");

    std::string rep = sw->text_or("representative", "max");
    if (rep == "max") spec.representative = Representative::BlockMax;
    else if (rep == "mean") spec.representative = Representative::BlockMean;
    else throw ConfigError(sw->line, "[sweep]: unknown representative '" + rep + "'");

    spec.cap = static_cast<long>(sw->number_or("cap", 10000));

    std::vector<std::string> distinct = spec.dies;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (const std::string& name : distinct) {
        const IniSection* s = doc.find("die." + name);
        if (!s) throw ConfigError("[sweep]: die '" + name + "' has no [die." + name + "] section");
        spec.die_templates[name] =
            layer_from_section(*s, LayerKind::Active, materials, resolver, spec.base.ambient);
    }

    if (spec.dies.size() > 1) {
        const IniSection* s = doc.find("tim");
        if (!s) throw ConfigError("sweep config: [tim] template required for multi-die stacks");
        spec.tim_template =
            layer_from_section(*s, LayerKind::Tim, materials, resolver, spec.base.ambient);
    }
    if (spec.cooling_max > 0) {
        const IniSection* s = doc.find("cooling");
        if (!s) throw ConfigError("sweep config: [cooling] template required when cooling_count > 0");
        spec.cooling_template = layer_from_section(*s, LayerKind::Microchannel, materials,
                                                   resolver, spec.base.ambient);
        if (spec.flow_rates.empty())
            throw ConfigError("sweep config: flow_rates required when cooling_count > 0");
    }
    return spec;
}

SweepSpec parse_sweep_config_text(const std::string& text, const FileResolver& resolver) {
    std::istringstream iss(text);
    return parse_sweep_config(iss, resolver);
}

}  // namespace stacktherm
