#ifndef STACKTHERM_SWEEP_HPP
#define STACKTHERM_SWEEP_HPP

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stacktherm/config.hpp"
#include "stacktherm/solver.hpp"

namespace stacktherm {

enum class PlacementRule { Any, NoAdjacentCooling };
enum class Objective { PeakTemp, PeakCoreTemp };
enum class Representative { BlockMax, BlockMean };

/// Design space: orderings of a die multiset, cooling-layer insertions,
/// and injection rates, evaluated against a shared base stack setup.
struct SweepSpec {
    std::vector<std::string> dies;  // multiset, as listed in the config
    std::map<std::string, LayerSpec> die_templates;
    LayerSpec tim_template;
    LayerSpec cooling_template;
    std::string cooling_label = "cool";
    int cooling_min = 0;
    int cooling_max = 0;
    std::vector<double> flow_rates;
    PlacementRule rule = PlacementRule::Any;
    Objective objective = Objective::PeakTemp;
    Representative representative = Representative::BlockMax;  // worst-case screen
    long cap = 10000;
    StackSpec base;  // ambient, grid, boundaries; layers stay empty
};

struct Candidate {
    std::vector<std::string> ordering;  // die names + cooling label, bottom to top
    double flow_rate = 0.0;
    double objective_c = 0.0;
    std::string peak_block;
    double residual_w = 0.0;
    std::string status = "pending";  // ok | failed: <reason>

    std::string ordering_string() const;
};

/// Closed-form candidate count: multiset permutations x cooling
/// insertions x flow rates (a single entry when no cooling is inserted).
unsigned long long candidate_count(const SweepSpec& spec);

/// All candidates in deterministic lexicographic order. Throws
/// ConfigError when the count exceeds spec.cap.
std::vector<Candidate> enumerate_candidates(const SweepSpec& spec);

/// Expand one candidate into a full StackSpec (TIM auto-inserted between
/// adjacent dies; cooling layers bond directly).
StackSpec materialize(const SweepSpec& spec, const Candidate& cand);

/// Steady-solve every candidate at the per-block trace maximum and rank
/// ascending by objective (ties by ordering string, then flow rate).
/// Failed candidates keep their error in `status` and rank last.
std::vector<Candidate> run_sweep(const SweepSpec& spec, const SolveSettings& settings,
                                 int threads = 0);

/// `rank,ordering,flow_rate,objective_c,peak_block,residual_w,status`
void write_ranking_csv(std::span<const Candidate> ranked, std::ostream& out);

/// Reads the [sweep] section plus its [die.*]/[tim]/[cooling] templates
/// and the shared [stack] parameters.
SweepSpec parse_sweep_config(std::istream& in, const FileResolver& resolver);
SweepSpec parse_sweep_config_text(const std::string& text, const FileResolver& resolver);

}  // namespace stacktherm

#endif
