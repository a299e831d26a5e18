#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "stacktherm/grid.hpp"
#include "stacktherm/solver.hpp"
#include "stacktherm/sweep.hpp"

using namespace stacktherm;
using namespace test_helpers;

namespace {

std::string flow_key(double flow) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", flow);
    return buf;
}

SweepSpec basic_sweep(std::vector<std::string> dies, int cooling_min, int cooling_max,
                      std::vector<double> flows, PlacementRule rule = PlacementRule::Any) {
    SweepSpec spec;
    spec.dies = std::move(dies);
    spec.cooling_min = cooling_min;
    spec.cooling_max = cooling_max;
    spec.flow_rates = std::move(flows);
    spec.rule = rule;

    auto fp = single_block_plan(2e-3, 2e-3);
    std::set<std::string> distinct(spec.dies.begin(), spec.dies.end());
    double w = 1.0;
    for (const std::string& name : distinct) {
        spec.die_templates[name] = active_layer(fp, 150e-6, w, name);
        w += 1.0;
    }
    spec.tim_template = tim_layer();
    spec.cooling_template = microchannel_layer(100e-6, 500e-6, 100e-6, 3, 0.0, 318.15);
    spec.base.grid_rows = 6;
    spec.base.grid_cols = 6;
    spec.base.ambient = 318.15;
    spec.base.sink_resistance_top = 0.5;
    return spec;
}

// Brute-force duplicate-free enumeration used as the counting oracle.
std::set<std::string> oracle_orderings(const SweepSpec& spec) {
    std::set<std::string> result;
    std::vector<std::string> dies = spec.dies;
    std::sort(dies.begin(), dies.end());
    do {
        int n = static_cast<int>(dies.size());
        for (int k = spec.cooling_min; k <= spec.cooling_max; ++k) {
            // every multiset of k gaps in [0, n]
            std::vector<int> pos(k, 0);
            for (;;) {
                bool valid = true;
                if (spec.rule == PlacementRule::NoAdjacentCooling)
                    for (int i = 1; i < k; ++i)
                        if (pos[i] == pos[i - 1]) valid = false;
                bool sorted = std::is_sorted(pos.begin(), pos.end());
                if (valid && sorted) {
                    std::string key;
                    for (int die = 0; die <= n; ++die) {
                        for (int p : pos)
                            if (p == die) key += "|cool";
                        if (die < n) key += "|" + dies[die];
                    }
                    int flows = k == 0 ? 1 : static_cast<int>(spec.flow_rates.size());
                    for (int f = 0; f < flows; ++f)
                        result.insert(key + "@" + flow_key(k ? spec.flow_rates[f] : 0.0));
                }
                // odometer over gap assignments
                int i = k - 1;
                while (i >= 0 && pos[i] == n) { pos[i] = 0; --i; }
                if (i < 0) break;
                ++pos[i];
                if (k == 0) break;
            }
            if (k == 0) continue;
        }
    } while (std::next_permutation(dies.begin(), dies.end()));
    return result;
}

}  // namespace

TEST_CASE("enumerate: two distinct dies without cooling give two candidates") {
    SweepSpec spec = basic_sweep({"core", "mem"}, 0, 0, {});
    std::vector<Candidate> c = enumerate_candidates(spec);
    CHECK(c.size() == 2);
    CHECK(candidate_count(spec) == 2);
}

TEST_CASE("enumerate: duplicate dies deduplicate to multiset permutations") {
    // 3!/2! = 3 orderings of {mem, mem, core}.
    SweepSpec spec = basic_sweep({"mem", "mem", "core"}, 0, 0, {});
    std::vector<Candidate> c = enumerate_candidates(spec);
    CHECK(c.size() == 3);
    std::set<std::string> seen;
    for (const Candidate& cand : c) seen.insert(cand.ordering_string());
    CHECK(seen.size() == 3);  // duplicate-free
}

TEST_CASE("enumerate: insertions follow stars and bars") {
    // 2 orderings x 3 gap positions x 1 flow = 6 candidates.
    SweepSpec spec = basic_sweep({"core", "mem"}, 1, 1, {1e-7});
    std::vector<Candidate> c = enumerate_candidates(spec);
    CHECK(c.size() == 6);
}

TEST_CASE("enumerate: counts match the brute-force oracle on random specs") {
    std::mt19937 gen(907);
    std::uniform_int_distribution<int> extra(0, 2);
    std::uniform_int_distribution<int> kmax(0, 2);
    std::uniform_int_distribution<int> nflows(1, 3);
    std::bernoulli_distribution coin(0.5);

    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::string> dies{"core"};
        int extra_mem = extra(gen);
        for (int i = 0; i < extra_mem; ++i) dies.push_back("mem");
        if (coin(gen)) dies.push_back("gpu");
        int k = kmax(gen);
        std::vector<double> flows;
        for (int i = 0; i < nflows(gen); ++i) flows.push_back(1e-8 * (i + 1));
        PlacementRule rule = coin(gen) ? PlacementRule::Any : PlacementRule::NoAdjacentCooling;

        SweepSpec spec = basic_sweep(dies, 0, k, flows, rule);
        std::vector<Candidate> got = enumerate_candidates(spec);
        std::set<std::string> oracle = oracle_orderings(spec);
        CHECK(got.size() == oracle.size());
        CHECK(candidate_count(spec) == oracle.size());

        std::set<std::string> got_keys;
        for (const Candidate& c : got)
            got_keys.insert(c.ordering_string() + "@" + flow_key(c.flow_rate));
        CHECK(got_keys.size() == got.size());  // duplicate-free
    }
}

TEST_CASE("enumerate: cap overflow is an explicit error") {
    SweepSpec spec = basic_sweep({"a", "b", "c", "d", "e"}, 0, 2, {1e-8, 2e-8});
    spec.cap = 10;
    CHECK_THROWS_WITH_AS(enumerate_candidates(spec), doctest::Contains("cap"), ConfigError);
}

TEST_CASE("materialize: TIM goes between adjacent dies only") {
    SweepSpec spec = basic_sweep({"core", "mem"}, 0, 1, {1e-7});

    Candidate direct;
    direct.ordering = {"core", "mem"};
    StackSpec a = materialize(spec, direct);
    REQUIRE(a.layers.size() == 3);
    CHECK(a.layers[0].label == "core");
    CHECK(a.layers[1].kind == LayerKind::Tim);
    CHECK(a.layers[2].label == "mem");

    Candidate cooled;
    cooled.ordering = {"core", "cool", "mem"};
    cooled.flow_rate = 1e-7;
    StackSpec b = materialize(spec, cooled);
    REQUIRE(b.layers.size() == 3);  // no TIM around the channel layer
    CHECK(b.layers[1].kind == LayerKind::Microchannel);
    CHECK(b.layers[1].cooling->flow_rate == 1e-7);
}

TEST_CASE("run_sweep: a single candidate equals a direct simulation") {
    SweepSpec spec = basic_sweep({"core"}, 0, 0, {});
    SolveSettings st;
    st.rel_tolerance = 1e-11;
    std::vector<Candidate> ranked = run_sweep(spec, st, 1);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].status == "ok");

    Candidate direct;
    direct.ordering = {"core"};
    StackSpec stack = materialize(spec, direct);
    ThermalGridModel m = build_grid_model(stack);
    std::vector<LayerPowerSample> rep = representative_block_max(stack);
    std::vector<double> power =
        instantaneous_power_vector(m, std::span<const LayerPowerSample>(rep.data(), rep.size()));
    SimResult res = steady_solve(m, power, st);
    double peak = -1e300;
    for (double t : res.fields[0]) peak = std::max(peak, t);
    CHECK(std::abs((ranked[0].objective_c) - (peak - 273.15)) <= 1e-9);
}

TEST_CASE("run_sweep: mean representative ranks cooler than worst case") {
    SweepSpec spec = basic_sweep({"core"}, 0, 0, {});
    // Two-step trace: calm then hot; mean sits strictly below max.
    auto fp = single_block_plan(2e-3, 2e-3);
    LayerSpec die = active_layer(fp, 150e-6, 1.0, "core");
    PowerTrace tr;
    tr.interval = 1e-3;
    tr.block_names = {"die"};
    tr.samples = {{2.0}, {6.0}};
    die.power = std::make_shared<PowerTrace>(tr);
    spec.die_templates["core"] = die;

    SolveSettings st;
    st.rel_tolerance = 1e-11;
    std::vector<Candidate> worst = run_sweep(spec, st, 1);
    spec.representative = Representative::BlockMean;
    std::vector<Candidate> mean = run_sweep(spec, st, 1);
    REQUIRE(worst.size() == 1);
    REQUIRE(mean.size() == 1);
    // 6 W worst case vs 4 W mean: rises scale linearly.
    double rise_worst = worst[0].objective_c - 45.0;
    double rise_mean = mean[0].objective_c - 45.0;
    CHECK(std::abs(rise_mean / rise_worst - 4.0 / 6.0) < 1e-6);
}

TEST_CASE("run_sweep: reruns and parallel runs are byte-identical") {
    SweepSpec spec = basic_sweep({"core", "mem", "mem"}, 0, 1, {5e-8, 2e-7});
    SolveSettings st;
    st.rel_tolerance = 1e-10;

    auto csv_of = [&](int threads) {
        std::vector<Candidate> ranked = run_sweep(spec, st, threads);
        std::ostringstream out;
        write_ranking_csv(ranked, out);
        return out.str();
    };
    std::string serial_a = csv_of(1);
    std::string serial_b = csv_of(1);
    std::string parallel = csv_of(2);
    CHECK(serial_a == serial_b);
    CHECK(serial_a == parallel);
    CHECK(serial_a.rfind("rank,ordering,flow_rate,objective_c,peak_block,residual_w,status\n",
                         0) == 0);
}

TEST_CASE("run_sweep: ranking is a total ascending order with failures last") {
    SweepSpec spec = basic_sweep({"core", "mem"}, 0, 1, {5e-8});
    SolveSettings st;
    st.rel_tolerance = 1e-10;
    std::vector<Candidate> ranked = run_sweep(spec, st, 2);
    double prev = -1e300;
    bool seen_failed = false;
    for (const Candidate& c : ranked) {
        if (c.status != "ok") {
            seen_failed = true;
            continue;
        }
        CHECK(!seen_failed);  // ok candidates precede failures
        CHECK(c.objective_c >= prev);
        prev = c.objective_c;
    }
}

TEST_CASE("run_sweep: a second cooling layer helps and memory runs cooler") {
    // Hot core at the bottom, cool memory on top. The boundaries stay
    // adiabatic so the channels are the only escape path: the second
    // cooling layer then adds a parallel path without displacing one.
    SweepSpec spec = basic_sweep({"core", "mem"}, 1, 2, {2e-7});
    auto fp = single_block_plan(2e-3, 2e-3);
    spec.die_templates["core"] = active_layer(fp, 150e-6, 12.0, "core");
    spec.die_templates["mem"] = active_layer(fp, 150e-6, 1.0, "mem");
    spec.base.grid_rows = 12;
    spec.base.grid_cols = 12;
    spec.base.sink_resistance_top.reset();

    SolveSettings st;
    st.rel_tolerance = 1e-10;

    auto core_peak = [&](const Candidate& cand) {
        StackSpec stack = materialize(spec, cand);
        ThermalGridModel m = build_grid_model(stack);
        std::vector<LayerPowerSample> rep = representative_block_max(stack);
        std::vector<double> power = instantaneous_power_vector(
            m, std::span<const LayerPowerSample>(rep.data(), rep.size()));
        SimResult res = steady_solve(m, power, st);
        double core = -1e300, mem = -1e300;
        for (std::size_t li = 0; li < stack.layers.size(); ++li) {
            if (stack.layers[li].kind != LayerKind::Active) continue;
            double peak = -1e300;
            for (int r = 0; r < m.dims.rows; ++r)
                for (int c = 0; c < m.dims.cols; ++c)
                    peak = std::max(peak, res.fields[0][m.dims.flat(static_cast<int>(li), r, c)]);
            if (stack.layers[li].label == "core") core = peak;
            else mem = peak;
        }
        return std::make_pair(core, mem);
    };

    Candidate one;
    one.ordering = {"core", "cool", "mem"};
    one.flow_rate = 2e-7;
    Candidate two;
    two.ordering = {"core", "cool", "mem", "cool"};
    two.flow_rate = 2e-7;

    auto [core_one, mem_one] = core_peak(one);
    auto [core_two, mem_two] = core_peak(two);

    CHECK(core_two <= core_one + 1e-9);  // second cooling layer can only help
    CHECK(mem_two < core_two);           // memory sits next to cooling and draws less
}
