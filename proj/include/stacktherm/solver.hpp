#ifndef STACKTHERM_SOLVER_HPP
#define STACKTHERM_SOLVER_HPP

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "stacktherm/grid.hpp"

namespace stacktherm {

class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Hysteretic per-block throttle: a block enters the throttled set above
/// trigger_temp and leaves below release_temp; while throttled its power
/// samples are multiplied by throttle_factor.
struct DtmPolicy {
    double trigger_temp = 0.0;      // K
    double release_temp = 0.0;      // K, < trigger_temp
    double throttle_factor = 1.0;   // (0, 1]
    double control_interval = 0.0;  // s; 0 = every trace interval
};

struct DtmEvent {
    double time = 0.0;
    std::string block;
    bool throttled = false;  // false = released
};

struct DtmState {
    std::set<std::size_t> throttled;  // indices into model.power_blocks
};

struct SolveSettings {
    double rel_tolerance = 1e-8;
    long max_iterations = 0;   // 0 = 100 * num_cells
    double transient_dt = 0.0; // 0 = trace interval
    std::optional<DtmPolicy> dtm;
};

struct EnergyBalance {
    double power_in = 0.0;
    double sink_out = 0.0;
    double coolant_out = 0.0;
    double residual = 0.0;
};

struct SimResult {
    std::vector<std::vector<double>> fields;  // kelvin; 1 for steady
    std::vector<double> times;                // s, end of each emitted field
    // Transient runs: the block watts actually applied per field
    // (power_blocks order, after any throttling). Empty for steady.
    std::vector<std::vector<double>> block_watts;
    EnergyBalance energy;                     // for the last/only field
    std::vector<DtmEvent> dtm_log;
    long iterations = 0;
    double achieved_residual = 0.0;
    bool converged = false;
};

/// Solve the steady system to a relative max-norm residual of
/// settings.rel_tolerance. Throws SolverError on non-convergence or on an
/// all-adiabatic (singular) model.
SimResult steady_solve(const ThermalGridModel& model, std::span<const double> power,
                       const SolveSettings& settings = {});

/// Dense LU with partial pivoting; reference path for small models.
std::vector<double> dense_reference_solve(const ThermalGridModel& model,
                                          std::span<const double> power);

/// Backward-Euler march over the traces of every active layer (one field
/// per trace interval, optional substepping via settings.transient_dt).
/// `initial` defaults to uniform ambient.
SimResult transient_run(const ThermalGridModel& model,
                        const std::vector<const PowerTrace*>& traces,
                        const SolveSettings& settings = {},
                        const std::vector<double>* initial = nullptr);

/// Transient over a stack's own traces.
SimResult transient_run(const ThermalGridModel& model, const StackSpec& spec,
                        const SolveSettings& settings = {},
                        const std::vector<double>* initial = nullptr);

/// One DTM control step: updates the throttled set from per-block maximum
/// temperatures and scales `block_watts` (power_blocks order) in place.
std::vector<DtmEvent> apply_dtm(const DtmPolicy& policy, double time,
                                std::span<const std::string> block_names,
                                std::span<const double> block_max_temp, DtmState& state,
                                std::span<double> block_watts);

/// power_in, sink_out (boundary conductances), coolant_out (per-lane
/// enthalpy flux) and their imbalance for a steady field.
EnergyBalance energy_balance(const ThermalGridModel& model, std::span<const double> field,
                             std::span<const double> power);

/// Trace pointers of the active layers, bottom to top.
std::vector<const PowerTrace*> active_traces(const StackSpec& spec);

/// Per-block maxima over the whole trace: the worst-case steady sample.
std::vector<LayerPowerSample> representative_block_max(const StackSpec& spec);

/// Per-block time averages over the trace.
std::vector<LayerPowerSample> representative_block_mean(const StackSpec& spec);

/// Block watts of trace step `step` in power_blocks order.
std::vector<double> block_watts_at_step(const ThermalGridModel& model,
                                        const std::vector<const PowerTrace*>& traces,
                                        std::size_t step);

}  // namespace stacktherm

#endif
