#include "stacktherm/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>

namespace stacktherm {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

struct IterativeOutcome {
    long iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

// Right-preconditioned BiCGSTAB (Jacobi) with true-residual verification on
// exit and restart on breakdown/stagnation. Convergence is measured as
// max-norm residual relative to the max norm of the right-hand side.
IterativeOutcome bicgstab(const CsrMatrix& A, std::span<const double> b,
                          std::vector<double>& x, double rel_tol, long max_iter) {
    const int n = A.n;
    IterativeOutcome out;

    const double bnorm = max_abs(b);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        out.converged = true;
        return out;
    }
    const double target = rel_tol * bnorm;

    std::vector<double> inv_diag(n);
    for (int i = 0; i < n; ++i) {
        double d = A.diagonal(i);
        inv_diag[i] = d != 0.0 ? 1.0 / d : 1.0;
    }

    std::vector<double> r(n), rhat(n), p(n, 0.0), v(n, 0.0), phat(n), s(n), shat(n), t(n),
        tmp(n);

    auto true_residual = [&](std::vector<double>& dst) {
        A.multiply(x, tmp);
        for (int i = 0; i < n; ++i) dst[i] = b[i] - tmp[i];
    };

    true_residual(r);
    if (max_abs(r) <= target) {
        out.converged = true;
        out.residual = max_abs(r) / bnorm;
        return out;
    }

    double rho = 1.0, alpha = 1.0, omega = 1.0;
    bool fresh = true;
    auto restart = [&] {
        true_residual(r);  // resync the recursion with the iterate
        rhat = r;
        rho = alpha = omega = 1.0;
        std::fill(p.begin(), p.end(), 0.0);
        std::fill(v.begin(), v.end(), 0.0);
        fresh = true;
    };
    rhat = r;

    while (out.iterations < max_iter) {
        ++out.iterations;
        double rho_new = dot(rhat, r);
        if (!std::isfinite(rho_new) || std::abs(rho_new) < 1e-300) {
            restart();
            rho_new = dot(rhat, r);
            if (std::abs(rho_new) < 1e-300) break;  // residual orthogonal to itself: done or stuck
        }
        double beta = fresh ? 0.0 : (rho_new / rho) * (alpha / omega);
        fresh = false;
        for (int i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        for (int i = 0; i < n; ++i) phat[i] = p[i] * inv_diag[i];
        A.multiply(phat, v);
        double denom = dot(rhat, v);
        if (std::abs(denom) < 1e-300 || !std::isfinite(denom)) {
            restart();
            continue;
        }
        alpha = rho_new / denom;
        for (int i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];

        if (max_abs(s) <= target) {
            for (int i = 0; i < n; ++i) x[i] += alpha * phat[i];
            true_residual(r);
            if (max_abs(r) <= target) break;
            restart();
            continue;
        }

        for (int i = 0; i < n; ++i) shat[i] = s[i] * inv_diag[i];
        A.multiply(shat, t);
        double tt = dot(t, t);
        if (tt == 0.0 || !std::isfinite(tt)) {
            // Keep the half step, then resync.
            for (int i = 0; i < n; ++i) x[i] += alpha * phat[i];
            restart();
            continue;
        }
        omega = dot(t, s) / tt;
        for (int i = 0; i < n; ++i) x[i] += alpha * phat[i] + omega * shat[i];
        for (int i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
        rho = rho_new;

        if (max_abs(r) <= target) {
            true_residual(r);
            if (max_abs(r) <= target) break;
            restart();
        }
    }

    true_residual(tmp);
    out.residual = max_abs(tmp) / bnorm;
    out.converged = out.residual <= rel_tol;
    return out;
}

long effective_max_iterations(const SolveSettings& s, int n) {
    return s.max_iterations > 0 ? s.max_iterations : 100L * n;
}

void check_settings(const SolveSettings& s) {
    if (!(s.rel_tolerance > 0.0 && s.rel_tolerance < 1.0))
        throw SolverError("rel_tolerance must lie in (0, 1)");
    if (s.transient_dt < 0.0) throw SolverError("transient_dt must be positive");
    if (s.dtm && !(s.dtm->release_temp < s.dtm->trigger_temp))
        throw SolverError("DTM release_temp must be below trigger_temp");
    if (s.dtm && !(s.dtm->throttle_factor > 0.0 && s.dtm->throttle_factor <= 1.0))
        throw SolverError("DTM throttle_factor must lie in (0, 1]");
}

void check_well_posed(const ThermalGridModel& model) {
    if (model.total_boundary_conductance() <= 0.0 && !model.has_flow())
        throw SolverError("model has no heat escape path (all boundaries adiabatic, "
                          "no coolant flow); steady state is singular");
}

}  // namespace

// ---------------------------------------------------------------------------
// Steady state
// ---------------------------------------------------------------------------

SimResult steady_solve(const ThermalGridModel& model, std::span<const double> power,
                       const SolveSettings& settings) {
    check_settings(settings);
    check_well_posed(model);
    const int n = model.dims.cells();
    assert(static_cast<int>(power.size()) == n);

    std::vector<double> rhs(n);
    for (int i = 0; i < n; ++i) rhs[i] = power[i] + model.boundary_injection[i];

    std::vector<double> x(n, model.ambient);
    SimResult res;
    double tol = settings.rel_tolerance;
    const long max_iter = effective_max_iterations(settings, n);
    EnergyBalance energy;
    for (;;) {
        IterativeOutcome o = bicgstab(model.conductance, rhs, x, tol, max_iter);
        res.iterations += o.iterations;
        res.achieved_residual = o.residual;
        if (!o.converged) {
            char buf[128];
            std::snprintf(buf, sizeof(buf),
                          "steady solve did not converge: residual %.3e after %ld iterations",
                          o.residual, res.iterations);
            throw SolverError(buf);
        }
        // The converged-solve contract also bounds the global energy
        // imbalance; per-cell residuals can add up across large grids, so
        // tighten until the summed identity holds too.
        energy = energy_balance(model, x, power);
        if (energy.power_in <= 0.0 ||
            std::abs(energy.residual) <= 1e-6 * energy.power_in || tol <= 1.1e-13)
            break;
        tol *= 1e-2;
    }
    if (energy.power_in > 0.0 && std::abs(energy.residual) > 1e-6 * energy.power_in) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "steady solve cannot balance energy: |%.3e| W of %.3e W",
                      energy.residual, energy.power_in);
        throw SolverError(buf);
    }

    res.converged = true;
    res.energy = energy;
    res.fields.push_back(std::move(x));
    res.times.push_back(0.0);
    return res;
}

std::vector<double> dense_reference_solve(const ThermalGridModel& model,
                                          std::span<const double> power) {
    check_well_posed(model);
    const int n = model.dims.cells();
    if (n > 4000) throw SolverError("dense reference solve is limited to 4000 cells");

    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
    const CsrMatrix& m = model.conductance;
    for (int r = 0; r < n; ++r)
        for (int k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
            a[static_cast<std::size_t>(r) * n + m.col[k]] = m.val[k];

    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = power[i] + model.boundary_injection[i];

    // LU with partial pivoting, in place.
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    for (int c = 0; c < n; ++c) {
        int piv = c;
        double best = std::abs(a[static_cast<std::size_t>(c) * n + c]);
        for (int r = c + 1; r < n; ++r) {
            double cand = std::abs(a[static_cast<std::size_t>(r) * n + c]);
            if (cand > best) { best = cand; piv = r; }
        }
        if (best == 0.0) throw SolverError("dense reference solve: singular matrix");
        if (piv != c) {
            for (int j = 0; j < n; ++j)
                std::swap(a[static_cast<std::size_t>(c) * n + j],
                          a[static_cast<std::size_t>(piv) * n + j]);
            std::swap(x[c], x[piv]);
        }
        double inv = 1.0 / a[static_cast<std::size_t>(c) * n + c];
        for (int r = c + 1; r < n; ++r) {
            double f = a[static_cast<std::size_t>(r) * n + c] * inv;
            if (f == 0.0) continue;
            a[static_cast<std::size_t>(r) * n + c] = 0.0;
            for (int j = c + 1; j < n; ++j)
                a[static_cast<std::size_t>(r) * n + j] -= f * a[static_cast<std::size_t>(c) * n + j];
            x[r] -= f * x[c];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double acc = x[r];
        for (int j = r + 1; j < n; ++j) acc -= a[static_cast<std::size_t>(r) * n + j] * x[j];
        x[r] = acc / a[static_cast<std::size_t>(r) * n + r];
    }
    return x;
}

// ---------------------------------------------------------------------------
// Transient
// ---------------------------------------------------------------------------

std::vector<const PowerTrace*> active_traces(const StackSpec& spec) {
    std::vector<const PowerTrace*> v;
    for (const LayerSpec& l : spec.layers)
        if (l.kind == LayerKind::Active) v.push_back(l.power.get());
    return v;
}

std::vector<LayerPowerSample> representative_block_max(const StackSpec& spec) {
    std::vector<LayerPowerSample> samples;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& l = spec.layers[li];
        if (l.kind != LayerKind::Active) continue;
        LayerPowerSample s;
        s.layer = static_cast<int>(li);
        const PowerTrace& tr = *l.power;
        for (std::size_t b = 0; b < tr.block_names.size(); ++b) {
            double mx = 0.0;
            for (const auto& row : tr.samples) mx = std::max(mx, row[b]);
            s.watts[tr.block_names[b]] = mx;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<LayerPowerSample> representative_block_mean(const StackSpec& spec) {
    std::vector<LayerPowerSample> samples;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& l = spec.layers[li];
        if (l.kind != LayerKind::Active) continue;
        LayerPowerSample s;
        s.layer = static_cast<int>(li);
        const PowerTrace& tr = *l.power;
        for (std::size_t b = 0; b < tr.block_names.size(); ++b) {
            double sum = 0.0;
            for (const auto& row : tr.samples) sum += row[b];
            s.watts[tr.block_names[b]] = sum / static_cast<double>(tr.steps());
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<double> block_watts_at_step(const ThermalGridModel& model,
                                        const std::vector<const PowerTrace*>& traces,
                                        std::size_t step) {
    std::vector<double> watts(model.power_blocks.size(), 0.0);
    for (std::size_t i = 0; i < model.power_blocks.size(); ++i) {
        const PowerBlockCells& pb = model.power_blocks[i];
        std::size_t active_pos = 0;
        while (model.active_layers[active_pos] != pb.layer) ++active_pos;
        const PowerTrace& tr = *traces[active_pos];
        for (std::size_t b = 0; b < tr.block_names.size(); ++b)
            if (tr.block_names[b] == pb.name) { watts[i] = tr.samples[step][b]; break; }
    }
    return watts;
}

std::vector<DtmEvent> apply_dtm(const DtmPolicy& policy, double time,
                                std::span<const std::string> block_names,
                                std::span<const double> block_max_temp, DtmState& state,
                                std::span<double> block_watts) {
    std::vector<DtmEvent> events;
    for (std::size_t i = 0; i < block_max_temp.size(); ++i) {
        bool in = state.throttled.count(i) != 0;
        if (!in && block_max_temp[i] > policy.trigger_temp) {
            state.throttled.insert(i);
            events.push_back(DtmEvent{time, block_names[i], true});
        } else if (in && block_max_temp[i] < policy.release_temp) {
            state.throttled.erase(i);
            events.push_back(DtmEvent{time, block_names[i], false});
        }
    }
    for (std::size_t i : state.throttled) block_watts[i] *= policy.throttle_factor;
    return events;
}

SimResult transient_run(const ThermalGridModel& model,
                        const std::vector<const PowerTrace*>& traces,
                        const SolveSettings& settings,
                        const std::vector<double>* initial) {
    check_settings(settings);
    check_well_posed(model);
    const int n = model.dims.cells();
    if (traces.empty() || traces.size() != model.active_layers.size())
        throw SolverError("transient run needs one trace per active layer");
    const double interval = traces.front()->interval;
    const std::size_t steps = traces.front()->steps();
    for (const PowerTrace* t : traces) {
        if (t->steps() != steps || std::abs(t->interval - interval) > 1e-15)
            throw SolverError("transient run needs traces with equal interval and length");
        if (steps == 0) throw SolverError("transient run needs a non-empty trace");
    }

    double dt = settings.transient_dt > 0.0 ? settings.transient_dt : interval;
    int substeps = std::max(1, static_cast<int>(std::ceil(interval / dt - 1e-12)));
    dt = interval / substeps;

    // Backward Euler: (C/dt + G) T_next = (C/dt) T_prev + p + injection.
    CsrMatrix stepper = model.conductance;
    std::vector<double> c_over_dt(n);
    for (int i = 0; i < n; ++i) c_over_dt[i] = model.capacitance[i] / dt;
    for (int r = 0; r < n; ++r)
        for (int k = stepper.row_ptr[r]; k < stepper.row_ptr[r + 1]; ++k)
            if (stepper.col[k] == r) stepper.val[k] += c_over_dt[r];

    const long max_iter = effective_max_iterations(settings, n);

    SimResult res;
    std::vector<double> temp = initial ? *initial : std::vector<double>(n, model.ambient);
    if (static_cast<int>(temp.size()) != n)
        throw SolverError("initial field size does not match the model");

    DtmState dtm_state;
    double next_control = 0.0;
    const double control_every =
        settings.dtm && settings.dtm->control_interval > 0.0 ? settings.dtm->control_interval
                                                             : interval;

    std::vector<double> rhs(n);
    std::vector<double> power_cells;
    for (std::size_t step = 0; step < steps; ++step) {
        const double t_now = static_cast<double>(step) * interval;
        std::vector<double> watts = block_watts_at_step(model, traces, step);

        if (settings.dtm && t_now >= next_control - 1e-12) {
            auto mm = block_mean_max(model, temp);
            std::vector<double> maxima(mm.size());
            std::vector<std::string> names(mm.size());
            for (std::size_t i = 0; i < mm.size(); ++i) {
                maxima[i] = mm[i].second;
                names[i] = model.power_blocks[i].name;
            }
            std::vector<DtmEvent> events =
                apply_dtm(*settings.dtm, t_now, names, maxima, dtm_state, watts);
            res.dtm_log.insert(res.dtm_log.end(), events.begin(), events.end());
            next_control += control_every;
        } else if (settings.dtm) {
            // Between control boundaries the throttle set stays as is.
            for (std::size_t i : dtm_state.throttled) watts[i] *= settings.dtm->throttle_factor;
        }

        power_cells = power_vector_from_block_watts(model, watts);

        for (int sub = 0; sub < substeps; ++sub) {
            for (int i = 0; i < n; ++i)
                rhs[i] = c_over_dt[i] * temp[i] + power_cells[i] + model.boundary_injection[i];
            IterativeOutcome o = bicgstab(stepper, rhs, temp, settings.rel_tolerance, max_iter);
            res.iterations += o.iterations;
            if (!o.converged) {
                char buf[160];
                std::snprintf(buf, sizeof(buf),
                              "transient step %zu did not converge: residual %.3e",
                              step, o.residual);
                throw SolverError(buf);
            }
            res.achieved_residual = std::max(res.achieved_residual, o.residual);
        }
        res.fields.push_back(temp);
        res.times.push_back(static_cast<double>(step + 1) * interval);
        res.block_watts.push_back(std::move(watts));
    }

    res.converged = true;
    std::vector<double> last_power = power_vector_from_block_watts(model, res.block_watts.back());
    res.energy = energy_balance(model, res.fields.back(), last_power);
    return res;
}

SimResult transient_run(const ThermalGridModel& model, const StackSpec& spec,
                        const SolveSettings& settings, const std::vector<double>* initial) {
    return transient_run(model, active_traces(spec), settings, initial);
}

// ---------------------------------------------------------------------------
// Energy accounting
// ---------------------------------------------------------------------------

EnergyBalance energy_balance(const ThermalGridModel& model, std::span<const double> field,
                             std::span<const double> power) {
    EnergyBalance e;
    for (double p : power) e.power_in += p;
    for (int i = 0; i < model.dims.cells(); ++i)
        if (model.boundary_conductance[i] != 0.0)
            e.sink_out += model.boundary_conductance[i] * (field[i] - model.ambient);
    for (const ChannelLane& lane : model.lanes)
        if (lane.mdot_cp > 0.0)
            e.coolant_out += lane.mdot_cp * (field[lane.cells.back()] - lane.inlet_temp);
    e.residual = e.power_in - e.sink_out - e.coolant_out;
    return e;
}

}  // namespace stacktherm
