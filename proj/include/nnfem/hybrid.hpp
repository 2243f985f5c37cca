#pragma once

// Time stepping for reference, baseline and hybrid runs. A hybrid step solves on the
// working level, evaluates the fine residual of the prolongated solution and adds the
// patch-wise network correction; the stored corrected state feeds the next load vector.

#include "nnfem/bench.hpp"
#include "nnfem/metrics.hpp"
#include "nnfem/network.hpp"
#include "nnfem/solver.hpp"
#include "nnfem/transport.hpp"

#include <optional>

namespace nnfem {

enum class RunMode { reference, baseline, hybrid };

inline const char* to_string(RunMode m)
{
    switch (m) {
    case RunMode::reference: return "reference";
    case RunMode::baseline: return "baseline";
    case RunMode::hybrid: return "hybrid";
    }
    return "?";
}

inline RunMode parse_run_mode(const std::string& s)
{
    if (s == "reference") return RunMode::reference;
    if (s == "baseline") return RunMode::baseline;
    if (s == "hybrid") return RunMode::hybrid;
    throw ConfigError("unknown mode '" + s + "' (expected reference, baseline or hybrid)");
}

/// off: violations are recorded but corrections always applied.
enum class SafeguardMode { off, drop, scale };

inline const char* to_string(SafeguardMode m)
{
    switch (m) {
    case SafeguardMode::off: return "off";
    case SafeguardMode::drop: return "drop";
    case SafeguardMode::scale: return "scale";
    }
    return "?";
}

inline SafeguardMode parse_safeguard(const std::string& s)
{
    if (s == "off") return SafeguardMode::off;
    if (s == "drop") return SafeguardMode::drop;
    if (s == "scale") return SafeguardMode::scale;
    throw ConfigError("unknown safeguard mode '" + s + "' (expected off, drop or scale)");
}

struct SafeguardConfig {
    SafeguardMode mode = SafeguardMode::off;
    double beta = 0.5;

    void validate() const
    {
        if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("safeguard beta must lie in (0,1)");
    }
};

struct SafeguardDecision {
    bool accept = true;
    /// Factor applied to the correction (1 when accepted).
    double factor = 1.0;
};

/// Accepts iff g_norm <= beta * r_norm. On rejection the drop mode returns factor 0 and the
/// scale mode the factor bringing the perturbation onto the bound; off applies it unchanged.
inline SafeguardDecision smallness_check(double g_norm, double r_norm, double beta, SafeguardMode mode)
{
    if (g_norm <= beta * r_norm) return {true, 1.0};
    switch (mode) {
    case SafeguardMode::off: return {false, 1.0};
    case SafeguardMode::drop: return {false, 0.0};
    case SafeguardMode::scale: return {false, beta * r_norm / g_norm};
    }
    return {false, 1.0};
}

struct SimConfig {
    Scenario scenario;
    /// Working-level cells per axis and the number of levels below it.
    int coarse_cells = 16;
    int L = 3;
    int S = 1;
    int N_M = 1;
    /// Scales the ice strength P* with the domain so scaled runs deform like the full-size setup.
    bool strength_scaling = true;
    /// Absolute Newton tolerance of reference runs. On the fine level the relative target
    /// falls below the round-off floor k * zeta_max * eps * |v| of the residual.
    double reference_atol = 1e-2;
    NewtonConfig newton;
    TransportParams transport;
    PhysicalParams phys;
    RheologyParams rheo;
    SafeguardConfig safeguard;

    int steps() const { return static_cast<int>(std::lround(scenario.duration / scenario.k)); }

    RheologyParams effective_rheology() const
    {
        RheologyParams r = rheo;
        if (strength_scaling) r.P_star *= scenario.scale;
        return r;
    }

    void validate() const
    {
        if (!(scenario.k > 0.0)) throw ConfigError("time step must be positive");
        if (!(scenario.duration > 0.0)) throw ConfigError("duration must be positive");
        if (coarse_cells < 8) throw ConfigError("need at least 8 working-level cells per axis");
        if (N_M < 0 || N_M > 2) throw ConfigError("N_M must be 0, 1 or 2");
        if (S < 1) throw ConfigError("S must be >= 1");
        if (coarse_cells % (1 << N_M) != 0) throw ConfigError("coarse_cells must be divisible by 2^N_M");
        if (!(reference_atol >= 0.0)) throw ConfigError("reference_atol must be non-negative");
        newton.validate();
        rheo.validate();
        safeguard.validate();
    }
};

/// Fine-level objects shared by hybrid steps and training-data generation.
struct FineCoupling {
    std::shared_ptr<const LevelSpace> fine;
    TransferOps vec;
    TransferOps scalar;
    PatchPlan plan;
    std::vector<std::uint8_t> coarse_boundary;
};

inline FineCoupling make_fine_coupling(const MeshHierarchy& hier, int N_M)
{
    FineCoupling fc;
    fc.fine = make_level_space(hier.fine());
    fc.vec = make_transfer(hier, hier.coarse_level_index, hier.fine_level_index(), 2);
    fc.scalar = make_transfer(hier, hier.coarse_level_index, hier.fine_level_index(), 1);
    fc.plan = build_patch_plan(hier, N_M, hier.jump);
    fc.coarse_boundary = build_q2_dofmap(hier.coarse(), 2).is_boundary;
    return fc;
}

/// Fine momentum system with prolongated (A, H) frozen and the load built from `v_prev_fine`.
struct FineResidual {
    MomentumContext ctx;
    Vec f;
    Vec r;
};

inline FineResidual fine_residual(const FineCoupling& fc, const SimConfig& cfg, const ForcingFields& forcing,
                                  const Vec& A_c, const Vec& H_c, const Vec& v_prev_fine, const Vec& v_fine, double t)
{
    const double k = cfg.scenario.k;
    FineResidual out{make_momentum_context(fc.fine, k, fc.scalar.P * A_c, fc.scalar.P * H_c, forcing, t + k,
                                           ForcingTime::current, cfg.phys, cfg.effective_rheology()),
                     {},
                     {}};
    out.f = assemble_rhs(out.ctx, v_prev_fine, t);
    out.r = assemble_residual(out.ctx, v_fine, out.f);
    return out;
}

struct StepRecord {
    int step = 0;
    double t = 0.0;
    int newton_iters = 0;
    int gmres_iters = 0;
    bool converged = false;
    std::string failure;
    std::vector<double> residual_history;
    /// Norm of the restricted correction load and of the baseline residual at the initial guess.
    double g_norm = 0.0;
    double r_base_norm = 0.0;
    bool checked = false;
    bool violation = false;
    double applied_factor = 1.0;
    double correction_norm = 0.0;
    double fine_residual_before = 0.0;
    double fine_residual_after = 0.0;
};

class Simulation {
public:
    Simulation(const SimConfig& cfg, RunMode mode, const CorrectionNet* net = nullptr, InputMask mask = InputMask::none)
        : cfg_(cfg), mode_(mode), net_(net), mask_(mask)
    {
        cfg_.validate();
        hier_ = build_hierarchy(cfg.scenario.domain_side(), cfg.coarse_cells, cfg.L, cfg.S);
        level_ = mode == RunMode::reference ? hier_.fine_level_index() : cfg.L;
        space_ = make_level_space(hier_.level(level_));
        mg_ = build_mg_hierarchy(hier_, level_);
        forcing_ = scenario_forcing(cfg.scenario);
        rheo_ = cfg.effective_rheology();
        if (mode == RunMode::reference) cfg_.newton.atol = std::max(cfg_.newton.atol, cfg.reference_atol);
        std::tie(A_, H_) = initial_fields(space_->mesh, cfg.scenario);
        v_ = Vec::Zero(2 * space_->mesh.node_count());
        if (mode == RunMode::hybrid) {
            if (!net) throw ConfigError("hybrid runs need a network");
            fine_ = make_fine_coupling(hier_, cfg.N_M);
            check_compatible(*net, fine_.plan);
            delta_ = Vec::Zero(fine_.plan.fine_dofs);
            v_fine_ = Vec::Zero(fine_.plan.fine_dofs);
        }
        metrics_.k = cfg.scenario.k;
        metrics_.eps_nl = cfg.newton.eps_nl;
        metrics_.S = cfg.S;
        metrics_.N_M = mode == RunMode::hybrid ? cfg.N_M : -1;
        if (net && mode == RunMode::hybrid) {
            metrics_.layers = net->config().layers;
            metrics_.width = net->config().width;
        }
        metrics_.scenario = std::string(to_string(cfg.scenario.direction)) + "-" + to_string(cfg.scenario.rotation);
    }

    /// Advances one time step; returns false (and leaves the state at t_n) when Newton fails.
    bool step()
    {
        using clock = std::chrono::steady_clock;
        const double k = cfg_.scenario.k;
        const double t = n_ * k;
        StepRecord rec;
        rec.step = n_;
        rec.t = t;

        Vec A = advance_scalar(*space_, A_, v_, k, cfg_.scenario.A0, cfg_.transport);
        Vec H = advance_scalar(*space_, H_, v_, k, cfg_.scenario.H0, cfg_.transport);
        clamp_state(A, H);

        const auto t_mom = clock::now();
        const MomentumContext ctx =
            make_momentum_context(space_, k, A, H, forcing_, t + k, ForcingTime::current, cfg_.phys, rheo_);
        Vec f = assemble_rhs(ctx, v_, t);
        if (mode_ == RunMode::hybrid && !delta_.isZero(0.0)) apply_stored_correction(ctx, H, f, rec);

        const NewtonResult res = newton_solve(ctx, f, v_, cfg_.newton, mg_);
        metrics_.T_NK += res.report.wall_time;
        rec.newton_iters = res.report.iterations;
        rec.gmres_iters = res.report.total_gmres();
        rec.converged = res.report.converged;
        rec.failure = res.report.failure;
        rec.residual_history = res.report.residual_history;
        metrics_.N_Newton += res.report.iterations;
        if (!res.report.converged) {
            metrics_.T_mom += std::chrono::duration<double>(clock::now() - t_mom).count();
            records_.push_back(std::move(rec));
            failed_ = true;
            return false;
        }

        std::optional<FineResidual> fr;
        if (mode_ == RunMode::hybrid) {
            const Vec Pv = fine_.vec.P * res.v;
            fr = fine_residual(fine_, cfg_, forcing_, A, H, v_fine_, Pv, t);
            const auto t0 = clock::now();
            const RowMat X = ablate_inputs(build_input(fine_.plan, Pv, fr->r), mask_);
            const auto t1 = clock::now();
            const RowMat D = net_->forward(X);
            const auto t2 = clock::now();
            delta_ = scatter(fine_.plan, D);
            v_fine_ = Pv + delta_;
            const auto t3 = clock::now();
            metrics_.T_cpy += std::chrono::duration<double>((t1 - t0) + (t3 - t2)).count();
            metrics_.T_nn += std::chrono::duration<double>(t2 - t1).count();
        }
        metrics_.T_mom += std::chrono::duration<double>(clock::now() - t_mom).count();

        if (fr) {
            rec.correction_norm = delta_.norm();
            rec.fine_residual_before = fr->r.norm();
            rec.fine_residual_after = assemble_residual(fr->ctx, v_fine_, fr->f).norm();
        }
        v_ = res.v;
        A_ = std::move(A);
        H_ = std::move(H);
        ++n_;
        records_.push_back(std::move(rec));
        return true;
    }

    /// Runs up to `steps` steps (all configured steps by default); stops at the first failure.
    template <class Observer>
    bool run(Observer&& on_step, int steps = -1)
    {
        const int total = steps < 0 ? cfg_.steps() : steps;
        while (n_ < total) {
            if (!step()) return false;
            on_step(*this);
        }
        return true;
    }

    bool run(int steps = -1)
    {
        return run([](const Simulation&) {}, steps);
    }

    const SimConfig& config() const { return cfg_; }
    RunMode mode() const { return mode_; }
    const MeshHierarchy& hierarchy() const { return hier_; }
    const UniformQuadMesh& mesh() const { return space_->mesh; }
    const LevelSpace& space() const { return *space_; }
    int level() const { return level_; }
    int step_index() const { return n_; }
    double time() const { return n_ * cfg_.scenario.k; }
    bool failed() const { return failed_; }
    const Vec& velocity() const { return v_; }
    const Vec& A() const { return A_; }
    const Vec& H() const { return H_; }
    /// Stored corrected fine state (hybrid runs only).
    const Vec& corrected_fine() const { return v_fine_; }
    const Vec& correction() const { return delta_; }
    const std::vector<StepRecord>& records() const { return records_; }
    const RunMetrics& metrics() const { return metrics_; }
    RunMetrics& metrics() { return metrics_; }
    const ForcingFields& forcing() const { return forcing_; }

private:
    /// Adds the restricted fine load of the stored correction, after the smallness check.
    void apply_stored_correction(const MomentumContext& ctx, const Vec& H, Vec& f, StepRecord& rec)
    {
        const Vec weight = cfg_.phys.rho_ice * (fine_.scalar.P * H);
        Vec g = weighted_mass_action(*fine_.fine, weight, delta_);
        for (int d : fine_.fine->vector_dofs.boundary_dofs) g[d] = 0.0;
        Vec Rg = fine_.vec.R * g;
        for (int d : space_->vector_dofs.boundary_dofs) Rg[d] = 0.0;
        rec.g_norm = Rg.norm();
        rec.r_base_norm = assemble_residual(ctx, v_, f).norm();
        rec.checked = true;
        const auto dec = smallness_check(rec.g_norm, rec.r_base_norm, cfg_.safeguard.beta, cfg_.safeguard.mode);
        rec.violation = !dec.accept;
        rec.applied_factor = dec.factor;
        if (dec.factor != 1.0) {
            delta_ *= dec.factor;
            v_fine_ = fine_.vec.P * v_ + delta_;
            Rg *= dec.factor;
        }
        if (dec.factor != 0.0) f += Rg;
    }

    SimConfig cfg_;
    RunMode mode_;
    const CorrectionNet* net_;
    InputMask mask_;
    MeshHierarchy hier_;
    int level_ = 0;
    std::shared_ptr<const LevelSpace> space_;
    MgHierarchy mg_;
    ForcingFields forcing_;
    RheologyParams rheo_;
    FineCoupling fine_;
    Vec A_, H_, v_;
    Vec delta_, v_fine_;
    int n_ = 0;
    bool failed_ = false;
    std::vector<StepRecord> records_;
    RunMetrics metrics_;
};

/// Fine velocity used for the l2 error: the corrected state for hybrid runs, the
/// prolongated working-level state for baselines and the state itself for references.
inline Vec fine_state(const Simulation& sim)
{
    if (sim.mode() == RunMode::hybrid) return sim.corrected_fine();
    if (sim.mode() == RunMode::reference) return sim.velocity();
    const auto& h = sim.hierarchy();
    return make_transfer(h, h.coarse_level_index, h.fine_level_index(), 2).P * sim.velocity();
}

/// Fraction of hybrid steps whose correction violated the smallness bound (steps with a stored correction).
inline double violation_ratio(const std::vector<StepRecord>& recs)
{
    int checked = 0, violated = 0;
    for (const auto& r : recs) {
        if (!r.checked) continue;
        ++checked;
        if (r.violation) ++violated;
    }
    return checked == 0 ? 0.0 : static_cast<double>(violated) / checked;
}

/// Patch samples of one snapshot: inputs from the prolongated working-level state and its fine
/// residual, targets G_K (v_ref - P v_coarse).
inline std::pair<RowMat, RowMat> snapshot_samples(const FineCoupling& fc, const SimConfig& cfg,
                                                  const ForcingFields& forcing, const Vec& A_c, const Vec& H_c,
                                                  const Vec& v_prev_c, const Vec& v_c, const Vec& v_ref, double t)
{
    require_size(v_ref.size(), fc.plan.fine_dofs, "snapshot_samples reference");
    const Vec Pv = fc.vec.P * v_c;
    const FineResidual fr = fine_residual(fc, cfg, forcing, A_c, H_c, fc.vec.P * v_prev_c, Pv, t);
    return {build_input(fc.plan, Pv, fr.r), gather(fc.plan, v_ref - Pv)};
}

/// Leading steps left out of the training data: 30 of every 96.
inline int skipped_steps(int steps) { return static_cast<int>(std::lround(steps * 30.0 / 96.0)); }

struct SampleSet {
    RowMat X;
    RowMat Y;
    int snapshots = 0;
    int patches_per_snapshot = 0;
};

inline void append_rows(RowMat& M, const RowMat& rows)
{
    const Index r = M.rows();
    if (r == 0) {
        M = rows;
        return;
    }
    M.conservativeResize(r + rows.rows(), Eigen::NoChange);
    M.bottomRows(rows.rows()) = rows;
}

/// Runs the baseline and the reference side by side and collects samples from every step after
/// the skipped ones. Throws SolverError if either run fails.
inline SampleSet generate_samples(const SimConfig& cfg)
{
    Simulation base(cfg, RunMode::baseline);
    Simulation ref(cfg, RunMode::reference);
    const FineCoupling fc = make_fine_coupling(base.hierarchy(), cfg.N_M);
    const int steps = cfg.steps();
    const int skip = skipped_steps(steps);
    SampleSet out;
    out.patches_per_snapshot = fc.plan.patch_count();
    for (int n = 0; n < steps; ++n) {
        const Vec v_prev = base.velocity();
        const double t = base.time();
        if (!base.step()) throw SolverError("baseline run failed at step " + std::to_string(n));
        if (!ref.step()) throw SolverError("reference run failed at step " + std::to_string(n));
        if (n + 1 <= skip) continue;
        auto [X, Y] = snapshot_samples(fc, cfg, base.forcing(), base.A(), base.H(), v_prev, base.velocity(),
                                       ref.velocity(), t);
        append_rows(out.X, X);
        append_rows(out.Y, Y);
        ++out.snapshots;
    }
    return out;
}

}  // namespace nnfem
