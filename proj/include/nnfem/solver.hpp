#pragma once

// Modified Newton with backtracking line search and adaptive remainder damping;
// linear steps use GMRES preconditioned by a geometric V-cycle on the SPD part.

#include "nnfem/linalg.hpp"
#include "nnfem/momentum.hpp"

#include <chrono>

namespace nnfem {

struct NewtonConfig {
    double eps_nl = 1e-10;
    /// Absolute residual accepted as converged (0 disables).
    double atol = 0.0;
    int max_iters = 100;
    double ls_factor = 0.5;
    int ls_max_trials = 12;
    double damping_theta = 1.0;
    int theta_halvings = 6;
    double forcing_eta = 1e-4;
    int gmres_restart = 50;
    int gmres_max_iters = 400;
    MultigridOptions mg;

    void validate() const
    {
        if (!(eps_nl > 0.0 && eps_nl < 1.0)) throw ConfigError("eps_nl must lie in (0,1)");
        if (!(atol >= 0.0)) throw ConfigError("atol must be non-negative");
        if (!(forcing_eta > 0.0 && forcing_eta < 1.0)) throw ConfigError("forcing_eta must lie in (0,1)");
        if (!(damping_theta >= 0.0 && damping_theta <= 1.0)) throw ConfigError("damping_theta must lie in [0,1]");
        if (!(ls_factor > 0.0 && ls_factor < 1.0)) throw ConfigError("line-search factor must lie in (0,1)");
        if (max_iters < 1 || ls_max_trials < 1) throw ConfigError("iteration limits must be positive");
    }
};

struct NewtonReport {
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;
    std::vector<int> gmres_iters;
    std::vector<double> alphas;
    std::vector<double> thetas;
    double wall_time = 0.0;
    std::string failure;

    int total_gmres() const
    {
        int s = 0;
        for (int g : gmres_iters) s += g;
        return s;
    }
};

/// Largest alpha in {1, q, q^2, ...} (at most `max_trials` values) with ||r(v + alpha dv)|| < r_norm.
/// Returns 0 when no trial decreases the residual; `r_out` receives the accepted residual.
inline double line_search(const std::function<Vec(const Vec&)>& residual, const Vec& v, const Vec& dv, double r_norm,
                          double factor, int max_trials, Vec* r_out = nullptr)
{
    double alpha = 1.0;
    for (int t = 0; t < max_trials; ++t) {
        Vec r = residual(v + alpha * dv);
        if (r.allFinite() && r.norm() < r_norm) {
            if (r_out) *r_out = std::move(r);
            return alpha;
        }
        alpha *= factor;
    }
    return 0.0;
}

/// A nonlinear problem for `newton`: `linearize(v)` prepares the Jacobian at v and
/// `solve(rhs, theta)` returns an approximate J(theta)^{-1} rhs and its Krylov iteration count.
struct NewtonProblem {
    std::function<Vec(const Vec&)> residual;
    std::function<void(const Vec&)> linearize;
    std::function<std::pair<Vec, int>(const Vec&, double)> solve;
};

struct NewtonResult {
    Vec v;
    NewtonReport report;
};

inline NewtonResult newton(const NewtonProblem& prob, const Vec& v0, const NewtonConfig& cfg)
{
    const auto start = std::chrono::steady_clock::now();
    NewtonResult out;
    out.v = v0;
    Vec r = prob.residual(out.v);
    double rn = r.norm();
    const double r0 = rn;
    auto& rep = out.report;
    rep.residual_history.push_back(rn);
    auto finish = [&] {
        rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    if (!std::isfinite(rn)) {
        rep.failure = "non-finite initial residual";
        finish();
        return out;
    }
    while (true) {
        if (rn <= std::max(cfg.eps_nl * r0, cfg.atol)) {
            rep.converged = true;
            break;
        }
        if (rep.iterations >= cfg.max_iters) {
            rep.failure = "iteration limit reached";
            break;
        }
        prob.linearize(out.v);
        double theta = cfg.damping_theta;
        double alpha = 0.0;
        Vec dv, r_new;
        int gm = 0;
        for (int attempt = 0; attempt <= cfg.theta_halvings + 1; ++attempt) {
            auto [step, iters] = prob.solve(-r, theta);
            gm += iters;
            dv = std::move(step);
            alpha = line_search(prob.residual, out.v, dv, rn, cfg.ls_factor, cfg.ls_max_trials, &r_new);
            if (alpha > 0.0) break;
            theta = attempt < cfg.theta_halvings ? 0.5 * theta : 0.0;
        }
        ++rep.iterations;
        rep.gmres_iters.push_back(gm);
        rep.thetas.push_back(theta);
        rep.alphas.push_back(alpha);
        if (alpha == 0.0) {
            rep.failure = "line search failed";
            break;
        }
        out.v += alpha * dv;
        r = std::move(r_new);
        rn = r.norm();
        rep.residual_history.push_back(rn);
    }
    finish();
    return out;
}

/// Per-level multigrid data for one top level of a mesh hierarchy (velocity DoFs).
struct MgHierarchy {
    std::vector<MgTransfer> transfers;
    std::vector<std::vector<std::uint8_t>> boundary;
    int top_level = 0;
};

inline MgHierarchy build_mg_hierarchy(const MeshHierarchy& hier, int top_level)
{
    MgHierarchy mg;
    mg.top_level = top_level;
    for (int l = 0; l <= top_level; ++l) mg.boundary.push_back(build_q2_dofmap(hier.level(l), 2).is_boundary);
    for (int l = 0; l < top_level; ++l) {
        const SpMat P = expand_to_vector(q2_prolongation_scalar(hier.level(l)));
        mg.transfers.push_back(masked_transfer(P, mg.boundary[static_cast<std::size_t>(l + 1)],
                                               mg.boundary[static_cast<std::size_t>(l)]));
    }
    return mg;
}

/// Preconditioner from an SPD operator with identity Dirichlet rows.
inline Multigrid make_multigrid(const SpMat& spd, const MgHierarchy& mg, const MultigridOptions& opt = {})
{
    return Multigrid(eliminate_boundary_columns(spd, mg.boundary.back()), &mg.transfers, &mg.boundary, opt);
}

/// Solves J x = rhs with GMRES + V-cycle built from `spd` (J itself when omitted).
inline std::pair<Vec, GmresResult> gmres_mg(const SpMat& J, const Vec& rhs, double rel_tol, const MgHierarchy& mg,
                                            const SpMat* spd = nullptr, int restart = 50, int max_iters = 400)
{
    Multigrid M = make_multigrid(spd ? *spd : J, mg);
    Vec x = Vec::Zero(rhs.size());
    GmresOptions opt;
    opt.rtol = rel_tol;
    opt.restart = restart;
    opt.max_iters = max_iters;
    const auto res = gmres(as_op(J), rhs, x, M.as_op(), opt);
    return {x, res};
}

/// Newton solve of the momentum step r(v) = A(v) - f = 0 on ctx's level.
inline NewtonResult newton_solve(const MomentumContext& ctx, const Vec& f, const Vec& v0, const NewtonConfig& cfg,
                                 const MgHierarchy& mg)
{
    require_size(v0.size(), ctx.size(), "newton_solve initial guess");
    require_size(f.size(), ctx.size(), "newton_solve load vector");
    if (static_cast<int>(mg.boundary.back().size()) != ctx.size())
        throw SizeMismatch("newton_solve: multigrid hierarchy does not end on the context level");
    JacobianParts parts;
    Multigrid M;
    NewtonProblem prob;
    prob.residual = [&](const Vec& v) { return assemble_residual(ctx, v, f); };
    prob.linearize = [&](const Vec& v) {
        parts = assemble_jacobian_parts(ctx, v);
        M = make_multigrid(parts.spd, mg, cfg.mg);
    };
    prob.solve = [&](const Vec& rhs, double theta) {
        const SpMat J = parts.combine(theta);
        Vec x = Vec::Zero(rhs.size());
        GmresOptions opt;
        opt.rtol = cfg.forcing_eta;
        opt.restart = cfg.gmres_restart;
        opt.max_iters = cfg.gmres_max_iters;
        const auto res = gmres(as_op(J), rhs, x, M.as_op(), opt);
        return std::pair<Vec, int>(x, res.iterations);
    };
    return newton(prob, v0, cfg);
}

}  // namespace nnfem
