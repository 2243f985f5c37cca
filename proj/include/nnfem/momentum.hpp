#pragma once

// Momentum residual, right-hand side and Jacobian of the implicit VP step on one level.

#include "nnfem/rheology.hpp"
#include "nnfem/space.hpp"

#include <functional>

namespace nnfem {

struct PhysicalParams {
    double rho_ice = 900.0;
    double rho_air = 1.3;
    double rho_water = 1026.0;
    double C_air = 1.2e-3;
    double C_water = 5.5e-3;
    double f_coriolis = 1.46e-4;
    /// Drag-speed regularization used for the Jacobian only.
    double u_min = 1e-8;
};

/// Time-dependent external velocity fields (position in m, time in s).
struct ForcingFields {
    std::function<Velocity(Point, double)> ocean;
    std::function<Velocity(Point, double)> wind;
};

enum class ForcingTime { current, next };

struct MomentumContext {
    std::shared_ptr<const LevelSpace> space;
    double k = 120.0;
    /// Nodal A and H at t^{n+1} (after transport).
    Vec A;
    Vec H;
    /// Ocean velocity entering the drag term of the operator, nodal at t^{n+1}.
    Vec ocean;
    ForcingFields forcing;
    ForcingTime forcing_time = ForcingTime::current;
    PhysicalParams phys;
    RheologyParams rheo;

    int level() const { return space->mesh.level; }
    int size() const { return space->vector_dofs.size(); }
};

inline MomentumContext make_momentum_context(std::shared_ptr<const LevelSpace> space, double k, Vec A, Vec H,
                                             ForcingFields forcing, double t_next, ForcingTime ft,
                                             const PhysicalParams& phys, const RheologyParams& rheo)
{
    require_size(A.size(), space->mesh.node_count(), "momentum context A");
    require_size(H.size(), space->mesh.node_count(), "momentum context H");
    if (!(k > 0.0)) throw ConfigError("time step k must be positive");
    MomentumContext ctx;
    ctx.space = std::move(space);
    ctx.k = k;
    ctx.A = std::move(A);
    ctx.H = std::move(H);
    ctx.forcing = std::move(forcing);
    ctx.forcing_time = ft;
    ctx.phys = phys;
    ctx.rheo = rheo;
    if (ctx.forcing.ocean)
        ctx.ocean = interpolate_vector(ctx.space->mesh, [&](Point p) { return ctx.forcing.ocean(p, t_next); });
    else
        ctx.ocean = Vec::Zero(ctx.size());
    return ctx;
}

namespace detail {

/// Field values at one quadrature point of a cell.
struct QuadState {
    double v[2];
    Eigen::Matrix2d grad;
    double A;
    double H;
    double vw[2];
};

inline QuadState eval_quad(const LevelSpace& sp, const Vec& v, const MomentumContext& ctx,
                           const std::array<int, 9>& nodes, int q)
{
    const auto& ref = q2::reference();
    const double inv_h = 1.0 / sp.h();
    QuadState s{};
    s.grad.setZero();
    for (int a = 0; a < 9; ++a) {
        const int n = nodes[static_cast<std::size_t>(a)];
        const double phi = ref.phi[q][a];
        const double gx = ref.dphi_ds[q][a] * inv_h;
        const double gy = ref.dphi_dt[q][a] * inv_h;
        for (int c = 0; c < 2; ++c) {
            const double vc = v[2 * n + c];
            s.v[c] += vc * phi;
            s.grad(c, 0) += vc * gx;
            s.grad(c, 1) += vc * gy;
            s.vw[c] += ctx.ocean[2 * n + c] * phi;
        }
        s.A += ctx.A[n] * phi;
        s.H += ctx.H[n] * phi;
    }
    s.H = std::max(s.H, 0.0);
    s.A = std::clamp(s.A, 0.0, 1.0);
    return s;
}

/// Strain rate of the test/trial function phi_a e_c.
inline Sym2 basis_strain(double gx, double gy, int c)
{
    return c == 0 ? Sym2{gx, 0.0, 0.5 * gy} : Sym2{0.0, gy, 0.5 * gx};
}

}  // namespace detail

/// A(v, phi_i) for every row, boundary rows included (no Dirichlet treatment).
inline Vec apply_operator(const MomentumContext& ctx, const Vec& v)
{
    const LevelSpace& sp = *ctx.space;
    require_size(v.size(), ctx.size(), "momentum operator velocity");
    const auto& ref = q2::reference();
    const auto& ph = ctx.phys;
    const double h2 = sp.h() * sp.h();
    const double inv_h = 1.0 / sp.h();
    const double k = ctx.k;
    Vec out = Vec::Zero(v.size());
    for (int c = 0; c < sp.mesh.cell_count(); ++c) {
        const auto nodes = sp.mesh.cell_nodes(c);
        double local[18] = {};
        for (int q = 0; q < q2::kQuadPoints; ++q) {
            const auto s = detail::eval_quad(sp, v, ctx, nodes, q);
            const double w = ref.weight[q] * h2;
            const StrainRate sr = strain_rate(s.grad);
            const Viscosities vis = viscosities_and_strength(sr, s.H, s.A, ctx.rheo);
            const Sym2 sig = stress(sr, vis.eta, vis.zeta, vis.P);
            const double rhoH = ph.rho_ice * s.H;
            const double d0 = s.v[0] - s.vw[0];
            const double d1 = s.v[1] - s.vw[1];
            const double drag = ph.C_water * ph.rho_water * std::hypot(d0, d1);
            const double m0 = rhoH * s.v[0] + k * (-rhoH * ph.f_coriolis * s.v[1] + drag * d0);
            const double m1 = rhoH * s.v[1] + k * (rhoH * ph.f_coriolis * s.v[0] + drag * d1);
            for (int a = 0; a < 9; ++a) {
                const double phi = ref.phi[q][a];
                const double gx = ref.dphi_ds[q][a] * inv_h;
                const double gy = ref.dphi_dt[q][a] * inv_h;
                local[2 * a] += w * (m0 * phi + k * (sig.xx * gx + sig.xy * gy));
                local[2 * a + 1] += w * (m1 * phi + k * (sig.xy * gx + sig.yy * gy));
            }
        }
        for (int a = 0; a < 9; ++a)
            for (int cc = 0; cc < 2; ++cc) out[2 * nodes[static_cast<std::size_t>(a)] + cc] += local[2 * a + cc];
    }
    return out;
}

/// Load vector with inertia from v_prev, wind stress and the ocean part of the Coriolis term.
/// `t` is t^n; forcing is sampled at t^n or t^{n+1} per ctx.forcing_time.
inline Vec assemble_rhs(const MomentumContext& ctx, const Vec& v_prev, double t)
{
    const LevelSpace& sp = *ctx.space;
    require_size(v_prev.size(), ctx.size(), "assemble_rhs previous velocity");
    const double tf = ctx.forcing_time == ForcingTime::current ? t : t + ctx.k;
    const auto& mesh = sp.mesh;
    const Vec wind = ctx.forcing.wind ? interpolate_vector(mesh, [&](Point p) { return ctx.forcing.wind(p, tf); })
                                      : Vec::Zero(ctx.size());
    const Vec ocean = ctx.forcing.ocean ? interpolate_vector(mesh, [&](Point p) { return ctx.forcing.ocean(p, tf); })
                                        : Vec::Zero(ctx.size());
    const auto& ref = q2::reference();
    const auto& ph = ctx.phys;
    const double h2 = sp.h() * sp.h();
    const double k = ctx.k;
    Vec f = Vec::Zero(ctx.size());
    for (int c = 0; c < mesh.cell_count(); ++c) {
        const auto nodes = mesh.cell_nodes(c);
        double local[18] = {};
        for (int q = 0; q < q2::kQuadPoints; ++q) {
            double vp[2] = {}, va[2] = {}, vw[2] = {}, H = 0.0;
            for (int a = 0; a < 9; ++a) {
                const int n = nodes[static_cast<std::size_t>(a)];
                const double phi = ref.phi[q][a];
                for (int cc = 0; cc < 2; ++cc) {
                    vp[cc] += v_prev[2 * n + cc] * phi;
                    va[cc] += wind[2 * n + cc] * phi;
                    vw[cc] += ocean[2 * n + cc] * phi;
                }
                H += ctx.H[n] * phi;
            }
            H = std::max(H, 0.0);
            const double rhoH = ph.rho_ice * H;
            const double tau = ph.C_air * ph.rho_air * std::hypot(va[0], va[1]);
            const double w = ref.weight[q] * h2;
            const double m0 = rhoH * vp[0] + k * (tau * va[0] - rhoH * ph.f_coriolis * vw[1]);
            const double m1 = rhoH * vp[1] + k * (tau * va[1] + rhoH * ph.f_coriolis * vw[0]);
            for (int a = 0; a < 9; ++a) {
                local[2 * a] += w * m0 * ref.phi[q][a];
                local[2 * a + 1] += w * m1 * ref.phi[q][a];
            }
        }
        for (int a = 0; a < 9; ++a)
            for (int cc = 0; cc < 2; ++cc) f[2 * nodes[static_cast<std::size_t>(a)] + cc] += local[2 * a + cc];
    }
    for (int d : sp.vector_dofs.boundary_dofs) f[d] = 0.0;
    return f;
}

/// r = A(v) - f on interior rows; boundary rows carry the Dirichlet value residual v_i.
inline Vec assemble_residual(const MomentumContext& ctx, const Vec& v, const Vec& f)
{
    require_size(f.size(), ctx.size(), "assemble_residual load vector");
    Vec r = apply_operator(ctx, v) - f;
    for (int d : ctx.space->vector_dofs.boundary_dofs) r[d] = v[d];
    if (!r.allFinite()) throw AssemblyFault("momentum residual has non-finite entries");
    return r;
}

/// Jacobian split sharing one sparsity pattern: J = spd + theta * remainder + skew.
/// spd holds mass, the positive stress part and ocean drag; remainder is the rank-one
/// stress term; skew is Coriolis. Boundary rows are identity in spd and zero elsewhere.
struct JacobianParts {
    SpMat spd;
    SpMat remainder;
    SpMat skew;

    SpMat combine(double theta) const
    {
        SpMat J = spd;
        const Index nnz = J.nonZeros();
        Eigen::Map<Vec>(J.valuePtr(), nnz) += theta * Eigen::Map<const Vec>(remainder.valuePtr(), nnz) +
                                               Eigen::Map<const Vec>(skew.valuePtr(), nnz);
        return J;
    }
};

inline JacobianParts assemble_jacobian_parts(const MomentumContext& ctx, const Vec& v)
{
    const LevelSpace& sp = *ctx.space;
    require_size(v.size(), ctx.size(), "assemble_jacobian velocity");
    const auto& pat = sp.vector_pattern;
    const auto& ref = q2::reference();
    const auto& ph = ctx.phys;
    const double h2 = sp.h() * sp.h();
    const double inv_h = 1.0 / sp.h();
    const double k = ctx.k;

    JacobianParts J{pat.zeros(), pat.zeros(), pat.zeros()};
    double* vs = J.spd.valuePtr();
    double* vr = J.remainder.valuePtr();
    double* vk = J.skew.valuePtr();

    Sym2 E[18], ME[18];
    double phi[18];
    double proj[18];
    for (int c = 0; c < sp.mesh.cell_count(); ++c) {
        const auto nodes = sp.mesh.cell_nodes(c);
        double ls[18][18] = {}, lr[18][18] = {}, lk[18][18] = {};
        for (int q = 0; q < q2::kQuadPoints; ++q) {
            const auto s = detail::eval_quad(sp, v, ctx, nodes, q);
            const double w = ref.weight[q] * h2;
            const StrainRate sr = strain_rate(s.grad);
            const StressLinearization lin = stress_linearization(sr, ctx.rheo, s.H, s.A);
            const double rhoH = ph.rho_ice * s.H;
            const double d[2] = {s.v[0] - s.vw[0], s.v[1] - s.vw[1]};
            const double dn = std::sqrt(d[0] * d[0] + d[1] * d[1] + ph.u_min * ph.u_min);
            const double cw = ph.C_water * ph.rho_water;
            double D[2][2];
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) D[i][j] = cw * ((i == j ? dn : 0.0) + d[i] * d[j] / dn);

            for (int a = 0; a < 9; ++a) {
                const double gx = ref.dphi_ds[q][a] * inv_h;
                const double gy = ref.dphi_dt[q][a] * inv_h;
                for (int cc = 0; cc < 2; ++cc) {
                    const int i = 2 * a + cc;
                    E[i] = detail::basis_strain(gx, gy, cc);
                    ME[i] = lin.spd_part(E[i]);
                    proj[i] = ddot(lin.m_eps, E[i]);
                    phi[i] = ref.phi[q][a];
                }
            }
            const double rem_scale = -lin.zeta / lin.delta_sq;
            const double fc = rhoH * ph.f_coriolis;
            for (int i = 0; i < 18; ++i) {
                const int ci = i % 2;
                for (int j = 0; j < 18; ++j) {
                    const int cj = j % 2;
                    const double pp = phi[i] * phi[j];
                    double spd = k * ddot(ME[j], E[i]) + pp * (k * D[ci][cj]);
                    if (ci == cj) spd += pp * rhoH;
                    ls[i][j] += w * spd;
                    lr[i][j] += w * k * rem_scale * proj[i] * proj[j];
                    if (ci != cj) lk[i][j] += w * k * fc * pp * (ci == 0 ? -1.0 : 1.0);
                }
            }
        }
        for (int i = 0; i < 18; ++i)
            for (int j = 0; j < 18; ++j) {
                const int slot = pat.slot(c, i, j);
                vs[slot] += ls[i][j];
                vr[slot] += lr[i][j];
                vk[slot] += lk[i][j];
            }
    }

    const auto& isb = sp.vector_dofs.is_boundary;
    for (Index r = 0; r < J.spd.outerSize(); ++r) {
        if (!isb[static_cast<std::size_t>(r)]) continue;
        for (Index p = J.spd.outerIndexPtr()[r]; p < J.spd.outerIndexPtr()[r + 1]; ++p) {
            vs[p] = J.spd.innerIndexPtr()[p] == r ? 1.0 : 0.0;
            vr[p] = 0.0;
            vk[p] = 0.0;
        }
    }
    return J;
}

inline SpMat assemble_jacobian(const MomentumContext& ctx, const Vec& v, double theta = 1.0)
{
    return assemble_jacobian_parts(ctx, v).combine(theta);
}

/// Zeroes couplings between interior rows and boundary columns (symmetric Dirichlet elimination).
inline SpMat eliminate_boundary_columns(SpMat A, const std::vector<std::uint8_t>& is_boundary)
{
    for (Index r = 0; r < A.outerSize(); ++r) {
        if (is_boundary[static_cast<std::size_t>(r)]) continue;
        for (SpMat::InnerIterator it(A, r); it; ++it)
            if (is_boundary[static_cast<std::size_t>(it.col())]) it.valueRef() = 0.0;
    }
    return A;
}

/// (w phi_j u, phi_i) for a vector field u and nodal scalar weight w (clamped at 0 pointwise).
inline Vec weighted_mass_action(const LevelSpace& sp, const Vec& weight, const Vec& u)
{
    require_size(weight.size(), sp.mesh.node_count(), "weighted_mass_action weight");
    require_size(u.size(), 2 * sp.mesh.node_count(), "weighted_mass_action field");
    const auto& ref = q2::reference();
    const double h2 = sp.h() * sp.h();
    Vec out = Vec::Zero(u.size());
    for (int c = 0; c < sp.mesh.cell_count(); ++c) {
        const auto nodes = sp.mesh.cell_nodes(c);
        double local[18] = {};
        for (int q = 0; q < q2::kQuadPoints; ++q) {
            double uq[2] = {}, wq = 0.0;
            for (int a = 0; a < 9; ++a) {
                const int n = nodes[static_cast<std::size_t>(a)];
                const double phi = ref.phi[q][a];
                uq[0] += u[2 * n] * phi;
                uq[1] += u[2 * n + 1] * phi;
                wq += weight[n] * phi;
            }
            const double s = ref.weight[q] * h2 * std::max(wq, 0.0);
            for (int a = 0; a < 9; ++a) {
                local[2 * a] += s * uq[0] * ref.phi[q][a];
                local[2 * a + 1] += s * uq[1] * ref.phi[q][a];
            }
        }
        for (int a = 0; a < 9; ++a)
            for (int cc = 0; cc < 2; ++cc) out[2 * nodes[static_cast<std::size_t>(a)] + cc] += local[2 * a + cc];
    }
    return out;
}

}  // namespace nnfem
