#include "nnfem/momentum.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace nnfem;

namespace {

MomentumContext make_ctx(int cells, double side, double H, double A, ForcingFields forcing = {},
                         PhysicalParams phys = {})
{
    const UniformQuadMesh m{0, cells, side};
    auto sp = make_level_space(m);
    const int nn = m.node_count();
    return make_momentum_context(sp, 120.0, Vec::Constant(nn, A), Vec::Constant(nn, H), std::move(forcing), 120.0,
                                 ForcingTime::current, phys, RheologyParams{});
}

// Integral of each Q2 basis function on a uniform mesh: 1D weights h/6 (ends), 2h/3 (mid), h/3 (shared vertex).
Vec basis_integrals(const UniformQuadMesh& m)
{
    const int n = m.nodes_per_axis();
    const double h = m.h();
    auto w1 = [&](int i) {
        if (i % 2 == 1) return 2 * h / 3;
        return (i == 0 || i == n - 1) ? h / 6 : h / 3;
    };
    Vec w(m.node_count());
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) w[i + j * n] = w1(i) * w1(j);
    return w;
}

Vec random_interior(const MomentumContext& ctx, std::mt19937_64& rng, double scale)
{
    std::normal_distribution<double> nd(0.0, scale);
    Vec v(ctx.size());
    for (auto& x : v) x = nd(rng);
    for (int d : ctx.space->vector_dofs.boundary_dofs) v[d] = 0.0;
    return v;
}

ForcingFields swirl_forcing()
{
    ForcingFields f;
    f.ocean = [](Point p, double) { return Velocity{0.01 * std::sin(p.y * 1e-5), -0.01 * std::cos(p.x * 1e-5)}; };
    f.wind = [](Point p, double t) { return Velocity{8.0 + 1e-6 * t, -5.0 + 1e-5 * p.x}; };
    return f;
}

}  // namespace

TEST(MomentumRhs, VanishesWithoutForcing)
{
    PhysicalParams ph;
    ph.f_coriolis = 0.0;
    const auto ctx = make_ctx(3, 1e4, 1.0, 1.0, {}, ph);
    EXPECT_EQ(assemble_rhs(ctx, Vec::Zero(ctx.size()), 0.0).norm(), 0.0);
}

TEST(MomentumRhs, ConstantWindAndInertiaMatchClosedForm)
{
    ForcingFields f;
    f.wind = [](Point, double) { return Velocity{1.0, 0.0}; };
    PhysicalParams ph;
    ph.f_coriolis = 0.0;
    const auto ctx = make_ctx(4, 2e4, 0.3, 1.0, f, ph);
    const auto& m = ctx.space->mesh;
    const Vec w = basis_integrals(m);
    const Vec rhs_wind = assemble_rhs(ctx, Vec::Zero(ctx.size()), 0.0);
    for (int n = 0; n < m.node_count(); ++n) {
        const bool b = m.node_on_boundary(n);
        EXPECT_NEAR(rhs_wind[2 * n], b ? 0.0 : 120.0 * ph.C_air * ph.rho_air * w[n], 1e-9 * w[n]);
        EXPECT_NEAR(rhs_wind[2 * n + 1], 0.0, 1e-12 * w[n]);
    }

    const auto ctx2 = make_ctx(4, 2e4, 0.3, 1.0, {}, ph);
    Vec vp(ctx2.size());
    for (int n = 0; n < m.node_count(); ++n) {
        vp[2 * n] = 0.2;
        vp[2 * n + 1] = -0.1;
    }
    const Vec rhs_in = assemble_rhs(ctx2, vp, 0.0);
    for (int n = 0; n < m.node_count(); ++n) {
        if (m.node_on_boundary(n)) continue;
        EXPECT_NEAR(rhs_in[2 * n], 900.0 * 0.3 * 0.2 * w[n], 1e-10 * 900 * w[n]);
        EXPECT_NEAR(rhs_in[2 * n + 1], -900.0 * 0.3 * 0.1 * w[n], 1e-10 * 900 * w[n]);
    }
}

TEST(MomentumRhs, ForcingTimeSwitch)
{
    ForcingFields f;
    f.wind = [](Point, double t) { return Velocity{t < 100.0 ? 1.0 : 2.0, 0.0}; };
    auto ctx = make_ctx(2, 1e4, 1.0, 1.0, f);
    const Vec v0 = Vec::Zero(ctx.size());
    const Vec fn = assemble_rhs(ctx, v0, 0.0);
    ctx.forcing_time = ForcingTime::next;
    const Vec fn1 = assemble_rhs(ctx, v0, 0.0);
    const int c = 2 * ctx.space->mesh.node_id(2, 2);
    EXPECT_NEAR(fn1[c] / fn[c], 4.0, 1e-12);
}

TEST(MomentumResidual, RestStateWithoutForcingIsZero)
{
    const auto ctx = make_ctx(4, 5e4, 1.5, 0.95);
    const Vec v = Vec::Zero(ctx.size());
    const Vec r = assemble_residual(ctx, v, Vec::Zero(ctx.size()));
    // Interior rows only see -P/2 div(phi), which integrates to zero.
    const double scale = 0.5 * ice_strength(1.5, 0.95, RheologyParams{}) * ctx.k * ctx.space->h();
    EXPECT_LT(r.lpNorm<Eigen::Infinity>(), 1e-12 * scale);
}

TEST(MomentumResidual, DirichletRowsCarryBoundaryValues)
{
    const auto ctx = make_ctx(3, 3e4, 1.0, 1.0, swirl_forcing());
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 0.1);
    Vec v(ctx.size());
    for (auto& x : v) x = nd(rng);
    const Vec f = assemble_rhs(ctx, v, 0.0);
    const Vec r = assemble_residual(ctx, v, f);
    for (int d : ctx.space->vector_dofs.boundary_dofs) EXPECT_EQ(r[d], v[d]);
}

TEST(MomentumResidual, ContinuousInVelocity)
{
    const auto ctx = make_ctx(4, 4e4, 1.0, 1.0, swirl_forcing());
    std::mt19937_64 rng(2);
    const Vec v = random_interior(ctx, rng, 0.1);
    const Vec d = random_interior(ctx, rng, 0.1);
    const Vec f = assemble_rhs(ctx, v, 0.0);
    const Vec r0 = assemble_residual(ctx, v, f);
    double prev = std::numeric_limits<double>::infinity();
    for (double s : {1e-2, 1e-4, 1e-6, 1e-8}) {
        const double diff = (assemble_residual(ctx, v + s * d, f) - r0).norm();
        EXPECT_LT(diff, prev);
        prev = diff;
    }
    EXPECT_LT(prev, 1e-5 * r0.norm());
}

TEST(MomentumResidual, SingleCellSolveGivesZeroResidual)
{
    // One cell has a single interior node; solve its 2x2 system by finite-difference Newton.
    const auto ctx = make_ctx(1, 2e4, 1.0, 1.0, swirl_forcing());
    const Vec f = assemble_rhs(ctx, Vec::Zero(ctx.size()), 0.0);
    const int c = 2 * ctx.space->mesh.node_id(1, 1);
    Vec v = Vec::Zero(ctx.size());
    for (int it = 0; it < 60; ++it) {
        const Vec r = assemble_residual(ctx, v, f);
        Eigen::Vector2d rr(r[c], r[c + 1]);
        if (rr.norm() < 1e-12 * f.norm()) break;
        Eigen::Matrix2d Jfd;
        for (int j = 0; j < 2; ++j) {
            Vec vp = v, vm = v;
            const double hstep = 1e-9;
            vp[c + j] += hstep;
            vm[c + j] -= hstep;
            const Vec rp = assemble_residual(ctx, vp, f), rm = assemble_residual(ctx, vm, f);
            Jfd(0, j) = (rp[c] - rm[c]) / (2 * hstep);
            Jfd(1, j) = (rp[c + 1] - rm[c + 1]) / (2 * hstep);
        }
        const Eigen::Vector2d dv = Jfd.fullPivLu().solve(-rr);
        v[c] += dv[0];
        v[c + 1] += dv[1];
    }
    EXPECT_LT(assemble_residual(ctx, v, f).norm(), 1e-10 * f.norm());
}

TEST(MomentumJacobian, MatchesCentralDifferences)
{
    for (int cells : {4, 8}) {
        const auto ctx = make_ctx(cells, 6.4e4, 1.0, 1.0, swirl_forcing());
        std::mt19937_64 rng(100 + cells);
        std::vector<double> errs;
        for (int t = 0; t < 50; ++t) {
            const Vec v = random_interior(ctx, rng, 0.1);
            const Vec d = random_interior(ctx, rng, 1.0);
            const Vec f = assemble_rhs(ctx, v, 0.0);
            const SpMat J = assemble_jacobian(ctx, v);
            const double h = 1e-7 * v.norm() / d.norm();
            const Vec fd = (assemble_residual(ctx, v + h * d, f) - assemble_residual(ctx, v - h * d, f)) / (2 * h);
            const Vec an = J * d;
            errs.push_back((fd - an).norm() / fd.norm());
        }
        std::nth_element(errs.begin(), errs.begin() + 25, errs.end());
        EXPECT_LE(errs[25], 1e-5) << "cells=" << cells;
    }
}

TEST(MomentumJacobian, DragDerivativeReducesToFloorAtOceanVelocity)
{
    // v = v_w = 0, no ice: the only Jacobian term is the regularized drag C_w rho_w k u_min (phi, phi).
    PhysicalParams ph;
    const UniformQuadMesh one{0, 1, 1e4};
    auto sp = make_level_space(one);
    const auto ctx = make_momentum_context(sp, 120.0, Vec::Ones(9), Vec::Zero(9), {}, 0.0, ForcingTime::current, ph, {});
    const auto parts = assemble_jacobian_parts(ctx, Vec::Zero(ctx.size()));
    const int c = 2 * one.node_id(1, 1);
    const double bubble = 8.0 * one.h() / 15.0;  // integral of the 1D mid-node basis squared
    const double expect = ph.C_water * ph.rho_water * ctx.k * ph.u_min * bubble * bubble;
    EXPECT_NEAR(parts.spd.coeff(c, c), expect, 1e-12 * expect);
    EXPECT_NEAR(parts.spd.coeff(c, c + 1), 0.0, 1e-20);
}

TEST(MomentumJacobian, ViscousBlockSymmetricAndSpdPartPositive)
{
    PhysicalParams ph;
    ph.f_coriolis = 0.0;
    ph.C_water = 0.0;
    const auto ctx = make_ctx(6, 6e4, 1.2, 0.9, {}, ph);
    std::mt19937_64 rng(9);
    const Vec v = random_interior(ctx, rng, 0.1);
    const auto parts = assemble_jacobian_parts(ctx, v);
    const SpMat J = parts.combine(1.0);
    const auto& isb = ctx.space->vector_dofs.is_boundary;
    double asym = 0.0, mag = 0.0;
    for (Index r = 0; r < J.outerSize(); ++r) {
        if (isb[static_cast<std::size_t>(r)]) continue;
        for (SpMat::InnerIterator it(J, r); it; ++it) {
            if (isb[static_cast<std::size_t>(it.col())]) continue;
            asym = std::max(asym, std::abs(it.value() - J.coeff(it.col(), r)));
            mag = std::max(mag, std::abs(it.value()));
        }
    }
    EXPECT_LE(asym, 1e-12 * mag);

    const auto full = make_ctx(6, 6e4, 1.2, 0.9, swirl_forcing());
    const auto pf = assemble_jacobian_parts(full, v);
    for (int t = 0; t < 20; ++t) {
        const Vec x = random_interior(full, rng, 1.0);
        EXPECT_GT(x.dot(pf.spd * x), 0.0);
        EXPECT_NEAR(x.dot(pf.skew * x), 0.0, 1e-10 * x.dot(pf.spd * x));
        EXPECT_LE(x.dot(pf.remainder * x), 1e-12 * x.dot(pf.spd * x));
    }
}

TEST(MomentumMass, WeightedMassActionMatchesClosedForm)
{
    const UniformQuadMesh m{0, 4, 8e3};
    const auto sp = make_level_space(m);
    Vec u(2 * m.node_count());
    for (int n = 0; n < m.node_count(); ++n) {
        u[2 * n] = 1.5;
        u[2 * n + 1] = -2.0;
    }
    const Vec w = basis_integrals(m);
    const Vec g = weighted_mass_action(*sp, Vec::Constant(m.node_count(), 2.0), u);
    for (int n = 0; n < m.node_count(); ++n) {
        EXPECT_NEAR(g[2 * n], 3.0 * w[n], 1e-12 * w[n]);
        EXPECT_NEAR(g[2 * n + 1], -4.0 * w[n], 1e-12 * w[n]);
    }
}
