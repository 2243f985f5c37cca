#include "nnfem/transport.hpp"

#include <gtest/gtest.h>

using namespace nnfem;

namespace {

Vec rotation(const UniformQuadMesh& m, double omega)
{
    const double c = 0.5 * m.side;
    return interpolate_vector(m, [&](Point p) { return Velocity{-omega * (p.y - c), omega * (p.x - c)}; });
}

}  // namespace

TEST(Transport, ZeroVelocityIsIdentity)
{
    const UniformQuadMesh m{0, 5, 1e4};
    const auto sp = make_level_space(m);
    const Vec A = interpolate_scalar(m, [](Point p) { return 0.3 + 1e-5 * p.x - 2e-9 * p.y * p.y; });
    const Vec out = advance_scalar(*sp, A, Vec::Zero(2 * m.node_count()), 120.0, 1.0);
    EXPECT_EQ((out - A).norm(), 0.0);
}

TEST(Transport, ConstantIsPreservedUnderRigidRotation)
{
    const UniformQuadMesh m{0, 8, 1e4};
    const auto sp = make_level_space(m);
    const Vec v = rotation(m, 2e-5);
    const Vec c = Vec::Constant(m.node_count(), 0.87);
    const Vec out = advance_scalar(*sp, c, v, 600.0, 0.87);
    EXPECT_LT((out - c).lpNorm<Eigen::Infinity>(), 1e-10 * 0.87);
}

TEST(Transport, GaussianBumpMassIsConserved)
{
    const UniformQuadMesh m{0, 16, 1e5};
    const auto sp = make_level_space(m);
    const Vec v = rotation(m, 1e-5);
    const Vec u = interpolate_scalar(m, [](Point p) {
        const double dx = p.x - 0.6e5, dy = p.y - 0.5e5;
        return std::exp(-(dx * dx + dy * dy) / (2 * 8e3 * 8e3));
    });
    const SpMat M = assemble_mass_scalar(*sp);
    const Vec one = Vec::Ones(m.node_count());
    const double before = one.dot(M * u);
    const Vec out = advance_scalar(*sp, u, v, 600.0, 0.0);
    const double after = one.dot(M * out);
    EXPECT_LE(std::abs(after - before), 1e-3 * before);
    EXPECT_GT((out - u).norm(), 0.0);
}

TEST(Transport, InflowBoundaryTakesPrescribedValue)
{
    const UniformQuadMesh m{0, 4, 1e4};
    const auto sp = make_level_space(m);
    const Vec v = interpolate_vector(m, [](Point) { return Velocity{0.1, 0.0}; });
    const Vec u = Vec::Constant(m.node_count(), 0.5);
    const Vec out = advance_scalar(*sp, u, v, 120.0, 0.9);
    for (int j = 0; j < m.nodes_per_axis(); ++j) EXPECT_EQ(out[m.node_id(0, j)], 0.9);
    const auto sys = assemble_transport(*sp, u, v, 120.0, 0.9);
    for (double t : sys.tau) EXPECT_GE(t, 0.0);
}

TEST(Transport, ClampState)
{
    Vec A(3), H(3);
    A << 1.02, 0.5, -0.1;
    H << -1e-9, 2.0, 0.0;
    const auto rep = clamp_state(A, H);
    EXPECT_EQ(A[0], 1.0);
    EXPECT_EQ(A[1], 0.5);
    EXPECT_EQ(A[2], 0.0);
    EXPECT_EQ(H[0], 0.0);
    EXPECT_EQ(H[1], 2.0);
    EXPECT_EQ(rep.A_clipped, 2);
    EXPECT_EQ(rep.H_clipped, 1);
    EXPECT_EQ(rep.total(), 3);
}

TEST(Transport, SizeMismatchThrows)
{
    const UniformQuadMesh m{0, 2, 1.0};
    const auto sp = make_level_space(m);
    EXPECT_THROW(advance_scalar(*sp, Vec::Zero(3), Vec::Zero(2 * m.node_count()), 1.0, 0.0), SizeMismatch);
}
