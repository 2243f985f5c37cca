#include "nnfem/metrics.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace nnfem;

namespace {

const UniformQuadMesh kMesh{0, 8, 8000.0};

template <class F>
Vec field(F&& f)
{
    return interpolate_vector(kMesh, [&](Point p) { return f(p); });
}

}  // namespace

TEST(L2Error, Basics)
{
    const Vec a = Vec::LinSpaced(10, 0.0, 1.0);
    EXPECT_EQ(l2_error(a, a), 0.0);
    Vec b = a;
    b[3] += 1.0;
    EXPECT_DOUBLE_EQ(l2_error(b, a), 1.0);
    EXPECT_THROW(l2_error(a, Vec::Zero(9)), SizeMismatch);
}

TEST(Shear, RigidRotationIsZero)
{
    const double c = 1e-5;
    const Vec v = field([&](Point p) { return Velocity{-c * (p.y - 4000), c * (p.x - 4000)}; });
    EXPECT_LT(shear_deformation(kMesh, v).maxCoeff(), 1e-18);
    const Vec t = field([](Point) { return Velocity{0.3, -0.1}; });
    EXPECT_LT(shear_deformation(kMesh, t).maxCoeff(), 1e-18);
}

TEST(Shear, PureShearAndUniaxial)
{
    const double g = 2e-6;
    const Vec s = shear_deformation(kMesh, field([&](Point p) { return Velocity{g * p.y, 0.0}; }));
    for (Index i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], g, 1e-18);
    const Vec u = shear_deformation(kMesh, field([&](Point p) { return Velocity{-g * p.x, 0.0}; }));
    for (Index i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], g, 1e-18);
}

TEST(Lkf, ConstantFieldHasNoFeatures)
{
    EXPECT_EQ(detect_lkfs(Vec::Constant(32 * 32, 1e-7), 32).count, 0);
    EXPECT_EQ(detect_lkfs(Vec::Zero(16 * 16), 16).count, 0);
}

TEST(Lkf, ThreeDisjointRidges)
{
    const int n = 32;
    Vec f = Vec::Constant(n * n, 1e-8);
    for (int i = 4; i < 14; ++i) f[i + 5 * n] = 1e-6;                // horizontal
    for (int j = 10; j < 22; ++j) f[20 + j * n] = 1e-6;              // vertical
    for (int k = 0; k < 8; ++k) f[(6 + k) + (18 + k) * n] = 1e-6;   // diagonal
    const auto res = detect_lkfs(f, n);
    EXPECT_EQ(res.count, 3);
    // A ridge shorter than the minimum length is ignored.
    f[28 + 28 * n] = 1e-6;
    f[29 + 28 * n] = 1e-6;
    EXPECT_EQ(detect_lkfs(f, n).count, 3);
}

TEST(Lkf, JunctionSplitsCrossIntoArms)
{
    const int n = 32;
    Vec f = Vec::Constant(n * n, 1e-8);
    for (int i = 6; i < 27; ++i) f[i + 16 * n] = 1e-6;
    for (int j = 6; j < 27; ++j) f[16 + j * n] = 1e-6;
    EXPECT_EQ(detect_lkfs(f, n).count, 4);
}

TEST(Lkf, InvariantUnderScaling)
{
    const int n = 24;
    Vec f(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) f[i + j * n] = 1e-8 * (1.0 + std::sin(0.7 * i) * std::cos(0.4 * j) + 0.01 * i);
    for (int i = 3; i < 20; ++i) f[i + 12 * n] = 1e-6;
    const int base = detect_lkfs(f, n).count;
    EXPECT_GE(base, 1);
    EXPECT_EQ(detect_lkfs(f * 4.0, n).count, base);
    EXPECT_EQ(detect_lkfs(f, n).labels, detect_lkfs(f, n).labels);
}

TEST(Lkf, RejectsNegativeField)
{
    Vec f = Vec::Ones(16);
    f[3] = -1.0;
    EXPECT_THROW(detect_lkfs(f, 4), ConfigError);
}

TEST(MetricsCsv, HeaderAndRow)
{
    RunMetrics m;
    m.run_id = "r1";
    m.scenario = "NE-cyclone";
    m.N_Newton = 12;
    const std::string path = (std::filesystem::temp_directory_path() / "nnfem_metrics.csv").string();
    write_metrics_csv(path, {m});
    std::ifstream in(path);
    std::string h, r;
    std::getline(in, h);
    std::getline(in, r);
    EXPECT_EQ(h, "run_id,N_M,S,l,w,scenario,E_l2,N_LKF,N_Newton,T_mom,T_NK,T_cpy,T_nn,k,eps_nl");
    EXPECT_EQ(r.substr(0, 3), "r1,");
    EXPECT_NE(r.find("NE-cyclone,0,0,12,"), std::string::npos);
    std::filesystem::remove(path);
}
