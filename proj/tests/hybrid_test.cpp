#include "nnfem/io.hpp"

#include <gtest/gtest.h>

using namespace nnfem;

namespace {

SimConfig small_config(int steps = 4)
{
    std::istringstream in("domain_km = 64\ncoarse_cells = 8\nL = 1\nk_seconds = 120\n");
    SimConfig c = parse_config(in).sim;
    c.scenario.duration = steps * c.scenario.k;
    return c;
}

CorrectionNet make_net(const SimConfig& c, std::uint64_t seed = 3)
{
    const auto hier = build_hierarchy(c.scenario.domain_side(), c.coarse_cells, c.L, c.S);
    const auto plan = build_patch_plan(hier, c.N_M, c.S);
    CorrectionNet net(net_config_for(plan, 2, 16));
    net.initialize(seed);
    return net;
}

/// Scales the linear output layer so the raw network output scales by `c`.
void scale_output(CorrectionNet& net, double c)
{
    const auto& L = net.layers().back();
    net.params().segment(L.w, static_cast<Index>(L.in) * L.out) *= c;
    net.params().segment(L.b, L.out) *= c;
}

}  // namespace

TEST(Smallness, DecisionExamples)
{
    auto d = smallness_check(1.0, 4.0, 0.5, SafeguardMode::drop);
    EXPECT_TRUE(d.accept);
    EXPECT_EQ(d.factor, 1.0);
    d = smallness_check(2.0, 4.0, 0.5, SafeguardMode::scale);
    EXPECT_TRUE(d.accept);
    d = smallness_check(3.0, 4.0, 0.5, SafeguardMode::off);
    EXPECT_FALSE(d.accept);
    EXPECT_EQ(d.factor, 1.0);
    d = smallness_check(3.0, 4.0, 0.5, SafeguardMode::drop);
    EXPECT_FALSE(d.accept);
    EXPECT_EQ(d.factor, 0.0);
    d = smallness_check(8.0, 4.0, 0.5, SafeguardMode::scale);
    EXPECT_FALSE(d.accept);
    EXPECT_DOUBLE_EQ(d.factor, 0.25);
    EXPECT_THROW(parse_safeguard("clip"), ConfigError);
    SafeguardConfig bad;
    bad.beta = 1.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ViolationRatio, CountsCheckedStepsOnly)
{
    std::vector<StepRecord> r(5);
    r[1].checked = r[2].checked = r[3].checked = true;
    r[2].violation = true;
    r[0].violation = true;  // unchecked: ignored
    EXPECT_DOUBLE_EQ(violation_ratio(r), 1.0 / 3.0);
    EXPECT_EQ(violation_ratio({}), 0.0);
}

TEST(Hybrid, ZeroNetworkReproducesBaseline)
{
    const SimConfig c = small_config(3);
    CorrectionNet net = make_net(c);
    net.zero_output();
    Simulation base(c, RunMode::baseline);
    Simulation hyb(c, RunMode::hybrid, &net);
    ASSERT_TRUE(base.run());
    ASSERT_TRUE(hyb.run());
    EXPECT_EQ(hyb.velocity(), base.velocity());
    EXPECT_EQ(hyb.A(), base.A());
    EXPECT_EQ(hyb.H(), base.H());
    EXPECT_EQ(fine_state(hyb), fine_state(base));
    for (const auto& r : hyb.records()) EXPECT_FALSE(r.checked);
}

TEST(Hybrid, CorrectionEntersOnlyThroughTheLoad)
{
    // The first step has no stored correction, so it matches the baseline exactly; the
    // correction made afterwards changes the next step.
    const SimConfig c = small_config(2);
    CorrectionNet net = make_net(c);
    scale_output(net, 1e-2);
    Simulation base(c, RunMode::baseline);
    Simulation hyb(c, RunMode::hybrid, &net);
    ASSERT_TRUE(base.step());
    ASSERT_TRUE(hyb.step());
    EXPECT_EQ(hyb.velocity(), base.velocity());
    EXPECT_GT(hyb.correction().norm(), 0.0);
    EXPECT_EQ(hyb.corrected_fine(), fine_state(base) + hyb.correction());
    ASSERT_TRUE(base.step());
    ASSERT_TRUE(hyb.step());
    EXPECT_NE(hyb.velocity(), base.velocity());
    // Transport uses v^n, which is still shared, so the scalars agree after step 2.
    EXPECT_EQ(hyb.A(), base.A());
    EXPECT_EQ(hyb.H(), base.H());
    const auto& r = hyb.records().back();
    EXPECT_TRUE(r.checked);
    EXPECT_GT(r.g_norm, 0.0);
    EXPECT_GT(r.r_base_norm, 0.0);
}

TEST(Hybrid, LoadNormIsLinearInTheCorrection)
{
    const SimConfig c = small_config(2);
    double g[2], r[2];
    for (int i = 0; i < 2; ++i) {
        CorrectionNet net = make_net(c);
        scale_output(net, i == 0 ? 1e-3 : 3e-3);
        Simulation hyb(c, RunMode::hybrid, &net);
        ASSERT_TRUE(hyb.run());
        g[i] = hyb.records()[1].g_norm;
        r[i] = hyb.records()[1].r_base_norm;
    }
    EXPECT_NEAR(g[1] / g[0], 3.0, 1e-9);
    EXPECT_DOUBLE_EQ(r[1], r[0]);
}

TEST(Hybrid, DropModeRestoresBaselineStep)
{
    SimConfig c = small_config(2);
    c.safeguard.mode = SafeguardMode::drop;
    c.safeguard.beta = 1e-12;
    CorrectionNet net = make_net(c);
    Simulation base(c, RunMode::baseline);
    Simulation hyb(c, RunMode::hybrid, &net);
    ASSERT_TRUE(base.run());
    ASSERT_TRUE(hyb.run());
    const auto& r = hyb.records()[1];
    EXPECT_TRUE(r.violation);
    EXPECT_EQ(r.applied_factor, 0.0);
    EXPECT_EQ(hyb.velocity(), base.velocity());
}

TEST(Hybrid, ScaleModeMeetsTheBound)
{
    SimConfig c = small_config(2);
    c.safeguard.mode = SafeguardMode::scale;
    c.safeguard.beta = 1e-3;
    CorrectionNet net = make_net(c);
    Simulation hyb(c, RunMode::hybrid, &net);
    ASSERT_TRUE(hyb.run());
    const auto& r = hyb.records()[1];
    ASSERT_TRUE(r.violation);
    EXPECT_GT(r.applied_factor, 0.0);
    EXPECT_LT(r.applied_factor, 1.0);
    EXPECT_NEAR(r.applied_factor * r.g_norm, c.safeguard.beta * r.r_base_norm, 1e-12 * r.g_norm);
}

TEST(Hybrid, NewtonCountIsSumOfSteps)
{
    const SimConfig c = small_config(3);
    CorrectionNet net = make_net(c);
    scale_output(net, 1e-2);
    Simulation hyb(c, RunMode::hybrid, &net);
    ASSERT_TRUE(hyb.run());
    int sum = 0;
    for (const auto& r : hyb.records()) sum += r.newton_iters;
    EXPECT_EQ(hyb.metrics().N_Newton, sum);
    EXPECT_EQ(hyb.records().size(), 3u);
    EXPECT_GT(hyb.metrics().T_NK, 0.0);
    EXPECT_GE(hyb.metrics().T_mom, hyb.metrics().T_NK);
}

TEST(Hybrid, RejectsMissingOrIncompatibleNetwork)
{
    SimConfig c = small_config(1);
    EXPECT_THROW(Simulation(c, RunMode::hybrid), ConfigError);
    CorrectionNet net = make_net(c);
    c.N_M = 0;
    EXPECT_THROW(Simulation(c, RunMode::hybrid, &net), ConfigError);
}

TEST(ReferenceRun, UsesFinestLevel)
{
    const SimConfig c = small_config(1);
    Simulation ref(c, RunMode::reference);
    EXPECT_EQ(ref.mesh().cells, 16);
    ASSERT_TRUE(ref.run());
    EXPECT_EQ(ref.velocity().size(), 2 * 33 * 33);
}

TEST(Samples, ShapesAndTargets)
{
    const SimConfig c = small_config(4);
    const SampleSet s = generate_samples(c);
    EXPECT_EQ(skipped_steps(4), 1);
    EXPECT_EQ(s.snapshots, 3);
    const auto plan = build_patch_plan(build_hierarchy(c.scenario.domain_side(), 8, 1, 1), c.N_M, c.S);
    EXPECT_EQ(s.patches_per_snapshot, plan.patch_count());
    EXPECT_EQ(s.X.rows(), 3 * plan.patch_count());
    EXPECT_EQ(s.X.cols(), plan.N_in);
    EXPECT_EQ(s.Y.cols(), plan.N_out);
    EXPECT_GT(s.Y.norm(), 0.0);
    EXPECT_TRUE(s.X.allFinite());
}
