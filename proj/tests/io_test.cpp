#include "nnfem/io.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace nnfem;

namespace {

std::string tmp(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("nnfem_io_" + name)).string();
}

ExperimentConfig parse(const std::string& text)
{
    std::istringstream in(text);
    return parse_config(in, "test.cfg");
}

std::vector<std::string> lines_of(const std::string& path)
{
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST(Config, DefaultsAndOverrides)
{
    const auto c = parse("# desk run\ndomain_km = 64\nL = 2   # two levels\ndirection = SW\nsolver.eps_nl = 1e-8\n"
                         "train.layers = 2, 4\nsafeguard.mode = scale\n");
    EXPECT_DOUBLE_EQ(c.domain_km(), 64.0);
    EXPECT_DOUBLE_EQ(c.sim.scenario.scale, 0.125);
    EXPECT_EQ(c.sim.L, 2);
    EXPECT_EQ(c.sim.coarse_cells, 16);
    EXPECT_EQ(c.sim.scenario.direction, Direction::SW);
    EXPECT_EQ(c.sim.newton.eps_nl, 1e-8);
    EXPECT_EQ(c.layers, (std::vector<int>{2, 4}));
    EXPECT_EQ(c.sim.safeguard.mode, SafeguardMode::scale);
}

TEST(Config, RoundTripThroughText)
{
    auto c = parse("domain_km = 96\nk_seconds = 240\ndays = 0.25\nrotation = anticyclone\nseed = 9\n"
                   "train.directions = NE, SE\nsolver.smoother = jacobi\nstrength_scaling = false\n");
    const std::string text = write_config(c);
    std::istringstream in(text);
    const auto d = parse_config(in);
    EXPECT_EQ(write_config(d), text);
    EXPECT_EQ(config_hash(d), config_hash(c));
    EXPECT_EQ(d.sim.scenario.rotation, Rotation::anticyclone);
    EXPECT_EQ(d.sim.newton.mg.smoother, Smoother::jacobi);
    EXPECT_FALSE(d.sim.strength_scaling);
    EXPECT_EQ(d.train_directions, (std::vector<Direction>{Direction::NE, Direction::SE}));
    EXPECT_EQ(config_hash(c).size(), 16u);
    c.seed = 10;
    EXPECT_NE(config_hash(c), config_hash(d));
}

TEST(Config, ErrorsCarryLineNumbers)
{
    try {
        parse("L = 3\nbogus = 1\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("test.cfg:2"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
    }
    EXPECT_THROW(parse("L 3\n"), ConfigError);
    EXPECT_THROW(parse("L = three\n"), ConfigError);
    EXPECT_THROW(parse("domain_km = 1024\n"), ConfigError);
    EXPECT_THROW(parse("safeguard.beta = 2\n"), ConfigError);
    EXPECT_THROW(parse("N_M = 5\n"), ConfigError);
    EXPECT_THROW(load_config(tmp("missing.cfg")), IoError);
}

TEST(Fnv1a, KnownVectors)
{
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(SnapshotFile, RoundTripAndListing)
{
    const std::string dir = tmp("snaps");
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    Snapshot s;
    s.level = 2;
    s.step = 7;
    s.time = 840.0;
    s.fields = {{"v", Vec::LinSpaced(10, -1.0, 1.0)}, {"A", Vec::Constant(4, 0.9)}, {"empty", Vec()}};
    const std::string p = dir + "/" + snapshot_name(7);
    EXPECT_EQ(snapshot_name(7), "snap_000007.sife");
    save_snapshot(s, p);
    save_snapshot(s, dir + "/" + snapshot_name(3));
    const Snapshot t = load_snapshot(p);
    EXPECT_EQ(t.level, 2);
    EXPECT_EQ(t.step, 7);
    EXPECT_EQ(t.time, 840.0);
    EXPECT_EQ(t.field("v"), s.field("v"));
    EXPECT_EQ(t.field("A"), s.field("A"));
    EXPECT_EQ(t.field("empty").size(), 0);
    EXPECT_FALSE(t.has("H"));
    EXPECT_THROW(t.field("H"), IoError);
    const auto list = list_snapshots(dir);
    ASSERT_EQ(list.size(), 2u);
    EXPECT_NE(list[0].find("snap_000003"), std::string::npos);
    // A truncated file is rejected.
    std::filesystem::resize_file(p, std::filesystem::file_size(p) - 8);
    EXPECT_THROW(load_snapshot(p), IoError);
    std::filesystem::remove_all(dir);
}

TEST(TrainingSetFile, RoundTripWithSplit)
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    TrainingSet ts;
    ts.N_M = 1;
    ts.S = 1;
    ts.snapshots = 2;
    ts.patches_per_snapshot = 5;
    ts.X.resize(10, 332);
    ts.Y.resize(10, 162);
    for (Index i = 0; i < ts.X.size(); ++i) ts.X.data()[i] = nd(rng);
    for (Index i = 0; i < ts.Y.size(); ++i) ts.Y.data()[i] = nd(rng);
    ts.sources = {"NW-cyclone", "SE-cyclone"};
    split_samples(ts, 0.7, 11);
    EXPECT_EQ(ts.train_idx.size(), 7u);
    EXPECT_EQ(ts.test_idx.size(), 3u);
    std::vector<Index> all = ts.train_idx;
    all.insert(all.end(), ts.test_idx.begin(), ts.test_idx.end());
    std::sort(all.begin(), all.end());
    for (Index i = 0; i < 10; ++i) EXPECT_EQ(all[static_cast<std::size_t>(i)], i);

    const std::string p = tmp("set.nnfe");
    save_training_set(ts, p);
    const TrainingSet u = load_training_set(p);
    EXPECT_EQ(u.X, ts.X);
    EXPECT_EQ(u.Y, ts.Y);
    EXPECT_EQ(u.train_idx, ts.train_idx);
    EXPECT_EQ(u.test_idx, ts.test_idx);
    EXPECT_EQ(u.sources, ts.sources);
    EXPECT_EQ(u.N_M, 1);
    EXPECT_EQ(u.patches_per_snapshot, 5);
    EXPECT_EQ(u.train_part().X.rows(), 7);
    EXPECT_EQ(u.test_part().Y.row(0), ts.Y.row(ts.test_idx[0]));
    std::filesystem::remove(p);
    std::filesystem::remove(p + ".json");
}

TEST(Export, CsvAndVtkContents)
{
    const UniformQuadMesh mesh{0, 4, 4000.0};
    const Vec v = interpolate_vector(mesh, [](Point p) { return Velocity{2e-6 * p.y, 0.0}; });
    const std::string cells = tmp("cells.csv"), nodes = tmp("nodes.csv"), vtk = tmp("f.vtk");
    export_cells_csv(mesh, v, cells);
    export_nodes_csv(mesh, v, nodes);
    export_vtk(mesh, v, vtk);
    const auto c = lines_of(cells);
    ASSERT_EQ(c.size(), 17u);
    EXPECT_EQ(c[0], "cell,i,j,x,y,shear");
    const auto n = lines_of(nodes);
    ASSERT_EQ(n.size(), 82u);
    EXPECT_EQ(n[0], "node,x,y,u,v");
    // Last node sits at the top-right corner with u = 2e-6 * 4000.
    std::istringstream last(n.back());
    std::vector<double> vals;
    for (std::string tok; std::getline(last, tok, ',');) vals.push_back(std::stod(tok));
    ASSERT_EQ(vals.size(), 5u);
    EXPECT_DOUBLE_EQ(vals[1], 4000.0);
    EXPECT_DOUBLE_EQ(vals[2], 4000.0);
    EXPECT_NEAR(vals[3], 8e-3, 1e-15);
    const auto k = lines_of(vtk);
    ASSERT_FALSE(k.empty());
    EXPECT_EQ(k[0].rfind("# vtk DataFile", 0), 0u);
    bool has_points = false, has_cells = false;
    for (const auto& l : k) {
        if (l.rfind("POINT_DATA", 0) == 0) has_points = true;
        if (l.rfind("CELL_DATA 16", 0) == 0) has_cells = true;
    }
    EXPECT_TRUE(has_points);
    EXPECT_TRUE(has_cells);
    for (const auto& p : {cells, nodes, vtk}) std::filesystem::remove(p);
}
