#pragma once

// Experiment configuration (key = value text), snapshot and training-set files,
// field export (CSV and VTK ImageData) and configuration hashing.

#include "nnfem/hybrid.hpp"

#include "json.hpp"

#include <filesystem>

namespace nnfem {

struct ExperimentConfig {
    SimConfig sim;
    TrainConfig train;
    std::vector<int> layers{4};
    std::vector<int> widths{256};
    std::vector<Direction> train_directions{Direction::NW, Direction::SW, Direction::SE};
    double train_fraction = 0.75;
    std::uint64_t seed = 1;

    double domain_km() const { return sim.scenario.domain_side() / kKm; }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

inline std::string fmt(double d)
{
    std::ostringstream os;
    os << std::setprecision(17) << d;
    return os.str();
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& f)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::string(f(v[i]));
    return out;
}

}  // namespace detail

/// Applies one `key = value` setting. Lengths are in km and durations in days.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value)
{
    using namespace detail;
    auto& s = c.sim;
    auto& sc = s.scenario;
    const auto i = [&] { return static_cast<int>(to_int(key, value)); };
    const auto d = [&] { return to_double(key, value); };
    if (key == "domain_km") {
        const double km = d();
        if (!(km > 0.0)) throw ConfigError("domain_km must be positive");
        sc.scale = km * kKm / kFullDomain;
    } else if (key == "coarse_cells") s.coarse_cells = i();
    else if (key == "L") s.L = i();
    else if (key == "S") s.S = i();
    else if (key == "N_M") s.N_M = i();
    else if (key == "k_seconds") sc.k = d();
    else if (key == "days") sc.duration = d() * kDay;
    else if (key == "direction") sc.direction = parse_direction(value);
    else if (key == "rotation") sc.rotation = parse_rotation(value);
    else if (key == "seed") c.seed = c.train.seed = static_cast<std::uint64_t>(to_int(key, value));
    else if (key == "A0") sc.A0 = d();
    else if (key == "H0") sc.H0 = d();
    else if (key == "strength_scaling") s.strength_scaling = to_bool(key, value);
    else if (key == "solver.eps_nl") s.newton.eps_nl = d();
    else if (key == "solver.atol") s.newton.atol = d();
    else if (key == "solver.reference_atol") s.reference_atol = d();
    else if (key == "solver.max_iters") s.newton.max_iters = i();
    else if (key == "solver.forcing_eta") s.newton.forcing_eta = d();
    else if (key == "solver.damping_theta") s.newton.damping_theta = d();
    else if (key == "solver.ls_factor") s.newton.ls_factor = d();
    else if (key == "solver.ls_max_trials") s.newton.ls_max_trials = i();
    else if (key == "solver.gmres_restart") s.newton.gmres_restart = i();
    else if (key == "solver.gmres_max_iters") s.newton.gmres_max_iters = i();
    else if (key == "solver.pre_smooth") s.newton.mg.pre_smooth = i();
    else if (key == "solver.post_smooth") s.newton.mg.post_smooth = i();
    else if (key == "solver.omega") s.newton.mg.omega = d();
    else if (key == "solver.smoother") {
        if (value == "jacobi") s.newton.mg.smoother = Smoother::jacobi;
        else if (value == "gauss_seidel") s.newton.mg.smoother = Smoother::gauss_seidel;
        else throw ConfigError("solver.smoother must be jacobi or gauss_seidel");
    } else if (key == "train.lr") c.train.lr = d();
    else if (key == "train.batch_size") c.train.batch_size = i();
    else if (key == "train.epochs") c.train.epochs = i();
    else if (key == "train.weight_decay") c.train.weight_decay = d();
    else if (key == "train.warmup") c.train.warmup_fraction = d();
    else if (key == "train.fraction") c.train_fraction = d();
    else if (key == "train.layers" || key == "train.widths") {
        std::vector<int> v;
        for (const auto& x : split_list(value)) v.push_back(static_cast<int>(to_int(key, x)));
        if (v.empty()) throw ConfigError("key '" + key + "' needs at least one value");
        (key == "train.layers" ? c.layers : c.widths) = v;
    } else if (key == "train.directions") {
        c.train_directions.clear();
        for (const auto& x : split_list(value)) c.train_directions.push_back(parse_direction(x));
        if (c.train_directions.empty()) throw ConfigError("train.directions needs at least one direction");
    } else if (key == "safeguard.mode") s.safeguard.mode = parse_safeguard(value);
    else if (key == "safeguard.beta") s.safeguard.beta = d();
    else throw ConfigError("unknown configuration key '" + key + "'");
}

inline void validate(const ExperimentConfig& c)
{
    c.sim.validate();
    c.train.validate();
    if (!(c.sim.scenario.scale > 0.0 && c.sim.scenario.scale <= 1.0)) throw ConfigError("domain_km must lie in (0, 512]");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw ConfigError("train.fraction must lie in (0,1)");
    for (int l : c.layers)
        if (l < 2) throw ConfigError("train.layers entries must be >= 2");
    for (int w : c.widths)
        if (w < 1) throw ConfigError("train.widths entries must be >= 1");
    patch_sizes(c.sim.N_M, c.sim.S);
}

/// Parses `key = value` lines; '#' starts a comment. Later keys override earlier ones.
inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "<config>")
{
    ExperimentConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        try {
            apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    return parse_config(in, path);
}

/// Fully resolved configuration in the input format; parse_config(write_config(c)) reproduces c.
inline std::string write_config(const ExperimentConfig& c)
{
    using detail::fmt;
    const auto& s = c.sim;
    const auto& sc = s.scenario;
    const auto& nc = s.newton;
    std::ostringstream o;
    o << "domain_km = " << fmt(c.domain_km()) << "\n"
      << "coarse_cells = " << s.coarse_cells << "\n"
      << "L = " << s.L << "\n"
      << "S = " << s.S << "\n"
      << "N_M = " << s.N_M << "\n"
      << "k_seconds = " << fmt(sc.k) << "\n"
      << "days = " << fmt(sc.duration / kDay) << "\n"
      << "direction = " << to_string(sc.direction) << "\n"
      << "rotation = " << to_string(sc.rotation) << "\n"
      << "seed = " << c.seed << "\n"
      << "A0 = " << fmt(sc.A0) << "\n"
      << "H0 = " << fmt(sc.H0) << "\n"
      << "strength_scaling = " << (s.strength_scaling ? "true" : "false") << "\n"
      << "solver.eps_nl = " << fmt(nc.eps_nl) << "\n"
      << "solver.atol = " << fmt(nc.atol) << "\n"
      << "solver.reference_atol = " << fmt(s.reference_atol) << "\n"
      << "solver.max_iters = " << nc.max_iters << "\n"
      << "solver.forcing_eta = " << fmt(nc.forcing_eta) << "\n"
      << "solver.damping_theta = " << fmt(nc.damping_theta) << "\n"
      << "solver.ls_factor = " << fmt(nc.ls_factor) << "\n"
      << "solver.ls_max_trials = " << nc.ls_max_trials << "\n"
      << "solver.gmres_restart = " << nc.gmres_restart << "\n"
      << "solver.gmres_max_iters = " << nc.gmres_max_iters << "\n"
      << "solver.pre_smooth = " << nc.mg.pre_smooth << "\n"
      << "solver.post_smooth = " << nc.mg.post_smooth << "\n"
      << "solver.omega = " << fmt(nc.mg.omega) << "\n"
      << "solver.smoother = " << (nc.mg.smoother == Smoother::jacobi ? "jacobi" : "gauss_seidel") << "\n"
      << "train.lr = " << fmt(c.train.lr) << "\n"
      << "train.batch_size = " << c.train.batch_size << "\n"
      << "train.epochs = " << c.train.epochs << "\n"
      << "train.weight_decay = " << fmt(c.train.weight_decay) << "\n"
      << "train.warmup = " << fmt(c.train.warmup_fraction) << "\n"
      << "train.fraction = " << fmt(c.train_fraction) << "\n"
      << "train.layers = " << detail::join(c.layers, [](int x) { return std::to_string(x); }) << "\n"
      << "train.widths = " << detail::join(c.widths, [](int x) { return std::to_string(x); }) << "\n"
      << "train.directions = " << detail::join(c.train_directions, [](Direction d) { return to_string(d); }) << "\n"
      << "safeguard.mode = " << to_string(s.safeguard.mode) << "\n"
      << "safeguard.beta = " << fmt(s.safeguard.beta) << "\n";
    return o.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig& c)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(write_config(c));
    return os.str();
}

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------- snapshots

constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
    int level = 0;
    int step = 0;
    double time = 0.0;
    std::vector<std::pair<std::string, Vec>> fields;

    const Vec& field(const std::string& name) const
    {
        for (const auto& [n, v] : fields)
            if (n == name) return v;
        throw IoError("snapshot has no field '" + name + "'");
    }
    bool has(const std::string& name) const
    {
        for (const auto& f : fields)
            if (f.first == name) return true;
        return false;
    }
};

inline void save_snapshot(const Snapshot& s, const std::string& path)
{
    BinWriter w(path);
    w.magic("SIFE");
    w.u32(kSnapshotVersion);
    w.i32(s.level);
    w.i32(s.step);
    w.f64(s.time);
    w.u32(static_cast<std::uint32_t>(s.fields.size()));
    for (const auto& [name, v] : s.fields) {
        w.str(name);
        w.u64(static_cast<std::uint64_t>(v.size()));
    }
    for (const auto& f : s.fields) w.f64s(f.second.data(), static_cast<std::size_t>(f.second.size()));
    w.close();
}

inline Snapshot load_snapshot(const std::string& path)
{
    BinReader r(path);
    r.expect_magic("SIFE");
    if (const auto v = r.u32(); v != kSnapshotVersion)
        throw IoError("'" + path + "': unsupported snapshot version " + std::to_string(v));
    Snapshot s;
    s.level = r.i32();
    s.step = r.i32();
    s.time = r.f64();
    const auto count = r.u32();
    if (count > 64) throw IoError("'" + path + "': implausible field count");
    std::vector<std::uint64_t> sizes;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const auto n = r.u64();
        if (n > (1ULL << 32)) throw IoError("'" + path + "': implausible field length");
        s.fields.emplace_back(std::move(name), Vec());
        sizes.push_back(n);
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        s.fields[i].second.resize(static_cast<Index>(sizes[i]));
        r.f64s(s.fields[i].second.data(), static_cast<std::size_t>(sizes[i]));
    }
    r.expect_end();
    return s;
}

inline std::string snapshot_name(int step)
{
    std::ostringstream os;
    os << "snap_" << std::setw(6) << std::setfill('0') << step << ".sife";
    return os.str();
}

/// Snapshot files of a run directory, ordered by step.
inline std::vector<std::string> list_snapshots(const std::string& dir)
{
    std::vector<std::string> out;
    if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".sife") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

inline Snapshot make_snapshot(const Simulation& sim)
{
    Snapshot s;
    s.level = sim.level();
    s.step = sim.step_index();
    s.time = sim.time();
    s.fields = {{"v", sim.velocity()}, {"A", sim.A()}, {"H", sim.H()}};
    if (sim.mode() == RunMode::hybrid) s.fields.emplace_back("v_fine", sim.corrected_fine());
    return s;
}

// ---------------------------------------------------------------- training sets

constexpr std::uint32_t kDatasetVersion = 1;

struct TrainingSet {
    int N_M = 0;
    int S = 1;
    int snapshots = 0;
    int patches_per_snapshot = 0;
    RowMat X;
    RowMat Y;
    std::vector<Index> train_idx;
    std::vector<Index> test_idx;
    std::uint64_t seed = 1;
    std::vector<std::string> sources;

    Dataset train_part() const { return {select_rows(X, train_idx), select_rows(Y, train_idx)}; }
    Dataset test_part() const { return {select_rows(X, test_idx), select_rows(Y, test_idx)}; }
};

/// Random train/test partition of the sample indices.
inline void split_samples(TrainingSet& ts, double train_fraction, std::uint64_t seed)
{
    const Index n = ts.X.rows();
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    Rng rng(seed);
    rng.shuffle(idx);
    const auto ntrain = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));
    ts.train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ntrain));
    ts.test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(ntrain), idx.end());
    std::sort(ts.train_idx.begin(), ts.train_idx.end());
    std::sort(ts.test_idx.begin(), ts.test_idx.end());
    ts.seed = seed;
}

/// Binary samples in `path` plus the split and provenance in `path + ".json"`.
inline void save_training_set(const TrainingSet& ts, const std::string& path)
{
    BinWriter w(path);
    w.magic("NNFE");
    w.u32(kDatasetVersion);
    for (int x : {ts.N_M, ts.S, static_cast<int>(ts.X.cols()), static_cast<int>(ts.Y.cols()), kFeatureLayoutId,
                  ts.snapshots, ts.patches_per_snapshot})
        w.i32(x);
    w.u64(static_cast<std::uint64_t>(ts.X.rows()));
    w.f64s(ts.X.data(), static_cast<std::size_t>(ts.X.size()));
    w.f64s(ts.Y.data(), static_cast<std::size_t>(ts.Y.size()));
    w.close();
    nlohmann::json j;
    j["train"] = ts.train_idx;
    j["test"] = ts.test_idx;
    j["seed"] = ts.seed;
    j["snapshots"] = ts.snapshots;
    j["patches_per_snapshot"] = ts.patches_per_snapshot;
    j["sources"] = ts.sources;
    write_text(path + ".json", j.dump(1) + "\n");
}

inline TrainingSet load_training_set(const std::string& path)
{
    BinReader r(path);
    r.expect_magic("NNFE");
    if (const auto v = r.u32(); v != kDatasetVersion)
        throw IoError("'" + path + "': unsupported training-set version " + std::to_string(v));
    TrainingSet ts;
    ts.N_M = r.i32();
    ts.S = r.i32();
    const int nin = r.i32(), nout = r.i32(), layout = r.i32();
    ts.snapshots = r.i32();
    ts.patches_per_snapshot = r.i32();
    const auto rows = r.u64();
    if (layout != kFeatureLayoutId) throw IoError("'" + path + "': unknown feature layout");
    const PatchSizes sz = patch_sizes(ts.N_M, ts.S);
    if (nin != sz.N_in || nout != sz.N_out) throw IoError("'" + path + "': widths do not match (N_M, S)");
    if (rows > (1ULL << 28)) throw IoError("'" + path + "': implausible sample count");
    ts.X.resize(static_cast<Index>(rows), nin);
    ts.Y.resize(static_cast<Index>(rows), nout);
    r.f64s(ts.X.data(), static_cast<std::size_t>(ts.X.size()));
    r.f64s(ts.Y.data(), static_cast<std::size_t>(ts.Y.size()));
    r.expect_end();

    std::ifstream js(path + ".json");
    if (!js) throw IoError("missing split file '" + path + ".json'");
    nlohmann::json j;
    try {
        js >> j;
        ts.train_idx = j.at("train").get<std::vector<Index>>();
        ts.test_idx = j.at("test").get<std::vector<Index>>();
        ts.seed = j.at("seed").get<std::uint64_t>();
        ts.sources = j.value("sources", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path + ".json': " + e.what());
    }
    for (Index i : ts.train_idx)
        if (i < 0 || i >= ts.X.rows()) throw IoError("'" + path + ".json': split index out of range");
    for (Index i : ts.test_idx)
        if (i < 0 || i >= ts.X.rows()) throw IoError("'" + path + ".json': split index out of range");
    return ts;
}

// ---------------------------------------------------------------- export

/// Per-cell shear as CSV rows `cell,i,j,x,y,shear` (cell centres in m).
inline void export_cells_csv(const UniformQuadMesh& mesh, const Vec& v, const std::string& path)
{
    const Vec shear = shear_deformation(mesh, v);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << std::setprecision(12) << "cell,i,j,x,y,shear\n";
    for (int c = 0; c < mesh.cell_count(); ++c) {
        const Point o = mesh.cell_origin(c);
        out << c << ',' << c % mesh.cells << ',' << c / mesh.cells << ',' << o.x + 0.5 * mesh.h() << ','
            << o.y + 0.5 * mesh.h() << ',' << shear[c] << '\n';
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

/// Per-node velocity as CSV rows `node,x,y,u,v`.
inline void export_nodes_csv(const UniformQuadMesh& mesh, const Vec& v, const std::string& path)
{
    require_size(v.size(), 2 * mesh.node_count(), "export_nodes_csv");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << std::setprecision(12) << "node,x,y,u,v\n";
    for (int n = 0; n < mesh.node_count(); ++n) {
        const Point p = mesh.node_coord(n);
        out << n << ',' << p.x << ',' << p.y << ',' << v[2 * n] << ',' << v[2 * n + 1] << '\n';
    }
    if (!out) throw IoError("write to '" + path + "' failed");
}

/// Legacy-format ASCII VTK ImageData: velocity at cell vertices, shear per cell.
inline void export_vtk(const UniformQuadMesh& mesh, const Vec& v, const std::string& path)
{
    require_size(v.size(), 2 * mesh.node_count(), "export_vtk");
    const Vec shear = shear_deformation(mesh, v);
    const int np = mesh.cells + 1;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << std::setprecision(12) << "# vtk DataFile Version 3.0\nsea-ice velocity and shear\nASCII\n"
        << "DATASET STRUCTURED_POINTS\nDIMENSIONS " << np << ' ' << np << " 1\nORIGIN 0 0 0\nSPACING " << mesh.h()
        << ' ' << mesh.h() << " 1\n";
    out << "POINT_DATA " << np * np << "\nVECTORS velocity double\n";
    for (int j = 0; j < np; ++j)
        for (int i = 0; i < np; ++i) {
            const int n = mesh.node_id(2 * i, 2 * j);
            out << v[2 * n] << ' ' << v[2 * n + 1] << " 0\n";
        }
    out << "CELL_DATA " << mesh.cell_count() << "\nSCALARS shear double 1\nLOOKUP_TABLE default\n";
    for (int c = 0; c < mesh.cell_count(); ++c) out << shear[c] << '\n';
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace nnfem
