// nnfem command-line driver: simulation runs, training data, training, ablations and export.

#include "nnfem/io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace nnfem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

struct Common {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::optional<double> scale;
    std::string safeguard;
    std::optional<double> beta;
    std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--config", c.config, "Configuration file (key = value)");
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--seed", c.seed, "Random seed (overrides the config)");
    sub->add_option("--threads", c.threads, "Worker thread cap")->check(CLI::PositiveNumber);
    sub->add_option("--scale", c.scale, "Domain scale relative to the 512 km benchmark");
    sub->add_option("--safeguard", c.safeguard, "Smallness safeguard: off, drop or scale");
    sub->add_option("--beta", c.beta, "Smallness bound factor in (0,1)");
    sub->add_option("--set", c.sets, "Extra key=value setting (repeatable)");
}

ExperimentConfig resolve(const Common& c, const std::string& fallback_config = {})
{
    ExperimentConfig ec;
    if (!c.config.empty()) ec = load_config(c.config);
    else if (!fallback_config.empty() && fs::exists(fallback_config)) ec = load_config(fallback_config);
    for (const auto& kv : c.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(ec, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    if (c.seed) ec.seed = ec.train.seed = *c.seed;
    if (c.scale) {
        if (!(*c.scale > 0.0 && *c.scale <= 1.0)) throw ConfigError("--scale must lie in (0,1]");
        ec.sim.scenario.scale = *c.scale;
    }
    if (!c.safeguard.empty()) ec.sim.safeguard.mode = parse_safeguard(c.safeguard);
    if (c.beta) ec.sim.safeguard.beta = *c.beta;
    validate(ec);
    Eigen::setNbThreads(c.threads);
    return ec;
}

/// Output directory with the resolved config; the manifest is written by finish().
struct RunDir {
    fs::path dir;
    nlohmann::json manifest;

    RunDir(const Common& c, const ExperimentConfig& ec, const std::string& command, const std::string& mode)
        : dir(c.out)
    {
        std::error_code err;
        fs::create_directories(dir, err);
        if (err) throw IoError("cannot create '" + dir.string() + "': " + err.message());
        write_text((dir / "config.cfg").string(), write_config(ec));
        manifest = {{"command", command},
                    {"mode", mode},
                    {"config_hash", config_hash(ec)},
                    {"version", kVersion},
                    {"seed", ec.seed},
                    {"threads", c.threads},
                    {"timing_note", "wall clock from std::chrono::steady_clock; serial CPU execution"},
                    {"outputs", nlohmann::json::array({"config.cfg"})}};
    }

    std::string path(const std::string& name)
    {
        manifest["outputs"].push_back(name);
        return (dir / name).string();
    }

    void finish(const nlohmann::json& extra = {})
    {
        nlohmann::json m = manifest;
        if (!extra.is_null()) m["result"] = extra;
        write_text((dir / "manifest.json").string(), m.dump(1) + "\n");
    }
};

std::string scenario_name(const Scenario& sc) { return std::string(to_string(sc.direction)) + "-" + to_string(sc.rotation); }

void write_steps_csv(const std::string& path, const std::vector<StepRecord>& recs)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << std::setprecision(12)
        << "step,t,newton_iters,gmres_iters,converged,g_norm,r_base_norm,checked,violation,applied_factor,"
           "correction_norm,fine_residual_before,fine_residual_after\n";
    for (const auto& r : recs)
        out << r.step << ',' << r.t << ',' << r.newton_iters << ',' << r.gmres_iters << ',' << r.converged << ','
            << r.g_norm << ',' << r.r_base_norm << ',' << r.checked << ',' << r.violation << ',' << r.applied_factor
            << ',' << r.correction_norm << ',' << r.fine_residual_before << ',' << r.fine_residual_after << '\n';
    if (!out) throw IoError("write to '" + path + "' failed");
}

std::string snapshot_path(const fs::path& run_dir, int step)
{
    return (run_dir / "snapshots" / snapshot_name(step)).string();
}

/// Error against the reference snapshot of the same step, or NaN without a reference.
double reference_error(const Simulation& sim, const std::string& ref_dir)
{
    if (sim.mode() == RunMode::reference) return 0.0;
    if (ref_dir.empty()) return std::numeric_limits<double>::quiet_NaN();
    const Snapshot ref = load_snapshot(snapshot_path(ref_dir, sim.step_index()));
    if (std::abs(ref.time - sim.time()) > 1e-9 * std::max(1.0, sim.time()))
        throw ConfigError("reference snapshot time does not match the run");
    return l2_error(fine_state(sim), ref.field("v"));
}

std::optional<CorrectionNet> load_net(const std::string& path, RunMode mode)
{
    if (mode != RunMode::hybrid) return std::nullopt;
    if (path.empty()) throw ConfigError("hybrid mode needs --weights");
    return load_weights(path);
}

struct RunOutcome {
    bool ok = false;
    RunMetrics metrics;
    std::vector<StepRecord> records;
};

/// Runs one simulation, writing snapshots into `snap_dir` every `every` steps plus the final state.
RunOutcome simulate(const ExperimentConfig& ec, RunMode mode, const CorrectionNet* net, InputMask mask, RunDir& rd,
                    const std::string& tag, const std::string& snap_dir, int every, const std::string& ref_dir,
                    int max_steps)
{
    Simulation sim(ec.sim, mode, net, mask);
    const fs::path sd = rd.dir / snap_dir;
    const auto snap = [&](const Simulation& s) {
        save_snapshot(make_snapshot(s), (sd / snapshot_name(s.step_index())).string());
    };
    if (every > 0) {
        fs::create_directories(sd);
        rd.manifest["outputs"].push_back(snap_dir + "/");
        snap(sim);
    }
    const bool ok = sim.run(
        [&](const Simulation& s) {
            if (every > 0 && s.step_index() % every == 0) snap(s);
            const auto& r = s.records().back();
            std::cerr << tag << " step " << s.step_index() << "/" << ec.sim.steps() << " newton " << r.newton_iters
                      << " gmres " << r.gmres_iters << "\n";
        },
        max_steps);
    if (every > 0 && ok && sim.step_index() % every != 0) snap(sim);

    RunOutcome o{ok, sim.metrics(), sim.records()};
    o.metrics.run_id = tag;
    o.metrics.scenario = scenario_name(ec.sim.scenario);
    o.metrics.N_LKF = detect_lkfs(sim.mesh(), sim.velocity()).count;
    o.metrics.E_l2 = ok ? reference_error(sim, ref_dir) : std::numeric_limits<double>::quiet_NaN();
    write_steps_csv(rd.path(tag + "_steps.csv"), sim.records());
    export_cells_csv(sim.mesh(), sim.velocity(), rd.path(tag + "_cells.csv"));
    export_nodes_csv(sim.mesh(), sim.velocity(), rd.path(tag + "_nodes.csv"));
    export_vtk(sim.mesh(), sim.velocity(), rd.path(tag + ".vtk"));
    o.metrics.run_id = rd.dir.filename().string() + "/" + tag;
    return o;
}

nlohmann::json summary_json(const RunOutcome& o)
{
    const auto& m = o.metrics;
    nlohmann::json j = {{"completed", o.ok},     {"E_l2", std::isnan(m.E_l2) ? nlohmann::json() : nlohmann::json(m.E_l2)},
                        {"N_LKF", m.N_LKF},      {"N_Newton", m.N_Newton},
                        {"T_mom", m.T_mom},      {"T_NK", m.T_NK},
                        {"T_cpy", m.T_cpy},      {"T_nn", m.T_nn}};
    if (o.metrics.N_M >= 0) j["violation_ratio"] = violation_ratio(o.records);
    return j;
}

// ---------------------------------------------------------------- commands

struct RunArgs {
    std::string mode;
    std::string weights;
    std::string mask = "none";
    std::string reference;
    int every = 1;
    int steps = -1;
};

int cmd_run(const Common& c, const RunArgs& a)
{
    const ExperimentConfig ec = resolve(c);
    const RunMode mode = parse_run_mode(a.mode);
    const InputMask mask = parse_input_mask(a.mask);
    const auto net = load_net(a.weights, mode);
    RunDir rd(c, ec, "run", a.mode);
    const RunOutcome o = simulate(ec, mode, net ? &*net : nullptr, mask, rd, a.mode, "snapshots", a.every, a.reference, a.steps);
    write_metrics_csv(rd.path("metrics.csv"), {o.metrics});
    rd.finish(summary_json(o));
    std::cout << metrics_csv_header() << "\n" << metrics_csv_row(o.metrics) << "\n";
    if (!o.ok) throw SolverError("Newton solver failed; partial outputs written to '" + rd.dir.string() + "'");
    return 0;
}

/// Samples from a finished baseline/reference pair of run directories.
SampleSet samples_from_runs(const ExperimentConfig& ec, const fs::path& base_dir, const fs::path& ref_dir)
{
    ExperimentConfig rc = load_config((base_dir / "config.cfg").string());
    rc.sim.N_M = ec.sim.N_M;
    rc.sim.validate();
    const SimConfig& cfg = rc.sim;
    const MeshHierarchy hier = build_hierarchy(cfg.scenario.domain_side(), cfg.coarse_cells, cfg.L, cfg.S);
    const FineCoupling fc = make_fine_coupling(hier, cfg.N_M);
    const ForcingFields forcing = scenario_forcing(cfg.scenario);
    const int steps = cfg.steps();
    SampleSet out;
    out.patches_per_snapshot = fc.plan.patch_count();
    for (int n = skipped_steps(steps) + 1; n <= steps; ++n) {
        const Snapshot prev = load_snapshot(snapshot_path(base_dir, n - 1));
        const Snapshot cur = load_snapshot(snapshot_path(base_dir, n));
        const Snapshot ref = load_snapshot(snapshot_path(ref_dir, n));
        if (cur.time != ref.time || cur.level != hier.coarse_level_index || ref.level != hier.fine_level_index())
            throw ConfigError("snapshot mismatch at step " + std::to_string(n) + " between '" + base_dir.string() +
                              "' and '" + ref_dir.string() + "'");
        auto [X, Y] = snapshot_samples(fc, cfg, forcing, cur.field("A"), cur.field("H"), prev.field("v"),
                                       cur.field("v"), ref.field("v"), prev.time);
        append_rows(out.X, X);
        append_rows(out.Y, Y);
        ++out.snapshots;
    }
    return out;
}

struct GendataArgs {
    std::vector<std::string> baselines;
    std::vector<std::string> references;
};

int cmd_gendata(const Common& c, const GendataArgs& a)
{
    const ExperimentConfig ec = resolve(c);
    if (a.baselines.size() != a.references.size())
        throw ConfigError("--baseline and --reference must be given the same number of times");
    RunDir rd(c, ec, "gendata", "");
    TrainingSet ts;
    ts.N_M = ec.sim.N_M;
    ts.S = ec.sim.S;
    const auto add = [&](const SampleSet& s, const std::string& source) {
        append_rows(ts.X, s.X);
        append_rows(ts.Y, s.Y);
        ts.snapshots += s.snapshots;
        ts.patches_per_snapshot = s.patches_per_snapshot;
        ts.sources.push_back(source);
        std::cerr << "gendata " << source << ": " << s.snapshots << " snapshots\n";
    };
    if (a.baselines.empty()) {
        for (Direction d : ec.train_directions) {
            SimConfig cfg = ec.sim;
            cfg.scenario.direction = d;
            add(generate_samples(cfg), scenario_name(cfg.scenario));
        }
    } else {
        for (std::size_t i = 0; i < a.baselines.size(); ++i)
            add(samples_from_runs(ec, a.baselines[i], a.references[i]), a.baselines[i] + "|" + a.references[i]);
    }
    split_samples(ts, ec.train_fraction, ec.seed);
    const std::string path = rd.path("train.nnfe");
    rd.manifest["outputs"].push_back("train.nnfe.json");
    save_training_set(ts, path);
    rd.finish({{"samples", ts.X.rows()}, {"snapshots", ts.snapshots}, {"train", ts.train_idx.size()},
               {"test", ts.test_idx.size()}});
    std::cout << path << ": " << ts.X.rows() << " samples (" << ts.snapshots << " snapshots x "
              << ts.patches_per_snapshot << " patches)\n";
    return 0;
}

int cmd_train(const Common& c, const std::string& data)
{
    const ExperimentConfig ec = resolve(c);
    const TrainingSet ts = load_training_set(data);
    const MeshHierarchy hier = build_hierarchy(ec.sim.scenario.domain_side(), ec.sim.coarse_cells, ec.sim.L, ts.S);
    const PatchPlan plan = build_patch_plan(hier, ts.N_M, ts.S);
    RunDir rd(c, ec, "train", "");
    nlohmann::json results = nlohmann::json::array();
    for (int l : ec.layers)
        for (int w : ec.widths) {
            const std::string tag = "l" + std::to_string(l) + "_w" + std::to_string(w);
            const TrainResult tr = train(ts.train_part(), ts.test_part(), ec.train, net_config_for(plan, l, w));
            save_weights(tr.net, rd.path("net_" + tag + ".nnwt"));
            std::ofstream log(rd.path("log_" + tag + ".csv"));
            log << std::setprecision(12) << "epoch,train_loss,val_loss,lr\n";
            log << "0," << tr.log.initial_train_loss << ',' << tr.log.initial_val_loss << ",0\n";
            for (std::size_t e = 0; e < tr.log.train_loss.size(); ++e)
                log << e + 1 << ',' << tr.log.train_loss[e] << ',' << tr.log.val_loss[e] << ',' << tr.log.lr[e] << '\n';
            if (!log) throw IoError("cannot write training log for " + tag);
            results.push_back({{"layers", l},
                               {"width", w},
                               {"best_epoch", tr.log.best_epoch + 1},
                               {"best_val_loss", tr.log.val_loss[static_cast<std::size_t>(tr.log.best_epoch)]},
                               {"initial_train_loss", tr.log.initial_train_loss},
                               {"final_train_loss", tr.log.train_loss.back()},
                               {"wall_time", tr.log.wall_time}});
            std::cout << tag << ": train loss " << tr.log.initial_train_loss << " -> " << tr.log.train_loss.back()
                      << ", best validation " << results.back()["best_val_loss"] << " at epoch "
                      << tr.log.best_epoch + 1 << "\n";
        }
    rd.finish(results);
    return 0;
}

struct AblateArgs {
    std::string weights;
    std::string reference;
    int every = 0;
};

int cmd_ablate(const Common& c, const AblateArgs& a)
{
    const ExperimentConfig ec = resolve(c);
    const auto net = load_net(a.weights, RunMode::hybrid);
    RunDir rd(c, ec, "ablate", "hybrid");
    nlohmann::json results;
    std::ofstream csv(rd.path("ablation.csv"));
    csv << std::setprecision(12) << "mask,completed,steps,N_Newton,violation_ratio,E_l2\n";
    for (InputMask mask : {InputMask::none, InputMask::mask_state, InputMask::mask_residual}) {
        const std::string tag = to_string(mask);
        const RunOutcome o = simulate(ec, RunMode::hybrid, &*net, mask, rd, tag, "snapshots_" + tag, a.every, a.reference, -1);
        const double vr = violation_ratio(o.records);
        csv << tag << ',' << o.ok << ',' << o.records.size() << ',' << o.metrics.N_Newton << ',' << vr << ','
            << o.metrics.E_l2 << '\n';
        results[tag] = summary_json(o);
        std::cout << tag << ": " << (o.ok ? "completed" : "Newton failure") << ", N_Newton " << o.metrics.N_Newton
                  << ", violation ratio " << vr << "\n";
    }
    if (!csv) throw IoError("cannot write ablation.csv");
    rd.finish(results);
    return 0;
}

struct ExportArgs {
    std::string in;
    std::string format = "csv";
    std::string field = "v";
};

int cmd_export(const Common& c, const ExportArgs& a)
{
    if (a.format != "csv" && a.format != "vtk") throw ConfigError("unknown export format '" + a.format + "'");
    fs::path in = a.in;
    if (fs::is_directory(in / "snapshots")) in /= "snapshots";
    const fs::path run_dir = in.filename() == "snapshots" ? in.parent_path() : in;
    const ExperimentConfig ec = resolve(c, (run_dir / "config.cfg").string());
    const auto files = list_snapshots(in.string());
    RunDir rd(c, ec, "export", a.format);
    const double side = ec.sim.scenario.domain_side();
    for (const auto& f : files) {
        const Snapshot s = load_snapshot(f);
        const Vec& v = s.field(a.field);
        const auto n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v.size()) / 2.0)));
        if (2 * n * n != v.size() || n % 2 == 0) throw IoError("'" + f + "': field size is not a square Q2 mesh");
        const UniformQuadMesh mesh{s.level, (n - 1) / 2, side};
        const std::string stem = fs::path(f).stem().string() + "_" + a.field;
        if (a.format == "csv") {
            export_cells_csv(mesh, v, rd.path(stem + "_cells.csv"));
            export_nodes_csv(mesh, v, rd.path(stem + "_nodes.csv"));
        } else {
            export_vtk(mesh, v, rd.path(stem + ".vtk"));
        }
    }
    rd.finish({{"snapshots", files.size()}});
    std::cout << "exported " << files.size() << " snapshots\n";
    return 0;
}

int cmd_sizes()
{
    std::cout << "S,N_M,n_M,N_in,N_out\n";
    for (int S = 1; S <= 2; ++S)
        for (int N_M = 0; N_M <= 2; ++N_M) {
            const auto p = patch_sizes(N_M, S);
            std::cout << S << ',' << N_M << ',' << p.n_M << ',' << p.N_in << ',' << p.N_out << '\n';
        }
    return 0;
}

int cmd_stats(const std::string& in)
{
    if (fs::is_regular_file(in)) {
        const TrainingSet ts = load_training_set(in);
        std::cout << "samples " << ts.X.rows() << " (train " << ts.train_idx.size() << ", test " << ts.test_idx.size()
                  << ")\nN_M " << ts.N_M << " S " << ts.S << " N_in " << ts.X.cols() << " N_out " << ts.Y.cols()
                  << "\nsnapshots " << ts.snapshots << " x " << ts.patches_per_snapshot << " patches\n";
        if (ts.X.rows() > 0) {
            std::cout << "target rms " << std::sqrt(ts.Y.squaredNorm() / static_cast<double>(ts.Y.size()))
                      << " max |y| " << ts.Y.cwiseAbs().maxCoeff() << "\n";
        }
        for (const auto& s : ts.sources) std::cout << "source " << s << "\n";
        return 0;
    }
    const fs::path metrics = fs::path(in) / "metrics.csv";
    std::ifstream m(metrics);
    if (!m) throw IoError("'" + in + "' is neither a training set nor a run directory");
    std::cout << m.rdbuf();
    for (const auto& e : fs::directory_iterator(in)) {
        const std::string name = e.path().filename().string();
        if (name.size() < 10 || name.substr(name.size() - 10) != "_steps.csv") continue;
        std::ifstream s(e.path());
        std::string line;
        std::getline(s, line);
        int steps = 0, newton = 0, gmres = 0, checked = 0, violated = 0;
        while (std::getline(s, line)) {
            std::vector<std::string> f;
            std::istringstream ls(line);
            for (std::string tok; std::getline(ls, tok, ',');) f.push_back(tok);
            ++steps;
            newton += std::stoi(f.at(2));
            gmres += std::stoi(f.at(3));
            checked += f.at(7) == "1";
            violated += f.at(8) == "1";
        }
        std::cout << name << ": " << steps << " steps, " << newton << " Newton, " << gmres << " GMRES, "
                  << violated << "/" << checked << " smallness violations\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hybrid finite-element / neural-network sea-ice simulator"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    Common common;

    RunArgs run;
    auto* s_run = app.add_subcommand("run", "Run a reference, baseline or hybrid simulation");
    add_common(s_run, common);
    s_run->add_option("--mode", run.mode, "reference, baseline or hybrid")->required();
    s_run->add_option("--weights", run.weights, "Network weights (hybrid mode)");
    s_run->add_option("--mask", run.mask, "Input mask: none, mask_state or mask_residual");
    s_run->add_option("--reference", run.reference, "Reference run directory for the l2 error");
    s_run->add_option("--every", run.every, "Snapshot cadence in steps (0: none)");
    s_run->add_option("--steps", run.steps, "Stop after this many steps");

    GendataArgs gen;
    auto* s_gen = app.add_subcommand("gendata", "Build a training set from baseline/reference runs");
    add_common(s_gen, common);
    s_gen->add_option("--baseline", gen.baselines, "Baseline run directory (repeatable)");
    s_gen->add_option("--reference", gen.references, "Matching reference run directory (repeatable)");

    std::string data;
    auto* s_train = app.add_subcommand("train", "Train networks over the configured layer/width grid");
    add_common(s_train, common);
    s_train->add_option("--data", data, "Training set file")->required();

    AblateArgs abl;
    auto* s_abl = app.add_subcommand("ablate", "Rerun the hybrid model with masked inputs");
    add_common(s_abl, common);
    s_abl->add_option("--weights", abl.weights, "Network weights")->required();
    s_abl->add_option("--reference", abl.reference, "Reference run directory for the l2 error");
    s_abl->add_option("--every", abl.every, "Snapshot cadence in steps (0: none)");

    ExportArgs exp;
    auto* s_exp = app.add_subcommand("export", "Export snapshot fields as CSV or VTK");
    add_common(s_exp, common);
    s_exp->add_option("--in", exp.in, "Run or snapshot directory")->required();
    s_exp->add_option("--format", exp.format, "csv or vtk");
    s_exp->add_option("--field", exp.field, "Snapshot field to export");

    auto* s_sizes = app.add_subcommand("sizes", "Print patch and network sizes for all plans");

    std::string stats_in;
    auto* s_stats = app.add_subcommand("stats", "Summarize a training set or a run directory");
    s_stats->add_option("path", stats_in, "Training set file or run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*s_run) return cmd_run(common, run);
        if (*s_gen) return cmd_gendata(common, gen);
        if (*s_train) return cmd_train(common, data);
        if (*s_abl) return cmd_ablate(common, abl);
        if (*s_exp) return cmd_export(common, exp);
        if (*s_sizes) return cmd_sizes();
        if (*s_stats) return cmd_stats(stats_in);
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    }
    return 0;
}
