#include "acscale/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <cmath>
#include <map>

#include <omp.h>

#include "CLI11.hpp"

#include "acscale/experiments.hpp"
#include "acscale/io.hpp"
#include "acscale/limit.hpp"
#include "acscale/trainer.hpp"

namespace fs = std::filesystem;

namespace acscale {

namespace {

using json = nlohmann::json;

template <typename T>
T get_field(const json& doc, const std::string& key) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, std::string("wrong type (") + e.what() + ")");
    }
}

} // namespace

RunConfig RunConfig::from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config", "must be a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : doc.items()) {
        if (key == "mdp") cfg.mdp = value;
        else if (key == "beta") cfg.beta = get_field<double>(doc, key);
        else if (key == "width-n") cfg.width_n = get_field<int>(doc, key);
        else if (key == "widths") cfg.widths = get_field<std::vector<int>>(doc, key);
        else if (key == "T") cfg.T = get_field<double>(doc, key);
        else if (key == "h-ode") cfg.h_ode = get_field<double>(doc, key);
        else if (key == "mc-samples") cfg.mc_samples = get_field<std::int64_t>(doc, key);
        else if (key == "mc-seed") cfg.mc_seed = get_field<std::uint64_t>(doc, key);
        else if (key == "particle-count") cfg.particle_count = get_field<std::int64_t>(doc, key);
        else if (key == "trials") cfg.trials = get_field<int>(doc, key);
        else if (key == "betas") cfg.betas = get_field<std::vector<double>>(doc, key);
        else if (key == "seed") cfg.seed = get_field<std::uint64_t>(doc, key);
        else if (key == "out") cfg.out = get_field<std::string>(doc, key);
        else if (key == "preset") cfg.preset = get_field<std::string>(doc, key);
        else if (key == "alpha") cfg.alpha = get_field<double>(doc, key);
        else if (key == "init-std") cfg.law.std = get_field<double>(doc, key);
        else if (key == "init-trunc") cfg.law.trunc_bound = get_field<double>(doc, key);
        else if (key == "order") cfg.order = get_field<int>(doc, key);
        else if (key == "jobs") cfg.jobs = get_field<int>(doc, key);
        else if (key == "snapshot-stride") cfg.snapshot_stride = get_field<std::int64_t>(doc, key);
        else if (key == "resamples") cfg.resamples = get_field<int>(doc, key);
        else throw ConfigError(key, "unknown configuration key");
    }
    return cfg;
}

json RunConfig::to_json() const {
    json doc{{"h-ode", h_ode},         {"mc-samples", mc_samples},
             {"mc-seed", mc_seed},     {"particle-count", particle_count},
             {"seed", seed},           {"out", out},
             {"preset", preset},       {"alpha", alpha},
             {"init-std", law.std},    {"init-trunc", law.trunc_bound},
             {"order", order},         {"snapshot-stride", snapshot_stride},
             {"resamples", resamples}, {"widths", widths},
             {"betas", betas}};
    if (!mdp.is_null()) doc["mdp"] = mdp;
    if (beta) doc["beta"] = *beta;
    if (width_n) doc["width-n"] = *width_n;
    if (T) doc["T"] = *T;
    if (trials) doc["trials"] = *trials;
    return doc;
}

void RunConfig::validate() const {
    if (beta && !(*beta > 0.5 && *beta <= 1.0)) throw ConfigError("beta", "must lie in (1/2, 1]");
    for (double b : betas)
        if (!(b > 0.5 && b <= 1.0)) throw ConfigError("betas", "each beta must lie in (1/2, 1]");
    if (width_n && *width_n < 1) throw ConfigError("width-n", "must be positive");
    for (int w : widths)
        if (w < 1) throw ConfigError("widths", "must be positive");
    if (T && !(*T > 0.0 && std::isfinite(*T))) throw ConfigError("T", "must be positive");
    if (!(h_ode > 0.0)) throw ConfigError("h-ode", "must be positive");
    if (mc_samples < 10000) throw ConfigError("mc-samples", "must be at least 10000");
    if (particle_count < 0) throw ConfigError("particle-count", "must be nonnegative");
    if (trials && *trials < 1) throw ConfigError("trials", "must be positive");
    if (preset != "desk" && preset != "full") throw ConfigError("preset", "must be 'desk' or 'full'");
    if (!(alpha > 0.0)) throw ConfigError("alpha", "must be positive");
    if (!(law.std >= 0.0)) throw ConfigError("init-std", "must be nonnegative");
    if (!(law.trunc_bound > 0.0)) throw ConfigError("init-trunc", "must be positive");
    if (order < 0) throw ConfigError("order", "must be nonnegative");
    if (jobs < 0) throw ConfigError("jobs", "must be nonnegative");
    if (snapshot_stride < 0) throw ConfigError("snapshot-stride", "must be nonnegative");
    if (resamples < 0) throw ConfigError("resamples", "must be nonnegative");
    if (out.empty()) throw ConfigError("out", "must not be empty");
}

FiniteMdp RunConfig::load_mdp() const {
    FiniteMdp mdp;
    if (this->mdp.is_null()) {
        mdp = build_forest();
    } else if (this->mdp.is_string()) {
        std::ifstream is(this->mdp.get<std::string>());
        if (!is) throw ConfigError("mdp", "cannot open " + this->mdp.get<std::string>());
        mdp = mdp_from_json(json::parse(is));
    } else if (this->mdp.is_object()) {
        mdp = mdp_from_json(this->mdp);
    } else {
        throw ConfigError("mdp", "must be an object or a path");
    }
    mdp.validate();
    return mdp;
}

namespace {

// Defaults per preset for fields the user left unset.
struct PresetDefaults {
    std::vector<int> rate_widths;
    int rate_trials;
    double rate_T;
    std::vector<int> figure_widths;
    int figure_trials;
    double figure_T;
    int residual_width;
    int residual_trials;
    double residual_T;
};

PresetDefaults preset_defaults(const std::string& preset) {
    if (preset == "full") return {{1000, 3162, 10000}, 100, 100.0, {10000}, 100, 100.0, 10000, 100, 100.0};
    return {{100, 400, 1600}, 30, 5.0, {2000}, 50, 50.0, 2000, 40, 10.0};
}

double require_beta(const RunConfig& cfg) {
    if (!cfg.beta) throw ConfigError("beta", "required for this command");
    return *cfg.beta;
}

fs::path ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("out", "cannot create directory " + dir.string());
    const fs::path probe = dir / ".write_probe";
    {
        std::ofstream os(probe);
        if (!os) throw ConfigError("out", "directory not writable: " + dir.string());
    }
    fs::remove(probe, ec);
    return dir;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string series_name(int width, int trial) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "N%d_trial%03d.csv", width, trial);
    return buf;
}

TrainerConfig trainer_config(const RunConfig& cfg, double beta, int width, double T) {
    TrainerConfig tc;
    tc.width_n = width;
    tc.beta = beta;
    tc.T = T;
    tc.alpha = cfg.alpha;
    tc.law = cfg.law;
    tc.snapshot_stride = cfg.snapshot_stride;
    return tc;
}

int cmd_train(RunConfig cfg) {
    const auto start = std::chrono::steady_clock::now();
    const PresetDefaults pd = preset_defaults(cfg.preset);
    const double beta = require_beta(cfg);
    if (cfg.widths.empty()) cfg.widths = cfg.width_n ? std::vector<int>{*cfg.width_n} : pd.rate_widths;
    if (!cfg.trials) cfg.trials = pd.rate_trials;
    if (!cfg.T) cfg.T = pd.rate_T;
    const FiniteMdp mdp = cfg.load_mdp();
    const fs::path dir = ensure_dir(fs::path(cfg.out) / "train");

    json files = json::array();
    for (int w : cfg.widths) {
        const auto trials = run_trials(mdp, trainer_config(cfg, beta, w, *cfg.T), *cfg.trials, cfg.seed);
        for (int i = 0; i < *cfg.trials; ++i) {
            const auto& s = trials[static_cast<std::size_t>(i)];
            const std::string name = series_name(w, i);
            write_snapshot_csv(s, (dir / name).string());
            files.push_back({{"width_n", w},
                             {"trial", i},
                             {"seed", s.seed},
                             {"path", name},
                             {"max_critic_outer_step", s.max_critic_outer_step},
                             {"max_actor_outer_step", s.max_actor_outer_step}});
        }
    }
    json manifest = make_manifest("train", cfg.to_json(), seconds_since(start));
    manifest["beta"] = beta;
    manifest["n_states"] = mdp.n_states;
    manifest["n_actions"] = mdp.n_actions;
    manifest["files"] = files;
    write_json((dir / "manifest.json").string(), manifest);
    std::cout << "train: wrote " << files.size() << " SnapshotSeries files to " << dir.string() << '\n';
    return kExitOk;
}

KernelTables cached_kernels(const RunConfig& cfg, const FiniteMdp& mdp, const fs::path& dir) {
    const std::string path = (dir / "kernels.bin").string();
    if (auto cached = load_kernels(mdp, cfg.law, cfg.mc_samples, cfg.mc_seed, path)) {
        if (cached->particles.rows() == cfg.particle_count) return *cached;
    }
    KernelTables tables = build_kernels(mdp, cfg.law, cfg.mc_samples, cfg.mc_seed, cfg.particle_count);
    save_kernels(tables, mdp, path);
    return tables;
}

int cmd_limit(RunConfig cfg) {
    const auto start = std::chrono::steady_clock::now();
    const PresetDefaults pd = preset_defaults(cfg.preset);
    const double beta = cfg.order > 0 ? require_beta(cfg) : cfg.beta.value_or(0.75);
    if (!cfg.T) cfg.T = pd.rate_T;
    const FiniteMdp mdp = cfg.load_mdp();
    const fs::path dir = ensure_dir(fs::path(cfg.out) / "limit");
    const KernelTables tables = cached_kernels(cfg, mdp, dir);

    LimitConfig lc;
    lc.T = *cfg.T;
    lc.h_ode = cfg.h_ode;
    lc.beta = beta;
    lc.alpha = cfg.alpha;
    lc.order = cfg.order;
    if (cfg.order > 0 && cfg.order == expansion_order(beta)) lc.random_ic_seed = cfg.seed;
    const LimitSolution sol = integrate_limit(mdp, tables, lc);
    write_limit_csv(sol, mdp, (dir / "solution.csv").string());

    json manifest = make_manifest("limit", cfg.to_json(), seconds_since(start));
    manifest["solution"] = solution_meta(sol);
    manifest["n_states"] = mdp.n_states;
    manifest["n_actions"] = mdp.n_actions;
    manifest["kernel_stderr_max"] = tables.a_stderr.maxCoeff();
    manifest["path"] = "solution.csv";
    if (cfg.resamples >= 2 && cfg.width_n && sol.order == sol.order_n) {
        const auto resampled = resample_terminal(mdp, tables, lc, cfg.resamples, cfg.seed);
        const auto pred = predict_network(sol, *cfg.width_n, sol.T, resampled);
        manifest["predicted_std_at_T"] = {{"width_n", *cfg.width_n},
                                          {"q", std::vector<double>(pred.q_std.data(), pred.q_std.data() + pred.q_std.size())},
                                          {"p", std::vector<double>(pred.p_std.data(), pred.p_std.data() + pred.p_std.size())}};
    }
    write_json((dir / "manifest.json").string(), manifest);
    std::cout << "limit: order " << sol.order << " on [0, " << sol.T << "] written to " << dir.string() << '\n';
    return kExitOk;
}

json read_artifact(const fs::path& path, const std::string& artifact, const std::string& producer) {
    if (!fs::exists(path))
        throw MissingArtifactError("missing " + artifact + " (" + path.string() + "); run `acscale " + producer +
                                   "` first");
    return read_json(path.string(), artifact);
}

int cmd_rates(RunConfig cfg) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path root(cfg.out);
    const json train_manifest = read_artifact(root / "train" / "manifest.json", "SnapshotSeries", "train");
    const json limit_manifest = read_artifact(root / "limit" / "manifest.json", "LimitSolution", "limit");
    const int n_states = train_manifest.at("n_states").get<int>();
    const int n_actions = train_manifest.at("n_actions").get<int>();
    const double beta = train_manifest.at("beta").get<double>();

    const fs::path limit_csv = root / "limit" / limit_manifest.at("path").get<std::string>();
    if (!fs::exists(limit_csv)) throw MissingArtifactError("missing LimitSolution file " + limit_csv.string());
    const LimitSolution order0 = read_limit_csv(limit_csv.string(), limit_manifest.at("solution"), n_actions);

    std::map<int, std::vector<SnapshotSeries>> by_width;
    for (const auto& f : train_manifest.at("files")) {
        const fs::path p = root / "train" / f.at("path").get<std::string>();
        if (!fs::exists(p)) throw MissingArtifactError("missing SnapshotSeries file " + p.string());
        SnapshotSeries s = read_snapshot_csv(p.string(), n_states, n_actions);
        s.beta = beta;
        s.width_n = f.at("width_n").get<int>();
        s.seed = f.at("seed").get<std::uint64_t>();
        by_width[s.width_n].push_back(std::move(s));
    }
    if (by_width.size() < 2) throw ConfigError("widths", "rates need SnapshotSeries for at least two widths");
    const double series_T = by_width.begin()->second.front().records.back().t;
    if (order0.T + 1e-9 < series_T) throw ConfigError("T", "LimitSolution horizon is shorter than the training runs");

    std::vector<std::vector<SnapshotSeries>> grouped;
    for (auto& [w, v] : by_width) grouped.push_back(std::move(v));
    const RateSweepResult result = rate_fit_from_series(grouped, order0);

    const double expected = std::max(beta - 1.0, 0.5 - beta);
    const auto within = [&](const RateFit& fit) {
        return std::abs(fit.slope - expected) <= 0.15 && fit.r_squared >= 0.8;
    };
    const fs::path dir = ensure_dir(root / "rates");
    ReportTable table;
    for (std::size_t i = 0; i < result.mean_curves.size(); ++i)
        table.add_curve("rates", beta, static_cast<int>(result.q_fit.widths[i]), result.mean_curves[i], "MeanMaxAbsError");
    table.write_csv((dir / "curves.csv").string());

    json summary{{"experiment", "rates"},
                 {"beta", beta},
                 {"expected_slope", expected},
                 {"q_fit", to_json(result.q_fit)},
                 {"p_fit", to_json(result.p_fit)},
                 {"q_pass", within(result.q_fit)},
                 {"p_pass", within(result.p_fit)}};
    write_json((dir / "rates.json").string(), summary);
    json manifest = make_manifest("rates", cfg.to_json(), seconds_since(start));
    manifest["inputs"] = {{"train_config_hash", train_manifest.at("config_hash")},
                          {"limit_config_hash", limit_manifest.at("config_hash")}};
    write_json((dir / "manifest.json").string(), manifest);
    std::cout << "rates: Q slope " << result.q_fit.slope << " (r2 " << result.q_fit.r_squared << "), P slope "
              << result.p_fit.slope << " (r2 " << result.p_fit.r_squared << "), expected " << expected << '\n';
    return kExitOk;
}

int cmd_variance(RunConfig cfg) {
    const auto start = std::chrono::steady_clock::now();
    const PresetDefaults pd = preset_defaults(cfg.preset);
    VarianceSweepConfig vc;
    vc.betas = cfg.betas.empty() ? (cfg.beta ? std::vector<double>{*cfg.beta} : std::vector<double>{0.55, 0.75, 0.95})
                                 : cfg.betas;
    vc.widths = !cfg.widths.empty() ? cfg.widths : (cfg.width_n ? std::vector<int>{*cfg.width_n} : pd.figure_widths);
    vc.trials = cfg.trials.value_or(pd.figure_trials);
    vc.T = cfg.T.value_or(pd.figure_T);
    vc.seed = cfg.seed;
    vc.alpha = cfg.alpha;
    vc.law = cfg.law;
    const FiniteMdp mdp = cfg.load_mdp();
    const fs::path dir = ensure_dir(fs::path(cfg.out) / "variance");
    const auto curves = variance_sweep(mdp, vc);

    ReportTable table;
    json terminal = json::array();
    for (const auto& c : curves) {
        table.add_variance("variance", c);
        terminal.push_back({{"beta", c.beta},
                            {"width_n", c.width_n},
                            {"actor_std", c.actor_std.back()},
                            {"critic_std", c.critic_std.back()},
                            {"reward_std", c.reward_std.back()}});
    }
    table.write_csv((dir / "std.csv").string());

    json summary{{"experiment", "variance"}, {"trials", vc.trials}, {"T", vc.T}, {"terminal", terminal}};
    // Ordering across betas at each width, and log-std slope across widths at each beta.
    json ordering = json::array();
    for (int w : vc.widths) {
        std::vector<double> stds;
        for (const auto& c : curves)
            if (c.width_n == w) stds.push_back(c.actor_std.back());
        bool decreasing = true;
        for (std::size_t i = 1; i < stds.size(); ++i) decreasing = decreasing && stds[i] < stds[i - 1];
        ordering.push_back({{"width_n", w}, {"actor_std_strictly_decreasing_in_beta", decreasing}});
    }
    summary["ordering"] = ordering;
    if (vc.widths.size() >= 2) {
        json fits = json::array();
        for (double b : vc.betas) {
            std::vector<VarianceCurve> same;
            for (const auto& c : curves)
                if (c.beta == b) same.push_back(c);
            const RateFit fit = variance_width_fit(same);
            fits.push_back({{"beta", b}, {"fit", to_json(fit)}, {"expected_slope", 0.5 - b}});
        }
        summary["width_fits"] = fits;
    }
    write_json((dir / "summary.json").string(), summary);
    write_json((dir / "manifest.json").string(), make_manifest("variance", cfg.to_json(), seconds_since(start)));
    std::cout << "variance: " << curves.size() << " curves written to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_residual(RunConfig cfg) {
    const auto start = std::chrono::steady_clock::now();
    const PresetDefaults pd = preset_defaults(cfg.preset);
    ResidualConfig rc;
    rc.beta = require_beta(cfg);
    rc.width_n = cfg.width_n.value_or(pd.residual_width);
    rc.trials = cfg.trials.value_or(pd.residual_trials);
    rc.T = cfg.T.value_or(pd.residual_T);
    rc.seed = cfg.seed;
    rc.alpha = cfg.alpha;
    rc.h_ode = cfg.h_ode;
    rc.law = cfg.law;
    const int n = expansion_order(rc.beta);
    const int top = cfg.order > 0 ? cfg.order : std::min(1, n);
    if (top > n) throw std::domain_error("order exceeds expansion bracket");
    const FiniteMdp mdp = cfg.load_mdp();
    const fs::path dir = ensure_dir(fs::path(cfg.out) / "residual");
    const KernelTables tables = cached_kernels(cfg, mdp, ensure_dir(fs::path(cfg.out) / "limit"));

    const auto trials = run_trials(mdp, trainer_config(cfg, rc.beta, rc.width_n, rc.T), rc.trials, rc.seed);
    LimitConfig lc;
    lc.T = rc.T;
    lc.h_ode = rc.h_ode;
    lc.beta = rc.beta;
    lc.alpha = rc.alpha;
    lc.order = std::min(top, n - 1);
    const LimitSolution deterministic = integrate_limit(mdp, tables, lc);

    ReportTable table;
    json orders = json::array();
    std::vector<ResidualResult> results;
    for (int m = 0; m <= top; ++m) {
        rc.order = m;
        results.push_back(expansion_residual(mdp, tables, rc, trials, &deterministic));
        const auto& r = results.back();
        table.add_curve("residual", rc.beta, rc.width_n, r.mean, "Order" + std::to_string(m) + "Residual");
        orders.push_back({{"order", m}, {"sup_q", r.sup_q}, {"trial_time_avg_q", r.trial_time_avg_q}});
    }
    json tests = json::array();
    for (int m = 1; m <= top; ++m) {
        const auto t = paired_t_test_less(results[m].trial_time_avg_q, results[m - 1].trial_time_avg_q);
        tests.push_back({{"order", m},
                         {"vs_order", m - 1},
                         {"mean_diff", t.mean_diff},
                         {"t_stat", t.t_stat},
                         {"p_value", t.p_value},
                         {"improves_at_5pct", t.p_value < 0.05}});
    }
    table.write_csv((dir / "residual.csv").string());
    write_json((dir / "residual.json").string(), json{{"experiment", "residual"},
                                                     {"beta", rc.beta},
                                                     {"width_n", rc.width_n},
                                                     {"trials", rc.trials},
                                                     {"T", rc.T},
                                                     {"orders", orders},
                                                     {"paired_tests", tests}});
    write_json((dir / "manifest.json").string(), make_manifest("residual", cfg.to_json(), seconds_since(start)));
    std::cout << "residual: orders 0.." << top << " written to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_report(const RunConfig& cfg) {
    const fs::path root(cfg.out);
    json experiments = json::array();
    const std::pair<const char*, const char*> sources[] = {{"rates", "rates/rates.json"},
                                                           {"variance", "variance/summary.json"},
                                                           {"residual", "residual/residual.json"},
                                                           {"limit", "limit/manifest.json"},
                                                           {"train", "train/manifest.json"}};
    for (const auto& [kind, rel] : sources) {
        const fs::path p = root / rel;
        if (!fs::exists(p)) continue;
        json doc = read_json(p.string(), kind);
        if (std::string(kind) == "train") {
            doc = json{{"beta", doc.value("beta", 0.0)},
                       {"files", doc.at("files").size()},
                       {"config_hash", doc.value("config_hash", "")}};
        } else if (std::string(kind) == "limit") {
            doc = json{{"solution", doc.value("solution", json::object())},
                       {"kernel_stderr_max", doc.value("kernel_stderr_max", 0.0)}};
        }
        experiments.push_back({{"kind", kind}, {"path", rel}, {"summary", doc}});
    }
    const json summary{{"version", version_string()},
                       {"n_experiments", experiments.size()},
                       {"experiments", experiments}};
    if (fs::is_directory(root)) write_json((root / "summary.json").string(), summary);
    std::cout << summary.dump(2) << '\n';
    return kExitOk;
}

// Flags shared by every subcommand. Each is applied only when given on the command line.
struct FlagSet {
    std::string config_path;
    std::vector<std::pair<CLI::Option*, std::function<void(json&)>>> overrides;
};

struct FlagValues {
    std::string mdp, out, preset;
    double beta = 0, T = 0, h_ode = 0, alpha = 0, init_std = 0, init_trunc = 0;
    int width_n = 0, trials = 0, order = 0, jobs = 0, resamples = 0;
    std::int64_t mc_samples = 0, particle_count = 0, snapshot_stride = 0;
    std::uint64_t seed = 0, mc_seed = 0;
    std::vector<int> widths;
    std::vector<double> betas;
};

void add_flags(CLI::App* sub, FlagSet& set, FlagValues& v) {
    sub->add_option("--config", set.config_path, "JSON run configuration; flags override its fields");
    const auto bind = [&](CLI::Option* opt, const char* key, auto* value) {
        set.overrides.emplace_back(opt, [key, value](json& doc) { doc[key] = *value; });
    };
    bind(sub->add_option("--mdp", v.mdp, "path to an MDP JSON document (default: forest)"), "mdp", &v.mdp);
    bind(sub->add_option("--beta", v.beta, "scaling exponent in (1/2, 1]"), "beta", &v.beta);
    bind(sub->add_option("--width-n", v.width_n, "network width N"), "width-n", &v.width_n);
    bind(sub->add_option("--widths", v.widths, "list of widths"), "widths", &v.widths);
    bind(sub->add_option("--T", v.T, "rescaled time horizon"), "T", &v.T);
    bind(sub->add_option("--h-ode", v.h_ode, "RK4 step"), "h-ode", &v.h_ode);
    bind(sub->add_option("--mc-samples", v.mc_samples, "Monte Carlo samples for kernel tables"), "mc-samples",
         &v.mc_samples);
    bind(sub->add_option("--mc-seed", v.mc_seed, "seed of the kernel tables"), "mc-seed", &v.mc_seed);
    bind(sub->add_option("--particle-count", v.particle_count, "particles for measure jets of order >= 2"),
         "particle-count", &v.particle_count);
    bind(sub->add_option("--trials", v.trials, "independent trials"), "trials", &v.trials);
    bind(sub->add_option("--betas", v.betas, "list of betas"), "betas", &v.betas);
    bind(sub->add_option("--seed", v.seed, "root seed"), "seed", &v.seed);
    bind(sub->add_option("--out", v.out, "output directory"), "out", &v.out);
    bind(sub->add_option("--preset", v.preset, "desk or full"), "preset", &v.preset);
    bind(sub->add_option("--alpha", v.alpha, "critic learning-rate constant"), "alpha", &v.alpha);
    bind(sub->add_option("--init-std", v.init_std, "std of the truncated normal init"), "init-std", &v.init_std);
    bind(sub->add_option("--init-trunc", v.init_trunc, "truncation in standard deviations"), "init-trunc",
         &v.init_trunc);
    bind(sub->add_option("--order", v.order, "expansion order"), "order", &v.order);
    bind(sub->add_option("--jobs", v.jobs, "worker threads (0: all logical cores)"), "jobs", &v.jobs);
    bind(sub->add_option("--snapshot-stride", v.snapshot_stride, "SGD steps between snapshots (0: N/10)"),
         "snapshot-stride", &v.snapshot_stride);
    bind(sub->add_option("--resamples", v.resamples, "random-IC resamples for predicted std"), "resamples",
         &v.resamples);
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Scaled actor-critic laboratory: training, limit ODEs and rate experiments"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    FlagValues values;
    std::map<std::string, FlagSet> sets;
    const std::pair<const char*, const char*> commands[] = {
        {"train", "run the actor-critic SGD and write SnapshotSeries CSVs"},
        {"limit", "integrate the limit / correction ODEs and write a LimitSolution"},
        {"rates", "fit convergence rates from persisted SnapshotSeries and LimitSolution"},
        {"variance", "across-trial standard deviations over betas and widths"},
        {"residual", "expansion residuals of orders 0..order with paired t-tests"},
        {"report", "aggregate prior outputs under --out into summary.json"}};
    for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), sets[name], values);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    std::string command;
    for (const auto& [name, help] : commands)
        if (app.got_subcommand(name)) command = name;
    FlagSet& set = sets[command];

    try {
        json doc = json::object();
        if (!set.config_path.empty()) {
            std::ifstream is(set.config_path);
            if (!is) throw ConfigError("config", "cannot open " + set.config_path);
            try {
                doc = json::parse(is);
            } catch (const json::parse_error& e) {
                throw ConfigError("config", std::string("invalid JSON: ") + e.what());
            }
        }
        for (const auto& [opt, apply] : set.overrides)
            if (opt->count() > 0) apply(doc);
        RunConfig cfg = RunConfig::from_json(doc);
        cfg.validate();
        if (cfg.jobs > 0) omp_set_num_threads(cfg.jobs);

        if (command == "train") return cmd_train(cfg);
        if (command == "limit") return cmd_limit(cfg);
        if (command == "rates") return cmd_rates(cfg);
        if (command == "variance") return cmd_variance(cfg);
        if (command == "residual") return cmd_residual(cfg);
        return cmd_report(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: order: " << e.what() << '\n';
        return kExitConfig;
    } catch (const MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitMissingArtifact;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

} // namespace acscale
