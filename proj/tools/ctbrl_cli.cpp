#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ctbrl/context_tree.hpp"
#include "ctbrl/cover_tree.hpp"
#include "ctbrl/experiment.hpp"

using namespace ctbrl;

namespace {

struct RunOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::optional<int> threads;
    std::optional<std::string> out;
    std::optional<std::string> agent;
    std::optional<std::string> env;
    std::optional<std::string> protocol;
};

int cmd_run(const RunOptions& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.protocol) cfg.protocol = parse_protocol(*o.protocol);
    if (o.agent) cfg.agent.kind = parse_agent_kind(*o.agent);
    if (cfg.agent.kind == AgentKind::kLspiOffline && cfg.protocol == Protocol::kOnline)
        cfg.agent.kind = AgentKind::kLspiOnline;
    if (cfg.agent.kind == AgentKind::kLspiOnline && cfg.protocol == Protocol::kOffline)
        cfg.agent.kind = AgentKind::kLspiOffline;
    if (o.env) cfg.agent.env = *o.env;
    if (o.seed) cfg.seed = *o.seed;
    if (o.runs) cfg.runs = *o.runs;
    if (o.threads) cfg.threads = *o.threads;
    if (o.out) cfg.out_dir = *o.out;
    validate(cfg);

    const auto res = run_to_directory(cfg);
    std::cout << "wrote " << res.rows.size() << " rows to " << (cfg.out_dir / "raw.csv").string() << '\n';
    for (const auto& f : res.failures)
        std::cerr << "run " << f.run_id << " (x = " << f.x << ") failed: " << f.message << '\n';
    std::size_t warnings = 0;
    for (const auto& r : res.runs) warnings += r.warnings.size();
    if (warnings > 0) std::cerr << warnings << " planning warnings (previous policy kept)\n";
    return res.failures.empty() ? 0 : 3;
}

int cmd_aggregate(const std::string& raw_path, const std::string& out_path) {
    std::ifstream in(raw_path);
    if (!in) throw std::runtime_error("cannot open " + raw_path);
    const auto points = aggregate(read_raw_csv(in));
    if (out_path.empty() || out_path == "-") {
        write_curve_csv(std::cout, points);
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        write_curve_csv(out, points);
    }
    return 0;
}

bool report(const std::string& what, bool ok, const std::string& detail = "") {
    std::cout << (ok ? "ok   " : "FAIL ") << what;
    if (!detail.empty()) std::cout << ": " << detail;
    std::cout << '\n';
    return ok;
}

bool check_random_tree(int points, int queries, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    CoverTree tree(2, CoverTreeConfig{});
    std::vector<State> stored;
    for (int i = 0; i < points; ++i) {
        State p(2);
        p << u(rng), u(rng);
        tree.insert(p);
        stored.push_back(p);
    }
    const AuditReport audit = tree.audit();
    bool ok = report("cover-tree invariants on " + std::to_string(points) + " random points", audit.ok,
                     audit.violation);

    int mismatches = 0;
    for (int q = 0; q < queries; ++q) {
        State x(2);
        x << u(rng), u(rng);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : stored) best = std::min(best, (p - x).lpNorm<1>());
        const double got = (tree.point_vector(tree.nearest(x)) - x).lpNorm<1>();
        mismatches += got != best;
    }
    ok &= report("nearest neighbour matches brute force on " + std::to_string(queries) + " queries", mismatches == 0,
                 mismatches ? std::to_string(mismatches) + " mismatches" : "");
    return ok;
}

bool check_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) return report("read " + path, false, "cannot open");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        return report("parse " + path, false, e.what());
    }
    if (j.is_object() && j.contains("type")) {
        return report("checkpoint " + path, true, "policy checkpoint (" + j["type"].get<std::string>() + "), no tree");
    }
    try {
        const auto model = GeneralizedContextTree::from_json(j);
        bool ok = true;
        for (int a = 0; a < model.action_count(); ++a) {
            const auto audit = model.tree(a).cover().audit();
            ok &= report("checkpoint " + path + " action " + std::to_string(a) + " (" +
                             std::to_string(model.tree(a).size()) + " nodes)",
                         audit.ok, audit.violation);
        }
        return ok;
    } catch (const std::exception& e) {
        return report("load " + path, false, e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cover-tree Bayesian reinforcement learning experiments"};
    app.require_subcommand(1);

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment and write raw.csv, curve.csv and failures.csv");
    run_cmd->add_option("-c,--config", run.config, "key = value experiment file")->check(CLI::ExistingFile);
    run_cmd->add_option("--seed", run.seed, "master seed");
    run_cmd->add_option("--runs", run.runs, "independent runs");
    run_cmd->add_option("--threads", run.threads, "worker threads");
    run_cmd->add_option("-o,--out", run.out, "output directory");
    run_cmd->add_option("--agent", run.agent, "ctbrl | lbrl | lspi_online | lspi_offline");
    run_cmd->add_option("--env", run.env, "pendulum | mountain_car");
    run_cmd->add_option("--protocol", run.protocol, "offline | online");

    std::string raw_path, curve_path;
    auto* agg_cmd = app.add_subcommand("aggregate", "Summarize a raw CSV into a curve CSV");
    agg_cmd->add_option("raw", raw_path, "raw CSV")->required()->check(CLI::ExistingFile);
    agg_cmd->add_option("-o,--out", curve_path, "curve CSV (default: stdout)");

    std::vector<std::string> checkpoints;
    std::string check_config;
    int points = 1000;
    int queries = 50;
    std::uint64_t check_seed = 1;
    auto* check_cmd = app.add_subcommand("check", "Audit data-structure invariants and configuration files");
    check_cmd->add_option("--checkpoint", checkpoints, "model checkpoint JSON to audit")->check(CLI::ExistingFile);
    check_cmd->add_option("-c,--config", check_config, "experiment config to validate")->check(CLI::ExistingFile);
    check_cmd->add_option("--points", points, "points in the random audit tree")->check(CLI::PositiveNumber);
    check_cmd->add_option("--queries", queries, "nearest-neighbour queries")->check(CLI::NonNegativeNumber);
    check_cmd->add_option("--seed", check_seed, "seed for the random audit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return cmd_run(run);
        if (*agg_cmd) return cmd_aggregate(raw_path, curve_path);
        if (*check_cmd) {
            bool ok = check_random_tree(points, queries, check_seed);
            for (const auto& c : checkpoints) ok &= check_checkpoint(c);
            if (!check_config.empty()) {
                try {
                    load_config(check_config);
                    ok &= report("config " + check_config, true);
                } catch (const ConfigError& e) {
                    ok &= report("config " + check_config, false, e.what());
                }
            }
            return ok ? 0 : 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
