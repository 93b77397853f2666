#include "ctbrl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <type_traits>

namespace ctbrl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

template <class T>
bool parse_number(const std::string& text, T& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars for doubles is incomplete on older standard libraries.
        char* end = nullptr;
        out = std::strtod(t.c_str(), &end);
        return end == t.c_str() + t.size() && std::isfinite(out);
    } else {
        const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
        return res.ec == std::errc() && res.ptr == t.data() + t.size();
    }
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Applies one key to the config; throws ConfigError on bad input.
class ConfigReader {
public:
    ConfigReader(ExperimentConfig& cfg, int line, const std::string& key, const std::string& value)
        : cfg_(cfg), line_(line), key_(key), value_(value) {}

    void apply() {
        static const std::map<std::string, std::function<void(ConfigReader&)>> setters = {
            {"protocol", [](ConfigReader& r) { r.cfg_.protocol = r.wrap([&] { return parse_protocol(r.value_); }); }},
            {"agent", [](ConfigReader& r) { r.cfg_.agent.kind = r.wrap([&] { return parse_agent_kind(r.value_); }); }},
            {"env", [](ConfigReader& r) {
                 r.wrap([&] { return make_environment(r.value_) != nullptr; });
                 r.cfg_.agent.env = r.value_;
             }},
            {"runs", [](ConfigReader& r) { r.cfg_.runs = r.integer(1); }},
            {"seed", [](ConfigReader& r) { r.cfg_.seed = r.unsigned64(); }},
            {"threads", [](ConfigReader& r) { r.cfg_.threads = r.integer(1); }},
            {"out", [](ConfigReader& r) { r.cfg_.out_dir = r.value_; }},
            {"k_schedule", [](ConfigReader& r) { r.cfg_.k_schedule = r.int_list(); }},
            {"episodes", [](ConfigReader& r) { r.cfg_.agent.episodes = r.integer(1); }},
            {"eval_episodes", [](ConfigReader& r) { r.cfg_.agent.eval_episodes = r.integer(0); }},
            {"rollout_horizon", [](ConfigReader& r) { r.cfg_.agent.rollout_horizon = r.integer(1); }},
            {"n_states", [](ConfigReader& r) { r.cfg_.agent.adp.n_states = r.integer(1); }},
            {"api_iterations", [](ConfigReader& r) { r.cfg_.agent.adp.api_iterations = r.integer(1); }},
            {"model_samples", [](ConfigReader& r) { r.cfg_.agent.adp.model_samples = r.integer(1); }},
            {"ridge", [](ConfigReader& r) { r.cfg_.agent.adp.ridge = r.real(0.0, false); }},
            {"lspi_iterations", [](ConfigReader& r) { r.cfg_.agent.lspi.iterations = r.integer(1); }},
            {"lspi_ridge", [](ConfigReader& r) { r.cfg_.agent.lspi.ridge = r.real(0.0, false); }},
            {"epsilon_decay", [](ConfigReader& r) {
                 const double v = r.real(0.0, true);
                 if (v > 1.0) r.fail("must lie in (0, 1]");
                 r.cfg_.agent.epsilon_decay = v;
             }},
            {"prior_precision", [](ConfigReader& r) { r.cfg_.agent.prior_precision = r.real(0.0, true); }},
            {"prior_scale", [](ConfigReader& r) { r.cfg_.agent.prior_scale = r.real(0.0, true); }},
            {"persistence_prior", [](ConfigReader& r) { r.cfg_.agent.persistence_prior = r.boolean(); }},
            {"zoom", [](ConfigReader& r) { r.cfg_.agent.zoom = r.real(1.0, true); }},
            {"max_depth", [](ConfigReader& r) { r.cfg_.agent.max_depth = r.integer(-1); }},
            {"stop_on_sustained_success", [](ConfigReader& r) { r.cfg_.agent.stop_on_sustained_success = r.boolean(); }},
            {"success_window", [](ConfigReader& r) { r.cfg_.agent.success_window = r.integer(1); }},
            {"record_wall_ms", [](ConfigReader& r) { r.cfg_.record_wall_ms = r.boolean(); }},
            {"checkpoints", [](ConfigReader& r) { r.cfg_.checkpoints = r.boolean(); }},
        };
        const auto it = setters.find(key_);
        if (it == setters.end()) fail("unknown key");
        it->second(*this);
    }

private:
    [[noreturn]] void fail(const std::string& why) const { throw ConfigError(line_, key_, why + " (got '" + value_ + "')"); }

    template <class F>
    std::invoke_result_t<F> wrap(F f) const {
        try {
            return f();
        } catch (const ContractViolation& e) {
            fail(e.what());
        }
    }

    int integer(int min) const {
        int v = 0;
        if (!parse_number(value_, v)) fail("expected an integer");
        if (v < min) fail("must be at least " + std::to_string(min));
        return v;
    }

    std::uint64_t unsigned64() const {
        std::uint64_t v = 0;
        if (!parse_number(value_, v)) fail("expected an unsigned 64-bit integer");
        return v;
    }

    double real(double bound, bool strict) const {
        double v = 0.0;
        if (!parse_number(value_, v)) fail("expected a finite number");
        if (strict ? v <= bound : v < bound)
            fail(std::string("must be ") + (strict ? "greater than " : "at least ") + format_number(bound));
        return v;
    }

    bool boolean() const {
        if (value_ == "true") return true;
        if (value_ == "false") return false;
        fail("expected true or false");
    }

    std::vector<int> int_list() const {
        std::vector<int> out;
        for (const auto& part : split(value_, ',')) {
            int v = 0;
            if (!parse_number(part, v)) fail("expected a comma-separated list of integers");
            if (v < 0) fail("schedule entries must be non-negative");
            out.push_back(v);
        }
        if (out.empty()) fail("schedule must not be empty");
        return out;
    }

    ExperimentConfig& cfg_;
    int line_;
    std::string key_;
    std::string value_;
};

struct Task {
    int run_id;
    int k;  // offline only
};

std::vector<Task> make_tasks(const ExperimentConfig& cfg) {
    std::vector<Task> tasks;
    for (int r = 0; r < cfg.runs; ++r) {
        if (cfg.protocol == Protocol::kOnline)
            tasks.push_back({r, 0});
        else
            for (int k : cfg.k_schedule) tasks.push_back({r, k});
    }
    return tasks;
}

std::vector<std::string> split_row(const std::string& line, std::size_t fields, int row) {
    auto parts = split(line, ',');
    if (parts.size() != fields)
        throw CsvParseError(row, "expected " + std::to_string(fields) + " fields, found " + std::to_string(parts.size()));
    return parts;
}

const char* kRawHeader = "run_id,seed,protocol,agent,env,x,steps,discounted_return,wall_ms";

}  // namespace

// ----------------------------------------------------------------- config

Protocol parse_protocol(const std::string& name) {
    if (name == "offline") return Protocol::kOffline;
    if (name == "online") return Protocol::kOnline;
    throw ContractViolation("unknown protocol '" + name + "' (expected offline or online)");
}

std::string to_string(Protocol p) { return p == Protocol::kOffline ? "offline" : "online"; }

ConfigError::ConfigError(int line, std::string field, const std::string& message)
    : std::runtime_error("config line " + std::to_string(line) + ", field '" + field + "': " + message),
      line_(line),
      field_(std::move(field)) {}

CsvParseError::CsvParseError(int row, const std::string& message)
    : std::runtime_error("raw CSV row " + std::to_string(row) + ": " + message), row_(row) {}

ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError(line, text, "expected key = value");
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty()) throw ConfigError(line, "", "missing key before '='");
        if (!seen.insert(key).second) throw ConfigError(line, key, "key given twice");
        ConfigReader(cfg, line, key, value).apply();
    }
    // An online LSPI run is selected by the protocol; keep the kinds coherent.
    if (cfg.protocol == Protocol::kOnline && cfg.agent.kind == AgentKind::kLspiOffline)
        cfg.agent.kind = AgentKind::kLspiOnline;
    if (cfg.protocol == Protocol::kOffline && cfg.agent.kind == AgentKind::kLspiOnline)
        cfg.agent.kind = AgentKind::kLspiOffline;
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "", "cannot open config file " + path.string());
    return parse_config(in);
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.runs < 1) throw ConfigError(0, "runs", "must be at least 1");
    if (cfg.threads < 1) throw ConfigError(0, "threads", "must be at least 1");
    if (cfg.protocol == Protocol::kOffline && cfg.k_schedule.empty())
        throw ConfigError(0, "k_schedule", "offline protocol needs a non-empty schedule");
    if (cfg.protocol == Protocol::kOnline && cfg.agent.episodes < 1)
        throw ConfigError(0, "episodes", "online protocol needs at least one episode");
}

// -------------------------------------------------------------- execution

std::uint64_t run_seed(std::uint64_t master, int run_id) { return master + static_cast<std::uint64_t>(run_id); }

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    const auto tasks = make_tasks(cfg);
    std::vector<RunResult> results(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::vector<double> wall(tasks.size(), 0.0);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto& t = tasks[i];
            const auto start = std::chrono::steady_clock::now();
            try {
                Rng rng = derive_rng(run_seed(cfg.seed, t.run_id), static_cast<std::uint64_t>(t.k));
                AgentConfig a = cfg.agent;
                a.keep_checkpoint = cfg.checkpoints;
                results[i] = cfg.protocol == Protocol::kOnline ? run_online(a, rng) : run_offline(a, t.k, rng);
            } catch (const std::exception& e) {
                errors[i] = e.what();
                if (errors[i].empty()) errors[i] = "unknown failure";
            }
            wall[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        }
    };
    const int n_threads = std::min<int>(cfg.threads, static_cast<int>(std::max<std::size_t>(tasks.size(), 1)));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ExperimentResult out;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        if (!errors[i].empty()) {
            out.failures.push_back({t.run_id, t.k, errors[i]});
            out.runs.push_back({});
            continue;
        }
        const auto& res = results[i];
        RawRow base;
        base.run_id = t.run_id;
        base.seed = run_seed(cfg.seed, t.run_id);
        base.protocol = to_string(cfg.protocol);
        base.agent = to_string(cfg.agent.kind);
        base.env = cfg.agent.env;
        base.wall_ms = cfg.record_wall_ms ? wall[i] : 0.0;
        if (cfg.protocol == Protocol::kOffline) {
            RawRow row = base;
            row.x = t.k;
            row.steps = res.mean_steps();
            double ret = 0.0;
            for (const auto& e : res.episodes) ret += e.discounted_return;
            row.discounted_return = res.episodes.empty() ? 0.0 : ret / static_cast<double>(res.episodes.size());
            out.rows.push_back(row);
        } else {
            for (std::size_t e = 0; e < res.episodes.size(); ++e) {
                RawRow row = base;
                row.x = static_cast<int>(e) + 1;
                row.steps = res.episodes[e].steps;
                row.discounted_return = res.episodes[e].discounted_return;
                out.rows.push_back(row);
            }
        }
        out.runs.push_back(res);
    }
    return out;
}

// ------------------------------------------------------------------- CSV

void write_raw_csv(std::ostream& out, const std::vector<RawRow>& rows) {
    out << "# schema: " << kRawSchema << '\n' << kRawHeader << '\n';
    for (const auto& r : rows)
        out << r.run_id << ',' << r.seed << ',' << r.protocol << ',' << r.agent << ',' << r.env << ',' << r.x << ','
            << format_number(r.steps) << ',' << format_number(r.discounted_return) << ',' << format_number(r.wall_ms)
            << '\n';
}

std::vector<RawRow> read_raw_csv(std::istream& in) {
    std::vector<RawRow> rows;
    std::string line;
    int row = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string expected = std::string("# schema: ") + kRawSchema;
            if (line.rfind("# schema:", 0) == 0 && line != expected)
                throw CsvParseError(row, "unsupported schema '" + line.substr(2) + "'");
            continue;
        }
        if (!header) {
            if (line != kRawHeader) throw CsvParseError(row, "expected header '" + std::string(kRawHeader) + "'");
            header = true;
            continue;
        }
        const auto f = split_row(line, 9, row);
        RawRow r;
        if (!parse_number(f[0], r.run_id)) throw CsvParseError(row, "run_id is not an integer");
        if (!parse_number(f[1], r.seed)) throw CsvParseError(row, "seed is not an unsigned integer");
        r.protocol = f[2];
        r.agent = f[3];
        r.env = f[4];
        if (r.protocol != "offline" && r.protocol != "online") throw CsvParseError(row, "unknown protocol");
        if (!parse_number(f[5], r.x)) throw CsvParseError(row, "x is not an integer");
        if (!parse_number(f[6], r.steps)) throw CsvParseError(row, "steps is not a number");
        if (!parse_number(f[7], r.discounted_return)) throw CsvParseError(row, "discounted_return is not a number");
        if (!parse_number(f[8], r.wall_ms)) throw CsvParseError(row, "wall_ms is not a number");
        rows.push_back(std::move(r));
    }
    if (!header) throw CsvParseError(row, "missing header row");
    return rows;
}

double percentile(std::vector<double> values, double p) {
    require(!values.empty(), "percentile: no values");
    require(p >= 0.0 && p <= 1.0, "percentile: p must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<CurvePoint> aggregate(const std::vector<RawRow>& rows) {
    std::map<std::tuple<std::string, std::string, std::string, int>, std::vector<double>> groups;
    for (const auto& r : rows) groups[{r.protocol, r.agent, r.env, r.x}].push_back(r.steps);
    std::vector<CurvePoint> out;
    for (const auto& [key, v] : groups) {
        CurvePoint c;
        std::tie(c.protocol, c.agent, c.env, c.x) = key;
        c.n = static_cast<int>(v.size());
        double sum = 0.0;
        for (double x : v) sum += x;
        c.mean = sum / c.n;
        if (c.n > 1) {
            double ss = 0.0;
            for (double x : v) ss += (x - c.mean) * (x - c.mean);
            c.ci95 = 1.96 * std::sqrt(ss / (c.n - 1)) / std::sqrt(static_cast<double>(c.n));
        }
        c.p5 = percentile(v, 0.05);
        c.p95 = percentile(v, 0.95);
        out.push_back(c);
    }
    return out;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
    out << "# schema: " << kCurveSchema << '\n' << "protocol,agent,env,x,mean,ci95,p5,p95,n\n";
    for (const auto& c : points)
        out << c.protocol << ',' << c.agent << ',' << c.env << ',' << c.x << ',' << format_number(c.mean) << ','
            << format_number(c.ci95) << ',' << format_number(c.p5) << ',' << format_number(c.p95) << ',' << c.n
            << '\n';
}

ExperimentResult run_to_directory(const ExperimentConfig& cfg) {
    auto res = run_experiment(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(cfg.out_dir / "raw.csv");
        write_raw_csv(f, res.rows);
    }
    {
        auto f = open(cfg.out_dir / "curve.csv");
        write_curve_csv(f, aggregate(res.rows));
    }
    {
        auto f = open(cfg.out_dir / "failures.csv");
        f << "run_id,x,message\n";
        for (const auto& e : res.failures) {
            std::string msg = e.message;
            std::replace(msg.begin(), msg.end(), ',', ';');
            std::replace(msg.begin(), msg.end(), '\n', ' ');
            f << e.run_id << ',' << e.x << ',' << msg << '\n';
        }
    }
    if (cfg.checkpoints) {
        const auto dir = cfg.out_dir / "checkpoints";
        std::filesystem::create_directories(dir);
        const auto tasks = make_tasks(cfg);
        for (std::size_t i = 0; i < tasks.size() && i < res.runs.size(); ++i) {
            if (!res.runs[i].checkpoint) continue;
            std::string name = "run" + std::to_string(tasks[i].run_id);
            if (cfg.protocol == Protocol::kOffline) name += "_k" + std::to_string(tasks[i].k);
            auto f = open(dir / (name + ".json"));
            f << res.runs[i].checkpoint->dump() << '\n';
        }
    }
    return res;
}

}  // namespace ctbrl
