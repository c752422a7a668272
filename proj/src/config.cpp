#include "mpgru/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>

#include "mpgru/errors.hpp"
#include "mpgru/pipeline.hpp"

namespace mpgru {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = first + value.size();
    auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ConfigError("option '" + key + "' expects a number, got '" + value + "'");
    return out;
}

struct Option {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
    bool echoed = true;
};

template <class T, class Access>
Option numeric(std::string key, Access access) {
    return {key,
            [key, access](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(key, v); },
            [access](const RunConfig& c) {
                const T value = access(const_cast<RunConfig&>(c));
                if constexpr (std::is_floating_point_v<T>) return fmt(value);
                else return std::to_string(value);
            }};
}

void add_train_options(std::vector<Option>& opts, const std::string& prefix,
                       TrainConfig RunConfig::*member) {
    opts.push_back(numeric<int>(prefix + ".batch_size",
                                [member](RunConfig& c) -> int& { return (c.*member).batch_size; }));
    opts.push_back(numeric<int>(prefix + ".epochs",
                                [member](RunConfig& c) -> int& { return (c.*member).epochs; }));
    opts.push_back(numeric<double>(prefix + ".learning_rate",
                                   [member](RunConfig& c) -> double& { return (c.*member).learning_rate; }));
    opts.push_back(numeric<double>(prefix + ".validation_split", [member](RunConfig& c) -> double& {
        return (c.*member).validation_fraction;
    }));
    opts.push_back(numeric<int>(prefix + ".validate_every",
                                [member](RunConfig& c) -> int& { return (c.*member).validate_every; }));
    opts.push_back(numeric<double>(prefix + ".train_split",
                                   [member](RunConfig& c) -> double& { return (c.*member).train_fraction; }));
    opts.push_back(numeric<double>(prefix + ".clip_norm",
                                   [member](RunConfig& c) -> double& { return (c.*member).clip_norm; }));
}

const std::vector<Option>& options() {
    static const std::vector<Option> opts = [] {
        std::vector<Option> o;
        o.push_back({"task",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "synthetic") c.task = TaskKind::synthetic;
                         else if (v == "mnist-rows") c.task = TaskKind::mnist_rows;
                         else throw ConfigError("task must be 'synthetic' or 'mnist-rows', got '" + v + "'");
                     },
                     [](const RunConfig& c) { return task_name(c.task); }});
        o.push_back(numeric<std::uint64_t>("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
        o.push_back(numeric<int>("hidden_size", [](RunConfig& c) -> int& { return c.hidden_size; }));
        o.push_back(numeric<int>("synthetic.classes",
                                 [](RunConfig& c) -> int& { return c.synthetic.num_classes; }));
        o.push_back(numeric<int>("synthetic.steps", [](RunConfig& c) -> int& { return c.synthetic.steps; }));
        o.push_back(numeric<int>("synthetic.features",
                                 [](RunConfig& c) -> int& { return c.synthetic.features; }));
        o.push_back(numeric<int>("synthetic.per_class",
                                 [](RunConfig& c) -> int& { return c.synthetic.per_class; }));
        o.push_back(numeric<double>("synthetic.noise_std",
                                    [](RunConfig& c) -> double& { return c.synthetic.noise_std; }));
        o.push_back({"mnist_dir", [](RunConfig& c, const std::string& v) { c.mnist_dir = v; },
                     [](const RunConfig& c) { return c.mnist_dir.string(); }});
        o.push_back(numeric<std::size_t>("mnist.train_limit",
                                         [](RunConfig& c) -> std::size_t& { return c.mnist_train_limit; }));
        add_train_options(o, "fp", &RunConfig::fp);
        add_train_options(o, "homogeneous", &RunConfig::homogeneous);
        add_train_options(o, "mixed", &RunConfig::mixed);
        o.push_back(numeric<double>("calibration_fraction",
                                    [](RunConfig& c) -> double& { return c.calibration_fraction; }));
        o.push_back(numeric<int>("search.population",
                                 [](RunConfig& c) -> int& { return c.search.population_size; }));
        o.push_back(numeric<int>("search.generations",
                                 [](RunConfig& c) -> int& { return c.search.generations; }));
        o.push_back(numeric<double>("search.crossover_probability",
                                    [](RunConfig& c) -> double& { return c.search.crossover_probability; }));
        o.push_back(numeric<double>("search.crossover_eta",
                                    [](RunConfig& c) -> double& { return c.search.crossover_eta; }));
        o.push_back({"search.mutation_probability",
                     [](RunConfig& c, const std::string& v) {
                         c.search.mutation_probability =
                             v == "auto" ? -1.0 : parse_number<double>("search.mutation_probability", v);
                     },
                     [](const RunConfig& c) {
                         return c.search.mutation_probability < 0.0 ? std::string("auto")
                                                                    : fmt(c.search.mutation_probability);
                     }});
        o.push_back(numeric<double>("search.mutation_eta",
                                    [](RunConfig& c) -> double& { return c.search.mutation_eta; }));
        o.push_back({"search.finetune",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "ptq") c.search.finetune = FinetuneMode::ptq;
                         else if (v == "qat") c.search.finetune = FinetuneMode::qat;
                         else throw ConfigError("search.finetune must be 'ptq' or 'qat', got '" + v + "'");
                     },
                     [](const RunConfig& c) {
                         return std::string(c.search.finetune == FinetuneMode::qat ? "qat" : "ptq");
                     }});
        o.push_back({"out", [](RunConfig& c, const std::string& v) { c.out = v; },
                     [](const RunConfig& c) { return c.out.string(); }, false});
        o.push_back({"weights", [](RunConfig& c, const std::string& v) { c.weights = v; },
                     [](const RunConfig& c) { return c.weights.string(); }, false});
        o.push_back({"stats", [](RunConfig& c, const std::string& v) { c.stats = v; },
                     [](const RunConfig& c) { return c.stats.string(); }, false});
        o.push_back(numeric<int>("jobs", [](RunConfig& c) -> int& { return c.jobs; }));
        o.back().echoed = false;
        return o;
    }();
    return opts;
}

const Option& find_option(const std::string& key) {
    const auto& opts = options();
    auto it = std::find_if(opts.begin(), opts.end(), [&](const Option& o) { return o.key == key; });
    if (it == opts.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return *it;
}

}  // namespace

RunConfig::RunConfig()
    : fp(float_train_config()), homogeneous(homogeneous_qat_config()), mixed(mixed_qat_config()) {}

std::filesystem::path RunConfig::weights_path() const {
    return weights.empty() ? out / "weights.json" : weights;
}

std::filesystem::path RunConfig::stats_path() const {
    return stats.empty() ? out / "stats.json" : stats;
}

SearchConfig RunConfig::search_config() const {
    SearchConfig s = search;
    s.seed = seed;
    s.jobs = jobs;
    return s;
}

TrainConfig RunConfig::train_config(const TrainConfig& base) const {
    TrainConfig t = base;
    t.seed = seed;
    return t;
}

void set_option(RunConfig& cfg, const std::string& key, const std::string& value) {
    find_option(key).set(cfg, value);
}

std::string get_option(const RunConfig& cfg, const std::string& key) {
    return find_option(key).get(cfg);
}

std::vector<std::string> option_keys() {
    std::vector<std::string> keys;
    for (const auto& o : options()) keys.push_back(o.key);
    return keys;
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
        try {
            set_option(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set_option(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string config_echo(const RunConfig& cfg) {
    std::string out;
    for (const auto& o : options())
        if (o.echoed) out += o.key + "=" + o.get(cfg) + "\n";
    return out;
}

std::string task_name(TaskKind t) { return t == TaskKind::synthetic ? "synthetic" : "mnist-rows"; }

}  // namespace mpgru
