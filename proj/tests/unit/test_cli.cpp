#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "ga_oracles.hpp"
#include "helpers.hpp"
#include "mpgru/commands.hpp"
#include "mpgru/errors.hpp"

using namespace mpgru;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(MPGRU_CLI) + " " + args + " 2>&1";
    RunResult r;
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    std::array<char, 4096> buf;
    while (std::fgets(buf.data(), buf.size(), p)) r.output += buf.data();
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> csv_rows(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

std::string value_of(const std::string& output, const std::string& key) {
    const auto pos = output.find(key + "=");
    if (pos == std::string::npos) return {};
    const auto end = output.find('\n', pos);
    return output.substr(pos + key.size() + 1, end - pos - key.size() - 1);
}

const char* kSmall =
    "--set synthetic.per_class=60 --set fp.epochs=15 --set search.population=8 --set search.generations=3";

}  // namespace

TEST_CASE("config: defaults follow the training table") {
    RunConfig c;
    CHECK(c.fp.batch_size == 256);
    CHECK(c.fp.epochs == 50);
    CHECK(c.fp.learning_rate == 1e-3);
    CHECK(c.fp.validation_fraction == 0.05);
    CHECK(c.fp.validate_every == 5);
    CHECK(c.homogeneous.batch_size == 1024);
    CHECK(c.homogeneous.epochs == 30);
    CHECK(c.homogeneous.learning_rate == 5e-5);
    CHECK(c.mixed.epochs == 12);
    CHECK(c.mixed.validate_every == 3);
    CHECK(c.mixed.train_fraction == 0.1);
    CHECK(c.search.population_size == 32);
    CHECK(c.search.generations == 20);
    CHECK(c.search.effective_mutation_probability() == doctest::Approx(1.0 / 17.0));
}

TEST_CASE("config: file, overrides, echo") {
    const auto dir = testutil::temp_dir("config");
    std::ofstream(dir / "run.cfg") << "# comment\nseed = 7\nfp.epochs=3 # trailing\nsearch.finetune = qat\n";
    RunConfig c;
    apply_config_file(c, dir / "run.cfg");
    CHECK(c.seed == 7);
    CHECK(c.fp.epochs == 3);
    CHECK(c.search.finetune == FinetuneMode::qat);
    apply_override(c, "mixed.learning_rate=1e-4");
    CHECK(c.mixed.learning_rate == 1e-4);
    CHECK(std::stod(get_option(c, "mixed.learning_rate")) == 1e-4);
    CHECK_THROWS_AS(apply_override(c, "nope=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "fp.epochs=ten"), ConfigError);
    std::ofstream(dir / "bad.cfg") << "seed 7\n";
    CHECK_THROWS_AS(apply_config_file(c, dir / "bad.cfg"), ConfigError);

    RunConfig a, b;
    b.jobs = 4;
    b.out = "elsewhere";
    CHECK(config_echo(a) == config_echo(b));
    CHECK(config_echo(a).find("fp.learning_rate=0.001\n") != std::string::npos);
    for (const auto& k : option_keys()) CHECK_NOTHROW(set_option(a, k, get_option(a, k)));
}

TEST_CASE("knee point") {
    std::vector<Individual> f(3);
    f[0].fitness = {0.99, 0.1};
    f[1].fitness = {0.95, 0.3};
    f[2].fitness = {0.90, 0.6};
    CHECK(knee_point(f) == 1);
    f[1].fitness.size_complement = 0.2;
    CHECK(knee_point(f) == 2);
    f[2].fitness.size_complement = 0.2;
    CHECK(knee_point(f) == 3);
}

TEST_CASE("evaluate: baseline equivalence, size and failures") {
    const auto data = make_synthetic_task({});
    TrainConfig tc;
    tc.epochs = 10;
    EvalContext ctx;
    ctx.weights = train(data, 16, tc);
    ctx.stats = calibrate(ctx.weights, data, 1.0);
    ctx.validation = data;
    const auto e8 = evaluate(uniform_genome(8), ctx, 1);
    CHECK(e8.fitness.accuracy == quantized_accuracy(quantize_model(ctx.weights, ctx.stats, uniform_bits(8)), data));
    CHECK_FALSE(e8.failed);

    std::vector<std::string> log;
    ctx.log = [&](const std::string& s) { log.push_back(s); };
    const auto bad = evaluate(parse_genome("1,1"), ctx, 1);
    CHECK(bad.failed);
    CHECK(bad.fitness.accuracy == 0.0);
    CHECK(log.size() == 1);

    EvalContext tiny;
    tiny.weights = GRUWeights::random_init({2, 2, 2}, 1);
    tiny.stats = testutil::flat_stats(-1, 1);
    tiny.validation = testutil::small_task(2, 3, 2, 5);
    CHECK(evaluate(uniform_genome(8), tiny, 0).fitness.size_complement == doctest::Approx(0.25));
}

TEST_CASE("evaluate: all-2 never beats all-8 on the toy task") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticTaskConfig sc;
        sc.seed = seed;
        sc.per_class = 100;
        const auto data = make_synthetic_task(sc);
        TrainConfig tc;
        tc.epochs = 20;
        tc.seed = seed;
        EvalContext ctx;
        ctx.weights = train(data, 16, tc);
        ctx.stats = calibrate(ctx.weights, data, 1.0);
        ctx.validation = data;
        CHECK(evaluate(uniform_genome(2), ctx, 0).fitness.accuracy <=
              evaluate(uniform_genome(8), ctx, 0).fitness.accuracy);
    }
}

TEST_CASE("cli: usage errors exit with 2 and name the path") {
    auto r = run("train --task mnist-rows --mnist-dir /definitely/not/here --out /tmp/mpgru_cli_missing");
    CHECK(r.code == 2);
    CHECK(r.output.find("/definitely/not/here") != std::string::npos);
    r = run("--weights /no/such/weights.json calibrate");
    CHECK(r.code == 2);
    CHECK(r.output.find("/no/such/weights.json") != std::string::npos);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("train --set bogus=1").code == 2);
    CHECK(run("--help").code == 0);
}

TEST_CASE("cli: train, calibrate, evaluate, sweep, search, export") {
    const auto dir = testutil::temp_dir("cli_flow");
    const std::string common = std::string(kSmall) + " --out " + dir.string();
    auto r = run("train " + common);
    REQUIRE(r.code == 0);
    CHECK(!value_of(r.output, "test_accuracy").empty());
    const std::string w1 = slurp(dir / "weights.json");
    REQUIRE(run("train " + common).code == 0);
    CHECK(slurp(dir / "weights.json") == w1);
    REQUIRE(run("calibrate " + common).code == 0);

    const auto by_bits = run("quantize-eval --bits 8 " + common);
    const auto by_genome = run("quantize-eval --genome 8,8,8,8,8,8,8,8,8,8,8,8,8,8,8,8,8 " + common);
    REQUIRE(by_bits.code == 0);
    CHECK(by_bits.output == by_genome.output);
    const auto b16 = run("quantize-eval --bits 16 " + common);
    CHECK(std::abs(std::stod(value_of(b16.output, "test_accuracy")) -
                   std::stod(value_of(b16.output, "float_test_accuracy"))) <= 0.01);
    CHECK(run("quantize-eval --genome 2,2,2,2,2,2,2,2,2,2,2,2,2,2,2,2,2 " + common).code == 0);
    CHECK(run("quantize-eval --genome 8,8,8 " + common).code == 2);
    CHECK(run("quantize-eval --genome 9,8,8,8,8,8,8,8,8,8,8,8,8,8,8,8,8 " + common).code == 2);

    REQUIRE(run("baseline-sweep " + common).code == 0);
    const auto sweep = csv_rows(dir / "baseline.csv");
    REQUIRE(sweep.size() == 6);
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        CHECK(std::stoi(sweep[i][0]) == static_cast<int>(i) + 3);
        if (i) CHECK(std::stoll(sweep[i][3]) > std::stoll(sweep[i - 1][3]));
    }

    r = run("search " + common);
    REQUIRE(r.code == 0);
    const auto archive = csv_rows(dir / "archive.csv");
    CHECK(archive.size() <= 8u * 4u);
    CHECK(archive.size() == std::stoul(value_of(r.output, "archive_rows")));
    CHECK(slurp(dir / "archive.csv").rfind("# task=synthetic", 0) == 0);
    const auto front = csv_rows(dir / "front.csv");
    REQUIRE(!front.empty());
    std::vector<Fitness> pts;
    for (const auto& row : front) pts.push_back({std::stod(row[2]), std::stod(row[4])});
    for (const auto& a : pts)
        for (const auto& b : pts) CHECK_FALSE(oracle::beats(a, b));
    const std::string first = slurp(dir / "archive.csv");
    REQUIRE(run("search --jobs 3 " + common).code == 0);
    CHECK(slurp(dir / "archive.csv") == first);
    CHECK(std::filesystem::exists(dir / "scheme.json"));

    r = run("export --scheme " + (dir / "scheme.json").string() + " " + common);
    REQUIRE(r.code == 0);
    const auto model = load_model(dir / "model.json");
    CHECK(model.dims.hidden_size == 16);
}
