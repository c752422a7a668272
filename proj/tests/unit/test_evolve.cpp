#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>

#include "ga_oracles.hpp"
#include "mpgru/errors.hpp"

using namespace mpgru;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Cheap deterministic fitness: accuracy rewards wide gates, size rewards
// narrow linears.
Evaluation toy_fitness(const Genome& g, std::uint64_t) {
    Evaluation e;
    double acc = 0, lin = 0;
    for (std::size_t k = 0; k < g.genes.size(); ++k) {
        acc += std::log2(static_cast<double>(g.genes[k])) * (k % 3 + 1);
        if (k < 6) lin += g.genes[k];
    }
    e.fitness = {acc / 100.0, 1.0 - lin / 48.0};
    e.size_bits = static_cast<std::int64_t>(lin);
    return e;
}

}  // namespace

TEST_CASE("dominates") {
    CHECK_FALSE(dominates({0.9, 0.5}, {0.9, 0.5}));
    CHECK(dominates({0.9, 0.5}, {0.8, 0.5}));
    CHECK_FALSE(dominates({0.9, 0.3}, {0.8, 0.6}));
    CHECK_FALSE(dominates({0.8, 0.6}, {0.9, 0.3}));
}

TEST_CASE("genome helpers") {
    const auto g = parse_genome("2,3,4,5,6,7,8,2,3,4,5,6,7,8,2,3,4");
    CHECK(format_genome(g) == "2,3,4,5,6,7,8,2,3,4,5,6,7,8,2,3,4");
    CHECK(to_bits(g)[6] == 8);
    CHECK_THROWS_AS(to_bits(parse_genome("8,8")), ConfigError);
    CHECK_THROWS_AS(to_bits(parse_genome("9,8,8,8,8,8,8,8,8,8,8,8,8,8,8,8,8")), ConfigError);
    CHECK_THROWS_AS(parse_genome("8,x,8"), ConfigError);
    CHECK(genome_hash(g) == genome_hash(parse_genome(format_genome(g))));
}

TEST_CASE("fast_nondominated_sort examples") {
    const std::vector<Fitness> pts = {{0.9, 0.5}, {0.8, 0.6}, {0.7, 0.3}};
    const auto f = fast_nondominated_sort(pts);
    REQUIRE(f.size() == 2);
    CHECK(f[0] == std::vector<std::size_t>{0, 1});
    CHECK(f[1] == std::vector<std::size_t>{2});
    const std::vector<Fitness> same(5, Fitness{0.4, 0.4});
    CHECK(fast_nondominated_sort(same).size() == 1);
}

TEST_CASE("crowding_distance examples") {
    const std::vector<Fitness> f = {{0, 1}, {0.5, 0.5}, {1, 0}};
    const auto d = crowding_distance(f);
    CHECK(d[0] == kInf);
    CHECK(d[1] == doctest::Approx(2.0));
    CHECK(d[2] == kInf);
    CHECK(crowding_distance(std::vector<Fitness>{{0.3, 0.3}})[0] == kInf);
    const std::vector<Fitness> dup = {{0, 1}, {0.5, 0.5}, {0.5, 0.5}, {1, 0}};
    const auto dd = crowding_distance(dup);
    CHECK(std::isfinite(dd[1]));
    CHECK(dd[1] == dd[2]);
    const std::vector<Fitness> edge = {{1, 0}, {0, 1}, {1, 0}};
    const auto de = crowding_distance(edge);
    CHECK(de[0] == kInf);
    CHECK(de[1] == kInf);
    CHECK(de[2] == 0.0);
}

TEST_CASE("survival examples") {
    const std::vector<Fitness> f = {{0, 1}, {0.5, 0.5}, {1, 0}};
    auto s = survival(f, 2);
    std::sort(s.begin(), s.end());
    CHECK(s == std::vector<std::size_t>{0, 2});
    const std::vector<Fitness> g = {{1, 1}, {0.2, 0.2}, {0.1, 0.1}};
    CHECK(survival(g, 1) == std::vector<std::size_t>{0});
}

TEST_CASE("pareto_front examples") {
    CHECK(pareto_front(std::vector<Fitness>{{1, 1}, {2, 2}}) == std::vector<std::size_t>{1});
    CHECK(pareto_front(std::vector<Fitness>{{1, 2}, {2, 1}}) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("GA primitives match brute-force oracles") {
    std::mt19937_64 rng(77);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng() % 50;
        const auto pts = oracle::random_points(rng, n);
        REQUIRE(fast_nondominated_sort(pts) == oracle::fronts(pts));
        for (const auto& fr : oracle::fronts(pts)) {
            std::vector<Fitness> sub;
            for (auto i : fr) sub.push_back(pts[i]);
            REQUIRE(crowding_distance(sub) == oracle::crowding(sub));
        }
        const std::size_t target = 1 + rng() % n;
        REQUIRE(survival(pts, target) == oracle::survivors(pts, target));
        REQUIRE(pareto_front(pts) == oracle::nondominated(pts));
    }
}

TEST_CASE("sample_genome: range, uniformity and seeding") {
    Rng rng(5);
    std::vector<std::array<int, 9>> counts(kNumBlocks);
    for (auto& c : counts) c.fill(0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const auto g = sample_genome(rng);
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            REQUIRE(g.genes[k] >= 2);
            REQUIRE(g.genes[k] <= 8);
            ++counts[k][g.genes[k]];
        }
    }
    const double p = 1.0 / 7.0, sigma = std::sqrt(draws * p * (1 - p));
    for (const auto& c : counts)
        for (int v = 2; v <= 8; ++v) CHECK(std::abs(c[v] - draws * p) <= 3 * sigma + 1);  // +1: integer slack
    Rng a(9), b(9);
    CHECK(sample_genome(a) == sample_genome(b));
}

TEST_CASE("tournament_select") {
    std::vector<Individual> pop(2);
    pop[0].rank = 1;
    pop[1].rank = 0;
    Rng rng(1);
    for (int i = 0; i < 100; ++i) CHECK(tournament_select(pop, rng) == 1);
    pop[0].rank = pop[1].rank = 0;
    pop[0].crowding = 1.0;
    pop[1].crowding = kInf;
    for (int i = 0; i < 100; ++i) CHECK(tournament_select(pop, rng) == 1);

    // Frequencies against the analytic distribution over distinct pairs.
    std::vector<Individual> four(4);
    const int ranks[] = {0, 0, 1, 2};
    const double crowd[] = {kInf, 1.0, 0.5, 0.5};
    for (int i = 0; i < 4; ++i) {
        four[i].rank = ranks[i];
        four[i].crowding = crowd[i];
    }
    auto wins = [&](int i, int j) {
        if (ranks[i] != ranks[j]) return ranks[i] < ranks[j] ? 1.0 : 0.0;
        if (crowd[i] != crowd[j]) return crowd[i] > crowd[j] ? 1.0 : 0.0;
        return 0.5;
    };
    const int trials = 10000;
    std::array<int, 4> hits{};
    for (int t = 0; t < trials; ++t) ++hits[tournament_select(four, rng)];
    for (int i = 0; i < 4; ++i) {
        double p = 0;
        for (int j = 0; j < 4; ++j)
            if (j != i) p += wins(i, j) * 2.0 / 12.0;
        const double sigma = std::sqrt(trials * p * (1 - p));
        CHECK(std::abs(hits[i] - trials * p) <= 3 * sigma + 1e-9);
    }
}

TEST_CASE("sbx: fixed points and closure") {
    CHECK(sbx_spread(0.5, 15.0) == doctest::Approx(1.0));
    const auto [c1, c2] = sbx_pair(3.0, 7.0, 0.5, 15.0);
    CHECK(c1 == doctest::Approx(3.0));
    CHECK(c2 == doctest::Approx(7.0));
    // Spread factor against the closed form.
    for (double u : {0.01, 0.2, 0.7, 0.99}) {
        const double e = 1.0 / 16.0;
        const double ref = u <= 0.5 ? std::pow(2 * u, e) : std::pow(1.0 / (2 * (1 - u)), e);
        CHECK(sbx_spread(u, 15.0) == doctest::Approx(ref));
    }

    SearchConfig cfg;
    cfg.crossover_probability = 1.0;
    Rng rng(4);
    const Genome p = parse_genome("5,5,5,5,5,5,5,5,5,5,5,5,5,5,5,5,5");
    for (int i = 0; i < 100; ++i) {
        const auto kids = sbx_crossover(p, p, cfg, rng);
        CHECK(kids.first == p);
        CHECK(kids.second == p);
    }
    cfg.crossover_eta = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const auto a = sample_genome(rng), b = sample_genome(rng);
        const auto [x, y] = sbx_crossover(a, b, cfg, rng);
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            REQUIRE(x.genes[k] >= 2);
            REQUIRE(x.genes[k] <= 8);
            REQUIRE(y.genes[k] >= 2);
            REQUIRE(y.genes[k] <= 8);
        }
    }
    cfg.crossover_probability = 0.0;
    const auto a = sample_genome(rng), b = sample_genome(rng);
    const auto copy = sbx_crossover(a, b, cfg, rng);
    CHECK(copy.first == a);
    CHECK(copy.second == b);
}

TEST_CASE("polynomial mutation") {
    SearchConfig cfg;
    cfg.mutation_probability = 0.0;
    Rng rng(8);
    const auto g = sample_genome(rng);
    CHECK(polynomial_mutation(g, cfg, rng) == g);

    CHECK(polynomial_perturbation(2.0, 0.1, 20.0, 2.0, 8.0) == 2.0);
    CHECK(polynomial_perturbation(2.0, 0.9, 20.0, 2.0, 8.0) > 2.0);

    cfg.mutation_probability = 1.0;
    cfg.mutation_eta = 1.0;
    const Genome low = uniform_genome(2), mid = uniform_genome(5);
    double sum = 0, sq = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        for (int v : polynomial_mutation(low, cfg, rng).genes) REQUIRE(v >= 2);
        const int d = polynomial_mutation(mid, cfg, rng).genes[3] - 5;
        sum += d;
        sq += d * d;
    }
    const double mean = sum / trials;
    const double sd = std::sqrt(sq / trials - mean * mean);
    CHECK(std::abs(mean) <= 3 * sd / std::sqrt(trials));
}

TEST_CASE("run_nsga2: smoke, closure, elitism, determinism") {
    SearchConfig cfg;
    cfg.population_size = 4;
    cfg.generations = 1;
    auto r = run_nsga2(cfg, toy_fitness);
    CHECK(r.population.size() == 4);
    CHECK(r.generations_completed == 1);

    cfg.population_size = 16;
    cfg.generations = 12;
    std::vector<double> best_acc, best_size;
    SearchCallbacks cb;
    std::map<Genome, int> seen;
    cb.on_generation = [&](int gen, std::span<const Individual> fresh) {
        for (const auto& ind : fresh) {
            REQUIRE(seen.emplace(ind.genome, gen).second);
            for (int v : ind.genome.genes) REQUIRE((v >= 2 && v <= 8));
        }
    };
    r = run_nsga2(cfg, toy_fitness, cb);
    CHECK(r.archive.size() == seen.size());
    CHECK(r.archive.size() <= 16u * 13u);
    for (const auto& ind : r.front)
        for (const auto& other : r.population) CHECK_FALSE(dominates(other.fitness, ind.fitness));

    const auto again = run_nsga2(cfg, toy_fitness);
    REQUIRE(again.archive.size() == r.archive.size());
    for (std::size_t i = 0; i < r.archive.size(); ++i) {
        CHECK(again.archive[i].genome == r.archive[i].genome);
        CHECK(again.archive[i].fitness == r.archive[i].fitness);
    }
    cfg.jobs = 4;
    const auto par = run_nsga2(cfg, toy_fitness);
    REQUIRE(par.archive.size() == r.archive.size());
    for (std::size_t i = 0; i < r.archive.size(); ++i) CHECK(par.archive[i].genome == r.archive[i].genome);
}

TEST_CASE("run_nsga2: elitism keeps the best objectives") {
    SearchConfig cfg;
    cfg.population_size = 8;
    cfg.generations = 1;
    double prev_acc = -1, prev_size = -1;
    for (int gens = 1; gens <= 8; ++gens) {
        cfg.generations = gens;
        const auto r = run_nsga2(cfg, toy_fitness);
        double acc = -1, size = -1;
        for (const auto& ind : r.population) {
            acc = std::max(acc, ind.fitness.accuracy);
            size = std::max(size, ind.fitness.size_complement);
        }
        CHECK(acc >= prev_acc);
        CHECK(size >= prev_size);
        prev_acc = acc;
        prev_size = size;
    }
}

TEST_CASE("run_nsga2: failures degrade and stop is honoured") {
    SearchConfig cfg;
    cfg.population_size = 8;
    cfg.generations = 3;
    auto flaky = [](const Genome& g, std::uint64_t s) {
        if (g.genes[0] == 2) throw std::runtime_error("boom");
        return toy_fitness(g, s);
    };
    const auto r = run_nsga2(cfg, flaky);
    for (const auto& ind : r.archive)
        if (ind.genome.genes[0] == 2) {
            CHECK(ind.failed);
            CHECK(ind.fitness.accuracy == 0.0);
        }

    std::atomic<bool> stop{true};
    SearchCallbacks cb;
    cb.stop = &stop;
    CHECK(run_nsga2(cfg, toy_fitness, cb).generations_completed == 0);

    SearchConfig bad;
    bad.population_size = 5;
    CHECK_THROWS_AS(run_nsga2(bad, toy_fitness), ConfigError);
}
