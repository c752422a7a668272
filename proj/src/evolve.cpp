#include "mpgru/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "mpgru/errors.hpp"

namespace mpgru {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double objective(const Fitness& f, int m) { return m == 0 ? f.accuracy : f.size_complement; }

bool lex_less(const Fitness& a, const Fitness& b, int m) {
    const double am = objective(a, m), bm = objective(b, m);
    if (am != bm) return am < bm;
    return objective(a, 1 - m) < objective(b, 1 - m);
}

}  // namespace

// ---------------------------------------------------------------- genomes

void validate(const Genome& g, std::size_t length) {
    if (g.genes.size() != length)
        throw ConfigError("genome must have " + std::to_string(length) + " genes, got " +
                          std::to_string(g.genes.size()));
    for (int v : g.genes)
        if (v < kGeneMin || v > kGeneMax)
            throw ConfigError("gene value " + std::to_string(v) + " outside [2,8]");
}

BitWidths to_bits(const Genome& g) {
    validate(g, kNumBlocks);
    BitWidths bits{};
    std::copy(g.genes.begin(), g.genes.end(), bits.begin());
    return bits;
}

Genome uniform_genome(int bits, std::size_t length) {
    return Genome{std::vector<int>(length, bits)};
}

Genome parse_genome(const std::string& text) {
    Genome g;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            int v = std::stoi(item, &used);
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
            g.genes.push_back(v);
        } catch (const std::logic_error&) {
            throw ConfigError("malformed gene '" + item + "' in genome '" + text + "'");
        }
    }
    return g;
}

std::string format_genome(const Genome& g) {
    std::string out;
    for (std::size_t i = 0; i < g.genes.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(g.genes[i]);
    }
    return out;
}

std::uint64_t genome_hash(const Genome& g) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int v : g.genes) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t evaluation_seed(std::uint64_t master_seed, const Genome& g, int generation) noexcept {
    return splitmix64(master_seed ^ splitmix64(genome_hash(g) + static_cast<std::uint64_t>(generation)));
}

bool dominates(const Fitness& a, const Fitness& b) noexcept {
    return a.accuracy >= b.accuracy && a.size_complement >= b.size_complement && !(a == b);
}

void validate(const SearchConfig& cfg) {
    if (cfg.population_size < 4 || cfg.population_size % 2 != 0)
        throw ConfigError("population size must be even and >= 4");
    if (cfg.generations < 1) throw ConfigError("generations must be >= 1");
    if (cfg.gene_count < 1) throw ConfigError("gene count must be >= 1");
    if (cfg.crossover_probability < 0.0 || cfg.crossover_probability > 1.0 ||
        cfg.effective_mutation_probability() > 1.0)
        throw ConfigError("operator probabilities must lie in [0,1]");
    if (!(cfg.crossover_eta >= 0.0) || !(cfg.mutation_eta >= 0.0))
        throw ConfigError("distribution indices must be non-negative");
    if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
}

Genome sample_genome(Rng& rng, std::size_t length) {
    std::uniform_int_distribution<int> dist(kGeneMin, kGeneMax);
    Genome g;
    g.genes.resize(length);
    for (int& v : g.genes) v = dist(rng);
    return g;
}

// ---------------------------------------------------------------- sorting

std::vector<std::vector<std::size_t>> fast_nondominated_sort(std::span<const Fitness> points) {
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> counter(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (dominates(points[p], points[q])) dominated[p].push_back(q);
            else if (dominates(points[q], points[p])) ++counter[p];
        }
        if (counter[p] == 0) current.push_back(p);
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t p : current)
            for (std::size_t q : dominated[p])
                if (--counter[q] == 0) next.push_back(q);
        std::sort(current.begin(), current.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

std::vector<double> crowding_distance(std::span<const Fitness> front) {
    const std::size_t n = front.size();
    if (n == 0) return {};

    // Distinct points; `rep[i]` is the distinct index of member i.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return lex_less(front[a], front[b], 0); });
    std::vector<Fitness> distinct;
    std::vector<std::size_t> rep(n);
    for (std::size_t i : order) {
        if (distinct.empty() || !(distinct.back() == front[i])) distinct.push_back(front[i]);
        rep[i] = distinct.size() - 1;
    }

    const std::size_t u = distinct.size();
    std::vector<double> dist(u, 0.0);
    if (u <= 2) {
        std::fill(dist.begin(), dist.end(), kInf);
    } else {
        std::vector<std::size_t> idx(u);
        for (int m = 0; m < 2; ++m) {
            for (std::size_t i = 0; i < u; ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                return lex_less(distinct[a], distinct[b], m);
            });
            const double range = objective(distinct[idx.back()], m) - objective(distinct[idx.front()], m);
            dist[idx.front()] = kInf;
            dist[idx.back()] = kInf;
            if (range <= 0.0) continue;
            for (std::size_t k = 1; k + 1 < u; ++k) {
                const double gap = objective(distinct[idx[k + 1]], m) - objective(distinct[idx[k - 1]], m);
                dist[idx[k]] += gap / range;
            }
        }
    }

    // Copies split their point's distance; of a boundary point only the first
    // copy keeps infinity.
    std::vector<std::size_t> copies(u, 0);
    for (std::size_t i = 0; i < n; ++i) ++copies[rep[i]];
    std::vector<double> out(n);
    std::vector<bool> seen(u, false);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = dist[rep[i]];
        if (d == kInf) out[i] = seen[rep[i]] ? 0.0 : kInf;
        else out[i] = d / static_cast<double>(copies[rep[i]]);
        seen[rep[i]] = true;
    }
    return out;
}

std::size_t tournament_select(std::span<const Individual> pop, Rng& rng) {
    if (pop.size() < 2) return 0;
    const std::size_t a = std::uniform_int_distribution<std::size_t>(0, pop.size() - 1)(rng);
    std::size_t b = std::uniform_int_distribution<std::size_t>(0, pop.size() - 2)(rng);
    if (b >= a) ++b;
    const Individual& A = pop[a];
    const Individual& B = pop[b];
    if (A.rank != B.rank) return A.rank < B.rank ? a : b;
    if (A.crowding != B.crowding) return A.crowding > B.crowding ? a : b;
    return uniform01(rng) < 0.5 ? a : b;
}

// ---------------------------------------------------------------- variation

int round_gene(double x) noexcept {
    const double r = std::round(x);
    return static_cast<int>(std::clamp(r, static_cast<double>(kGeneMin), static_cast<double>(kGeneMax)));
}

double sbx_spread(double u, double eta) noexcept {
    const double e = 1.0 / (eta + 1.0);
    if (u <= 0.5) return std::pow(2.0 * u, e);
    return std::pow(1.0 / (2.0 * (1.0 - u)), e);
}

std::pair<double, double> sbx_pair(double x1, double x2, double u, double eta) noexcept {
    const double beta = sbx_spread(u, eta);
    return {0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2), 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2)};
}

std::pair<Genome, Genome> sbx_crossover(const Genome& p1, const Genome& p2, const SearchConfig& cfg,
                                        Rng& rng) {
    if (p1.genes.size() != p2.genes.size()) throw ConfigError("sbx_crossover: parent lengths differ");
    Genome c1 = p1;
    Genome c2 = p2;
    if (uniform01(rng) >= cfg.crossover_probability) return {c1, c2};
    for (std::size_t i = 0; i < p1.genes.size(); ++i) {
        const double recombine = uniform01(rng);
        const double u = uniform01(rng);
        const double exchange = uniform01(rng);
        if (recombine >= 0.5 || p1.genes[i] == p2.genes[i]) continue;
        auto [y1, y2] = sbx_pair(p1.genes[i], p2.genes[i], u, cfg.crossover_eta);
        c1.genes[i] = round_gene(y1);
        c2.genes[i] = round_gene(y2);
        if (exchange < 0.5) std::swap(c1.genes[i], c2.genes[i]);
    }
    return {c1, c2};
}

double polynomial_perturbation(double x, double u, double eta, double lo, double hi) noexcept {
    const double span = hi - lo;
    if (span <= 0.0) return x;
    const double d1 = (x - lo) / span;
    const double d2 = (hi - x) / span;
    const double power = 1.0 / (eta + 1.0);
    double delta;
    if (u < 0.5) {
        const double v = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta + 1.0);
        delta = std::pow(v, power) - 1.0;
    } else {
        const double v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta + 1.0);
        delta = 1.0 - std::pow(v, power);
    }
    return std::clamp(x + delta * span, lo, hi);
}

Genome polynomial_mutation(const Genome& g, const SearchConfig& cfg, Rng& rng) {
    Genome out = g;
    const double pm = cfg.effective_mutation_probability();
    for (int& v : out.genes) {
        const double fire = uniform01(rng);
        const double u = uniform01(rng);
        if (fire >= pm) continue;
        v = round_gene(polynomial_perturbation(v, u, cfg.mutation_eta, kGeneMin, kGeneMax));
    }
    return out;
}

// ---------------------------------------------------------------- survival

std::vector<std::size_t> survival(std::span<const Fitness> combined, std::size_t target) {
    std::vector<std::size_t> out;
    out.reserve(target);
    for (const auto& front : fast_nondominated_sort(combined)) {
        if (out.size() >= target) break;
        if (out.size() + front.size() <= target) {
            out.insert(out.end(), front.begin(), front.end());
            continue;
        }
        std::vector<Fitness> pts;
        for (std::size_t i : front) pts.push_back(combined[i]);
        const auto dist = crowding_distance(pts);
        std::vector<std::size_t> order(front.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
        for (std::size_t k = 0; out.size() < target; ++k) out.push_back(front[order[k]]);
    }
    return out;
}

std::vector<std::size_t> pareto_front(std::span<const Fitness> points) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j)
            dominated = dominates(points[j], points[i]);
        if (!dominated) out.push_back(i);
    }
    std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
        return points[a].accuracy > points[b].accuracy;
    });
    return out;
}

// ---------------------------------------------------------------- driver

namespace {

std::vector<Fitness> fitnesses(std::span<const Individual> pop) {
    std::vector<Fitness> out;
    out.reserve(pop.size());
    for (const auto& ind : pop) out.push_back(ind.fitness);
    return out;
}

void assign_rank_and_crowding(std::vector<Individual>& pop) {
    const auto fit = fitnesses(pop);
    const auto fronts = fast_nondominated_sort(fit);
    for (std::size_t r = 0; r < fronts.size(); ++r) {
        std::vector<Fitness> pts;
        for (std::size_t i : fronts[r]) pts.push_back(fit[i]);
        const auto dist = crowding_distance(pts);
        for (std::size_t k = 0; k < fronts[r].size(); ++k) {
            pop[fronts[r][k]].rank = static_cast<int>(r);
            pop[fronts[r][k]].crowding = dist[k];
        }
    }
}

class Evaluator {
public:
    Evaluator(const SearchConfig& cfg, const FitnessFunction& fn) : cfg_(cfg), fn_(fn) {}

    // Evaluates the genomes not seen before (in order of first appearance)
    // and returns one Individual per input genome.
    std::vector<Individual> run(const std::vector<Genome>& genomes, int generation,
                                std::vector<Individual>& fresh) {
        std::vector<Genome> todo;
        for (const auto& g : genomes)
            if (!memo_.contains(g) && std::find(todo.begin(), todo.end(), g) == todo.end())
                todo.push_back(g);

        std::vector<Evaluation> results(todo.size());
        auto work = [&](std::size_t i) {
            const std::uint64_t stream = evaluation_seed(cfg_.seed, todo[i], generation);
            try {
                results[i] = fn_(todo[i], stream);
            } catch (const std::exception& e) {
                results[i].failed = true;
                results[i].error = e.what();
                results[i].fitness.accuracy = 0.0;
            }
        };
        const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(cfg_.jobs), todo.size());
        if (threads <= 1) {
            for (std::size_t i = 0; i < todo.size(); ++i) work(i);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t)
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < todo.size(); i = next++) work(i);
                });
            for (auto& th : pool) th.join();
        }

        fresh.clear();
        for (std::size_t i = 0; i < todo.size(); ++i) {
            memo_.emplace(todo[i], results[i]);
            fresh.push_back(make(todo[i], results[i], generation));
        }
        std::vector<Individual> out;
        out.reserve(genomes.size());
        for (const auto& g : genomes) {
            const auto& [first_gen, eval] = born_.at(g);
            out.push_back(make(g, eval, first_gen));
        }
        return out;
    }

private:
    Individual make(const Genome& g, const Evaluation& e, int generation) {
        born_.try_emplace(g, generation, e);
        Individual ind;
        ind.genome = g;
        ind.fitness = e.fitness;
        ind.size_bits = e.size_bits;
        ind.failed = e.failed;
        ind.generation_born = generation;
        return ind;
    }

    const SearchConfig& cfg_;
    const FitnessFunction& fn_;
    std::map<Genome, Evaluation> memo_;
    std::map<Genome, std::pair<int, Evaluation>> born_;
};

}  // namespace

SearchResult run_nsga2(const SearchConfig& cfg, const FitnessFunction& fitness,
                       const SearchCallbacks& callbacks) {
    validate(cfg);
    const auto length = static_cast<std::size_t>(cfg.gene_count);
    Rng rng(cfg.seed);
    Evaluator evaluator(cfg, fitness);
    SearchResult result;
    std::vector<Individual> fresh;

    auto record = [&](int generation) {
        result.archive.insert(result.archive.end(), fresh.begin(), fresh.end());
        if (callbacks.on_generation) callbacks.on_generation(generation, fresh);
    };

    std::vector<Genome> initial;
    for (int i = 0; i < cfg.population_size; ++i) initial.push_back(sample_genome(rng, length));
    std::vector<Individual> pop = evaluator.run(initial, 0, fresh);
    record(0);
    assign_rank_and_crowding(pop);

    for (int gen = 1; gen <= cfg.generations; ++gen) {
        if (callbacks.stop && callbacks.stop->load()) break;
        std::vector<Genome> offspring;
        while (offspring.size() < static_cast<std::size_t>(cfg.population_size)) {
            const Individual& a = pop[tournament_select(pop, rng)];
            const Individual& b = pop[tournament_select(pop, rng)];
            auto [c1, c2] = sbx_crossover(a.genome, b.genome, cfg, rng);
            offspring.push_back(polynomial_mutation(c1, cfg, rng));
            offspring.push_back(polynomial_mutation(c2, cfg, rng));
        }
        std::vector<Individual> children = evaluator.run(offspring, gen, fresh);
        record(gen);

        std::vector<Individual> combined = pop;
        combined.insert(combined.end(), children.begin(), children.end());
        const auto keep = survival(fitnesses(combined), static_cast<std::size_t>(cfg.population_size));
        std::vector<Individual> next;
        next.reserve(keep.size());
        for (std::size_t i : keep) next.push_back(combined[i]);
        pop = std::move(next);
        assign_rank_and_crowding(pop);
        result.generations_completed = gen;
    }

    result.population = pop;
    const auto fit = fitnesses(pop);
    for (std::size_t i : pareto_front(fit)) {
        const bool seen = std::any_of(result.front.begin(), result.front.end(),
                                      [&](const Individual& x) { return x.genome == pop[i].genome; });
        if (!seen) result.front.push_back(pop[i]);
    }
    return result;
}

}  // namespace mpgru
