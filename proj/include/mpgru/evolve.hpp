#pragma once

// NSGA-II over integer bit-width genomes: non-dominated sorting, crowding
// distance, binary tournaments, SBX crossover and polynomial mutation
// (real-coded, rounded back onto the integer grid), elitist survival.

#include <atomic>
#include <compare>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpgru/blocks.hpp"

namespace mpgru {

inline constexpr int kGeneMin = 2;
inline constexpr int kGeneMax = 8;

struct Genome {
    std::vector<int> genes;

    auto operator<=>(const Genome&) const = default;
    bool operator==(const Genome&) const = default;
};

// Throws ConfigError unless the genome has `length` genes, all in [2,8].
void validate(const Genome& g, std::size_t length = kNumBlocks);
// 17-gene genome to per-block bit-widths.
BitWidths to_bits(const Genome& g);
Genome uniform_genome(int bits, std::size_t length = kNumBlocks);
// Comma-separated gene list, e.g. "8,8,4,...".
Genome parse_genome(const std::string& text);
std::string format_genome(const Genome& g);
std::uint64_t genome_hash(const Genome& g) noexcept;

// Both objectives are maximized.
struct Fitness {
    double accuracy = 0.0;
    double size_complement = 0.0;

    bool operator==(const Fitness&) const = default;
};

bool dominates(const Fitness& a, const Fitness& b) noexcept;

struct Individual {
    Genome genome;
    Fitness fitness;
    std::int64_t size_bits = 0;
    int rank = 0;
    double crowding = 0.0;
    int generation_born = 0;
    bool failed = false;
};

enum class FinetuneMode { ptq, qat };

struct SearchConfig {
    int population_size = 32;
    int generations = 20;
    double crossover_probability = 0.9;
    double crossover_eta = 15.0;
    // Negative selects 1 / gene_count.
    double mutation_probability = -1.0;
    double mutation_eta = 20.0;
    std::uint64_t seed = 42;
    FinetuneMode finetune = FinetuneMode::ptq;
    int gene_count = static_cast<int>(kNumBlocks);
    int jobs = 1;

    double effective_mutation_probability() const {
        return mutation_probability < 0.0 ? 1.0 / gene_count : mutation_probability;
    }
};

void validate(const SearchConfig& cfg);

using Rng = std::mt19937_64;

Genome sample_genome(Rng& rng, std::size_t length = kNumBlocks);

// Fronts of indices into `points`; front 0 is the non-dominated set.
std::vector<std::vector<std::size_t>> fast_nondominated_sort(std::span<const Fitness> points);

// Crowding distance of each member of one front, computed on the distinct
// points. k identical interior points each get 1/k of their point's value;
// of identical boundary points only the first keeps infinity, the rest get 0.
std::vector<double> crowding_distance(std::span<const Fitness> front);

// Binary tournament between two distinct uniformly drawn members:
// lower rank wins, then larger crowding, then a fair coin.
std::size_t tournament_select(std::span<const Individual> pop, Rng& rng);

// SBX spread factor for a uniform draw u in [0,1).
double sbx_spread(double u, double eta) noexcept;
std::pair<double, double> sbx_pair(double x1, double x2, double u, double eta) noexcept;
// Each gene is recombined with probability 1/2 and the two children's genes
// are exchanged with probability 1/2; children are rounded and clamped.
std::pair<Genome, Genome> sbx_crossover(const Genome& p1, const Genome& p2, const SearchConfig& cfg,
                                        Rng& rng);

// Bounded polynomial perturbation of x in [lo, hi] for a uniform draw u.
double polynomial_perturbation(double x, double u, double eta, double lo, double hi) noexcept;
Genome polynomial_mutation(const Genome& g, const SearchConfig& cfg, Rng& rng);

int round_gene(double x) noexcept;

// Indices (into `combined`) of the `target` survivors: whole fronts in rank
// order, the last admitted front split by descending crowding distance.
std::vector<std::size_t> survival(std::span<const Fitness> combined, std::size_t target);

// Non-dominated subset, ordered by accuracy (descending, stable).
std::vector<std::size_t> pareto_front(std::span<const Fitness> points);

struct Evaluation {
    Fitness fitness;
    std::int64_t size_bits = 0;
    bool failed = false;
    std::string error;
};

// `stream_seed` is derived from (master seed, genome, generation) so that
// results do not depend on evaluation order or thread scheduling.
std::uint64_t evaluation_seed(std::uint64_t master_seed, const Genome& g, int generation) noexcept;

using FitnessFunction = std::function<Evaluation(const Genome&, std::uint64_t stream_seed)>;

struct SearchCallbacks {
    // Called after each generation with the individuals first evaluated in it.
    std::function<void(int generation, std::span<const Individual> evaluated)> on_generation;
    // Checked between generations; when set the search stops early.
    const std::atomic<bool>* stop = nullptr;
};

struct SearchResult {
    std::vector<Individual> archive;     // every distinct evaluated genome, in order
    std::vector<Individual> population;  // final survivors with rank/crowding
    std::vector<Individual> front;       // non-dominated final survivors, distinct genomes
    int generations_completed = 0;
};

SearchResult run_nsga2(const SearchConfig& cfg, const FitnessFunction& fitness,
                       const SearchCallbacks& callbacks = {});

}  // namespace mpgru
