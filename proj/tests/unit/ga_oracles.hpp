#pragma once

// Brute-force references for the GA primitives.

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "mpgru/evolve.hpp"

namespace oracle {

using mpgru::Fitness;

inline bool beats(const Fitness& a, const Fitness& b) {
    return a.accuracy >= b.accuracy && a.size_complement >= b.size_complement &&
           (a.accuracy > b.accuracy || a.size_complement > b.size_complement);
}

// Repeatedly peel off the points no remaining point beats.
inline std::vector<std::vector<std::size_t>> fronts(const std::vector<Fitness>& pts) {
    std::vector<bool> gone(pts.size(), false);
    std::vector<std::vector<std::size_t>> out;
    std::size_t left = pts.size();
    while (left) {
        std::vector<std::size_t> layer;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (gone[i]) continue;
            bool beaten = false;
            for (std::size_t j = 0; j < pts.size() && !beaten; ++j) beaten = !gone[j] && beats(pts[j], pts[i]);
            if (!beaten) layer.push_back(i);
        }
        for (auto i : layer) gone[i] = true;
        left -= layer.size();
        out.push_back(layer);
    }
    return out;
}

inline double obj(const Fitness& f, int m) { return m == 0 ? f.accuracy : f.size_complement; }

// Lexicographic key: objective m first, the other one second.
inline bool key_less(const Fitness& a, const Fitness& b, int m) {
    return obj(a, m) < obj(b, m) || (obj(a, m) == obj(b, m) && obj(a, 1 - m) < obj(b, 1 - m));
}

// Cuboid distance over the distinct points of a front; boundary points and
// fronts with at most two distinct points get infinity, but only for their
// first copy. Copies of an interior point split its distance evenly.
inline std::vector<double> crowding(const std::vector<Fitness>& front) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Fitness> uniq;
    for (const auto& p : front)
        if (std::find(uniq.begin(), uniq.end(), p) == uniq.end()) uniq.push_back(p);
    std::vector<double> d(uniq.size(), 0.0);
    if (uniq.size() <= 2) {
        std::fill(d.begin(), d.end(), inf);
    } else {
        for (int m = 0; m < 2; ++m) {
            double lo = obj(uniq[0], m), hi = lo;
            for (const auto& p : uniq) {
                lo = std::min(lo, obj(p, m));
                hi = std::max(hi, obj(p, m));
            }
            for (std::size_t i = 0; i < uniq.size(); ++i) {
                const Fitness* prev = nullptr;
                const Fitness* next = nullptr;
                for (std::size_t j = 0; j < uniq.size(); ++j) {
                    if (j == i) continue;
                    if (key_less(uniq[j], uniq[i], m) && (!prev || key_less(*prev, uniq[j], m))) prev = &uniq[j];
                    if (key_less(uniq[i], uniq[j], m) && (!next || key_less(uniq[j], *next, m))) next = &uniq[j];
                }
                if (!prev || !next) d[i] = inf;
                else if (hi > lo && d[i] != inf) d[i] += (obj(*next, m) - obj(*prev, m)) / (hi - lo);
            }
        }
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < front.size(); ++i) {
        const double v = d[std::find(uniq.begin(), uniq.end(), front[i]) - uniq.begin()];
        const bool later_copy = std::find(front.begin(), front.begin() + i, front[i]) != front.begin() + i;
        const auto k = std::count(front.begin(), front.end(), front[i]);
        out.push_back(v == inf ? (later_copy ? 0.0 : inf) : v / static_cast<double>(k));
    }
    return out;
}

inline std::vector<std::size_t> survivors(const std::vector<Fitness>& pts, std::size_t target) {
    std::vector<std::size_t> out;
    for (const auto& f : fronts(pts)) {
        if (out.size() + f.size() <= target) {
            out.insert(out.end(), f.begin(), f.end());
            continue;
        }
        std::vector<Fitness> sub;
        for (auto i : f) sub.push_back(pts[i]);
        const auto d = crowding(sub);
        std::vector<std::size_t> order(f.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
        for (std::size_t k = 0; out.size() < target; ++k) out.push_back(f[order[k]]);
        break;
    }
    return out;
}

inline std::vector<std::size_t> nondominated(const std::vector<Fitness>& pts) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool beaten = false;
        for (const auto& q : pts) beaten = beaten || beats(q, pts[i]);
        if (!beaten) out.push_back(i);
    }
    std::stable_sort(out.begin(), out.end(),
                     [&](std::size_t a, std::size_t b) { return pts[a].accuracy > pts[b].accuracy; });
    return out;
}

// Random clouds on a coarse grid so that ties and duplicates are common.
inline std::vector<Fitness> random_points(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> g(0, 9);
    std::vector<Fitness> pts(n);
    for (auto& p : pts) p = {g(rng) / 9.0, g(rng) / 9.0};
    return pts;
}

}  // namespace oracle
