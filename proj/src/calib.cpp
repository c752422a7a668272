#include "mpgru/calib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "mpgru/errors.hpp"

namespace mpgru {

void CalibrationStats::merge(const CalibrationStats& other) {
    for (std::size_t s = 0; s < kNumSites; ++s) {
        SiteStats& a = sites[s];
        const SiteStats& b = other.sites[s];
        if (b.count == 0) continue;
        if (a.count == 0) {
            a = b;
            continue;
        }
        a.min = std::min(a.min, b.min);
        a.max = std::max(a.max, b.max);
        a.count += b.count;
    }
    sample_count += other.sample_count;
}

bool CalibrationStats::complete() const {
    return std::all_of(sites.begin(), sites.end(), [](const SiteStats& s) { return s.count > 0; });
}

CalibrationStats calibrate(const GRUWeights& w, const SequenceDataset& data, double fraction,
                           std::uint64_t seed, std::size_t batch_size) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("calibration fraction must lie in (0,1]");
    if (data.size() == 0) throw ConfigError("calibration data is empty");
    const auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(data.size())));
    auto order = seeded_permutation(data.size(), seed);
    order.resize(std::min(take, data.size()));

    CalibrationStats stats;
    const std::size_t H = static_cast<std::size_t>(w.dims.hidden_size);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
        const std::size_t end = std::min(order.size(), begin + batch_size);
        std::span<const std::size_t> idx(order.data() + begin, end - begin);
        ForwardTrace trace = forward(w, make_batch(data, idx));

        CalibrationStats part;
        const std::uint64_t batch = idx.size();
        const std::uint64_t steps = static_cast<std::uint64_t>(data.steps);
        for (std::size_t s = 0; s < kNumSites; ++s) {
            std::uint64_t width = s == kInputSite ? static_cast<std::uint64_t>(data.features) : H;
            std::uint64_t count = width * batch * steps;
            if (s == index_of(BlockId::add_h)) count += H * batch;  // h0
            part.sites[s] = {trace.extrema.min[s], trace.extrema.max[s], count};
        }
        part.sample_count = batch;
        stats.merge(part);
    }
    return stats;
}

std::array<QuantParams, kNumSites> stats_to_qparams(const CalibrationStats& stats,
                                                    const BitWidths& bits) {
    std::array<QuantParams, kNumSites> out;
    for (std::size_t s = 0; s < kNumSites; ++s) {
        const SiteStats& st = stats.sites[s];
        if (st.count == 0 && !analytic_output_range(s))
            throw ConfigError("calibration stats are missing site '" + std::string(site_name(s)) + "'");
        const int b = s == kInputSite ? kInputBits : bits[s];
        out[s] = activation_qparams(s, st.min, st.max, b);
    }
    return out;
}

QuantParams weight_qparams(const Matrix& w, int bits) {
    if (w.size() == 0) return compute_qparams(0.0, 0.0, bits, QuantMode::symmetric);
    return compute_qparams(w.minCoeff(), w.maxCoeff(), bits, QuantMode::symmetric);
}

void save_stats(const CalibrationStats& stats, const std::filesystem::path& path,
                const std::string& config_echo) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    if (!config_echo.empty()) j["config"] = config_echo;
    j["sample_count"] = stats.sample_count;
    for (std::size_t s = 0; s < kNumSites; ++s) {
        const SiteStats& st = stats.sites[s];
        j[std::string(site_name(s))] = {{"min", st.min}, {"max", st.max}, {"count", st.count}};
    }
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write stats file " + path.string());
    out << j.dump(2) << '\n';
}

CalibrationStats load_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open stats file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (j.value("version", 0) != 1) throw ParseError(path.string() + ": unsupported stats version");
    CalibrationStats stats;
    stats.sample_count = j.value("sample_count", std::uint64_t{0});
    for (std::size_t s = 0; s < kNumSites; ++s) {
        const std::string name(site_name(s));
        if (!j.contains(name)) throw ParseError(path.string() + ": missing site '" + name + "'");
        const auto& e = j.at(name);
        stats.sites[s] = {e.at("min").get<double>(), e.at("max").get<double>(),
                          e.at("count").get<std::uint64_t>()};
    }
    return stats;
}

}  // namespace mpgru
