#include <fstream>
#include <json.hpp>

#include "mpgru/errors.hpp"
#include "mpgru/refnet_io.hpp"

namespace mpgru {

namespace {

std::vector<double> row_major(const Matrix& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

void fill(Matrix& m, const nlohmann::json& values, const std::string& name) {
    const auto v = values.get<std::vector<double>>();
    if (v.size() != static_cast<std::size_t>(m.size()))
        throw ParseError("array '" + name + "' has " + std::to_string(v.size()) + " entries, expected " +
                         std::to_string(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = v[static_cast<std::size_t>(i * m.cols() + j)];
}

void fill(Vector& b, const nlohmann::json& values, const std::string& name) {
    const auto v = values.get<std::vector<double>>();
    if (v.size() != static_cast<std::size_t>(b.size()))
        throw ParseError("array '" + name + "' has the wrong length");
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = v[static_cast<std::size_t>(i)];
}

}  // namespace

void save_weights(const GRUWeights& w, const std::filesystem::path& path,
                  const std::string& config_echo) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    if (!config_echo.empty()) j["config"] = config_echo;
    j["dims"] = {{"input_features", w.dims.input_features},
                 {"hidden_size", w.dims.hidden_size},
                 {"num_classes", w.dims.num_classes}};
    nlohmann::ordered_json arrays;
    for (std::size_t k = 0; k < kNumLinearBlocks; ++k) {
        const std::string name(site_name(k));
        arrays["W_" + name.substr(1)] = row_major(w.W[k]);
        arrays["b_" + name.substr(1)] = std::vector<double>(w.b[k].data(), w.b[k].data() + w.b[k].size());
    }
    arrays["W_c"] = row_major(w.Wc);
    arrays["b_c"] = std::vector<double>(w.bc.data(), w.bc.data() + w.bc.size());
    j["arrays"] = std::move(arrays);

    std::ofstream out(path);
    if (!out) throw ParseError("cannot write weights file " + path.string());
    out << j.dump() << '\n';
}

GRUWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open weights file " + path.string());
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        if (j.value("version", 0) != 1) throw ParseError(path.string() + ": unsupported weights version");
        const auto& d = j.at("dims");
        ModelDims dims{d.at("input_features").get<int>(), d.at("hidden_size").get<int>(),
                       d.at("num_classes").get<int>()};
        GRUWeights w = GRUWeights::zeros(dims);
        const auto& a = j.at("arrays");
        for (std::size_t k = 0; k < kNumLinearBlocks; ++k) {
            const std::string suffix = std::string(site_name(k)).substr(1);
            fill(w.W[k], a.at("W_" + suffix), "W_" + suffix);
            fill(w.b[k], a.at("b_" + suffix), "b_" + suffix);
        }
        fill(w.Wc, a.at("W_c"), "W_c");
        fill(w.bc, a.at("b_c"), "b_c");
        if (!w.all_finite()) throw ParseError(path.string() + ": non-finite weights");
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace mpgru
