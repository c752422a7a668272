#include <fstream>
#include <json.hpp>

#include "mpgru/errors.hpp"
#include "mpgru/qgru.hpp"

namespace mpgru {

using nlohmann::ordered_json;

namespace {

ordered_json to_json(const QuantParams& qp) {
    return {{"scale", qp.scale},   {"zero_point", qp.zero_point}, {"bits", qp.bits},
            {"signed", qp.is_signed}, {"alpha", qp.alpha},        {"beta", qp.beta},
            {"widened", qp.widened}};
}

QuantParams qparams_from(const nlohmann::json& j) {
    QuantParams qp;
    qp.scale = j.at("scale").get<double>();
    qp.zero_point = j.at("zero_point").get<std::int64_t>();
    qp.bits = j.at("bits").get<int>();
    qp.is_signed = j.at("signed").get<bool>();
    qp.alpha = j.at("alpha").get<double>();
    qp.beta = j.at("beta").get<double>();
    qp.widened = j.value("widened", false);
    if (!(qp.scale > 0.0) || qp.bits < kMinBits || qp.bits > kMaxBits)
        throw ParseError("invalid quantization parameters in model file");
    return qp;
}

ordered_json to_json(const FixedPointScale& m) {
    return {{"mantissa", m.mantissa}, {"shift", m.shift}};
}

FixedPointScale scale_from(const nlohmann::json& j) {
    FixedPointScale m{j.at("mantissa").get<std::int32_t>(), j.at("shift").get<int>()};
    if (m.mantissa < 0 || m.shift < 0 || m.shift > kMaxShift)
        throw ParseError("invalid fixed-point scale in model file");
    return m;
}

ordered_json to_json(const QLinearParams& p) {
    return {{"type", "linear"},
            {"rows", p.rows},
            {"cols", p.cols},
            {"weight_qparams", to_json(p.w_qp)},
            {"input_qparams", to_json(p.in_qp)},
            {"qparams", to_json(p.out_qp)},
            {"fixed_point_scales", {{"m", to_json(p.m)}}},
            {"z_y", p.z_y},
            {"q_w", p.q_w},
            {"q_bias", p.q_bias}};
}

QLinearParams linear_from(const nlohmann::json& j) {
    QLinearParams p;
    p.rows = j.at("rows").get<int>();
    p.cols = j.at("cols").get<int>();
    p.w_qp = qparams_from(j.at("weight_qparams"));
    p.in_qp = qparams_from(j.at("input_qparams"));
    p.out_qp = qparams_from(j.at("qparams"));
    p.m = scale_from(j.at("fixed_point_scales").at("m"));
    p.z_y = j.at("z_y").get<std::int64_t>();
    p.q_w = j.at("q_w").get<std::vector<std::int32_t>>();
    p.q_bias = j.at("q_bias").get<std::vector<std::int64_t>>();
    if (p.rows < 1 || p.cols < 1 || p.q_w.size() != static_cast<std::size_t>(p.rows) * p.cols ||
        p.q_bias.size() != static_cast<std::size_t>(p.rows))
        throw ParseError("linear block payload has the wrong size");
    return p;
}

ordered_json to_json(const QAddParams& p) {
    return {{"type", "add"},
            {"qparams", to_json(p.out_qp)},
            {"fixed_point_scales", {{"m_alpha", to_json(p.m_alpha)}, {"m_beta", to_json(p.m_beta)}}},
            {"z1", p.z1},
            {"z2", p.z2},
            {"z_y", p.z_y}};
}

QAddParams add_from(const nlohmann::json& j) {
    QAddParams p;
    p.out_qp = qparams_from(j.at("qparams"));
    p.m_alpha = scale_from(j.at("fixed_point_scales").at("m_alpha"));
    p.m_beta = scale_from(j.at("fixed_point_scales").at("m_beta"));
    p.z1 = j.at("z1").get<std::int64_t>();
    p.z2 = j.at("z2").get<std::int64_t>();
    p.z_y = j.at("z_y").get<std::int64_t>();
    return p;
}

ordered_json to_json(const QMulParams& p) {
    return {{"type", "mul"},
            {"qparams", to_json(p.out_qp)},
            {"fixed_point_scales", {{"m_gamma", to_json(p.m_gamma)}}},
            {"z1", p.z1},
            {"z2", p.z2},
            {"z_y", p.z_y}};
}

QMulParams mul_from(const nlohmann::json& j) {
    QMulParams p;
    p.out_qp = qparams_from(j.at("qparams"));
    p.m_gamma = scale_from(j.at("fixed_point_scales").at("m_gamma"));
    p.z1 = j.at("z1").get<std::int64_t>();
    p.z2 = j.at("z2").get<std::int64_t>();
    p.z_y = j.at("z_y").get<std::int64_t>();
    return p;
}

ordered_json to_json(const QComplParams& p) {
    return {{"type", "complement"},
            {"qparams", to_json(p.out_qp)},
            {"fixed_point_scales", {{"m", to_json(p.m)}}},
            {"one_code", p.one_code},
            {"z_x", p.z_x},
            {"z_y", p.z_y}};
}

QComplParams compl_from(const nlohmann::json& j) {
    QComplParams p;
    p.out_qp = qparams_from(j.at("qparams"));
    p.m = scale_from(j.at("fixed_point_scales").at("m"));
    p.one_code = j.at("one_code").get<std::int64_t>();
    p.z_x = j.at("z_x").get<std::int64_t>();
    p.z_y = j.at("z_y").get<std::int64_t>();
    return p;
}

ordered_json to_json(const ActivationLUT& lut) {
    return {{"type", lut.kind == ActivationKind::sigmoid ? "lut_sigmoid" : "lut_tanh"},
            {"qparams", to_json(lut.out_qp)},
            {"fixed_point_scales", ordered_json::object()},
            {"in_bits", lut.in_bits},
            {"table", lut.table}};
}

ActivationLUT lut_from(const nlohmann::json& j) {
    ActivationLUT lut;
    const auto type = j.at("type").get<std::string>();
    lut.kind = type == "lut_tanh" ? ActivationKind::tanh : ActivationKind::sigmoid;
    lut.out_qp = qparams_from(j.at("qparams"));
    lut.in_bits = j.at("in_bits").get<int>();
    lut.table = j.at("table").get<std::vector<std::int32_t>>();
    if (lut.in_bits < kMinBits || lut.in_bits > kMaxBits ||
        lut.table.size() != (std::size_t{1} << lut.in_bits))
        throw ParseError("activation table has the wrong size");
    return lut;
}

}  // namespace

void save_model(const QuantizedGRUModel& m, const std::filesystem::path& path,
                const std::string& config_echo) {
    ordered_json j;
    j["version"] = 1;
    if (!config_echo.empty()) j["config"] = config_echo;
    j["dims"] = {{"input_features", m.dims.input_features},
                 {"hidden_size", m.dims.hidden_size},
                 {"num_classes", m.dims.num_classes}};
    j["genome"] = m.bits;
    j["input_qparams"] = to_json(m.input_qp);

    ordered_json blocks = ordered_json::array();
    for (std::size_t k = 0; k < kNumBlocks; ++k) {
        ordered_json b;
        switch (static_cast<BlockId>(k)) {
            case BlockId::Wir:
            case BlockId::Wiz:
            case BlockId::Win:
            case BlockId::Whr:
            case BlockId::Whz:
            case BlockId::Whn: b = to_json(m.linear[k]); break;
            case BlockId::add_r: b = to_json(m.add_r); break;
            case BlockId::add_z: b = to_json(m.add_z); break;
            case BlockId::add_n: b = to_json(m.add_n); break;
            case BlockId::add_h: b = to_json(m.add_h); break;
            case BlockId::sig_r: b = to_json(m.sig_r); break;
            case BlockId::sig_z: b = to_json(m.sig_z); break;
            case BlockId::tanh_n: b = to_json(m.tanh_n); break;
            case BlockId::mul_r: b = to_json(m.mul_r); break;
            case BlockId::mul_new: b = to_json(m.mul_new); break;
            case BlockId::mul_old: b = to_json(m.mul_old); break;
            case BlockId::compl_z: b = to_json(m.compl_z); break;
        }
        ordered_json entry;
        entry["name"] = std::string(site_name(k));
        entry["bits"] = m.bits[k];
        for (auto& [key, value] : b.items()) entry[key] = value;
        blocks.push_back(std::move(entry));
    }
    j["blocks"] = std::move(blocks);
    j["classifier"] = to_json(m.classifier);
    j["warnings"] = m.warnings;

    std::ofstream out(path);
    if (!out) throw ParseError("cannot write model file " + path.string());
    out << j.dump() << '\n';
}

QuantizedGRUModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file " + path.string());
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        if (j.value("version", 0) != 1) throw ParseError("unsupported model file version");
        QuantizedGRUModel m;
        const auto& d = j.at("dims");
        m.dims = {d.at("input_features").get<int>(), d.at("hidden_size").get<int>(),
                  d.at("num_classes").get<int>()};
        validate(m.dims);
        const auto genome = j.at("genome").get<std::vector<int>>();
        if (genome.size() != kNumBlocks) throw ParseError("genome must have 17 entries");
        std::copy(genome.begin(), genome.end(), m.bits.begin());
        m.input_qp = qparams_from(j.at("input_qparams"));

        const auto& blocks = j.at("blocks");
        if (blocks.size() != kNumBlocks) throw ParseError("model must have 17 blocks");
        for (std::size_t k = 0; k < kNumBlocks; ++k) {
            const auto& b = blocks.at(k);
            if (b.at("name").get<std::string>() != site_name(k))
                throw ParseError("block " + std::to_string(k) + " is out of order");
            switch (static_cast<BlockId>(k)) {
                case BlockId::Wir:
                case BlockId::Wiz:
                case BlockId::Win:
                case BlockId::Whr:
                case BlockId::Whz:
                case BlockId::Whn: m.linear[k] = linear_from(b); break;
                case BlockId::add_r: m.add_r = add_from(b); break;
                case BlockId::add_z: m.add_z = add_from(b); break;
                case BlockId::add_n: m.add_n = add_from(b); break;
                case BlockId::add_h: m.add_h = add_from(b); break;
                case BlockId::sig_r: m.sig_r = lut_from(b); break;
                case BlockId::sig_z: m.sig_z = lut_from(b); break;
                case BlockId::tanh_n: m.tanh_n = lut_from(b); break;
                case BlockId::mul_r: m.mul_r = mul_from(b); break;
                case BlockId::mul_new: m.mul_new = mul_from(b); break;
                case BlockId::mul_old: m.mul_old = mul_from(b); break;
                case BlockId::compl_z: m.compl_z = compl_from(b); break;
            }
        }
        m.classifier = linear_from(j.at("classifier"));
        if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace mpgru
