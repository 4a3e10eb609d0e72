#include "alen/checkpoint.hpp"

#include <fstream>

#include "alen/errors.hpp"

namespace alen {

using nlohmann::json;

json layer_to_json(const LayerSpec& spec) {
    json j{{"kind", to_string(spec.kind)}, {"in_dim", spec.in_dim}, {"out_dim", spec.out_dim}};
    if (spec.kind == LayerKind::GradReverse) j["lambda"] = spec.lambda;
    return j;
}

LayerSpec layer_from_json(const json& j) {
    LayerSpec s;
    s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    s.in_dim = j.at("in_dim").get<std::size_t>();
    s.out_dim = j.at("out_dim").get<std::size_t>();
    s.lambda = j.value("lambda", 1.0);
    return s;
}

json network_to_json(const Network& net, const AdamState* optimizer) {
    json layers = json::array();
    for (const auto& l : net.layers()) layers.push_back(layer_to_json(l));
    json params = json::object();
    for (const auto& p : net.params()) params[p.name] = p.values;
    json doc{{"format_version", kCheckpointFormatVersion}, {"layers", layers}, {"params", params}};
    if (optimizer) {
        json m = json::object(), v = json::object();
        for (std::size_t i = 0; i < net.params().size(); ++i) {
            m[net.params()[i].name] = optimizer->first_moment()[i];
            v[net.params()[i].name] = optimizer->second_moment()[i];
        }
        const auto& c = optimizer->config();
        doc["optimizer"] = {{"step", optimizer->step()}, {"lr", c.lr},     {"beta1", c.beta1},
                            {"beta2", c.beta2},          {"eps", c.eps},   {"first_moment", m},
                            {"second_moment", v}};
    }
    return doc;
}

NetworkCheckpoint network_from_json(const json& doc) {
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion)
            throw InputError("unsupported checkpoint format_version " + std::to_string(version));
        std::vector<LayerSpec> layers;
        for (const auto& l : doc.at("layers")) layers.push_back(layer_from_json(l));
        NetworkCheckpoint out{Network(std::move(layers)), std::nullopt};
        const auto& params = doc.at("params");
        for (auto& p : out.network.params()) {
            auto values = params.at(p.name).get<std::vector<double>>();
            if (values.size() != p.values.size())
                throw ShapeError("checkpoint parameter '" + p.name + "' has " + std::to_string(values.size()) +
                                 " values, expected " + std::to_string(p.values.size()));
            p.values = std::move(values);
        }
        if (doc.contains("optimizer")) {
            const auto& o = doc.at("optimizer");
            AdamConfig c{o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                         o.at("eps").get<double>()};
            AdamState state(out.network, c);
            std::vector<std::vector<double>> m, v;
            for (const auto& p : out.network.params()) {
                m.push_back(o.at("first_moment").at(p.name).get<std::vector<double>>());
                v.push_back(o.at("second_moment").at(p.name).get<std::vector<double>>());
            }
            state.restore(o.at("step").get<std::size_t>(), std::move(m), std::move(v));
            out.optimizer = std::move(state);
        }
        return out;
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << doc.dump(2) << '\n';
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace alen
