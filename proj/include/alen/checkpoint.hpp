#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "alen/adam.hpp"
#include "alen/nn.hpp"

namespace alen {

inline constexpr int kCheckpointFormatVersion = 1;

/// {"format_version":1, "layers":[...], "params":{name:[...]}, "optimizer":{...}}
nlohmann::json network_to_json(const Network& net, const AdamState* optimizer = nullptr);

struct NetworkCheckpoint {
    Network network;
    std::optional<AdamState> optimizer;
};

NetworkCheckpoint network_from_json(const nlohmann::json& doc);

nlohmann::json layer_to_json(const LayerSpec& spec);
LayerSpec layer_from_json(const nlohmann::json& j);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace alen
