#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ude/numerics/nn.hpp"

namespace ude {

// One `UDECKPT v1 module=<name>` section: a header line followed by a single
// JSON line with params, hyper, config and deps.
struct CheckpointSection {
    std::string module;
    nlohmann::ordered_json body = nlohmann::ordered_json::object();
};

std::uint64_t fnv1a64(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

nlohmann::ordered_json params_to_json(const nn::ParamSet& ps);
// Shapes and names must match exactly.
void params_from_json(nn::ParamSet& ps, const nlohmann::ordered_json& j);

std::string serialize_checkpoint(const std::vector<CheckpointSection>& sections);
std::vector<CheckpointSection> parse_checkpoint(const std::string& text, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointSection>& sections);
// Missing file -> DependencyError naming the stage.
std::vector<CheckpointSection> load_checkpoint(const std::filesystem::path& path, const std::string& stage);

const CheckpointSection& find_section(const std::vector<CheckpointSection>& sections, const std::string& module);

}  // namespace ude
