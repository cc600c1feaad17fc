#include "ude/checkpoint.hpp"

#include <cstdio>

#include "ude/errors.hpp"
#include "ude/motion/io.hpp"

namespace ude {

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::ordered_json params_to_json(const nn::ParamSet& ps) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& t : ps.tensors()) {
        out[t.name()] = {{"shape", t.shape()}, {"data", t.to_vector()}};
    }
    return out;
}

void params_from_json(nn::ParamSet& ps, const nlohmann::ordered_json& j) {
    if (!j.is_object() || j.size() != ps.tensors().size()) {
        throw FormatError("checkpoint parameter count does not match the model");
    }
    for (auto t : ps.tensors()) {
        if (!j.contains(t.name())) throw FormatError("checkpoint is missing parameter '" + t.name() + "'");
        const auto& e = j.at(t.name());
        const auto shape = e.at("shape").get<Shape>();
        if (shape != t.shape()) {
            throw FormatError("parameter '" + t.name() + "' has shape " + shape_str(shape) + ", model expects " +
                              shape_str(t.shape()));
        }
        const auto data = e.at("data").get<std::vector<double>>();
        if (data.size() != t.numel()) throw FormatError("parameter '" + t.name() + "' has wrong element count");
        std::copy(data.begin(), data.end(), t.mutable_values().begin());
    }
}

std::string serialize_checkpoint(const std::vector<CheckpointSection>& sections) {
    std::string out;
    for (const auto& s : sections) {
        out += "UDECKPT v1 module=" + s.module + "\n";
        out += s.body.dump() + "\n";
    }
    return out;
}

std::vector<CheckpointSection> parse_checkpoint(const std::string& text, const std::string& source) {
    std::vector<CheckpointSection> out;
    std::size_t pos = 0;
    std::size_t line = 0;
    const auto next_line = [&](std::string& dst) {
        if (pos >= text.size()) return false;
        const auto nl = text.find('\n', pos);
        dst = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        ++line;
        return true;
    };
    std::string header;
    while (next_line(header)) {
        if (header.empty()) continue;
        const std::string prefix = "UDECKPT v1 module=";
        if (header.rfind(prefix, 0) != 0) {
            throw FormatError(source + ":" + std::to_string(line) + ": expected UDECKPT v1 section header");
        }
        CheckpointSection s;
        s.module = header.substr(prefix.size());
        std::string body;
        if (!next_line(body)) throw FormatError(source + ":" + std::to_string(line) + ": section has no body");
        try {
            s.body = nlohmann::ordered_json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(source + ":" + std::to_string(line) + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) throw FormatError(source + ": empty checkpoint");
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointSection>& sections) {
    write_file_atomic(path, serialize_checkpoint(sections));
}

std::vector<CheckpointSection> load_checkpoint(const std::filesystem::path& path, const std::string& stage) {
    if (!std::filesystem::exists(path)) {
        throw DependencyError("requires stage " + stage + " (missing " + path.string() + ")");
    }
    return parse_checkpoint(read_file(path), path.string());
}

const CheckpointSection& find_section(const std::vector<CheckpointSection>& sections, const std::string& module) {
    for (const auto& s : sections)
        if (s.module == module) return s;
    throw FormatError("checkpoint has no section module=" + module);
}

}  // namespace ude
