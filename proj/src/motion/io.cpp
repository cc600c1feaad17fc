#include "ude/motion/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "ude/errors.hpp"

namespace ude {

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw FormatError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

}  // namespace ude

namespace ude::motion {

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
    while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) lines.pop_back();
    return lines;
}

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

std::vector<double> parse_numbers(const std::string& line, const std::string& source, std::size_t lineno) {
    std::vector<double> out;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
        while (p < end && (*p == ' ' || *p == '\t')) ++p;
        if (p >= end) break;
        double v = 0.0;
        const auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc() || (res.ptr < end && *res.ptr != ' ' && *res.ptr != '\t')) {
            throw FormatError(where(source, lineno) + "invalid number");
        }
        if (!std::isfinite(v)) throw FormatError(where(source, lineno) + "non-finite value");
        out.push_back(v);
        p = res.ptr;
    }
    return out;
}

// Parses "key=value" fields after a fixed magic/version prefix.
std::string header_field(const std::vector<std::string>& tokens, const std::string& key, const std::string& source) {
    const std::string prefix = key + "=";
    for (const auto& t : tokens)
        if (t.rfind(prefix, 0) == 0) return t.substr(prefix.size());
    throw FormatError(where(source, 1) + "header is missing " + key);
}

std::vector<std::string> header_tokens(const std::string& line, const std::string& magic, const std::string& source) {
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string t; ss >> t;) tokens.push_back(t);
    if (tokens.size() < 2 || tokens[0] != magic) throw FormatError(where(source, 1) + "expected " + magic + " header");
    if (tokens[1] != "v1") throw FormatError(where(source, 1) + "unsupported version " + tokens[1]);
    return tokens;
}

double positive_number(const std::string& s, const std::string& what, const std::string& source) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !(v > 0.0) || !std::isfinite(v)) {
        throw FormatError(where(source, 1) + "invalid " + what + " '" + s + "'");
    }
    return v;
}

std::size_t positive_count(const std::string& s, const std::string& what, const std::string& source) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v == 0) {
        throw FormatError(where(source, 1) + "invalid " + what + " '" + s + "'");
    }
    return v;
}

void append_row(std::string& out, std::span<const double> row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out.push_back(' ');
        out += format_double(row[i]);
    }
    out.push_back('\n');
}

}  // namespace

std::string serialize_motion(const MotionSequence& m) {
    std::string out = "UDEMOTION v1 fps=" + format_double(m.fps) + " joints=" + std::to_string(m.joints) + "\n";
    for (std::size_t t = 0; t < m.length(); ++t) append_row(out, m.frame(t));
    return out;
}

MotionSequence parse_motion(const std::string& text, const std::string& source) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw FormatError(where(source, 1) + "empty motion file");
    const auto tokens = header_tokens(lines[0], "UDEMOTION", source);
    MotionSequence m;
    m.fps = positive_number(header_field(tokens, "fps", source), "fps", source);
    m.joints = positive_count(header_field(tokens, "joints", source), "joint count", source);
    if (lines.size() < 2) throw FormatError(where(source, 1) + "motion has no frames");
    const std::size_t width = m.width();
    m.frames.reserve((lines.size() - 1) * width);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto row = parse_numbers(lines[i], source, i + 1);
        if (row.size() != width) {
            throw FormatError(where(source, i + 1) + "row has " + std::to_string(row.size()) + " values, expected " +
                              std::to_string(width));
        }
        m.frames.insert(m.frames.end(), row.begin(), row.end());
    }
    return m;
}

void save_motion(const std::filesystem::path& path, const MotionSequence& m) {
    write_file_atomic(path, serialize_motion(m));
}

MotionSequence load_motion(const std::filesystem::path& path) { return parse_motion(read_file(path), path.string()); }

std::string serialize_features(const AudioFeatureSequence& a) {
    std::string out = "UDEFEAT v1 rate=" + format_double(a.frame_rate) + " dims=" + std::to_string(a.dims) + "\n";
    for (std::size_t t = 0; t < a.length(); ++t) append_row(out, a.row(t));
    if (a.beat_times) {
        out += "beats:";
        for (double b : *a.beat_times) out += " " + format_double(b);
        out.push_back('\n');
    }
    return out;
}

AudioFeatureSequence parse_features(const std::string& text, const std::string& source) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw FormatError(where(source, 1) + "empty feature file");
    const auto tokens = header_tokens(lines[0], "UDEFEAT", source);
    AudioFeatureSequence a;
    a.frame_rate = positive_number(header_field(tokens, "rate", source), "rate", source);
    a.dims = positive_count(header_field(tokens, "dims", source), "dims", source);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].rfind("beats:", 0) == 0) {
            if (i + 1 != lines.size()) throw FormatError(where(source, i + 1) + "beats line must be last");
            a.beat_times = parse_numbers(lines[i].substr(6), source, i + 1);
            break;
        }
        const auto row = parse_numbers(lines[i], source, i + 1);
        if (row.size() != a.dims) {
            throw FormatError(where(source, i + 1) + "row has " + std::to_string(row.size()) + " values, expected " +
                              std::to_string(a.dims));
        }
        a.features.insert(a.features.end(), row.begin(), row.end());
    }
    if (a.features.empty()) throw FormatError(where(source, 1) + "feature file has no frames");
    return a;
}

void save_features(const std::filesystem::path& path, const AudioFeatureSequence& a) {
    write_file_atomic(path, serialize_features(a));
}

AudioFeatureSequence load_features(const std::filesystem::path& path) {
    return parse_features(read_file(path), path.string());
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& v) {
    std::string out;
    for (const auto& w : v.words()) out += w + "\n";
    write_file_atomic(path, out);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
    const auto lines = split_lines(read_file(path));
    if (lines.empty() || lines[0] != Vocabulary::kUnkWord) {
        throw FormatError(path.string() + ":1: vocabulary must start with " + Vocabulary::kUnkWord);
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty() || !seen.insert(lines[i]).second) {
            throw FormatError(path.string() + ":" + std::to_string(i + 1) + ": empty or duplicate word");
        }
    }
    return Vocabulary(lines);
}

std::string serialize_manifest(const std::vector<ManifestEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["modality"] = to_string(e.modality);
        j["motion"] = e.motion;
        j["cond"] = e.cond;
        j["split"] = to_string(e.split);
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& source) {
    std::vector<ManifestEntry> entries;
    std::set<std::string> ids;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        ManifestEntry e;
        try {
            const auto j = nlohmann::json::parse(lines[i]);
            e.id = j.at("id").get<std::string>();
            const auto modality = j.at("modality").get<std::string>();
            if (modality != "text" && modality != "audio") throw FormatError("unknown modality '" + modality + "'");
            e.modality = parse_modality(modality);
            e.motion = j.at("motion").get<std::string>();
            e.cond = j.at("cond").get<std::string>();
            e.split = parse_split(j.at("split").get<std::string>());
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(where(source, i + 1) + ex.what());
        } catch (const FormatError& ex) {
            throw FormatError(where(source, i + 1) + ex.what());
        }
        if (!ids.insert(e.id).second) throw FormatError(where(source, i + 1) + "duplicate id '" + e.id + "'");
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<const Sample*> Dataset::select(Split split) const {
    std::vector<const Sample*> out;
    for (const auto& s : samples)
        if (s.split == split) out.push_back(&s);
    return out;
}

std::vector<const Sample*> Dataset::select(Split split, Modality modality) const {
    std::vector<const Sample*> out;
    for (const auto& s : samples)
        if (s.split == split && s.modality == modality) out.push_back(&s);
    return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / kManifestName;
    if (!std::filesystem::exists(manifest_path)) throw FormatError("missing manifest " + manifest_path.string());
    Dataset ds;
    ds.vocab = load_vocabulary(dir / kVocabularyName);
    const auto entries = parse_manifest(read_file(manifest_path), manifest_path.string());
    for (const auto& e : entries) {
        const auto motion_path = dir / e.motion;
        const auto cond_path = dir / e.cond;
        for (const auto& p : {motion_path, cond_path}) {
            if (!std::filesystem::exists(p)) {
                throw FormatError("sample '" + e.id + "' references missing file " + p.string());
            }
        }
        Sample s;
        s.id = e.id;
        s.modality = e.modality;
        s.split = e.split;
        s.motion = load_motion(motion_path);
        if (e.modality == Modality::text) {
            std::string raw = read_file(cond_path);
            while (!raw.empty() && (raw.back() == '\n' || raw.back() == '\r')) raw.pop_back();
            s.text = tokenize(raw, ds.vocab);
        } else {
            s.audio = load_features(cond_path);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace ude::motion
