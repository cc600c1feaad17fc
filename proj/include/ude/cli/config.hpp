#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ude/dmd/dmd.hpp"
#include "ude/mate/mate.hpp"
#include "ude/metrics/retrieval.hpp"
#include "ude/motion/synth.hpp"
#include "ude/mq/mq.hpp"
#include "ude/utt/train.hpp"

namespace ude::cli {

// Flat `key = value` configuration. Every key has a typed default; unknown
// keys and unparsable values raise ConfigError.
class RunConfig {
public:
    enum class Kind { integer, real, boolean, text };

    RunConfig();

    static RunConfig parse(const std::string& text, const std::string& source = "<config>");
    static RunConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    double real(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool flag(const std::string& key) const;

    // Resolved values in key order.
    const std::map<std::string, std::string>& values() const { return values_; }
    nlohmann::ordered_json echo() const;
    std::string serialize() const;

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, Kind> kinds_;

    void define(const std::string& key, Kind kind, const std::string& value);
};

motion::SynthConfig synth_config(const RunConfig& c);
mq::MQConfig mq_config(const RunConfig& c);
mq::MQTrainConfig mq_train_config(const RunConfig& c);
mate::MATEConfig mate_config(const RunConfig& c, std::size_t vocab_size, std::size_t feature_dims);
utt::UTTConfig utt_config(const RunConfig& c);
utt::DiscConfig disc_config(const RunConfig& c);
utt::UTTTrainConfig utt_train_config(const RunConfig& c);
dmd::DMDConfig dmd_config(const RunConfig& c);
dmd::DMDTrainConfig dmd_train_config(const RunConfig& c);
metrics::RetrievalConfig retrieval_config(const RunConfig& c, std::size_t vocab_size);
metrics::RetrievalTrainConfig retrieval_train_config(const RunConfig& c);
utt::SamplingConfig sampling_config(const RunConfig& c);

}  // namespace ude::cli
