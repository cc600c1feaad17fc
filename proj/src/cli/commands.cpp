#include "ude/cli/commands.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ude/checkpoint.hpp"
#include "ude/cli/pipeline.hpp"
#include "ude/cli/plot.hpp"
#include "ude/errors.hpp"
#include "ude/motion/synth.hpp"

namespace ude::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    std::vector<std::string> overrides;
    std::optional<std::size_t> epochs;
};

struct Context {
    RunConfig cfg;
    fs::path out;
    std::uint64_t seed = 1;

    fs::path data_dir() const { return out / "data"; }
    fs::path ckpt(const std::string& stage) const { return out / (stage + ".ckpt"); }
};

Context make_context(const Common& c) {
    Context ctx;
    if (!c.config_path.empty()) ctx.cfg = RunConfig::load(c.config_path);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        ctx.cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) ctx.cfg.set("seed", std::to_string(*c.seed));
    if (c.epochs) {
        for (const char* k : {"mq.epochs", "utt.epochs", "dmd.epochs", "retrieval.epochs"})
            ctx.cfg.set(k, std::to_string(*c.epochs));
    }
    ctx.out = c.out;
    ctx.seed = ctx.cfg.u64("seed");
    return ctx;
}

std::string file_hash(const fs::path& p) { return hash_hex(fnv1a64(read_file(p))); }

// Content hash over the manifest, vocabulary and every referenced file.
std::string data_hash(const fs::path& dir) {
    const fs::path manifest = dir / motion::kManifestName;
    if (!fs::exists(manifest)) throw DependencyError("requires stage synth (no dataset at " + dir.string() + ")");
    std::string all = read_file(manifest);
    all += read_file(dir / motion::kVocabularyName);
    for (const auto& e : motion::parse_manifest(read_file(manifest), manifest.string())) {
        all += read_file(dir / e.motion);
        all += read_file(dir / e.cond);
    }
    return hash_hex(fnv1a64(all));
}

motion::Dataset load_data(const Context& ctx) {
    if (!fs::exists(ctx.data_dir() / motion::kManifestName))
        throw DependencyError("requires stage synth (no dataset at " + ctx.data_dir().string() + ")");
    return motion::load_dataset(ctx.data_dir());
}

std::vector<CheckpointSection> require(const Context& ctx, const std::string& stage) {
    const fs::path p = ctx.ckpt(stage);
    if (!fs::exists(p)) throw DependencyError("requires stage " + stage + " (missing " + p.string() + ")");
    return load_checkpoint(p, stage);
}

// Every recorded dependency that the caller can name must still hash the same.
void check_fresh(const CheckpointSection& s, const std::map<std::string, std::string>& current) {
    if (!s.body.contains("deps")) return;
    for (const auto& [name, hash] : s.body["deps"].items()) {
        const auto it = current.find(name);
        if (it == current.end()) continue;
        if (it->second != hash.get<std::string>()) {
            throw DependencyError("stale checkpoint: module " + s.module + " was built against a different " + name +
                                  "; rerun stage " + (name == "data" ? std::string("synth and retrain") : name));
        }
    }
}

void stamp(CheckpointSection& s, const Context& ctx, const std::map<std::string, std::string>& deps) {
    s.body["config"] = ctx.cfg.echo();
    json d = json::object();
    for (const auto& [k, v] : deps) d[k] = v;
    s.body["deps"] = d;
    s.body["seed"] = ctx.seed;
}

std::string config_line(const Context& ctx) { return ctx.cfg.echo().dump(); }

void write_log(const Context& ctx, const std::string& stage, const std::vector<std::string>& columns,
               const std::vector<std::vector<double>>& cols) {
    std::ostringstream o;
    o << "# config: " << config_line(ctx) << "\n";
    o << "epoch";
    for (const auto& c : columns) o << ',' << c;
    o << "\n";
    const std::size_t n = cols.empty() ? 0 : cols.front().size();
    for (std::size_t e = 0; e < n; ++e) {
        o << e + 1;
        for (const auto& c : cols) o << ',' << (e < c.size() ? format_double(c[e]) : std::string());
        o << "\n";
    }
    fs::create_directories(ctx.out / "logs");
    write_file_atomic(ctx.out / "logs" / (stage + ".csv"), o.str());

    std::vector<Series> series;
    for (std::size_t k = 0; k < columns.size(); ++k) series.push_back({columns[k], cols[k]});
    fs::create_directories(ctx.out / "plots");
    write_file_atomic(ctx.out / "plots" / (stage + ".svg"),
                      line_plot_svg(stage + " training", series, "config: " + config_line(ctx)));
}

std::string final_value(const std::vector<double>& v) { return v.empty() ? "n/a" : format_double(v.back()); }

mq::MQModel load_mq(const Context& ctx, const std::map<std::string, std::string>& current) {
    const auto sections = require(ctx, "mq");
    const auto& s = find_section(sections, "mq");
    check_fresh(s, current);
    return mq::MQModel::from_section(s);
}

UnifiedModel load_unified(const Context& ctx, bool check_data) {
    std::map<std::string, std::string> current;
    if (check_data) current["data"] = data_hash(ctx.data_dir());
    auto mqm = load_mq(ctx, current);
    const auto sections = require(ctx, "utt");
    current["mq"] = file_hash(ctx.ckpt("mq"));
    for (const auto& s : sections) check_fresh(s, current);
    const auto& ms = find_section(sections, "mate");
    if (!ms.body.contains("vocab")) throw FormatError("utt checkpoint: mate section has no vocab");
    motion::Vocabulary vocab(ms.body["vocab"].get<std::vector<std::string>>());
    return UnifiedModel{std::move(vocab), std::move(mqm), mate::MATEModel::from_section(ms),
                        utt::UTTModel::from_section(find_section(sections, "utt")),
                        utt::Discriminator::from_section(find_section(sections, "disc"))};
}

std::optional<dmd::DMDModel> load_dmd_if(const Context& ctx, Decoder d, bool check_data) {
    if (d != Decoder::dmd) return std::nullopt;
    std::map<std::string, std::string> current{{"mq", file_hash(ctx.ckpt("mq"))}};
    if (check_data) current["data"] = data_hash(ctx.data_dir());
    const auto sections = require(ctx, "dmd");
    const auto& s = find_section(sections, "dmd");
    check_fresh(s, current);
    return dmd::DMDModel::from_section(s);
}

// ---- commands -------------------------------------------------------------

void cmd_synth(const Context& ctx, std::ostream& out) {
    const auto cfg = synth_config(ctx.cfg);
    const auto res = motion::synth_samples(cfg, ctx.seed);
    motion::write_dataset(ctx.data_dir(), res);
    write_file_atomic(ctx.data_dir() / "config.json", ctx.cfg.echo().dump(2) + "\n");

    std::map<std::string, std::size_t> families;
    std::size_t split[2] = {0, 0}, modality[2] = {0, 0};
    for (const auto& s : res.samples) {
        ++families[s.family];
        ++split[s.entry.split == motion::Split::train ? 0 : 1];
        ++modality[s.entry.modality == motion::Modality::text ? 0 : 1];
    }
    out << "dataset: " << ctx.data_dir().string() << "\n";
    out << "samples: " << res.samples.size() << " (train " << split[0] << ", test " << split[1] << "; text "
        << modality[0] << ", audio " << modality[1] << ")\n";
    for (const auto& [f, n] : families) out << "  " << f << ": " << n << "\n";
    out << "vocabulary: " << res.vocab.size() << " words\n";
    out << "manifest hash: " << file_hash(ctx.data_dir() / motion::kManifestName) << "\n";
}

void train_mq_cmd(const Context& ctx, std::ostream& out) {
    const auto data = load_data(ctx);
    const std::string dh = data_hash(ctx.data_dir());
    mq::MQTrainResult hist;
    const auto model = train_mq_stage(data, ctx.cfg, ctx.seed, &hist);
    auto s = model.to_section();
    stamp(s, ctx, {{"data", dh}});
    save_checkpoint(ctx.ckpt("mq"), {s});
    write_log(ctx, "mq", {"loss", "recon"}, {hist.loss_history, hist.recon_history});
    out << "mq: " << hist.loss_history.size() << " epochs, final loss " << final_value(hist.loss_history)
        << ", recon " << final_value(hist.recon_history) << " -> " << ctx.ckpt("mq").string() << "\n";
}

void train_utt_cmd(const Context& ctx, std::ostream& out) {
    const auto data = load_data(ctx);
    const std::string dh = data_hash(ctx.data_dir());
    const auto mqm = load_mq(ctx, {{"data", dh}});
    const std::map<std::string, std::string> deps{{"data", dh}, {"mq", file_hash(ctx.ckpt("mq"))}};
    auto model = make_unified(data, mqm, ctx.cfg, ctx.seed);
    const auto hist = train_unified(model, data, ctx.cfg, ctx.seed);
    auto ms = model.mate.to_section();
    ms.body["vocab"] = model.vocab.words();
    auto us = model.utt.to_section();
    auto ds = model.disc.to_section();
    for (auto* s : {&ms, &us, &ds}) stamp(*s, ctx, deps);
    save_checkpoint(ctx.ckpt("utt"), {ms, us, ds});
    write_log(ctx, "utt", {"ce", "adv", "disc"}, {hist.ce_history, hist.adv_history, hist.disc_history});
    out << "utt: " << hist.ce_history.size() << " epochs, final ce " << final_value(hist.ce_history) << " -> "
        << ctx.ckpt("utt").string() << "\n";
}

void train_dmd_cmd(const Context& ctx, std::ostream& out) {
    const auto data = load_data(ctx);
    const std::string dh = data_hash(ctx.data_dir());
    const auto mqm = load_mq(ctx, {{"data", dh}});
    std::vector<double> hist;
    const auto model = train_dmd_stage(data, mqm, ctx.cfg, ctx.seed, &hist);
    auto s = model.to_section();
    stamp(s, ctx, {{"data", dh}, {"mq", file_hash(ctx.ckpt("mq"))}});
    save_checkpoint(ctx.ckpt("dmd"), {s});
    write_log(ctx, "dmd", {"loss"}, {hist});
    out << "dmd: " << hist.size() << " epochs, final loss " << final_value(hist) << " -> " << ctx.ckpt("dmd").string()
        << "\n";
}

void train_retrieval_cmd(const Context& ctx, std::ostream& out) {
    const auto data = load_data(ctx);
    const std::string dh = data_hash(ctx.data_dir());
    std::vector<double> hist;
    const auto enc = train_retrieval_stage(data, ctx.cfg, ctx.seed, &hist);
    auto s = enc.to_section();
    stamp(s, ctx, {{"data", dh}});
    save_checkpoint(ctx.ckpt("retrieval"), {s});
    write_log(ctx, "retrieval", {"loss"}, {hist});
    out << "retrieval: " << hist.size() << " epochs, final loss " << final_value(hist) << " -> "
        << ctx.ckpt("retrieval").string() << "\n";
}

void cmd_train(const Context& ctx, const std::string& stage, std::ostream& out) {
    if (stage == "mq" || stage == "all") train_mq_cmd(ctx, out);
    if (stage == "utt" || stage == "all") train_utt_cmd(ctx, out);
    if (stage == "dmd" || stage == "all") train_dmd_cmd(ctx, out);
    if (stage == "retrieval" || stage == "all") train_retrieval_cmd(ctx, out);
}

struct GenerateArgs {
    std::string text;
    std::string audio;
    std::optional<std::size_t> frames;
    bool z = false;
    std::string decoder;
    std::string output;
    std::string plot;
    std::optional<std::size_t> primitive_len;
};

Decoder decoder_of(const Context& ctx, const std::string& flag, const std::string& key) {
    return parse_decoder(flag.empty() ? ctx.cfg.get(key) : flag);
}

void write_motion_outputs(const Context& ctx, const fs::path& path, const motion::MotionSequence& m, json sidecar,
                          const std::string& plot) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    motion::save_motion(path, m);
    sidecar["config"] = ctx.cfg.echo();
    write_file_atomic(path.string() + ".json", sidecar.dump(2) + "\n");
    if (!plot.empty()) {
        const fs::path pp(plot);
        if (pp.has_parent_path()) fs::create_directories(pp.parent_path());
        write_file_atomic(pp, motion_plot_svg(m, "config: " + config_line(ctx)));
    }
}

motion::TextPrompt prompt_of(const UnifiedModel& model, const std::string& text, std::ostream& err) {
    auto p = motion::tokenize(text, model.vocab);
    if (p.unknown_count > 0) {
        err << "warning: " << p.unknown_count << " of " << p.ids.size()
            << " prompt words are not in the vocabulary; using <unk>\n";
    }
    return p;
}

void cmd_generate(const Context& ctx, const GenerateArgs& a, std::ostream& out, std::ostream& err) {
    if (a.text.empty() == a.audio.empty()) throw ConfigError("generate needs exactly one of --text or --audio");
    const Decoder decoder = decoder_of(ctx, a.decoder, "generate.decoder");
    if (decoder == Decoder::gt) throw ConfigError("generate needs the vq or dmd decoder");
    const auto model = load_unified(ctx, false);
    const auto dmd = load_dmd_if(ctx, decoder, false);

    json side;
    GenerationRequest req;
    req.use_z = a.z;
    req.seed = ctx.seed;
    req.sampling = sampling_config(ctx.cfg);
    std::optional<mate::ModalityInput> input;
    if (!a.text.empty()) {
        const auto p = prompt_of(model, a.text, err);
        input = mate::ModalityInput::text(p.ids);
        req.frames = a.frames.value_or(ctx.cfg.count("generate.frames"));
        side["modality"] = "text";
        side["prompt"] = a.text;
        side["unknown_words"] = p.unknown_count;
    } else {
        const auto feats = motion::load_features(a.audio);
        input = mate::ModalityInput::from_audio(feats);
        req.frames = a.frames.value_or(feats.length() / mq::kDownsample * mq::kDownsample);
        side["modality"] = "audio";
        side["audio"] = a.audio;
    }
    if (req.frames == 0 || req.frames % mq::kDownsample != 0)
        throw ConfigError("--frames must be a positive multiple of 4, got " + std::to_string(req.frames));
    const double fps = ctx.cfg.real("data.fps");
    const auto tokens = generate_tokens(model, *input, req);
    const auto m = decode_tokens(model, dmd ? &*dmd : nullptr, tokens, decoder, ctx.seed, fps);

    const fs::path path = a.output.empty() ? ctx.out / "generated.motion" : fs::path(a.output);
    side["frames"] = req.frames;
    side["z"] = a.z;
    side["seed"] = ctx.seed;
    side["decoder"] = to_string(decoder);
    side["tokens"] = tokens;
    write_motion_outputs(ctx, path, m, side, a.plot);
    out << "wrote " << path.string() << " (" << m.length() << " frames, " << tokens.size() << " tokens, decoder "
        << to_string(decoder) << ")\n";
}

void cmd_transition(const Context& ctx, const GenerateArgs& a, std::ostream& out, std::ostream& err) {
    if (a.text.empty() || a.audio.empty()) throw ConfigError("transition needs both --text and --audio");
    const Decoder decoder = decoder_of(ctx, a.decoder, "generate.decoder");
    const auto model = load_unified(ctx, false);
    const auto dmd = load_dmd_if(ctx, decoder, false);
    const auto p = prompt_of(model, a.text, err);
    const auto feats = motion::load_features(a.audio);
    const std::size_t plen = a.primitive_len.value_or(ctx.cfg.count("transition.primitive_len"));
    const std::size_t text_frames = a.frames.value_or(ctx.cfg.count("transition.text_frames"));
    if (text_frames == 0 || text_frames % mq::kDownsample != 0)
        throw ConfigError("text segment frames must be a positive multiple of 4");
    const auto r = run_transition(model, dmd ? &*dmd : nullptr, p.ids, feats, plen, text_frames, decoder, ctx.seed,
                                  sampling_config(ctx.cfg), ctx.cfg.real("data.fps"));

    json side;
    side["prompt"] = a.text;
    side["audio"] = a.audio;
    side["primitive_len"] = plen;
    side["seed"] = ctx.seed;
    side["decoder"] = to_string(decoder);
    side["text_tokens"] = r.text_tokens;
    side["continuation"] = r.continuation;
    side["combined"] = r.combined;
    side["primitive_matches"] = r.primitive_matches;
    side["boundary_frame"] = r.boundary_frame;
    side["boundary_jump"] = r.boundary_jump;
    side["median_jump"] = r.median_jump;
    side["jump_ratio"] = r.median_jump > 0 ? json(r.boundary_jump / r.median_jump) : json(nullptr);
    const fs::path path = a.output.empty() ? ctx.out / "transition.motion" : fs::path(a.output);
    write_motion_outputs(ctx, path, r.motion, side, a.plot);
    out << "wrote " << path.string() << " (" << r.motion.length() << " frames); boundary jump "
        << format_double(r.boundary_jump) << ", median jump " << format_double(r.median_jump) << "\n";
}

struct EvalArgs {
    std::string decoder;
    std::optional<std::size_t> samples;
    bool z = false;
};

void cmd_eval(const Context& ctx, const EvalArgs& a, std::ostream& out) {
    const auto data = load_data(ctx);
    if (data.select(motion::Split::test).empty()) throw MetricError("test split is empty");
    const std::string dh = data_hash(ctx.data_dir());
    EvalOptions opt;
    opt.decoder = decoder_of(ctx, a.decoder, "eval.decoder");
    opt.samples_per_input = a.samples.value_or(ctx.cfg.count("eval.samples_per_input"));
    opt.use_z = a.z;
    opt.seed = ctx.seed;
    opt.sampling = sampling_config(ctx.cfg);
    opt.sigma_frames = ctx.cfg.real("eval.sigma_frames");
    opt.distractors = ctx.cfg.count("eval.distractors");
    opt.trials = ctx.cfg.count("eval.trials");
    opt.threads = thread_count_from_env();

    const auto rs = require(ctx, "retrieval");
    const auto& rsec = find_section(rs, "retrieval");
    check_fresh(rsec, {{"data", dh}});
    const auto enc = metrics::RetrievalEncoder::from_section(rsec);
    std::optional<UnifiedModel> model;
    if (opt.decoder != Decoder::gt) model.emplace(load_unified(ctx, true));
    const auto dmd = load_dmd_if(ctx, opt.decoder, true);

    const auto res = evaluate(model ? &*model : nullptr, dmd ? &*dmd : nullptr, enc, data, opt);
    json doc = res.metrics;
    doc["config"] = ctx.cfg.echo();
    fs::create_directories(ctx.out);
    write_file_atomic(ctx.out / "eval.json", doc.dump(2) + "\n");

    std::ostringstream csv;
    csv << "# config: " << config_line(ctx) << "\n";
    csv << "id,sample,modality";
    if (!res.features.empty()) {
        for (std::size_t i = 0; i < res.features.front().kinetic.size(); ++i) csv << ",k" << i;
        for (std::size_t i = 0; i < res.features.front().geometric.size(); ++i) csv << ",g" << i;
    }
    csv << "\n";
    for (const auto& r : res.features) {
        csv << r.id << ',' << r.sample << ',' << motion::to_string(r.modality);
        for (double v : r.kinetic) csv << ',' << format_double(v);
        for (double v : r.geometric) csv << ',' << format_double(v);
        csv << "\n";
    }
    write_file_atomic(ctx.out / "eval_features.csv", csv.str());
    out << res.metrics.dump(2) << "\n";
}

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "config file (key = value lines)");
    sub->add_option("--seed", c.seed, "random seed (overrides the config)");
    sub->add_option("--out", c.out, "run directory")->capture_default_str();
    sub->add_option("--set", c.overrides, "override one config key: key=value");
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DependencyError*>(&e)) return 3;
    if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const NumericError*>(&e)) return 5;
    return 4;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Unified text/audio to motion pipeline (desk scale)", "ude"};
    app.require_subcommand(1);
    Common common;
    std::string stage;
    GenerateArgs gen;
    EvalArgs ev;

    auto* synth = app.add_subcommand("synth", "write the synthetic dataset to <out>/data");
    add_common(synth, common);

    auto* train = app.add_subcommand("train", "train one stage (mq, utt, dmd, retrieval) or all");
    add_common(train, common);
    train->add_option("stage", stage, "mq | utt | dmd | retrieval | all")
        ->required()
        ->check(CLI::IsMember({"mq", "utt", "dmd", "retrieval", "all"}));
    train->add_option("--epochs", common.epochs, "epochs for every trained stage");

    auto* generate = app.add_subcommand("generate", "generate motion from a text prompt or audio features");
    add_common(generate, common);
    generate->add_option("--text", gen.text, "text prompt");
    generate->add_option("--audio", gen.audio, "audio feature file (UDEFEAT)");
    generate->add_option("--frames", gen.frames, "frames to generate (multiple of 4)");
    generate->add_flag("--z", gen.z, "inject a random z vector");
    generate->add_option("--decoder", gen.decoder, "vq | dmd");
    generate->add_option("--output", gen.output, "motion file to write");
    generate->add_option("--plot", gen.plot, "optional SVG plot path");

    auto* transition = app.add_subcommand("transition", "text segment followed by an audio-driven continuation");
    add_common(transition, common);
    transition->add_option("--text", gen.text, "text prompt")->required();
    transition->add_option("--audio", gen.audio, "audio feature file (UDEFEAT)")->required();
    transition->add_option("--primitive-len", gen.primitive_len, "tokens carried over from the text segment");
    transition->add_option("--frames", gen.frames, "frames in the text segment (multiple of 4)");
    transition->add_option("--decoder", gen.decoder, "vq | dmd");
    transition->add_option("--output", gen.output, "motion file to write");
    transition->add_option("--plot", gen.plot, "optional SVG plot path");

    auto* eval = app.add_subcommand("eval", "score generations on the test split");
    add_common(eval, common);
    eval->add_option("--decoder", ev.decoder, "vq | dmd | gt");
    eval->add_option("--samples-per-input", ev.samples, "generations per test input");
    eval->add_flag("--z", ev.z, "inject a random z vector per generation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        const Context ctx = make_context(common);
        if (synth->parsed()) cmd_synth(ctx, out);
        if (train->parsed()) cmd_train(ctx, stage, out);
        if (generate->parsed()) cmd_generate(ctx, gen, out, err);
        if (transition->parsed()) cmd_transition(ctx, gen, out, err);
        if (eval->parsed()) cmd_eval(ctx, ev, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}

}  // namespace ude::cli
