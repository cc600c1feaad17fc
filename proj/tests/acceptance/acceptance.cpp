// Acceptance gates. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. The pipeline criteria drive the `ude` command layer
// in-process against a scratch run directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "op_catalog.hpp"
#include "ude/checkpoint.hpp"
#include "ude/cli/commands.hpp"
#include "ude/cli/pipeline.hpp"
#include "ude/dmd/dmd.hpp"
#include "ude/metrics/retrieval.hpp"

using namespace ude;
using namespace ude::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

class Clock {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void copy_into(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

// Runs one `ude` command line in-process; throws with the captured stderr on failure.
std::string ude_cmd(std::vector<std::string> args) {
    args.insert(args.begin(), "ude");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) {
        std::string line;
        for (const auto& a : args) line += a + " ";
        throw std::runtime_error("`" + line + "` exited " + std::to_string(code) + ": " + err.str());
    }
    return out.str();
}

// ---- 1: gradients -----------------------------------------------------------

Outcome gradients() {
    Outcome o{1, "finite-difference gradients"};
    Clock clk;
    Rng rng(101);
    double worst = 0.0;
    std::string worst_op;
    std::size_t ops = 0, failed = 0;
    for (const auto& op : testing::differentiable_ops()) {
        ++ops;
        for (int i = 0; i < 20; ++i) {
            const auto r = testing::check_gradients(op.fn, testing::random_inputs(op.shapes, rng), rng, 1e-5);
            if (r.rel_error >= 1e-4) ++failed;
            if (r.rel_error > worst) {
                worst = r.rel_error;
                worst_op = op.name;
            }
        }
    }
    o.seconds = clk.seconds();
    o.pass = failed == 0 && o.seconds < 60.0;
    o.detail = std::to_string(ops) + " ops x 20 instances, " + std::to_string(failed) + " over 1e-4, worst " +
               fmt("%.2e", worst) + " (" + worst_op + "), " + fmt("%.1f", o.seconds) + " s (limit 60 s)";
    return o;
}

// ---- 3: quantization and VQ loss --------------------------------------------

int nearest_oracle(const std::vector<double>& cb, std::size_t k, std::size_t d, const double* e) {
    std::vector<double> dist(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < d; ++j) dist[i] += (e[j] - cb[i * d + j]) * (e[j] - cb[i * d + j]);
    int best = 0;
    for (std::size_t i = 1; i < k; ++i)
        if (dist[i] < dist[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

Outcome quantization() {
    Outcome o{3, "quantize and vq_loss oracles"};
    Clock clk;
    Rng rng(303);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng.index(63), d = 1 + rng.index(16), rows = 1 + rng.index(16);
        std::vector<double> cb(k * d), e(rows * d);
        // Every other instance on a coarse grid, where exact ties are common.
        const bool grid = trial % 2 == 1;
        for (double& x : cb) x = grid ? static_cast<double>(rng.index(3)) : rng.normal();
        for (double& x : e) x = grid ? 0.5 * static_cast<double>(rng.index(5)) : rng.normal();
        const auto z = mq::quantize(cb, k, d, e, rows);
        for (std::size_t r = 0; r < rows; ++r) mismatches += z[r] != nearest_oracle(cb, k, d, e.data() + r * d);
    }

    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        mq::MQConfig c;
        c.hidden = 16;
        c.code_dim = 8;
        c.codebook_size = 16;
        c.beta1 = 0.25 + rng.uniform(0.0, 2.0);
        c.beta2 = 0.25 + rng.uniform(0.0, 2.0);
        mq::MQModel m(c, 400 + trial);
        const std::size_t t = 4 * (2 + rng.index(6));
        const Tensor x = Tensor::matrix(t, c.channels, rng.normal_vector(t * c.channels));
        Tape tape;
        const auto p = m.vq_loss(tape, x);
        double cbt = 0.0;
        for (std::size_t r = 0; r < p.tokens.size(); ++r)
            for (std::size_t j = 0; j < c.code_dim; ++j) {
                const double diff =
                    p.embedding[r * c.code_dim + j] - m.codebook()[static_cast<std::size_t>(p.tokens[r]) * c.code_dim + j];
                cbt += diff * diff;
            }
        cbt /= static_cast<double>(p.tokens.size() * c.code_dim);
        double rec = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) rec += (p.recon[i] - x[i]) * (p.recon[i] - x[i]);
        rec /= static_cast<double>(x.numel());
        worst = std::max({worst, std::abs(p.reconstruction.item() - rec), std::abs(p.codebook.item() - cbt),
                          std::abs(p.commitment.item() - cbt),
                          std::abs(p.total.item() - (rec + c.beta1 * cbt + c.beta2 * cbt))});
    }
    o.seconds = clk.seconds();
    o.pass = mismatches == 0 && worst <= 1e-12;
    o.detail = "1000 instances, " + std::to_string(mismatches) + " token mismatches; vq_loss worst term error " +
               fmt("%.1e", worst) + " over 20 models (limit 1e-12)";
    return o;
}

// ---- 4: causality -------------------------------------------------------------

// Perturbs one motion token and compares every earlier logit row bitwise.
std::size_t causality_violations(const utt::UTTModel& m, const std::function<mate::CondEmbedding(Rng&)>& cond_of,
                                 Rng& rng, int trials) {
    const std::size_t k = m.config().codebook_size;
    std::size_t bad = 0;
    for (int trial = 0; trial < trials; ++trial) {
        const auto cond = cond_of(rng);
        std::vector<int> pre{m.bos()};
        const std::size_t len = 2 + rng.index(std::min<std::size_t>(m.config().max_tokens - 2, 30));
        for (std::size_t i = 0; i < len; ++i) pre.push_back(static_cast<int>(rng.index(k)));
        const std::size_t j = 1 + rng.index(len);
        auto alt = pre;
        alt[j] = static_cast<int>((static_cast<std::size_t>(alt[j]) + 1 + rng.index(k - 1)) % k);
        std::optional<std::vector<double>> z;
        if (trial % 2) z = rng.normal_vector(m.config().z_dim);
        Tape tape(false);
        const Tensor a = m.forward_logits(tape, cond, pre, z);
        const Tensor b = m.forward_logits(tape, cond, alt, z);
        for (std::size_t i = 0; i < j * a.cols(); ++i) {
            if (a[i] != b[i]) {
                ++bad;
                break;
            }
        }
    }
    return bad;
}

Outcome causality(const UnifiedModel& trained, const motion::Dataset& data) {
    Outcome o{4, "causal masking"};
    Clock clk;
    Rng rng(404);
    std::size_t bad_random = 0;
    for (int i = 0; i < 10; ++i) {
        utt::UTTConfig c = trained.utt.config();
        const utt::UTTModel m(c, 4000 + i);
        bad_random += causality_violations(
            m,
            [&](Rng& r) {
                mate::CondEmbedding e;
                const std::size_t len = 1 + r.index(6);
                e.glob = Tensor::matrix(1, c.dim, r.normal_vector(c.dim));
                e.seq = Tensor::matrix(len, c.dim, r.normal_vector(len * c.dim));
                return e;
            },
            rng, 10);
    }
    const auto test = data.select(motion::Split::test);
    const std::size_t bad_trained = causality_violations(
        trained.utt,
        [&](Rng& r) {
            Tape tape(false);
            return trained.mate.encode(tape, input_of(*test[r.index(test.size())]));
        },
        rng, 100);
    o.seconds = clk.seconds();
    o.pass = bad_random == 0 && bad_trained == 0;
    o.detail = "violations: " + std::to_string(bad_random) + "/100 random-weight trials, " +
               std::to_string(bad_trained) + "/100 trained-checkpoint trials";
    return o;
}

// ---- 5: diffusion ---------------------------------------------------------------

Outcome diffusion() {
    Outcome o{5, "diffusion schedule, q_sample, toy conditional DMD"};
    Clock clk;
    double table_err = 0.0;
    for (const auto& s : {dmd::make_schedule(1000, 1e-4, 0.02), dmd::default_schedule(50)}) {
        double prod = 1.0;
        for (std::size_t t = 1; t <= s.steps; ++t) {
            prod *= 1.0 - s.beta_at(t);
            table_err = std::max(table_err, std::abs(s.alpha_bar_at(t) - prod));
        }
    }
    Rng rng(505);
    const auto s = dmd::default_schedule(50);
    double q_err = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t t = 1 + rng.index(s.steps), n = 1 + rng.index(32);
        const auto x0 = rng.normal_vector(n), eps = rng.normal_vector(n);
        const auto xt = dmd::q_sample(s, x0, t, eps);
        double ab = 1.0;
        for (std::size_t i = 1; i <= t; ++i) ab *= 1.0 - s.beta_at(i);
        for (std::size_t i = 0; i < n; ++i)
            q_err = std::max(q_err, std::abs(xt[i] - (std::sqrt(ab) * x0[i] + std::sqrt(1.0 - ab) * eps[i])));
    }

    // Token 0 -> -1, token 1 -> +1, one channel, four frames per token.
    dmd::DMDConfig c;
    c.channels = 1;
    c.codebook_size = 2;
    c.dim = 16;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.heads = 2;
    c.hidden = 32;
    c.steps = 50;
    c.max_frames = 16;
    std::vector<dmd::DMDSample> toy;
    for (int i = 0; i < 64; ++i) {
        const int cls = i % 2;
        toy.push_back({Tensor::matrix(4, 1, std::vector<double>(4, cls ? 1.0 : -1.0)), {cls}});
    }
    dmd::DMDModel m(c, 5);
    dmd::DMDTrainConfig tc;
    tc.epochs = 150;
    tc.batch = 8;
    tc.adam.lr = 3e-3;
    dmd::train_dmd(m, toy, tc, 6);
    double mean[2] = {0.0, 0.0};
    for (int cls = 0; cls < 2; ++cls) {
        std::size_t n = 0;
        for (std::uint64_t k = 0; k < 1000; ++k) {
            const Tensor x = m.sample({cls}, mix_seed(50 + cls, k));
            for (double v : x.values()) {
                mean[cls] += v;
                ++n;
            }
        }
        mean[cls] /= static_cast<double>(n);
    }
    o.seconds = clk.seconds();
    o.pass = table_err <= 1e-12 && q_err <= 1e-12 && std::abs(mean[0] + 1.0) <= 0.2 &&
             std::abs(mean[1] - 1.0) <= 0.2 && o.seconds < 300.0;
    o.detail = "abar err " + fmt("%.1e", table_err) + ", q_sample err " + fmt("%.1e", q_err) +
               "; toy means " + fmt("%+.3f", mean[0]) + " (target -1), " + fmt("%+.3f", mean[1]) +
               " (target +1) over 1000 samples each; " + fmt("%.1f", o.seconds) + " s (limit 300 s)";
    return o;
}

// ---- 6: metrics ------------------------------------------------------------------

double beat_align_direct(const std::vector<double>& bm, const std::vector<double>& ba, double sigma) {
    double s = 0.0;
    for (double a : ba) {
        double best = INFINITY;
        for (double m : bm) best = std::min(best, (m - a) * (m - a));
        s += std::exp(-best / (2.0 * sigma * sigma));
    }
    return s / static_cast<double>(ba.size());
}

double diversity_oracle(const std::vector<std::vector<double>>& x) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < x[i].size(); ++k) d += (x[i][k] - x[j][k]) * (x[i][k] - x[j][k]);
            s += std::sqrt(d);
            ++n;
        }
    return s / n;
}

Outcome metric_oracles() {
    Outcome o{6, "metric oracles"};
    Clock clk;
    const double f = metrics::frechet_distance({{0.0}, {1.0}}, {{1.0}, {1.0}});

    Rng rng(606);
    double ba_err = 0.0;
    bool identical_one = true;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> bm, ba;
        for (std::size_t i = 0, n = 1 + rng.index(12); i < n; ++i) bm.push_back(rng.uniform(0.0, 4.0));
        for (std::size_t i = 0, n = 1 + rng.index(12); i < n; ++i) ba.push_back(rng.uniform(0.0, 4.0));
        const double sigma = rng.uniform(0.05, 0.5);
        ba_err = std::max(ba_err, std::abs(metrics::beat_align(bm, ba, sigma) - beat_align_direct(bm, ba, sigma)));
        identical_one = identical_one && metrics::beat_align(ba, ba, sigma) == 1.0;
    }

    double div_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<double>> x;
        metrics::FeatureSet fs;
        const std::size_t n = 2 + rng.index(30), d = 1 + rng.index(20);
        for (std::size_t i = 0; i < n; ++i) {
            x.push_back(rng.normal_vector(d));
            fs.add(x.back());
        }
        div_err = std::max(div_err, std::abs(metrics::diversity(fs) - diversity_oracle(x)));
    }

    // Fresh unit-norm embeddings every trial: one motion against 61 texts.
    auto unit = [&] {
        auto v = rng.normal_vector(16);
        double n = 0.0;
        for (double x : v) n += x * x;
        for (double& x : v) x /= std::sqrt(n);
        return v;
    };
    std::size_t hits = 0;
    const std::size_t trials = 10000;
    for (std::size_t t = 0; t < trials; ++t) {
        std::vector<std::vector<double>> texts;
        for (int i = 0; i < 61; ++i) texts.push_back(unit());
        const auto r = metrics::retrieval_accuracy({unit()}, {0}, texts, 60, 1, t);
        hits += r.top1 == 1.0;
    }
    const double top1 = static_cast<double>(hits) / trials;
    o.seconds = clk.seconds();
    o.pass = std::abs(f - 1.0) <= 1e-6 && ba_err <= 1e-12 && identical_one && div_err <= 1e-12 &&
             std::abs(top1 - 1.0 / 61.0) <= 0.005;
    o.detail = "fid " + fmt("%.9f", f) + "; beat_align err " + fmt("%.1e", ba_err) +
               (identical_one ? ", =1 on identical beats" : ", NOT 1 on identical beats") + "; diversity err " +
               fmt("%.1e", div_err) + "; random top1 " + fmt("%.4f", top1) + " vs 1/61 = " + fmt("%.4f", 1.0 / 61.0) +
               " (tol 0.005)";
    return o;
}

// ---- pipeline -----------------------------------------------------------------

struct Pipeline {
    fs::path run, untrained;
    std::string config;
    double synth_s = 0, mq_s = 0, utt_s = 0, dmd_s = 0, retrieval_s = 0, eval_s = 0, baseline_s = 0;
    json eval_trained, eval_untrained;
};

std::vector<std::string> common(const std::string& config, const fs::path& out) {
    return {"--config", config, "--out", out.string()};
}

std::vector<std::string> join(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Pipeline run_pipeline(const std::string& config, const fs::path& work) {
    Pipeline p;
    p.config = config;
    p.run = work / "run";
    p.untrained = work / "untrained";
    fs::remove_all(p.run);
    fs::remove_all(p.untrained);
    auto timed = [&](double& slot, const std::vector<std::string>& args) {
        Clock c;
        ude_cmd(args);
        slot = c.seconds();
        std::cerr << "  " << args[0] << (args.size() > 1 && args[1].rfind("--", 0) != 0 ? " " + args[1] : "")
                  << " done in " << fmt("%.1f", slot) << " s\n";
    };
    const auto c = common(config, p.run);
    timed(p.synth_s, join({"synth"}, c));
    timed(p.mq_s, join({"train", "mq"}, c));
    timed(p.utt_s, join({"train", "utt"}, c));
    timed(p.dmd_s, join({"train", "dmd"}, c));
    timed(p.retrieval_s, join({"train", "retrieval"}, c));
    timed(p.eval_s, join({"eval", "--decoder", "vq"}, c));
    p.eval_trained = json::parse(read_bytes(p.run / "eval.json"));

    // Same data, MQ and retrieval encoder; the unified model is left at initialization.
    Clock b;
    copy_into(p.run / "data", p.untrained / "data");
    for (const char* f : {"mq.ckpt", "retrieval.ckpt"}) fs::copy_file(p.run / f, p.untrained / f);
    const auto cu = common(config, p.untrained);
    ude_cmd(join({"train", "utt", "--set", "utt.epochs=0"}, cu));
    ude_cmd(join({"eval", "--decoder", "vq", "--set", "utt.epochs=0"}, cu));
    p.eval_untrained = json::parse(read_bytes(p.untrained / "eval.json"));
    p.baseline_s = b.seconds();
    return p;
}

UnifiedModel load_model(const fs::path& run) {
    const auto mqs = load_checkpoint(run / "mq.ckpt", "mq");
    const auto s = load_checkpoint(run / "utt.ckpt", "utt");
    const auto& ms = find_section(s, "mate");
    return UnifiedModel{motion::Vocabulary(ms.body.at("vocab").get<std::vector<std::string>>()),
                        mq::MQModel::from_section(find_section(mqs, "mq")), mate::MATEModel::from_section(ms),
                        utt::UTTModel::from_section(find_section(s, "utt")),
                        utt::Discriminator::from_section(find_section(s, "disc"))};
}

// ---- 2: MQ reconstruction -------------------------------------------------------

Outcome mq_reconstruction(const Pipeline& p, const motion::Dataset& data, const mq::MQModel& mq) {
    Outcome o{2, "MQ reconstruction and codebook use"};
    const auto train = motions_of(data.select(motion::Split::train));
    const std::size_t coords = train.front()->frames.size() / train.front()->length();
    std::vector<double> sum(coords, 0.0), sq(coords, 0.0);
    double err = 0.0;
    std::size_t rows = 0;
    for (const auto* m : train) {
        const auto r = mq.decode_tokens(mq.tokenize(*m), m->fps);
        for (std::size_t i = 0; i < m->frames.size(); ++i) {
            const double v = m->frames[i];
            sum[i % coords] += v;
            sq[i % coords] += v * v;
            err += (r.frames[i] - v) * (r.frames[i] - v);
        }
        rows += m->length();
    }
    double var = 0.0;
    for (std::size_t c = 0; c < coords; ++c) {
        const double mean = sum[c] / rows;
        var += sq[c] / rows - mean * mean;
    }
    var /= static_cast<double>(coords);
    const double mse = err / static_cast<double>(rows * coords);
    const double util = mq::codebook_utilization(mq, train);
    const std::size_t epochs = RunConfig::load(p.config).count("mq.epochs");
    o.seconds = p.mq_s;
    o.pass = train.size() == 512 && epochs <= 50 && mse < 0.1 * var && util >= 0.25 && p.mq_s < 600.0;
    o.detail = std::to_string(train.size()) + " training sequences, " + std::to_string(epochs) +
               " epochs; mse/variance " + fmt("%.4f", mse / var) + " (limit 0.1), utilization " + fmt("%.3f", util) +
               " (min 0.25); " + fmt("%.1f", p.mq_s) + " s (limit 600 s)";
    return o;
}

// ---- 7: unified model -----------------------------------------------------------

Outcome unified(const Pipeline& p) {
    Outcome o{7, "unified model vs untrained checkpoint"};
    const double top1 = p.eval_trained.at("retrieval").at("top1").get<double>();
    const double beat = p.eval_trained.at("beat_align").get<double>();
    const double beat0 = p.eval_untrained.at("beat_align").get<double>();
    const double total = p.synth_s + p.mq_s + p.utt_s + p.dmd_s + p.retrieval_s + p.eval_s + p.baseline_s;
    o.seconds = total;
    o.pass = top1 >= 0.08 && beat - beat0 >= 0.05 && total < 1800.0;
    o.detail = "held-out top1 " + fmt("%.3f", top1) + " (min 0.08; untrained " +
               fmt("%.3f", p.eval_untrained.at("retrieval").at("top1").get<double>()) + "), beat_align " +
               fmt("%.3f", beat) + " vs untrained " + fmt("%.3f", beat0) + " (gain " + fmt("%+.3f", beat - beat0) +
               ", min 0.05); pipeline " + fmt("%.0f", total) + " s (limit 1800 s)";
    return o;
}

// ---- 8: transition ---------------------------------------------------------------

struct Canonical {
    std::string prompt;
    fs::path audio;
};

// First text and first audio entry of the test split, in manifest order.
Canonical canonical_inputs(const fs::path& data_dir) {
    Canonical c;
    for (const auto& e : motion::parse_manifest(read_bytes(data_dir / motion::kManifestName))) {
        if (e.split != motion::Split::test) continue;
        if (e.modality == motion::Modality::text && c.prompt.empty()) {
            c.prompt = read_bytes(data_dir / e.cond);
            while (!c.prompt.empty() && (c.prompt.back() == '\n' || c.prompt.back() == '\r')) c.prompt.pop_back();
        }
        if (e.modality == motion::Modality::audio && c.audio.empty()) c.audio = data_dir / e.cond;
    }
    return c;
}

Outcome transition(const Pipeline& p, const UnifiedModel& model, const motion::Dataset& data) {
    Outcome o{8, "text-to-audio transition"};
    Clock clk;
    const auto in = canonical_inputs(p.run / "data");
    const fs::path out = p.run / "transition.motion";
    ude_cmd(join({"transition", "--text", in.prompt, "--audio", in.audio.string(), "--decoder", "vq",
                  "--primitive-len", "8", "--output", out.string()},
                 common(p.config, p.run)));
    const json side = json::parse(read_bytes(fs::path(out.string() + ".json")));
    const auto text = side.at("text_tokens").get<std::vector<int>>();
    const auto cont = side.at("continuation").get<std::vector<int>>();
    const bool match = text.size() >= 8 && cont.size() >= 8 && std::equal(text.end() - 8, text.end(), cont.begin());
    const double ratio = side.at("boundary_jump").get<double>() / side.at("median_jump").get<double>();

    // Fixed sweep over further test pairings and seeds, reported alongside.
    const auto cfg = RunConfig::load(p.config);
    const auto texts = data.select(motion::Split::test, motion::Modality::text);
    const auto audios = data.select(motion::Split::test, motion::Modality::audio);
    std::size_t ok = 0, matched = 0;
    std::vector<double> ratios;
    for (std::size_t i = 0; i < 20; ++i) {
        const auto r = run_transition(model, nullptr, texts[(7 * i) % texts.size()]->text.ids,
                                      audios[(5 * i) % audios.size()]->audio, 8, cfg.count("transition.text_frames"),
                                      Decoder::vq, 1000 + i, sampling_config(cfg), cfg.real("data.fps"));
        ratios.push_back(r.boundary_jump / r.median_jump);
        matched += r.primitive_matches;
        ok += r.primitive_matches && r.boundary_jump <= 2.0 * r.median_jump;
    }
    std::sort(ratios.begin(), ratios.end());
    o.seconds = clk.seconds();
    o.pass = match && side.at("primitive_matches").get<bool>() && ratio <= 2.0;
    o.detail = std::string("canonical output: primitive ") + (match ? "equal" : "DIFFERS") + ", boundary jump " +
               fmt("%.2f", ratio) + "x median (limit 2); sweep of 20 further outputs: " + std::to_string(ok) +
               "/20 within limit, primitive equal in " + std::to_string(matched) + "/20, median ratio " +
               fmt("%.2f", ratios[10]) + ", max " + fmt("%.2f", ratios.back());
    return o;
}

// ---- 9: determinism ----------------------------------------------------------------

Outcome determinism(const Pipeline& p, const UnifiedModel& model, const motion::Dataset& data) {
    Outcome o{9, "determinism and z diversity"};
    Clock clk;
    const auto in = canonical_inputs(p.run / "data");
    const auto c = common(p.config, p.run);
    bool identical = true;
    for (const auto& cond : std::vector<std::vector<std::string>>{{"--text", in.prompt}, {"--audio", in.audio.string()}}) {
        std::string bytes[2];
        for (int k = 0; k < 2; ++k) {
            const fs::path out = p.run / ("determinism_" + std::to_string(k) + ".motion");
            ude_cmd(join(join({"generate", "--decoder", "vq", "--seed", "17", "--output", out.string()}, cond), c));
            bytes[k] = read_bytes(out) + read_bytes(fs::path(out.string() + ".json"));
        }
        identical = identical && !bytes[0].empty() && bytes[0] == bytes[1];
    }

    // Gated on greedy decoding so the injected z is the only source of
    // variation; seeded top-k sampling differs across seeds with or without z.
    const auto test = data.select(motion::Split::test);
    const auto sampled = sampling_config(RunConfig::load(p.config));
    std::size_t differ = 0, differ_without_z = 0, sampled_z = 0, sampled_no_z = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const auto input = input_of(*test[t % test.size()]);
        auto pair_differs = [&](bool z, const utt::SamplingConfig& sc) {
            GenerationRequest a, b;
            a.sampling = b.sampling = sc;
            a.use_z = b.use_z = z;
            a.seed = mix_seed(900, 2 * t);
            b.seed = mix_seed(900, 2 * t + 1);
            return generate_tokens(model, input, a) != generate_tokens(model, input, b);
        };
        utt::SamplingConfig greedy;
        greedy.greedy = true;
        differ += pair_differs(true, greedy);
        differ_without_z += pair_differs(false, greedy);
        sampled_z += pair_differs(true, sampled);
        sampled_no_z += pair_differs(false, sampled);
    }
    o.seconds = clk.seconds();
    o.pass = identical && differ >= 95;
    o.detail = std::string("z off + vq: repeated generate ") + (identical ? "byte-identical" : "DIFFERS") +
               " (text and audio); greedy decoding, z on: " + std::to_string(differ) +
               "/100 seed pairs differ (min 95), z off: " + std::to_string(differ_without_z) +
               "/100; configured top-k sampling: " + std::to_string(sampled_z) + "/100 with z, " +
               std::to_string(sampled_no_z) + "/100 without";
    return o;
}

// ---- 10: DMD diversity -------------------------------------------------------------

Outcome dmd_diversity(const Pipeline& p, const UnifiedModel& model, const motion::Dataset& data) {
    Outcome o{10, "DMD vs VQ decoder diversity"};
    Clock clk;
    const auto sec = load_checkpoint(p.run / "dmd.ckpt", "dmd");
    const auto dmd = dmd::DMDModel::from_section(find_section(sec, "dmd"));
    const auto* sample = data.select(motion::Split::test, motion::Modality::audio).front();
    const auto z = model.mq.tokenize(sample->motion);
    metrics::FeatureSet fd, fv, gd, gv;
    gd.kind = gv.kind = metrics::FeatureKind::geometric;
    for (std::uint64_t s = 1; s <= 30; ++s) {
        const auto md = decode_tokens(model, &dmd, z, Decoder::dmd, s, sample->motion.fps);
        const auto mv = decode_tokens(model, nullptr, z, Decoder::vq, s, sample->motion.fps);
        fd.add(metrics::kinetic_features(md));
        fv.add(metrics::kinetic_features(mv));
        gd.add(metrics::geometric_features(md));
        gv.add(metrics::geometric_features(mv));
    }
    const double d = metrics::diversity(fd), v = metrics::diversity(fv);
    o.seconds = clk.seconds();
    o.pass = d > v;
    o.detail = "kinetic diversity over 30 decodes of " + std::to_string(z.size()) + " tokens: DMD " +
               fmt("%.3f", d) + " vs VQ " + fmt("%.3f", v) + " (geometric " + fmt("%.3f", metrics::diversity(gd)) +
               " vs " + fmt("%.3f", metrics::diversity(gv)) + ")";
    return o;
}

void report(const Outcome& o) {
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << o.id << ". " << o.name << ": " << o.detail << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app("acceptance gates");
    std::string config;
    std::string work = "acceptance_run";
    app.add_option("--config", config, "run configuration for the pipeline criteria")->required()->check(CLI::ExistingFile);
    app.add_option("--work", work, "scratch directory for pipeline artifacts");
    CLI11_PARSE(app, argc, argv);

    std::vector<Outcome> all;
    auto record = [&](Outcome o) {
        report(o);
        all.push_back(std::move(o));
    };
    auto guarded = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
        try {
            record(f());
        } catch (const std::exception& e) {
            record({id, name, false, std::string("error: ") + e.what()});
        }
    };

    guarded(1, "finite-difference gradients", gradients);
    guarded(3, "quantize and vq_loss oracles", quantization);
    guarded(5, "diffusion schedule, q_sample, toy conditional DMD", diffusion);
    guarded(6, "metric oracles", metric_oracles);

    std::optional<Pipeline> p;
    try {
        std::cerr << "running the staged pipeline in " << work << "\n";
        p = run_pipeline(config, work);
    } catch (const std::exception& e) {
        for (int id : {2, 4, 7, 8, 9, 10}) record({id, "pipeline", false, std::string("pipeline error: ") + e.what()});
    }
    if (p) {
        const auto data = motion::load_dataset(p->run / "data");
        const auto model = load_model(p->run);
        guarded(2, "MQ reconstruction and codebook use", [&] { return mq_reconstruction(*p, data, model.mq); });
        guarded(4, "causal masking", [&] { return causality(model, data); });
        guarded(7, "unified model vs untrained checkpoint", [&] { return unified(*p); });
        guarded(8, "text-to-audio transition", [&] { return transition(*p, model, data); });
        guarded(9, "determinism and z diversity", [&] { return determinism(*p, model, data); });
        guarded(10, "DMD vs VQ decoder diversity", [&] { return dmd_diversity(*p, model, data); });
    }

    std::sort(all.begin(), all.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
    std::size_t passed = 0;
    json summary = json::array();
    std::cout << "\nsummary\n";
    for (const auto& o : all) {
        report(o);
        passed += o.pass;
        summary.push_back({{"criterion", o.id}, {"name", o.name}, {"pass", o.pass}, {"detail", o.detail},
                           {"seconds", o.seconds}});
    }
    std::cout << passed << "/" << all.size() << " criteria passed\n";
    fs::create_directories(work);
    std::ofstream(fs::path(work) / "acceptance.json") << summary.dump(2) << "\n";
    return passed == all.size() ? 0 : 1;
}
