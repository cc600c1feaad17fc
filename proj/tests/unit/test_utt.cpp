#include <doctest.h>

#include <cmath>

#include "ude/errors.hpp"
#include "ude/utt/train.hpp"

using namespace ude;
using namespace ude::utt;

namespace {

UTTConfig small_cfg() {
    UTTConfig c;
    c.codebook_size = 12;
    c.dim = 16;
    c.heads = 2;
    c.hidden = 32;
    c.z_dim = 4;
    c.max_tokens = 20;
    return c;
}

mate::CondEmbedding random_cond(std::size_t len, std::size_t dim, Rng& rng) {
    mate::CondEmbedding c;
    c.glob = Tensor::matrix(1, dim, rng.normal_vector(dim));
    c.seq = Tensor::matrix(len, dim, rng.normal_vector(len * dim));
    return c;
}

void fill(Tensor t, double v) {
    for (double& x : t.mutable_values()) x = v;
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("mask rule examples") {
    const auto m = build_mask(2, 3);
    CHECK(m.rows == 5);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 5; ++c) CHECK(m(2 + i, c) == (c < 2 || c <= 2 + i));
    for (std::size_t c = 0; c < 5; ++c) {
        CHECK(m(0, c) == (c < 2));
        CHECK(m(4, c));
    }
    const auto full = build_mask(3, 0);
    for (auto v : full.visible) CHECK(v == 1);
    CHECK_THROWS_AS(build_mask(0, 2), ContractError);
}

TEST_CASE("forward_logits contract") {
    UTTModel m(small_cfg(), 1);
    Rng rng(2);
    const auto cond = random_cond(3, 16, rng);
    Tape tape(false);
    const Tensor l = m.forward_logits(tape, cond, {m.bos(), 1, 2});
    CHECK(l.rows() == 3);
    CHECK(l.cols() == 14);
    CHECK_THROWS_AS(m.forward_logits(tape, cond, {1, 2}), ContractError);
    CHECK_THROWS_AS(m.forward_logits(tape, cond, std::vector<int>(21, m.bos())), LengthError);
    CHECK(motion_position(0) == 1);
    CHECK(motion_position(3) == 13);
}

TEST_CASE("zero z injection with zeroed MLP leaves logits unchanged") {
    UTTModel m(small_cfg(), 1);
    for (const char* n : {"z_mlp.0.w", "z_mlp.0.b", "z_mlp.1.w", "z_mlp.1.b"}) fill(m.params().get(n), 0.0);
    Rng rng(3);
    const auto cond = random_cond(2, 16, rng);
    Tape tape(false);
    const std::vector<int> pre{m.bos(), 4, 5};
    CHECK(vals(m.forward_logits(tape, cond, pre, std::vector<double>(4, 0.0))) == vals(m.forward_logits(tape, cond, pre)));
    CHECK_THROWS_AS(m.forward_logits(tape, cond, pre, std::vector<double>(3, 0.0)), DimensionError);
}

TEST_CASE("causality: later tokens never affect earlier logits") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        UTTModel m(small_cfg(), 100 + trial);
        const auto cond = random_cond(1 + rng.index(4), 16, rng);
        std::vector<int> pre{m.bos()};
        for (int i = 0; i < 10; ++i) pre.push_back(static_cast<int>(rng.index(12)));
        const std::size_t j = 1 + rng.index(10);
        auto alt = pre;
        alt[j] = (alt[j] + 1 + static_cast<int>(rng.index(11))) % 12;
        Tape tape(false);
        const Tensor a = m.forward_logits(tape, cond, pre);
        const Tensor b = m.forward_logits(tape, cond, alt);
        const std::size_t v = a.cols();
        for (std::size_t i = 0; i < j * v; ++i) REQUIRE(a[i] == b[i]);
        bool later_changed = false;
        for (std::size_t i = j * v; i < a.numel(); ++i) later_changed = later_changed || a[i] != b[i];
        CHECK(later_changed);
    }
}

TEST_CASE("global condition reaches every position") {
    UTTModel m(small_cfg(), 1);
    Rng rng(5);
    auto cond = random_cond(2, 16, rng);
    Tape tape(false);
    const std::vector<int> pre{m.bos(), 1, 2, 3};
    const Tensor a = m.forward_logits(tape, cond, pre);
    cond.glob = Tensor::matrix(1, 16, rng.normal_vector(16));
    const Tensor b = m.forward_logits(tape, cond, pre);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        bool changed = false;
        for (std::size_t c = 0; c < a.cols(); ++c) changed = changed || a[r * a.cols() + c] != b[r * a.cols() + c];
        CHECK(changed);
    }
}

TEST_CASE("sample_token rules") {
    Rng rng(1);
    const std::vector<double> l{0.1, 2.0, 2.0, -1.0};
    SamplingConfig g;
    g.greedy = true;
    CHECK(sample_token(l, g, 2, {}, rng) == 1);
    CHECK(sample_token(l, g, 2, {1}, rng) == 2);
    SamplingConfig k1{false, 1.0, 1};
    const std::vector<double> m{0.3, -0.2, 1.7, 1.1};
    SamplingConfig cold{false, 1e-6, 4};
    for (int i = 0; i < 50; ++i) {
        CHECK(sample_token(m, k1, 2, {}, rng) == 2);
        CHECK(sample_token(m, cold, 2, {}, rng) == 2);
        const int s = sample_token(m, SamplingConfig{false, 1.0, 2}, 2, {}, rng);
        CHECK((s == 2 || s == 3));
    }
    CHECK_THROWS_AS(sample_token(l, g, 2, {0, 1, 2, 3}, rng), ContractError);
}

TEST_CASE("generate_tokens: determinism, primitive, min length, sampling") {
    UTTModel m(small_cfg(), 7);
    Rng rng(8);
    const auto cond = random_cond(3, 16, rng);
    GenerateOptions o;
    o.max_len = 12;
    const auto a = generate_tokens(m, cond, o);
    CHECK(a == generate_tokens(m, cond, o));
    for (int t : a) CHECK((t >= 0 && t < 12));

    o.min_len = 12;
    CHECK(generate_tokens(m, cond, o).size() == 12);

    o.primitive = {3, 1, 4, 1, 5, 9, 2, 6};
    const auto p = generate_tokens(m, cond, o);
    REQUIRE(p.size() >= 8);
    CHECK(std::equal(o.primitive.begin(), o.primitive.end(), p.begin()));

    GenerateOptions greedy;
    greedy.sampling.greedy = true;
    greedy.max_len = 12;
    greedy.min_len = 12;
    GenerateOptions cold = greedy;
    cold.sampling = SamplingConfig{false, 1e-6, 0};
    cold.seed = 99;
    CHECK(generate_tokens(m, cond, cold) == generate_tokens(m, cond, greedy));

    o.primitive = {12};
    CHECK_THROWS_AS(generate_tokens(m, cond, o), TokenError);
}

TEST_CASE("discriminator patches") {
    DiscConfig dc;
    dc.cond_dim = 16;
    dc.dim = 16;
    dc.heads = 2;
    dc.hidden = 32;
    Discriminator d(dc, 1);
    Rng rng(2);
    const Tensor motion = Tensor::matrix(64, 24, rng.normal_vector(64 * 24));
    const Tensor g1 = Tensor::matrix(1, 16, rng.normal_vector(16));
    const Tensor g2 = Tensor::matrix(1, 16, rng.normal_vector(16));
    Tape tape(false);
    const Tensor s1 = d.forward(tape, g1, motion);
    CHECK(s1.rows() == 16);
    CHECK(s1.cols() == 1);
    const Tensor s2 = d.forward(tape, g2, motion);
    for (std::size_t i = 0; i < 16; ++i) CHECK(s1[i] != s2[i]);
    CHECK_THROWS_AS(d.forward(tape, g1, Tensor::matrix(6, 24, rng.normal_vector(144))), DimensionError);
    for (const auto& p : d.params().tensors()) fill(p, 0.0);
    const Tensor zero = d.forward(tape, g1, motion);
    for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("utt_loss: uniform logits, beta zero, adversarial path") {
    mq::MQConfig mc;
    mc.codebook_size = 12;
    mc.hidden = 16;
    mc.code_dim = 8;
    mq::MQModel mq(mc, 1);
    DiscConfig dc;
    dc.cond_dim = 16;
    dc.dim = 16;
    dc.heads = 2;
    dc.hidden = 32;
    Discriminator d(dc, 2);
    UTTModel m(small_cfg(), 3);
    Rng rng(4);
    const auto cond = random_cond(3, 16, rng);
    const TokenSequence gt{1, 2, 3, 4};

    Tape t1;
    const auto p = utt_loss(t1, m, d, mq, cond, gt, std::nullopt, 0.0);
    CHECK(p.total.item() == p.ce.item());
    CHECK(p.logits.rows() == 5);

    Tape t2;
    const auto q = utt_loss(t2, m, d, mq, cond, gt, std::vector<double>(4, 0.5), 1.0);
    CHECK(q.fake_motion.rows() == 16);
    CHECK(std::abs(q.total.item() - (q.ce.item() + q.adv.item())) < 1e-12);
    m.params().zero_grad();
    t2.backward(q.adv);
    double g = 0.0;
    for (double v : m.params().get("out.w").grad()) g += std::abs(v);
    CHECK(g > 0.0);

    fill(m.params().get("out.w"), 0.0);
    fill(m.params().get("out.b"), 0.0);
    Tape t3;
    const auto u = utt_loss(t3, m, d, mq, cond, gt, std::nullopt, 0.0);
    CHECK(std::abs(u.ce.item() - std::log(14.0)) < 1e-12);
    CHECK_THROWS_AS(utt_loss(t3, m, d, mq, cond, {}, std::nullopt, 0.0), ContractError);
}

TEST_CASE("train_utt: zero epochs and a short run improving cross-entropy") {
    mq::MQConfig mc;
    mc.codebook_size = 12;
    mc.hidden = 16;
    mc.code_dim = 8;
    mq::MQModel mq(mc, 1);
    mate::MATEConfig ac;
    ac.vocab_size = 10;
    ac.dim = 16;
    ac.heads = 2;
    ac.hidden = 32;
    mate::MATEModel mate(ac, 2);
    UTTModel u(small_cfg(), 3);
    DiscConfig dc;
    dc.cond_dim = 16;
    dc.dim = 16;
    dc.heads = 2;
    dc.hidden = 32;
    Discriminator d(dc, 4);

    Rng rng(5);
    std::vector<UTTSample> samples;
    for (int i = 0; i < 8; ++i) {
        UTTSample s;
        s.input = mate::ModalityInput::text({i % 4 + 1, 5});
        s.tokens = {i % 4, (i % 4 + 3) % 12, 7};
        s.motion = Tensor::matrix(12, 24, rng.normal_vector(12 * 24));
        samples.push_back(s);
    }
    const auto before = vals(u.params().get("out.w"));
    UTTTrainConfig tc;
    tc.epochs = 0;
    CHECK(train_utt(mate, u, d, mq, samples, tc, 1).ce_history.empty());
    CHECK(vals(u.params().get("out.w")) == before);

    const double ce0 = mean_cross_entropy(mate, u, samples);
    tc.epochs = 15;
    tc.batch = 4;
    tc.adam.lr = 3e-3;
    tc.disc_adam.lr = 3e-3;
    const auto r = train_utt(mate, u, d, mq, samples, tc, 1);
    CHECK(r.ce_history.size() == 15);
    CHECK(mq.params().tensors().front().requires_grad());
    CHECK(mean_cross_entropy(mate, u, samples) < ce0);
    CHECK(mean_cross_entropy(mate, u, samples) < std::log(14.0));
}

TEST_CASE("utt and discriminator checkpoints round trip") {
    UTTModel m(small_cfg(), 7);
    const UTTModel r = UTTModel::from_section(parse_checkpoint(serialize_checkpoint({m.to_section()})).at(0));
    Rng rng(8);
    const auto cond = random_cond(2, 16, rng);
    Tape tape(false);
    CHECK(vals(r.forward_logits(tape, cond, {r.bos(), 2})) == vals(m.forward_logits(tape, cond, {m.bos(), 2})));
}
