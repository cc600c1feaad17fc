#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "ude/errors.hpp"
#include "ude/metrics/metrics.hpp"
#include "ude/metrics/retrieval.hpp"
#include "ude/motion/preprocess.hpp"
#include "ude/motion/synth.hpp"

using namespace ude;
using namespace ude::metrics;
using motion::MotionSequence;

namespace {

MotionSequence translating(double fps, std::size_t frames, const Eigen::Vector3d& v) {
    MotionSequence m(fps, 3, frames);
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t j = 0; j < 3; ++j)
            m.set_joint(t, j, Eigen::Vector3d(0.1 * j, 1.0 - 0.4 * j, 0.05 * j) + v * (t / fps));
    return m;
}

MotionSequence random_motion(std::size_t joints, std::size_t frames, Rng& rng) {
    MotionSequence m(20.0, joints, frames);
    for (double& v : m.frames) v = rng.normal();
    return m;
}

FeatureSet rows(std::initializer_list<std::vector<double>> r) {
    FeatureSet f;
    for (const auto& x : r) f.add(x);
    return f;
}

double beat_align_direct(const std::vector<double>& bm, const std::vector<double>& ba, double sigma) {
    double s = 0.0;
    for (double a : ba) {
        std::vector<double> d;
        for (double m : bm) d.push_back((m - a) * (m - a));
        s += std::exp(-*std::min_element(d.begin(), d.end()) / (2 * sigma * sigma));
    }
    return s / static_cast<double>(ba.size());
}

double diversity_oracle(const std::vector<std::vector<double>>& x) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (j <= i) continue;
            double d = 0.0;
            for (std::size_t k = 0; k < x[i].size(); ++k) d += (x[i][k] - x[j][k]) * (x[i][k] - x[j][k]);
            s += std::sqrt(d);
            ++n;
        }
    return s / n;
}

}  // namespace

TEST_CASE("kinetic features") {
    const auto still = translating(20.0, 10, Eigen::Vector3d::Zero());
    for (double v : kinetic_features(still)) CHECK(v == 0.0);
    const Eigen::Vector3d vel(0.6, 0.0, -0.8);
    const auto k20 = kinetic_features(translating(20.0, 21, vel));
    const auto k40 = kinetic_features(translating(40.0, 41, vel));
    REQUIRE(k20.size() == 9);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(k20[j] - 1.0) < 1e-9);
        CHECK(std::abs(k20[3 + j]) < 1e-6);
        CHECK(std::abs(k20[6 + j]) < 1e-6);
        CHECK(std::abs(k40[j] - k20[j]) < 1e-9);
    }
    CHECK_THROWS_AS(kinetic_features(translating(20.0, 2, vel)), MetricError);
}

TEST_CASE("geometric features") {
    Rng rng(1);
    const auto m = random_motion(8, 12, rng);
    CHECK(geometric_features(m) == geometric_features(m));
    auto big = m;
    for (double& v : big.frames) v *= 2.0;
    const auto g = geometric_features(m), gb = geometric_features(big);
    REQUIRE(g.size() == 28 + 5);
    for (std::size_t i = 0; i < 28; ++i) CHECK(gb[i] == doctest::Approx(2.0 * g[i]).epsilon(1e-12));
    const auto r = geometric_features(motion::rotate_about_vertical(m, 0.7));
    for (std::size_t i = 0; i < 28; ++i) CHECK(r[i] == doctest::Approx(g[i]).epsilon(1e-12));
    CHECK_THROWS_AS(geometric_features(MotionSequence(20.0, 8, 0)), MetricError);
}

TEST_CASE("frechet distance") {
    CHECK(std::abs(frechet_distance({{0.0}, {1.0}}, {{1.0}, {1.0}}) - 1.0) < 1e-12);
    // Diagonal oracle: |dmu|^2 + sum (sa - sb)^2.
    CHECK(frechet_distance({{0.0, 1.0}, {4.0, 0.0, 0.0, 9.0}}, {{2.0, 1.0}, {1.0, 0.0, 0.0, 1.0}}) ==
          doctest::Approx(4.0 + 1.0 + 4.0).epsilon(1e-12));
    Rng rng(2);
    FeatureSet a, b;
    for (int i = 0; i < 40; ++i) {
        a.add(rng.normal_vector(4));
        auto v = rng.normal_vector(4);
        v[0] += 0.5;
        v[2] *= 2.0;
        b.add(v);
    }
    CHECK(std::abs(fid(a, a)) < 1e-9);
    CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-9);
    CHECK(fid(a, b) > -1e-9);
    FeatureSet c;
    c.add({1.0, 2.0});
    c.add({0.0, 2.0});
    CHECK_THROWS_AS(fid(a, c), DimensionError);
    FeatureSet g = a;
    g.kind = FeatureKind::geometric;
    CHECK_THROWS_AS(fid(a, g), MetricError);
    CHECK_THROWS_AS(fid(rows({{1.0}}), rows({{1.0}, {2.0}})), MetricError);
}

TEST_CASE("diversity") {
    CHECK(diversity(rows({{1.0, 2.0}, {1.0, 2.0}})) == 0.0);
    CHECK(diversity(rows({{0.0}, {2.0}})) == 2.0);
    CHECK(diversity(rows({{0.0}, {1.0}, {2.0}})) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(diversity(rows({{1.0}})), MetricError);
    Rng rng(3);
    std::vector<std::vector<double>> x;
    FeatureSet f, scaled, perm;
    for (int i = 0; i < 12; ++i) x.push_back(rng.normal_vector(5));
    for (const auto& r : x) {
        f.add(r);
        auto s = r;
        for (double& v : s) v *= 3.0;
        scaled.add(s);
    }
    for (auto it = x.rbegin(); it != x.rend(); ++it) perm.add(*it);
    CHECK(std::abs(diversity(f) - diversity_oracle(x)) < 1e-12);
    CHECK(std::abs(diversity(perm) - diversity(f)) < 1e-12);
    CHECK(std::abs(diversity(scaled) - 3.0 * diversity(f)) < 1e-12);
}

TEST_CASE("motion beats of a 1 Hz swing fall every half second") {
    const double fps = 20.0;
    MotionSequence m(fps, 2, 100);
    for (std::size_t t = 0; t < 100; ++t) {
        const double s = static_cast<double>(t) / fps;
        m.set_joint(t, 0, {0.0, 1.0, 0.0});
        m.set_joint(t, 1, {0.3 * std::sin(2 * std::numbers::pi * s), 0.5, 0.0});
    }
    const auto b = detect_motion_beats(m);
    REQUIRE(b.size() >= 8);
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(b[i] >= 0.0);
        CHECK(b[i] <= 100 / fps);
        CHECK(std::abs(std::fmod(b[i] - 0.25 + 10.0, 0.5)) < 1.01 / fps + 1e-12);
        if (i) {
            CHECK(b[i] > b[i - 1]);
            CHECK(std::abs(b[i] - b[i - 1] - 0.5) <= 1.0 / fps + 1e-12);
        }
    }
    CHECK(detect_motion_beats(translating(fps, 40, {1.0, 0.0, 0.0})).empty());
    CHECK_THROWS_AS(detect_motion_beats(translating(fps, 4, {1.0, 0.0, 0.0})), MetricError);
}

TEST_CASE("synthetic dance beats are recoverable from ground-truth motion") {
    motion::SynthConfig cfg;
    cfg.train_count = 48;
    cfg.test_count = 0;
    for (auto& [fam, c] : cfg.counts) c = motion::is_dance_genre(fam) ? 1 : 0;
    const auto res = motion::synth_samples(cfg, 17);
    std::size_t total = 0, hit = 0;
    for (const auto& s : res.samples) {
        REQUIRE(s.audio.beat_times.has_value());
        const auto det = detect_motion_beats(s.motion);
        for (double b : *s.audio.beat_times) {
            ++total;
            for (double d : det)
                if (std::abs(d - b) <= 2.0 / cfg.fps + 1e-9) {
                    ++hit;
                    break;
                }
        }
    }
    REQUIRE(total > 100);
    CHECK(static_cast<double>(hit) >= 0.9 * static_cast<double>(total));
}

TEST_CASE("beat alignment") {
    const std::vector<double> ba{0.5, 1.0, 1.7};
    CHECK(beat_align(ba, ba, 0.15) == 1.0);
    CHECK(beat_align({0.5}, {0.0}, 0.5) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(beat_align({}, ba, 0.15) == 0.0);
    CHECK_THROWS_AS(beat_align(ba, {}, 0.15), MetricError);
    CHECK_THROWS_AS(beat_align(ba, ba, 0.0), MetricError);
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> bm, a;
        for (std::size_t i = 0, n = 1 + rng.index(6); i < n; ++i) bm.push_back(rng.uniform(0, 3));
        for (std::size_t i = 0, n = 1 + rng.index(6); i < n; ++i) a.push_back(rng.uniform(0, 3));
        const double s = beat_align(bm, a, 0.15);
        CHECK(std::abs(s - beat_align_direct(bm, a, 0.15)) < 1e-12);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        // Pull one motion beat halfway towards its nearest audio beat.
        const std::size_t k = rng.index(bm.size());
        double near = a[0];
        for (double x : a)
            if (std::abs(x - bm[k]) < std::abs(near - bm[k])) near = x;
        auto moved = bm;
        moved[k] = 0.5 * (bm[k] + near);
        // Only sound when no audio beat ends up farther from the moved beat.
        bool closer_to_all = true;
        for (double x : a) closer_to_all = closer_to_all && std::abs(x - moved[k]) <= std::abs(x - bm[k]);
        if (closer_to_all || a.size() == 1) CHECK(beat_align(moved, a, 0.15) >= s - 1e-15);
    }
}

TEST_CASE("reconstruction accuracy") {
    Rng rng(6);
    const auto gt = random_motion(4, 10, rng);
    const auto same = recon_accuracy(gt, gt);
    CHECK(same.ape == 0.0);
    CHECK(same.ave == 0.0);
    CHECK(same.ape_root == 0.0);
    CHECK(same.ave_root == 0.0);
    auto shifted = gt;
    const Eigen::Vector3d delta(0.3, -0.4, 1.2);
    for (std::size_t t = 0; t < 10; ++t)
        for (std::size_t j = 0; j < 4; ++j) shifted.set_joint(t, j, gt.joint(t, j) + delta);
    const auto r = recon_accuracy(shifted, gt);
    CHECK(r.ape == doctest::Approx(delta.norm()).epsilon(1e-12));
    CHECK(std::abs(r.ave) < 1e-12);
    auto limbs = gt;
    for (std::size_t t = 0; t < 10; ++t) limbs.set_joint(t, 2, gt.joint(t, 2) + delta);
    CHECK(recon_accuracy(limbs, gt).ape_root == 0.0);
    CHECK(recon_accuracy(limbs, gt).ape > 0.0);
    const auto b = random_motion(4, 10, rng), c = random_motion(4, 10, rng);
    CHECK(recon_accuracy(gt, c).ape <= recon_accuracy(gt, b).ape + recon_accuracy(b, c).ape + 1e-12);
    CHECK_THROWS_AS(recon_accuracy(gt, random_motion(4, 9, rng)), DimensionError);
}

TEST_CASE("retrieval ranking and accuracy") {
    CHECK(retrieval_rank({0.1, 0.9, 0.5}, 1) == 0);
    CHECK(retrieval_rank({0.9, 0.9, 0.5}, 1) == 1);
    CHECK(retrieval_rank({0.9, 0.9, 0.5}, 0) == 0);
    CHECK(retrieval_rank({0.2, 0.9, 0.95}, 0) == 2);

    // Oracle encoder: each motion equals its own text embedding.
    std::vector<std::vector<double>> texts;
    for (std::size_t i = 0; i < 70; ++i) {
        std::vector<double> v(70, 0.0);
        v[i] = 1.0;
        texts.push_back(v);
    }
    std::vector<std::size_t> of{0, 5, 69};
    const auto oracle = retrieval_accuracy({texts[0], texts[5], texts[69]}, of, texts, 60, 20, 1);
    CHECK(oracle.top1 == 1.0);
    CHECK(oracle.top5 == 1.0);
    CHECK(oracle.trials == 60);

    Rng rng(7);
    auto unit = [&] {
        auto v = rng.normal_vector(16);
        double n = 0.0;
        for (double x : v) n += x * x;
        for (double& x : v) x /= std::sqrt(n);
        return v;
    };
    std::vector<std::vector<double>> tx, mx;
    std::vector<std::size_t> idx;
    for (int i = 0; i < 61; ++i) tx.push_back(unit());
    for (int i = 0; i < 10000; ++i) {
        mx.push_back(unit());
        idx.push_back(static_cast<std::size_t>(i % 61));
    }
    const auto chance = retrieval_accuracy(mx, idx, tx, 60, 1, 3);
    CHECK(std::abs(chance.top1 - 1.0 / 61.0) < 0.005);
    CHECK(std::abs(chance.top5 - 5.0 / 61.0) < 0.01);
    tx.pop_back();
    for (auto& i : idx) i %= 60;
    CHECK_THROWS_AS(retrieval_accuracy(mx, idx, tx, 60, 1, 3), MetricError);
}

TEST_CASE("retrieval encoder training") {
    motion::SynthConfig cfg;
    cfg.train_count = 160;
    cfg.test_count = 80;
    for (auto& [fam, c] : cfg.counts) c = motion::is_dance_genre(fam) ? 0 : c;
    const auto res = motion::synth_samples(cfg, 21);
    std::vector<RetrievalPair> train, test;
    for (const auto& s : res.samples)
        (s.entry.split == motion::Split::train ? train : test).push_back({&s.motion, motion::tokenize(s.text, res.vocab).ids});
    RetrievalConfig rc;
    rc.vocab_size = res.vocab.size();
    rc.hidden = 32;
    rc.dim = 32;
    RetrievalEncoder enc(rc, 3);
    RetrievalTrainConfig tc;
    tc.epochs = 0;
    const auto w0 = enc.params().get("text.out.w").to_vector();
    CHECK(train_retrieval_encoder(enc, train, tc, 1).empty());
    CHECK(enc.params().get("text.out.w").to_vector() == w0);

    tc.epochs = 12;
    const auto h = train_retrieval_encoder(enc, train, tc, 1);
    CHECK(h.back() < h.front());
    double paired = 0.0, unpaired = 0.0;
    std::size_t np = 0, nu = 0;
    for (const auto& a : test) {
        const auto m = enc.motion_embedding(*a.motion);
        double norm = 0.0;
        for (double v : m) norm += v * v;
        CHECK(std::abs(norm - 1.0) < 1e-9);
        for (const auto& b : test) {
            const auto t = enc.text_embedding(b.ids);
            double s = 0.0;
            for (std::size_t i = 0; i < t.size(); ++i) s += m[i] * t[i];
            if (a.ids == b.ids) {
                paired += s;
                ++np;
            } else {
                unpaired += s;
                ++nu;
            }
        }
    }
    CHECK(paired / np > unpaired / nu);

    const auto back = RetrievalEncoder::from_section(parse_checkpoint(serialize_checkpoint({enc.to_section()})).at(0));
    CHECK(back.motion_embedding(*test[0].motion) == enc.motion_embedding(*test[0].motion));
    CHECK(back.text_embedding(test[0].ids) == enc.text_embedding(test[0].ids));
}
