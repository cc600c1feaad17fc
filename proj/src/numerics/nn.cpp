#include "ude/numerics/nn.hpp"

#include <cmath>

#include "ude/errors.hpp"

namespace ude::nn {

Tensor ParamSet::add(const std::string& name, Shape shape, std::vector<double> values) {
    if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
    Tensor t = Tensor::parameter(name, std::move(shape), std::move(values));
    tensors_.push_back(t);
    return t;
}

Tensor ParamSet::add_zeros(const std::string& name, Shape shape) {
    const std::size_t n = numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, 0.0));
}

Tensor ParamSet::add_ones(const std::string& name, Shape shape) {
    const std::size_t n = numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, 1.0));
}

Tensor ParamSet::add_xavier(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(numel(shape));
    for (double& x : v) x = rng.uniform(-limit, limit);
    return add(name, std::move(shape), std::move(v));
}

Tensor ParamSet::add_normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(numel(shape));
    for (double& x : v) x = rng.normal(0.0, stddev);
    return add(name, std::move(shape), std::move(v));
}

Tensor ParamSet::get(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name() == name) return t;
    throw ContractError("unknown parameter '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name() == name) return true;
    return false;
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

void ParamSet::set_trainable(bool flag) {
    for (auto& t : tensors_) t.set_requires_grad(flag);
}

void ParamSet::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

void ParamSet::assign(const ParamSet& other) {
    if (other.tensors_.size() != tensors_.size()) throw ContractError("parameter sets differ in size");
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        const Tensor& src = other.tensors_[i];
        Tensor& dst = tensors_[i];
        if (src.name() != dst.name() || src.shape() != dst.shape()) {
            throw ContractError("parameter mismatch at '" + dst.name() + "'");
        }
        std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
    }
}

Linear::Linear(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias)
    : weight(ps.add_xavier(name + ".w", {in, out}, in, out, rng)) {
    if (with_bias) bias = ps.add_zeros(name + ".b", {out});
}

Tensor Linear::forward(Tape& tape, const Tensor& x) const {
    Tensor y = tape.matmul(x, weight);
    return bias ? tape.add_row(y, *bias) : y;
}

LayerNorm::LayerNorm(ParamSet& ps, const std::string& name, std::size_t dim)
    : gain(ps.add_ones(name + ".g", {dim})), bias(ps.add_zeros(name + ".b", {dim})) {}

MultiHeadAttention::MultiHeadAttention(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t heads_,
                                       Rng& rng)
    : q(ps, name + ".q", dim, dim, rng),
      k(ps, name + ".k", dim, dim, rng),
      v(ps, name + ".v", dim, dim, rng),
      o(ps, name + ".o", dim, dim, rng),
      heads(heads_) {
    if (heads == 0 || dim % heads != 0) throw ConfigError("attention width must be divisible by head count");
}

Tensor MultiHeadAttention::forward(Tape& tape, const Tensor& x, const VisibilityMask* mask) const {
    const std::size_t dim = x.cols();
    const std::size_t dh = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor qx = q.forward(tape, x);
    const Tensor kx = k.forward(tape, x);
    const Tensor vx = v.forward(tape, x);
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = heads == 1 ? qx : tape.slice_cols(qx, h * dh, dh);
        const Tensor kh = heads == 1 ? kx : tape.slice_cols(kx, h * dh, dh);
        const Tensor vh = heads == 1 ? vx : tape.slice_cols(vx, h * dh, dh);
        const Tensor scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
        const Tensor w = mask ? tape.masked_softmax(scores, *mask) : tape.softmax(scores, -1);
        outs.push_back(tape.matmul(w, vh));
    }
    const Tensor joined = heads == 1 ? outs.front() : tape.concat_cols(outs);
    return o.forward(tape, joined);
}

TransformerLayer::TransformerLayer(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
                                   std::size_t hidden, Rng& rng)
    : ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      attn(ps, name + ".attn", dim, heads, rng),
      ff1(ps, name + ".ff1", dim, hidden, rng),
      ff2(ps, name + ".ff2", hidden, dim, rng) {}

Tensor TransformerLayer::forward(Tape& tape, const Tensor& x, const VisibilityMask* mask) const {
    const Tensor h = tape.add(x, attn.forward(tape, ln1.forward(tape, x), mask));
    const Tensor f = ff2.forward(tape, tape.gelu(ff1.forward(tape, ln2.forward(tape, h))));
    return tape.add(h, f);
}

TransformerStack::TransformerStack(ParamSet& ps, const std::string& name, std::size_t n_layers, std::size_t dim,
                                   std::size_t heads, std::size_t hidden, Rng& rng) {
    layers.reserve(n_layers);
    for (std::size_t i = 0; i < n_layers; ++i) {
        layers.emplace_back(ps, name + ".layer" + std::to_string(i), dim, heads, hidden, rng);
    }
    final_norm = LayerNorm(ps, name + ".norm", dim);
}

Tensor TransformerStack::forward(Tape& tape, const Tensor& x, const VisibilityMask* mask) const {
    Tensor h = x;
    for (const auto& layer : layers) h = layer.forward(tape, h, mask);
    return final_norm.forward(tape, h);
}

Tensor sinusoidal_table(std::size_t rows, std::size_t dim) {
    std::vector<double> v(rows * dim);
    for (std::size_t p = 0; p < rows; ++p) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            const double a = static_cast<double>(p) * freq;
            v[p * dim + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    }
    return Tensor({rows, dim}, std::move(v));
}

}  // namespace ude::nn
