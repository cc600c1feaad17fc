#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ude/numerics/rng.hpp"
#include "ude/numerics/tape.hpp"
#include "ude/numerics/tensor.hpp"

namespace ude::nn {

// Ordered collection of named trainable tensors owned by one model.
class ParamSet {
public:
    Tensor add(const std::string& name, Shape shape, std::vector<double> values);
    Tensor add_zeros(const std::string& name, Shape shape);
    Tensor add_ones(const std::string& name, Shape shape);
    // Glorot-uniform init for a weight with the given fan sizes.
    Tensor add_xavier(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
    Tensor add_normal(const std::string& name, Shape shape, double stddev, Rng& rng);

    const std::vector<Tensor>& tensors() const { return tensors_; }
    Tensor get(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::size_t scalar_count() const;

    void set_trainable(bool flag);
    void zero_grad();
    // Copy values from another set with identical names and shapes.
    void assign(const ParamSet& other);

private:
    std::vector<Tensor> tensors_;
};

struct Linear {
    Tensor weight;  // in x out
    std::optional<Tensor> bias;

    Linear() = default;
    Linear(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
    Tensor forward(Tape& tape, const Tensor& x) const;
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;

    LayerNorm() = default;
    LayerNorm(ParamSet& ps, const std::string& name, std::size_t dim);
    Tensor forward(Tape& tape, const Tensor& x) const { return tape.layer_norm(x, gain, bias, 1e-5); }
};

struct MultiHeadAttention {
    Linear q, k, v, o;
    std::size_t heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);
    // mask == nullptr means full attention.
    Tensor forward(Tape& tape, const Tensor& x, const VisibilityMask* mask) const;
};

// Pre-norm encoder layer: x + MHA(LN(x)), then h + FFN(LN(h)).
struct TransformerLayer {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    Linear ff1, ff2;

    TransformerLayer() = default;
    TransformerLayer(ParamSet& ps, const std::string& name, std::size_t dim, std::size_t heads, std::size_t hidden,
                     Rng& rng);
    Tensor forward(Tape& tape, const Tensor& x, const VisibilityMask* mask) const;
};

struct TransformerStack {
    std::vector<TransformerLayer> layers;
    LayerNorm final_norm;

    TransformerStack() = default;
    TransformerStack(ParamSet& ps, const std::string& name, std::size_t layers, std::size_t dim, std::size_t heads,
                     std::size_t hidden, Rng& rng);
    Tensor forward(Tape& tape, const Tensor& x, const VisibilityMask* mask = nullptr) const;
};

// Fixed sinusoidal table, rows x dim.
Tensor sinusoidal_table(std::size_t rows, std::size_t dim);

}  // namespace ude::nn
