#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ude/numerics/tensor.hpp"

namespace ude {

// Row-major visibility matrix for masked softmax: visible[r * cols + c] != 0.
struct VisibilityMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> visible;

    bool operator()(std::size_t r, std::size_t c) const { return visible[r * cols + c] != 0; }
};

// Computation record. Every forward op is a method that computes its output
// eagerly and, when any input requires a gradient, appends a backward closure.
// Ops are stored in execution order, which is a valid topological order, so
// backward() simply replays them in reverse.
//
// A Tape constructed with recording=false never stores closures; use it for
// inference.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Elementwise / broadcast.
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor add_row(const Tensor& a, const Tensor& row);  // row broadcast over a's rows
    Tensor scale(const Tensor& a, double s);
    Tensor add_scalar(const Tensor& a, double s);
    Tensor relu(const Tensor& a);
    Tensor gelu(const Tensor& a);  // tanh approximation
    Tensor tanh(const Tensor& a);

    // Linear algebra (rank-2 operands).
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
    Tensor transpose(const Tensor& a);

    // Normalisation.
    Tensor softmax(const Tensor& x, int axis = -1);
    Tensor masked_softmax(const Tensor& x, const VisibilityMask& mask);
    Tensor log_softmax(const Tensor& x);
    Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
    Tensor l2_normalize_rows(const Tensor& x);

    // Temporal ops on T x C sequences. kernel is W x Cin x Cout; cross-correlation,
    // zero padding, T' = floor((T + 2 pad - W) / stride) + 1.
    Tensor conv1d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad);
    Tensor upsample_rows(const Tensor& x, std::size_t factor);
    Tensor max_rows(const Tensor& x);   // 1 x C, temporal max-pool
    Tensor mean_rows(const Tensor& x);  // 1 x C

    // Indexing / structure.
    Tensor gather_rows(const Tensor& table, std::span<const int> ids);
    Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
    Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
    Tensor concat_rows(const std::vector<Tensor>& parts);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    Tensor reshape(const Tensor& x, Shape shape);
    Tensor detach(const Tensor& x);

    // Reductions / losses (scalar outputs).
    Tensor sum(const Tensor& x);
    Tensor mean(const Tensor& x);
    Tensor mse(const Tensor& a, const Tensor& b);
    Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

    // Reverse pass from a scalar loss. Gradients accumulate into every
    // requires_grad leaf; callers reset them between steps.
    void backward(const Tensor& loss);

    bool recording() const { return recording_; }
    std::size_t size() const { return ops_.size(); }
    std::vector<std::string> op_names() const;
    void clear() { ops_.clear(); }

private:
    using Data = std::shared_ptr<detail::TensorData>;
    struct Op {
        const char* name;
        Data output;
        std::function<void()> backward;
    };

    bool needs_grad(std::initializer_list<const Tensor*> inputs) const;
    Tensor finish(const char* name, Tensor out, bool track, std::function<void()> backward);

    bool recording_;
    std::vector<Op> ops_;
};

}  // namespace ude
