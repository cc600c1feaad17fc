#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ude {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorData {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::string name;

    std::vector<double>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

// Dense row-major 64-bit tensor. Copies share storage; use clone() for a
// deep copy. Gradients are accumulated into the shared storage by Tape.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);
    // Named trainable leaf.
    static Tensor parameter(std::string name, Shape shape, std::vector<double> values);

    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t numel() const { return d_->value.size(); }
    // Treat the tensor as (numel / last extent) x last extent.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> values() const { return d_->value; }
    std::span<double> mutable_values() { return d_->value; }
    double operator[](std::size_t i) const { return d_->value[i]; }
    double at(std::size_t r, std::size_t c) const { return d_->value[r * cols() + c]; }
    double item() const;

    // Gradient view; all zeros when nothing has been accumulated yet.
    std::span<const double> grad() const;
    std::span<double> mutable_grad() { return d_->ensure_grad(); }
    void zero_grad();
    bool has_grad() const { return !d_->grad.empty(); }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool flag) { d_->requires_grad = flag; }
    const std::string& name() const { return d_->name; }
    void set_name(std::string name) { d_->name = std::move(name); }

    Tensor clone() const;
    std::vector<double> to_vector() const { return d_->value; }
    bool shares_storage(const Tensor& other) const { return d_ == other.d_; }

    const std::shared_ptr<detail::TensorData>& data_ptr() const { return d_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<detail::TensorData> d_;

    friend class Tape;
};

}  // namespace ude
