#include "ude/numerics/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

#include "ude/errors.hpp"

namespace ude {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor() : d_(std::make_shared<detail::TensorData>()) { d_->value.assign(1, 0.0); }

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : d_(std::make_shared<detail::TensorData>()) {
    if (ude::numel(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    d_->shape = std::move(shape);
    d_->value = std::move(values);
    d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = ude::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    return Tensor({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::parameter(std::string name, Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values), true);
    t.set_name(std::move(name));
    return t;
}

std::size_t Tensor::cols() const { return d_->shape.empty() ? 1 : d_->shape.back(); }

std::size_t Tensor::rows() const {
    const std::size_t c = cols();
    return c == 0 ? 0 : numel() / c;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return d_->value[0];
}

std::span<const double> Tensor::grad() const {
    if (d_->grad.size() != d_->value.size()) d_->ensure_grad();
    return d_->grad;
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor t(d_->shape, d_->value, false);
    t.set_name(d_->name);
    return t;
}

}  // namespace ude
