#include "peftcl/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace peftcl {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(shape_numel(shape_)), 0.0),
      requires_grad_(requires_grad) {}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
    return std::make_shared<Tensor>(std::move(shape), requires_grad);
}

TensorPtr Tensor::full(Shape shape, double value, bool requires_grad) {
    auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
    std::fill(t->data_.begin(), t->data_.end(), value);
    return t;
}

TensorPtr Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    auto t = std::make_shared<Tensor>(std::move(shape), requires_grad);
    if (static_cast<int64_t>(values.size()) != t->size()) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(t->shape_));
    }
    t->data_ = std::move(values);
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

int Tensor::rows() const {
    if (shape_.size() != 2) throw ShapeError("rows() on non-2D tensor " + shape_str(shape_));
    return shape_[0];
}

int Tensor::cols() const {
    if (shape_.size() != 2) throw ShapeError("cols() on non-2D tensor " + shape_str(shape_));
    return shape_[1];
}

std::vector<double>& Tensor::grad() {
    if (grad_.empty()) grad_.assign(data_.size(), 0.0);
    return grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (grad_.empty()) throw ContractError("reading absent gradient");
    return grad_;
}

void Tensor::zero_grad() {
    if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace peftcl
