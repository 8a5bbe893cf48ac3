#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "peftcl/errors.hpp"

namespace peftcl {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major f64 tensor. Gradient buffer is allocated lazily the first
// time backward accumulates into it; absent grad means zero.
class Tensor {
  public:
    Tensor(Shape shape, bool requires_grad);

    static TensorPtr zeros(Shape shape, bool requires_grad = false);
    static TensorPtr full(Shape shape, double value, bool requires_grad = false);
    static TensorPtr from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);

    const Shape& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    // 2-D accessors; throw on other ranks
    int rows() const;
    int cols() const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool v) { requires_grad_ = v; }

    bool has_grad() const { return !grad_.empty(); }
    // allocate-on-demand gradient buffer (zeros)
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    double* grad_ptr() { return grad().data(); }
    void zero_grad();

    double item() const;

    bool all_finite() const;

  private:
    Shape shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
    bool requires_grad_;
};

}  // namespace peftcl
