#pragma once

#include <functional>
#include <vector>

#include "peftcl/tensor.hpp"

namespace peftcl {

// Ordered record of executed primitives. Ops append a backward closure when
// any input tracks gradients; backward() replays the record in reverse and
// accumulates additively into every requires_grad tensor it reaches.
// One tape per training step, owned by a single logical thread.
class Tape {
  public:
    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

    // loss must be a scalar produced on this tape; running a tape twice
    // without reset() would double-count gradients and is rejected.
    void backward(const TensorPtr& loss);

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

    size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

  private:
    std::vector<std::function<void()>> nodes_;
    bool consumed_ = false;
};

namespace ops {

// tape may be null (pure inference); gradients are tracked only when a tape
// is supplied and at least one input requires grad
TensorPtr matmul(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(Tape* tape, const TensorPtr& a);
TensorPtr add(Tape* tape, const TensorPtr& a, const TensorPtr& b);
// a[m x n] + row vector b[n]
TensorPtr add_rowvec(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape* tape, const TensorPtr& a, double c);
TensorPtr hadamard(Tape* tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sum(Tape* tape, const TensorPtr& a);
TensorPtr gelu(Tape* tape, const TensorPtr& a);
TensorPtr softmax_rows(Tape* tape, const TensorPtr& a);
TensorPtr layer_norm(Tape* tape, const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias,
                     double eps);
// mean negative log-softmax of the true class over unmasked logits; masked
// positions get -1e9 added before the softmax so shapes stay static
TensorPtr cross_entropy_masked(Tape* tape, const TensorPtr& logits, const std::vector<int>& labels,
                               const std::vector<uint8_t>& mask);
TensorPtr cross_entropy(Tape* tape, const TensorPtr& logits, const std::vector<int>& labels);
TensorPtr concat_rows(Tape* tape, const std::vector<TensorPtr>& parts);
TensorPtr slice_rows(Tape* tape, const TensorPtr& a, int r0, int r1);
TensorPtr slice_cols(Tape* tape, const TensorPtr& a, int c0, int c1);
TensorPtr concat_cols(Tape* tape, const std::vector<TensorPtr>& parts);
TensorPtr reshape(Tape* tape, const TensorPtr& a, Shape shape);

// sum_j (1 - cos(query, key_j)), or sum_j cos(query, key_j) when raw_gamma;
// query is a detached constant by construction
TensorPtr key_alignment_penalty(Tape* tape, const std::vector<TensorPtr>& keys,
                                const std::vector<double>& query, bool raw_gamma);

double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace ops

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate; the
// gradient oracle every analytic backward is checked against.
TensorPtr finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x, double h);

}  // namespace peftcl
