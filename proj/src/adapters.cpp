#include "peftcl/adapters.hpp"

#include "peftcl/kernels.hpp"

namespace peftcl {

std::vector<TensorPtr> LoraParams::tensors() const {
    std::vector<TensorPtr> out;
    for (const auto& p : q) {
        out.push_back(p.a);
        out.push_back(p.b);
    }
    for (const auto& p : v) {
        out.push_back(p.a);
        out.push_back(p.b);
    }
    return out;
}

std::vector<TensorPtr> AdapterSet::tensors() const {
    std::vector<TensorPtr> out;
    if (prompt) out.push_back(prompt->tokens);
    if (lora) {
        auto lt = lora->tensors();
        out.insert(out.end(), lt.begin(), lt.end());
    }
    if (head) {
        out.push_back(head->w);
        out.push_back(head->b);
    }
    return out;
}

void AdapterSet::set_trainable(bool v) {
    for (auto& t : tensors()) t->set_requires_grad(v);
}

PromptParams init_prompt(int len, int dim, const Rng& rng, uint64_t stream) {
    if (len < 1) throw ConfigError("prompt length must be >= 1");
    PromptParams p;
    p.len = len;
    p.dim = dim;
    p.tokens = Tensor::zeros({len, dim}, true);
    rng.fill_uniform(p.tokens->data(), stream, -0.03, 0.03);
    return p;
}

LoraParams init_lora(int rank, bool target_q, bool target_v, int dim, int layers, const Rng& rng,
                     uint64_t stream) {
    if (rank < 1) throw ConfigError("lora rank must be >= 1");
    if (!target_q && !target_v) throw ConfigError("lora needs at least one target matrix");
    LoraParams p;
    p.rank = rank;
    p.alpha = static_cast<double>(rank);
    uint64_t sub = 0;
    auto make_pair = [&]() {
        LoraPair pair;
        pair.a = Tensor::zeros({rank, dim}, true);
        rng.fill_gaussian(pair.a->data(), stream + sub++, 0.0, 0.02);
        pair.b = Tensor::zeros({dim, rank}, true);
        return pair;
    };
    for (int l = 0; l < layers; ++l) {
        if (target_q) p.q.push_back(make_pair());
        if (target_v) p.v.push_back(make_pair());
    }
    return p;
}

int64_t lora_param_count(const LoraParams& p) {
    int64_t n = 0;
    for (const auto& pr : p.q) n += pr.a->size() + pr.b->size();
    for (const auto& pr : p.v) n += pr.a->size() + pr.b->size();
    return n;
}

TensorPtr prepend_prompt(Tape* tape, const std::vector<const PromptParams*>& prompts,
                         const TensorPtr& x) {
    if (prompts.empty()) return x;
    std::vector<TensorPtr> parts;
    parts.reserve(prompts.size() + 1);
    for (const PromptParams* p : prompts) {
        if (p->tokens->cols() != x->cols()) {
            throw ShapeError("prompt dim " + std::to_string(p->tokens->cols()) +
                             " vs sequence dim " + std::to_string(x->cols()));
        }
        parts.push_back(p->tokens);
    }
    parts.push_back(x);
    return ops::concat_rows(tape, parts);
}

TensorPtr prepend_prompt(Tape* tape, const PromptParams& prompt, const TensorPtr& x) {
    return prepend_prompt(tape, std::vector<const PromptParams*>{&prompt}, x);
}

TensorPtr lora_linear_forward(Tape* tape, const TensorPtr& w, const TensorPtr& a,
                              const TensorPtr& b, const TensorPtr& z) {
    auto base = ops::matmul(tape, z, w);
    auto inc = ops::matmul(tape, ops::matmul(tape, z, b), a);
    return ops::add(tape, base, inc);
}

TensorPtr merge_lora(const TensorPtr& w, const TensorPtr& a, const TensorPtr& b) {
    if (b->rows() != w->rows() || a->cols() != w->cols() || b->cols() != a->rows()) {
        throw ShapeError("merge_lora shape mismatch w=" + shape_str(w->shape()) +
                         " a=" + shape_str(a->shape()) + " b=" + shape_str(b->shape()));
    }
    auto merged = Tensor::from(w->shape(), w->data());
    kernels::active().matmul_nn(b->ptr(), a->ptr(), merged->ptr(), b->rows(), b->cols(), a->cols(),
                                true);
    return merged;
}

MultiLoraAssignment MultiLoraAssignment::from_ids(const std::vector<int>& ids, int num_adapters) {
    MultiLoraAssignment out;
    out.weights.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= num_adapters) {
            throw ContractError("adapter id " + std::to_string(id) + " out of range [0," +
                                std::to_string(num_adapters) + ")");
        }
        std::vector<double> row(static_cast<size_t>(num_adapters), 0.0);
        row[static_cast<size_t>(id)] = 1.0;
        out.weights.push_back(std::move(row));
    }
    return out;
}

TensorPtr multi_lora_masked_forward(const TensorPtr& z, const TensorPtr& w,
                                    const std::vector<const LoraPair*>& adapters, double scaling,
                                    const MultiLoraAssignment& assignment) {
    const int batch = z->rows();
    const int n_adapters = static_cast<int>(adapters.size());
    if (static_cast<int>(assignment.weights.size()) != batch) {
        throw ShapeError("assignment rows " + std::to_string(assignment.weights.size()) +
                         " vs batch " + std::to_string(batch));
    }
    for (const auto& row : assignment.weights) {
        if (static_cast<int>(row.size()) != n_adapters) {
            throw ContractError("assignment width does not match adapter count");
        }
    }
    auto out = ops::matmul(nullptr, z, w);
    const int d_out = out->cols();
    std::vector<double> za;   // z*b buffer [batch x rank]
    std::vector<double> inc;  // (z*b)*a buffer [batch x d_out]
    for (int ai = 0; ai < n_adapters; ++ai) {
        const LoraPair& pair = *adapters[static_cast<size_t>(ai)];
        const int rank = pair.b->cols();
        za.assign(static_cast<size_t>(batch) * rank, 0.0);
        inc.assign(static_cast<size_t>(batch) * d_out, 0.0);
        kernels::active().matmul_nn(z->ptr(), pair.b->ptr(), za.data(), batch, z->cols(), rank,
                                    false);
        kernels::active().matmul_nn(za.data(), pair.a->ptr(), inc.data(), batch, rank, d_out,
                                    false);
        for (int i = 0; i < batch; ++i) {
            const double wgt =
                scaling * assignment.weights[static_cast<size_t>(i)][static_cast<size_t>(ai)];
            kernels::active().axpy(wgt, inc.data() + static_cast<int64_t>(i) * d_out,
                                   out->ptr() + static_cast<int64_t>(i) * d_out, d_out);
        }
    }
    return out;
}

}  // namespace peftcl
