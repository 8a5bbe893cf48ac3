#pragma once

#include <vector>

#include "peftcl/adapters.hpp"
#include "peftcl/autodiff.hpp"
#include "peftcl/rng.hpp"
#include "peftcl/tensor.hpp"

namespace peftcl {

enum class AttnScale {
    paper_half,  // 1/(2 sqrt d), the form the architecture sketch writes
    standard,    // 1/sqrt d
};

struct ViTConfig {
    int image_h = 32;
    int image_w = 32;
    int channels = 3;
    int patch = 8;
    int dim = 64;        // hidden D
    int layers = 4;      // L
    int heads = 4;       // H
    int ffn = 256;
    int classes = 10;
    bool use_layer_norm = true;  // pre-norm placement; off in strict sketch mode
    bool use_wo = true;          // attention output projection; off in strict sketch mode
    AttnScale attn_scale = AttnScale::paper_half;
    bool ffn_double_gelu = true;  // GeLU on the outer FFN linear as written
    double ln_eps = 1e-6;

    int patches() const { return (image_h / patch) * (image_w / patch); }
    int seq_len() const { return patches() + 1; }  // W*H/P^2 + 1
    int head_dim() const { return dim / heads; }
    int patch_dim() const { return patch * patch * channels; }
    void validate() const;
    // drops norms and W_O and keeps the literal attention/FFN forms
    ViTConfig strict_appendix_variant() const;
};

struct ViTLayerParams {
    TensorPtr w_q, w_k, w_v, w_o;   // [D x D]
    TensorPtr ln1_g, ln1_b;         // [D]
    TensorPtr w1;                   // [D x ffn]
    TensorPtr b1;                   // [ffn]
    TensorPtr w2;                   // [ffn x D]
    TensorPtr b2;                   // [D]
    TensorPtr ln2_g, ln2_b;         // [D]
};

struct ViTParams {
    TensorPtr patch_embed;   // [P^2*C x D]
    TensorPtr pos_encoding;  // [L_S x D]
    TensorPtr cls_token;     // [1 x D]
    std::vector<ViTLayerParams> layers;
    TensorPtr final_ln_g, final_ln_b;  // [D]
    TensorPtr head_w;  // [D x C]
    TensorPtr head_b;  // [C]

    static ViTParams init(const ViTConfig& cfg, const Rng& rng, uint64_t stream_base);

    std::vector<TensorPtr> backbone_tensors() const;  // everything but the head
    std::vector<TensorPtr> head_tensors() const;
    std::vector<TensorPtr> all_tensors() const;
    void set_backbone_trainable(bool v);
    void set_head_trainable(bool v);
    ViTParams clone() const;  // deep copy, gradients not carried over
};

// selected LoRA modules whose increments add at each target matrix
struct LoraStack {
    std::vector<const LoraParams*> modules;
    bool empty() const { return modules.empty(); }
};

// [n_patches x P^2*C] constant matrix, patches row-major, pixels row-major
TensorPtr image_to_patches(const ViTConfig& cfg, const std::vector<float>& pixels);
TensorPtr image_to_patches(const ViTConfig& cfg, const Tensor& image);

// patches -> embed -> [CLS; .] -> + positions
TensorPtr patchify_embed(Tape* tape, const ViTConfig& cfg, const ViTParams& params,
                         const TensorPtr& patch_matrix);

// runs the block stack on any sequence length >= 1, returns the CLS feature [D]
TensorPtr vit_forward(Tape* tape, const ViTConfig& cfg, const ViTParams& params, const TensorPtr& x,
                      const LoraStack& loras = {});

TensorPtr classify(Tape* tape, const TensorPtr& features, const TensorPtr& head_w,
                   const TensorPtr& head_b);

struct PeftMode {
    enum Kind { full, prompt, lora } kind = full;
    int prompt_len = 0;
    int rank = 0;
    bool target_q = true;
    bool target_v = true;
    static PeftMode make_full() { return {full, 0, 0, true, true}; }
    static PeftMode make_prompt(int len) { return {prompt, len, 0, true, true}; }
    static PeftMode make_lora(int r, bool q = true, bool v = true) { return {lora, 0, r, q, v}; }
};

// exact trainable count including the classifier head when it is trainable
int64_t count_trainable_params(const PeftMode& mode, const ViTConfig& cfg);

}  // namespace peftcl
