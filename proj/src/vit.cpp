#include "peftcl/vit.hpp"

#include <cmath>

namespace peftcl {

void ViTConfig::validate() const {
    if (image_h <= 0 || image_w <= 0 || channels <= 0) throw ConfigError("invalid image geometry");
    if (patch <= 0 || image_h % patch != 0 || image_w % patch != 0) {
        throw ConfigError("image sides must be divisible by patch size");
    }
    if (dim <= 0 || heads <= 0 || dim % heads != 0) {
        throw ConfigError("hidden dim must be divisible by head count");
    }
    if (layers <= 0 || ffn <= 0 || classes <= 0) throw ConfigError("invalid model dimensions");
}

ViTConfig ViTConfig::strict_appendix_variant() const {
    ViTConfig c = *this;
    c.use_layer_norm = false;
    c.use_wo = false;
    c.attn_scale = AttnScale::paper_half;
    c.ffn_double_gelu = true;
    return c;
}

namespace {

TensorPtr gauss(Shape shape, const Rng& rng, uint64_t stream, double sd = 0.02) {
    auto t = Tensor::zeros(std::move(shape), true);
    rng.fill_gaussian(t->data(), stream, 0.0, sd);
    return t;
}

}  // namespace

ViTParams ViTParams::init(const ViTConfig& cfg, const Rng& rng, uint64_t stream_base) {
    cfg.validate();
    ViTParams p;
    uint64_t s = stream_base;
    p.patch_embed = gauss({cfg.patch_dim(), cfg.dim}, rng, s++);
    p.pos_encoding = gauss({cfg.seq_len(), cfg.dim}, rng, s++);
    p.cls_token = gauss({1, cfg.dim}, rng, s++);
    for (int l = 0; l < cfg.layers; ++l) {
        ViTLayerParams lp;
        lp.w_q = gauss({cfg.dim, cfg.dim}, rng, s++);
        lp.w_k = gauss({cfg.dim, cfg.dim}, rng, s++);
        lp.w_v = gauss({cfg.dim, cfg.dim}, rng, s++);
        lp.w_o = gauss({cfg.dim, cfg.dim}, rng, s++);
        lp.ln1_g = Tensor::full({cfg.dim}, 1.0, true);
        lp.ln1_b = Tensor::zeros({cfg.dim}, true);
        lp.w1 = gauss({cfg.dim, cfg.ffn}, rng, s++);
        lp.b1 = Tensor::zeros({cfg.ffn}, true);
        lp.w2 = gauss({cfg.ffn, cfg.dim}, rng, s++);
        lp.b2 = Tensor::zeros({cfg.dim}, true);
        lp.ln2_g = Tensor::full({cfg.dim}, 1.0, true);
        lp.ln2_b = Tensor::zeros({cfg.dim}, true);
        p.layers.push_back(std::move(lp));
    }
    p.final_ln_g = Tensor::full({cfg.dim}, 1.0, true);
    p.final_ln_b = Tensor::zeros({cfg.dim}, true);
    p.head_w = gauss({cfg.dim, cfg.classes}, rng, s++);
    p.head_b = Tensor::zeros({cfg.classes}, true);
    return p;
}

std::vector<TensorPtr> ViTParams::backbone_tensors() const {
    std::vector<TensorPtr> out{patch_embed, pos_encoding, cls_token};
    for (const auto& l : layers) {
        for (const auto& t : {l.w_q, l.w_k, l.w_v, l.w_o, l.ln1_g, l.ln1_b, l.w1, l.b1, l.w2, l.b2,
                              l.ln2_g, l.ln2_b}) {
            out.push_back(t);
        }
    }
    out.push_back(final_ln_g);
    out.push_back(final_ln_b);
    return out;
}

std::vector<TensorPtr> ViTParams::head_tensors() const { return {head_w, head_b}; }

std::vector<TensorPtr> ViTParams::all_tensors() const {
    auto out = backbone_tensors();
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
}

void ViTParams::set_backbone_trainable(bool v) {
    for (auto& t : backbone_tensors()) t->set_requires_grad(v);
}

void ViTParams::set_head_trainable(bool v) {
    for (auto& t : head_tensors()) t->set_requires_grad(v);
}

ViTParams ViTParams::clone() const {
    auto copy_tensor = [](const TensorPtr& t) {
        return Tensor::from(t->shape(), t->data(), t->requires_grad());
    };
    ViTParams p;
    p.patch_embed = copy_tensor(patch_embed);
    p.pos_encoding = copy_tensor(pos_encoding);
    p.cls_token = copy_tensor(cls_token);
    for (const auto& l : layers) {
        ViTLayerParams lp;
        lp.w_q = copy_tensor(l.w_q);
        lp.w_k = copy_tensor(l.w_k);
        lp.w_v = copy_tensor(l.w_v);
        lp.w_o = copy_tensor(l.w_o);
        lp.ln1_g = copy_tensor(l.ln1_g);
        lp.ln1_b = copy_tensor(l.ln1_b);
        lp.w1 = copy_tensor(l.w1);
        lp.b1 = copy_tensor(l.b1);
        lp.w2 = copy_tensor(l.w2);
        lp.b2 = copy_tensor(l.b2);
        lp.ln2_g = copy_tensor(l.ln2_g);
        lp.ln2_b = copy_tensor(l.ln2_b);
        p.layers.push_back(std::move(lp));
    }
    p.final_ln_g = copy_tensor(final_ln_g);
    p.final_ln_b = copy_tensor(final_ln_b);
    p.head_w = copy_tensor(head_w);
    p.head_b = copy_tensor(head_b);
    return p;
}

TensorPtr image_to_patches(const ViTConfig& cfg, const std::vector<float>& pixels) {
    const size_t expected =
        static_cast<size_t>(cfg.image_h) * cfg.image_w * cfg.channels;
    if (pixels.size() != expected) {
        throw ShapeError("image has " + std::to_string(pixels.size()) + " values, expected " +
                         std::to_string(expected));
    }
    const int gh = cfg.image_h / cfg.patch, gw = cfg.image_w / cfg.patch;
    auto out = Tensor::zeros({cfg.patches(), cfg.patch_dim()});
    double* dst = out->ptr();
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            for (int y = 0; y < cfg.patch; ++y) {
                for (int x = 0; x < cfg.patch; ++x) {
                    for (int c = 0; c < cfg.channels; ++c) {
                        const size_t src = (static_cast<size_t>(py * cfg.patch + y) * cfg.image_w +
                                            (px * cfg.patch + x)) *
                                               cfg.channels +
                                           c;
                        *dst++ = static_cast<double>(pixels[src]);
                    }
                }
            }
        }
    }
    return out;
}

TensorPtr image_to_patches(const ViTConfig& cfg, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != cfg.image_h || image.dim(1) != cfg.image_w ||
        image.dim(2) != cfg.channels) {
        throw ShapeError("image shape " + shape_str(image.shape()) + " does not match config");
    }
    std::vector<float> pixels(image.data().begin(), image.data().end());
    return image_to_patches(cfg, pixels);
}

TensorPtr patchify_embed(Tape* tape, const ViTConfig& cfg, const ViTParams& params,
                         const TensorPtr& patch_matrix) {
    if (patch_matrix->rows() != cfg.patches() || patch_matrix->cols() != cfg.patch_dim()) {
        throw ShapeError("patch matrix " + shape_str(patch_matrix->shape()) +
                         " does not match config");
    }
    auto embedded = ops::matmul(tape, patch_matrix, params.patch_embed);
    auto seq = ops::concat_rows(tape, {params.cls_token, embedded});
    return ops::add(tape, seq, params.pos_encoding);
}

namespace {

TensorPtr target_projection(Tape* tape, const TensorPtr& x, const TensorPtr& w,
                            const LoraStack& loras, bool is_query, int layer) {
    auto out = ops::matmul(tape, x, w);
    for (const LoraParams* m : loras.modules) {
        const auto& pairs = is_query ? m->q : m->v;
        if (pairs.empty()) continue;
        const LoraPair& pair = pairs[static_cast<size_t>(layer)];
        auto inc = ops::matmul(tape, ops::matmul(tape, x, pair.b), pair.a);
        if (m->scaling() != 1.0) inc = ops::scale(tape, inc, m->scaling());
        out = ops::add(tape, out, inc);
    }
    return out;
}

}  // namespace

TensorPtr vit_forward(Tape* tape, const ViTConfig& cfg, const ViTParams& params, const TensorPtr& x,
                      const LoraStack& loras) {
    if (x->ndim() != 2 || x->cols() != cfg.dim) {
        throw ShapeError("sequence " + shape_str(x->shape()) + " vs hidden dim " +
                         std::to_string(cfg.dim));
    }
    const int d = cfg.head_dim();
    const double scale = (cfg.attn_scale == AttnScale::paper_half)
                             ? 1.0 / (2.0 * std::sqrt(static_cast<double>(d)))
                             : 1.0 / std::sqrt(static_cast<double>(d));
    TensorPtr seq = x;
    for (int l = 0; l < cfg.layers; ++l) {
        const ViTLayerParams& lp = params.layers[static_cast<size_t>(l)];
        TensorPtr h = cfg.use_layer_norm ? ops::layer_norm(tape, seq, lp.ln1_g, lp.ln1_b, cfg.ln_eps)
                                         : seq;
        auto q = target_projection(tape, h, lp.w_q, loras, true, l);
        auto k = ops::matmul(tape, h, lp.w_k);
        auto v = target_projection(tape, h, lp.w_v, loras, false, l);
        std::vector<TensorPtr> head_outs;
        head_outs.reserve(static_cast<size_t>(cfg.heads));
        for (int hh = 0; hh < cfg.heads; ++hh) {
            auto qh = ops::slice_cols(tape, q, hh * d, (hh + 1) * d);
            auto kh = ops::slice_cols(tape, k, hh * d, (hh + 1) * d);
            auto vh = ops::slice_cols(tape, v, hh * d, (hh + 1) * d);
            auto scores = ops::scale(tape, ops::matmul(tape, qh, ops::transpose(tape, kh)), scale);
            auto attn = ops::softmax_rows(tape, scores);
            head_outs.push_back(ops::matmul(tape, attn, vh));
        }
        TensorPtr mhsa = cfg.heads == 1 ? head_outs[0] : ops::concat_cols(tape, head_outs);
        if (cfg.use_wo) mhsa = ops::matmul(tape, mhsa, lp.w_o);
        seq = ops::add(tape, seq, mhsa);

        TensorPtr h2 = cfg.use_layer_norm
                           ? ops::layer_norm(tape, seq, lp.ln2_g, lp.ln2_b, cfg.ln_eps)
                           : seq;
        auto f1 = ops::gelu(tape, ops::add_rowvec(tape, ops::matmul(tape, h2, lp.w1), lp.b1));
        auto f2 = ops::add_rowvec(tape, ops::matmul(tape, f1, lp.w2), lp.b2);
        if (cfg.ffn_double_gelu) f2 = ops::gelu(tape, f2);
        seq = ops::add(tape, seq, f2);
    }
    if (cfg.use_layer_norm) {
        seq = ops::layer_norm(tape, seq, params.final_ln_g, params.final_ln_b, cfg.ln_eps);
    }
    auto cls = ops::slice_rows(tape, seq, 0, 1);
    return ops::reshape(tape, cls, {cfg.dim});
}

TensorPtr classify(Tape* tape, const TensorPtr& features, const TensorPtr& head_w,
                   const TensorPtr& head_b) {
    auto f2d = ops::reshape(tape, features, {1, static_cast<int>(features->size())});
    auto logits = ops::add_rowvec(tape, ops::matmul(tape, f2d, head_w), head_b);
    return ops::reshape(tape, logits, {head_w->cols()});
}

int64_t count_trainable_params(const PeftMode& mode, const ViTConfig& cfg) {
    cfg.validate();
    const int64_t head = static_cast<int64_t>(cfg.dim) * cfg.classes + cfg.classes;
    switch (mode.kind) {
        case PeftMode::full: {
            int64_t n = static_cast<int64_t>(cfg.patch_dim()) * cfg.dim;  // patch embed
            n += static_cast<int64_t>(cfg.seq_len()) * cfg.dim;           // positions
            n += cfg.dim;                                                 // cls token
            int64_t per_layer = 3LL * cfg.dim * cfg.dim;                  // q,k,v
            if (cfg.use_wo) per_layer += static_cast<int64_t>(cfg.dim) * cfg.dim;
            per_layer += static_cast<int64_t>(cfg.dim) * cfg.ffn + cfg.ffn;  // w1,b1
            per_layer += static_cast<int64_t>(cfg.ffn) * cfg.dim + cfg.dim;  // w2,b2
            if (cfg.use_layer_norm) per_layer += 4LL * cfg.dim;
            n += per_layer * cfg.layers;
            if (cfg.use_layer_norm) n += 2LL * cfg.dim;
            return n + head;
        }
        case PeftMode::prompt: {
            if (mode.prompt_len < 1) throw ConfigError("prompt length must be >= 1");
            return static_cast<int64_t>(mode.prompt_len) * cfg.dim + head;
        }
        case PeftMode::lora: {
            if (mode.rank < 1) throw ConfigError("lora rank must be >= 1");
            const int targets = (mode.target_q ? 1 : 0) + (mode.target_v ? 1 : 0);
            if (targets == 0) throw ConfigError("lora needs at least one target matrix");
            // per target: r*(D_in + D_out)
            return static_cast<int64_t>(cfg.layers) * targets * mode.rank * 2 * cfg.dim + head;
        }
    }
    throw ConfigError("unknown peft mode");
}

}  // namespace peftcl
