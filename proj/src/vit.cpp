#include "saint/vit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "saint/kernels.hpp"
#include "saint/metrics.hpp"
#include "saint/rng.hpp"

namespace saint {

void VitConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("VitConfig: layers must be >= 1");
    if (dim < 1 || heads < 1 || dim % heads != 0)
        throw std::invalid_argument("VitConfig: dim must be a positive multiple of heads");
    if (mlp_ratio < 1) throw std::invalid_argument("VitConfig: mlp_ratio must be >= 1");
    if (patch < 1 || image_size < 1 || image_size % patch != 0)
        throw std::invalid_argument("VitConfig: image_size must be divisible by patch");
    if (num_classes < 1) throw std::invalid_argument("VitConfig: num_classes must be >= 1");
    for (int l : prune_layers)
        if (l < 0 || l >= layers)
            throw std::invalid_argument("VitConfig: prune layer " + std::to_string(l) +
                                        " out of [0, layers)");
    prune.validate();
    for (const auto& [l, cfg] : prune_overrides) {
        if (prune_layers.find(l) == prune_layers.end())
            throw std::invalid_argument("VitConfig: override for non-prune layer " +
                                        std::to_string(l));
        cfg.validate();
    }
}

namespace {

Tensor gaussian(Rng& rng, std::vector<int64_t> dims, float scale = 0.02f) {
    Tensor t = rng_normal(rng, std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] *= scale;
    return t;
}

}  // namespace

VitWeights random_vit_weights(const VitConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int64_t c = cfg.dim, hidden = static_cast<int64_t>(cfg.mlp_ratio) * c;
    VitWeights w;
    w.patch_w = gaussian(rng, {3LL * cfg.patch * cfg.patch, c});
    w.patch_b = Tensor({c});
    w.pos_embed = gaussian(rng, {cfg.token_count(), c});
    if (cfg.cls_token) w.cls_tok = gaussian(rng, {c});
    if (cfg.distill_token) w.distill_tok = gaussian(rng, {c});
    for (int l = 0; l < cfg.layers; ++l) {
        VitLayerWeights lw;
        lw.ln1_gain = Tensor::full({c}, 1.0f);
        lw.ln1_bias = Tensor({c});
        lw.qkv_w = gaussian(rng, {c, 3 * c});
        lw.qkv_b = Tensor({3 * c});
        lw.proj_w = gaussian(rng, {c, c});
        lw.proj_b = Tensor({c});
        lw.ln2_gain = Tensor::full({c}, 1.0f);
        lw.ln2_bias = Tensor({c});
        lw.fc1_w = gaussian(rng, {c, hidden});
        lw.fc1_b = Tensor({hidden});
        lw.fc2_w = gaussian(rng, {hidden, c});
        lw.fc2_b = Tensor({c});
        w.layers.push_back(std::move(lw));
    }
    w.ln_f_gain = Tensor::full({c}, 1.0f);
    w.ln_f_bias = Tensor({c});
    w.head_w = gaussian(rng, {c, cfg.num_classes});
    w.head_b = Tensor({cfg.num_classes});
    return w;
}

Tensor patch_embed(const Tensor& image, const VitConfig& cfg, const VitWeights& w) {
    if (image.ndim() != 4 || image.size(1) != 3 || image.size(2) != cfg.image_size ||
        image.size(3) != cfg.image_size)
        throw std::invalid_argument("patch_embed: expected [B,3," +
                                    std::to_string(cfg.image_size) + "," +
                                    std::to_string(cfg.image_size) + "], got " +
                                    image.shape_str());
    const int64_t b = image.size(0), s = cfg.image_size, p = cfg.patch, g = cfg.grid();
    const int64_t n_patches = g * g, patch_dim = 3 * p * p, c = cfg.dim;
    // Unfold into [B*n_patches, 3*P*P], channel-major within a patch.
    Tensor cols({b * n_patches, patch_dim});
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t gy = 0; gy < g; ++gy) {
            for (int64_t gx = 0; gx < g; ++gx) {
                float* dst = cols.data() + ((bi * n_patches) + gy * g + gx) * patch_dim;
                for (int64_t ch = 0; ch < 3; ++ch) {
                    const float* plane = image.data() + (bi * 3 + ch) * s * s;
                    for (int64_t py = 0; py < p; ++py) {
                        const float* row = plane + (gy * p + py) * s + gx * p;
                        for (int64_t px = 0; px < p; ++px) *dst++ = row[px];
                    }
                }
            }
        }
    }
    Tensor proj = matmul(cols, w.patch_w);
    const int prot = cfg.protected_count();
    const int64_t n = n_patches + prot;
    Tensor out({b, n, c});
    for (int64_t bi = 0; bi < b; ++bi) {
        float* base = out.data() + bi * n * c;
        int64_t row = 0;
        if (cfg.cls_token) {
            std::copy(w.cls_tok.data(), w.cls_tok.data() + c, base + row * c);
            ++row;
        }
        if (cfg.distill_token) {
            std::copy(w.distill_tok.data(), w.distill_tok.data() + c, base + row * c);
            ++row;
        }
        for (int64_t t = 0; t < n_patches; ++t, ++row) {
            const float* src = proj.data() + (bi * n_patches + t) * c;
            float* dst = base + row * c;
            for (int64_t cc = 0; cc < c; ++cc) dst[cc] = src[cc] + w.patch_b[cc];
        }
        // Positional embedding is added here, before any pruning.
        for (int64_t t = 0; t < n; ++t) {
            float* dst = base + t * c;
            const float* pos = w.pos_embed.data() + t * c;
            for (int64_t cc = 0; cc < c; ++cc) dst[cc] += pos[cc];
        }
    }
    return out;
}

namespace {

struct AttentionOut {
    Tensor x;             // [B, N, C] after residual add
    Tensor keys_avg;      // [B, N, Dh]
    Tensor attention;     // [B, H, N, N], only when requested
    Tensor cls_rows;      // [B, N] head-averaged attention row of token 0
};

// Pre-norm attention block with optional proportional (log-size) bias.
AttentionOut attention_block(const Tensor& x, const Tensor& sizes, const VitLayerWeights& w,
                             int heads, bool proportional, bool want_attention,
                             bool want_cls_rows) {
    const int64_t b = x.size(0), n = x.size(1), c = x.size(2);
    const int64_t dh = c / heads;
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    const Tensor h = layernorm(x, w.ln1_gain, w.ln1_bias);
    // Flatten to [B*N, C] for the projections.
    Tensor h2(std::vector<int64_t>{b * n, c}, std::vector<float>(h.vec()));
    Tensor qkv = matmul(h2, w.qkv_w);
    for (int64_t row = 0; row < b * n; ++row) {
        float* r = qkv.data() + row * 3 * c;
        for (int64_t cc = 0; cc < 3 * c; ++cc) r[cc] += w.qkv_b[cc];
    }

    AttentionOut out;
    out.keys_avg = Tensor({b, n, dh});
    if (want_attention) out.attention = Tensor({b, static_cast<int64_t>(heads), n, n});
    if (want_cls_rows) out.cls_rows = Tensor({b, n});

    std::vector<float> logit_bias(static_cast<size_t>(n), 0.0f);
    Tensor ctx({b, n, c});
    std::vector<float> row_logits(static_cast<size_t>(n));
    for (int64_t bi = 0; bi < b; ++bi) {
        if (proportional) {
            for (int64_t j = 0; j < n; ++j)
                logit_bias[static_cast<size_t>(j)] = std::log(sizes[bi * n + j]);
        }
        for (int64_t hi = 0; hi < heads; ++hi) {
            const int64_t q_off = hi * dh, k_off = c + hi * dh, v_off = 2 * c + hi * dh;
            for (int64_t i = 0; i < n; ++i) {
                const float* qi = qkv.data() + (bi * n + i) * 3 * c + q_off;
                float mx = -std::numeric_limits<float>::infinity();
                for (int64_t j = 0; j < n; ++j) {
                    const float* kj = qkv.data() + (bi * n + j) * 3 * c + k_off;
                    float dot = 0.0f;
                    for (int64_t cc = 0; cc < dh; ++cc) dot += qi[cc] * kj[cc];
                    float logit = dot * inv_sqrt_dh;
                    if (proportional) logit += logit_bias[static_cast<size_t>(j)];
                    row_logits[static_cast<size_t>(j)] = logit;
                    mx = logit > mx ? logit : mx;
                }
                float sum = 0.0f;
                for (int64_t j = 0; j < n; ++j) {
                    row_logits[static_cast<size_t>(j)] =
                        std::exp(row_logits[static_cast<size_t>(j)] - mx);
                    sum += row_logits[static_cast<size_t>(j)];
                }
                const float inv_sum = 1.0f / sum;
                float* ctx_row = ctx.data() + (bi * n + i) * c + hi * dh;
                for (int64_t j = 0; j < n; ++j) {
                    const float a = row_logits[static_cast<size_t>(j)] * inv_sum;
                    if (want_attention)
                        out.attention.data()[((bi * heads + hi) * n + i) * n + j] = a;
                    if (want_cls_rows && i == 0)
                        out.cls_rows.data()[bi * n + j] += a / static_cast<float>(heads);
                    const float* vj = qkv.data() + (bi * n + j) * 3 * c + v_off;
                    for (int64_t cc = 0; cc < dh; ++cc) ctx_row[cc] += a * vj[cc];
                }
            }
            // Head-averaged keys, captured before any prune decision.
            for (int64_t i = 0; i < n; ++i) {
                const float* ki = qkv.data() + (bi * n + i) * 3 * c + k_off;
                float* dst = out.keys_avg.data() + (bi * n + i) * dh;
                for (int64_t cc = 0; cc < dh; ++cc) dst[cc] += ki[cc] / static_cast<float>(heads);
            }
        }
    }

    Tensor ctx2(std::vector<int64_t>{b * n, c}, std::vector<float>(ctx.vec()));
    Tensor proj = matmul(ctx2, w.proj_w);
    out.x = Tensor({b, n, c});
    for (int64_t row = 0; row < b * n; ++row) {
        const float* pr = proj.data() + row * c;
        const float* px = x.data() + row * c;
        float* po = out.x.data() + row * c;
        for (int64_t cc = 0; cc < c; ++cc) po[cc] = px[cc] + pr[cc] + w.proj_b[cc];
    }
    return out;
}

Tensor ffn_block(const Tensor& x, const VitLayerWeights& w) {
    const int64_t b = x.size(0), n = x.size(1), c = x.size(2);
    const int64_t hidden = w.fc1_w.size(1);
    const Tensor h = layernorm(x, w.ln2_gain, w.ln2_bias);
    Tensor h2(std::vector<int64_t>{b * n, c}, std::vector<float>(h.vec()));
    Tensor a = matmul(h2, w.fc1_w);
    for (int64_t row = 0; row < b * n; ++row) {
        float* r = a.data() + row * hidden;
        for (int64_t cc = 0; cc < hidden; ++cc) r[cc] += w.fc1_b[cc];
    }
    a = gelu(a);
    Tensor o = matmul(a, w.fc2_w);
    Tensor out({b, n, c});
    for (int64_t row = 0; row < b * n; ++row) {
        const float* pr = o.data() + row * c;
        const float* px = x.data() + row * c;
        float* po = out.data() + row * c;
        for (int64_t cc = 0; cc < c; ++cc) po[cc] = px[cc] + pr[cc] + w.fc2_b[cc];
    }
    return out;
}

Tensor gather_rows_2d(const Tensor& t, const std::vector<std::vector<int>>& kept) {
    const int64_t b = t.size(0), n = t.size(1);
    const int64_t n_out = static_cast<int64_t>(kept.front().size());
    Tensor out({b, n_out});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n_out; ++i)
            out.data()[bi * n_out + i] =
                t.data()[bi * n + kept[static_cast<size_t>(bi)][static_cast<size_t>(i)]];
    return out;
}

const PruneConfig& layer_prune_config(const VitConfig& cfg, int layer) {
    auto it = cfg.prune_overrides.find(layer);
    return it == cfg.prune_overrides.end() ? cfg.prune : it->second;
}

VitOutput encoder_forward(Tensor x, const VitConfig& cfg, const VitWeights& w, TraceFlags flags,
                          uint64_t patch_flops) {
    const int64_t b = x.size(0), c = cfg.dim;
    const bool proportional = [&] {
        for (int l : cfg.prune_layers)
            if (layer_prune_config(cfg, l).mode == PruneMode::Merge) return true;
        return false;
    }();

    VitOutput out;
    out.flops.patch_embed_flops = patch_flops;
    Tensor sizes = Tensor::full({b, x.size(1)}, 1.0f);

    for (int l = 0; l < cfg.layers; ++l) {
        const int64_t n_in = x.size(1);
        const bool prune_here =
            cfg.prune_layers.count(l) > 0 && layer_prune_config(cfg, l).mode != PruneMode::Off;
        PruneConfig pcfg = layer_prune_config(cfg, l);
        pcfg.protected_count = cfg.protected_count();

        const bool need_cls_rows = prune_here && pcfg.mode == PruneMode::AttentionDrop;
        AttentionOut att = attention_block(x, sizes, w.layers[static_cast<size_t>(l)], cfg.heads,
                                           proportional, flags.attention, need_cls_rows);
        x = std::move(att.x);

        LayerTrace trace;
        trace.layer_index = l;
        trace.token_count_in = static_cast<int>(n_in);
        if (flags.keys) trace.keys_head_avg = att.keys_avg;
        if (flags.attention) trace.attention = std::move(att.attention);

        if (prune_here) {
            // Baselines take r from the config, or from the degree vote when
            // the voting schedule drives them.
            const auto voted_r = [&]() -> int {
                const int n_now = static_cast<int>(x.size(1));
                if (n_now - pcfg.protected_count < 2) return 0;
                const BipartiteSimGraph g =
                    build_graph(att.keys_avg, pcfg.protected_count, pcfg.tau);
                return vote_prune_rate(g.degrees, g.batch, g.src_count, pcfg.k_neighbors);
            };
            switch (pcfg.mode) {
                case PruneMode::Saint: {
                    const PruneDecision d = saint_decide(att.keys_avg, pcfg);
                    if (!d.identity) {
                        const auto kept = kept_positions(d, OrderPolicy::ScoreOrder);
                        x = apply_decision(x, d, OrderPolicy::ScoreOrder);
                        sizes = gather_rows_2d(sizes, kept);
                    }
                    trace.prune_r = d.r;
                    break;
                }
                case PruneMode::ConstantDrop: {
                    const PruneDecision d = constant_decide(att.keys_avg, pcfg, pcfg.constant_r);
                    if (!d.identity) {
                        const auto kept = kept_positions(d, OrderPolicy::ScoreOrder);
                        x = apply_decision(x, d, OrderPolicy::ScoreOrder);
                        sizes = gather_rows_2d(sizes, kept);
                    }
                    trace.prune_r = d.r;
                    break;
                }
                case PruneMode::AttentionDrop: {
                    if (cfg.protected_count() < 1)
                        throw std::invalid_argument(
                            "attention_drop pruning needs a class token to rank against");
                    const int r = pcfg.vote_rate ? voted_r() : pcfg.constant_r;
                    const int n_prev = static_cast<int>(x.size(1));
                    x = attention_drop(x, att.cls_rows, r, pcfg.protected_count);
                    trace.prune_r = n_prev - static_cast<int>(x.size(1));
                    // Kept sets are per item; sizes stay all-ones in drop modes.
                    sizes = Tensor::full({b, x.size(1)}, 1.0f);
                    break;
                }
                case PruneMode::Merge: {
                    const int r = pcfg.vote_rate ? voted_r() : pcfg.constant_r;
                    MergeResult m =
                        similarity_merge(x, att.keys_avg, r, pcfg.protected_count, &sizes);
                    trace.prune_r = static_cast<int>(x.size(1) - m.tokens.size(1));
                    x = std::move(m.tokens);
                    sizes = std::move(m.sizes);
                    break;
                }
                case PruneMode::RandomDrop: {
                    const int r = pcfg.vote_rate ? voted_r() : pcfg.constant_r;
                    const int n_prev = static_cast<int>(x.size(1));
                    x = random_drop(x, r, pcfg.protected_count,
                                    pcfg.seed + static_cast<uint64_t>(l) * 0x9e3779b97f4a7c15ULL);
                    trace.prune_r = n_prev - static_cast<int>(x.size(1));
                    sizes = Tensor::full({b, x.size(1)}, 1.0f);
                    break;
                }
                case PruneMode::Off:
                    break;
            }
        }

        x = ffn_block(x, w.layers[static_cast<size_t>(l)]);
        trace.token_count_out = static_cast<int>(x.size(1));

        FlopsLedger::Entry entry;
        entry.attention_flops = attention_flops(n_in, c);
        entry.ffn_flops = ffn_flops(x.size(1), c, cfg.mlp_ratio);
        out.flops.layers.push_back(entry);
        out.token_schedule.push_back(n_in);
        out.traces.push_back(std::move(trace));
    }

    const Tensor final_ln = layernorm(x, w.ln_f_gain, w.ln_f_bias);
    const int64_t n_final = final_ln.size(1);
    out.pooled = Tensor({b, c});
    if (cfg.cls_token) {
        for (int64_t bi = 0; bi < b; ++bi)
            std::copy(final_ln.data() + bi * n_final * c, final_ln.data() + bi * n_final * c + c,
                      out.pooled.data() + bi * c);
    } else {
        for (int64_t bi = 0; bi < b; ++bi) {
            float* dst = out.pooled.data() + bi * c;
            for (int64_t t = 0; t < n_final; ++t) {
                const float* src = final_ln.data() + (bi * n_final + t) * c;
                for (int64_t cc = 0; cc < c; ++cc) dst[cc] += src[cc];
            }
            for (int64_t cc = 0; cc < c; ++cc) dst[cc] /= static_cast<float>(n_final);
        }
    }
    Tensor logits = matmul(out.pooled, w.head_w);
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t k = 0; k < cfg.num_classes; ++k)
            logits.data()[bi * cfg.num_classes + k] += w.head_b[k];
    out.logits = std::move(logits);
    return out;
}

}  // namespace

VitOutput vit_forward(const Tensor& image, const VitConfig& cfg, const VitWeights& w,
                      TraceFlags flags) {
    cfg.validate();
    Tensor x = patch_embed(image, cfg, w);
    const uint64_t patch_flops = static_cast<uint64_t>(cfg.grid() * cfg.grid()) *
                                 static_cast<uint64_t>(3 * cfg.patch * cfg.patch) *
                                 static_cast<uint64_t>(cfg.dim);
    return encoder_forward(std::move(x), cfg, w, flags, patch_flops);
}

VitOutput vit_forward_embeds(const Tensor& embeds, const VitConfig& cfg, const VitWeights& w,
                             TraceFlags flags) {
    cfg.validate();
    if (embeds.ndim() != 3 || embeds.size(2) != cfg.dim)
        throw std::invalid_argument("vit_forward_embeds: expected [B,N," +
                                    std::to_string(cfg.dim) + "], got " + embeds.shape_str());
    return encoder_forward(embeds, cfg, w, flags, /*patch_flops=*/0);
}

}  // namespace saint
