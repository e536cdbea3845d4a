#include "saint/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "saint/kernels.hpp"
#include "saint/rng.hpp"

namespace saint {

void LmConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("LmConfig: layers must be >= 1");
    if (dim < 1 || heads < 1 || dim % heads != 0)
        throw std::invalid_argument("LmConfig: dim must be a positive multiple of heads");
    if (vocab_size < 1) throw std::invalid_argument("LmConfig: vocab_size must be >= 1");
    if (max_seq < 1) throw std::invalid_argument("LmConfig: max_seq must be >= 1");
    if (proj_in < 0) throw std::invalid_argument("LmConfig: proj_in must be >= 0");
    for (int l : prune_layers)
        if (l < 0 || l >= layers)
            throw std::invalid_argument("LmConfig: prune layer " + std::to_string(l) +
                                        " out of [0, layers)");
    if (!tau_per_layer.empty() && tau_per_layer.size() != static_cast<size_t>(layers))
        throw std::invalid_argument("LmConfig: tau_per_layer must have one entry per layer");
    if (prune.mode != PruneMode::Off && prune.mode != PruneMode::Saint)
        throw std::invalid_argument("LmConfig: LM pruning supports only off/saint modes");
    prune.validate();
    if (visual_start < 0 || visual_end < visual_start)
        throw std::invalid_argument("LmConfig: bad visual span");
}

namespace {

Tensor gaussian(Rng& rng, std::vector<int64_t> dims, float scale = 0.02f) {
    Tensor t = rng_normal(rng, std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] *= scale;
    return t;
}

LmLayerWeights random_layer(Rng& rng, int64_t c, int64_t hidden) {
    LmLayerWeights lw;
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
    return lw;
}

}  // namespace

LmWeights random_lm_weights(const LmConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int64_t c = cfg.dim, hidden = static_cast<int64_t>(cfg.mlp_ratio) * c;
    LmWeights w;
    w.tok_embed = gaussian(rng, {cfg.vocab_size, c});
    w.pos_embed = gaussian(rng, {cfg.max_seq, c});
    for (int l = 0; l < cfg.layers; ++l) w.layers.push_back(random_layer(rng, c, hidden));
    w.ln_f_gain = Tensor::full({c}, 1.0f);
    w.ln_f_bias = Tensor({c});
    w.head_w = gaussian(rng, {c, cfg.vocab_size});
    if (cfg.proj_in > 0) {
        w.vis_proj_w = gaussian(rng, {cfg.proj_in, c});
        w.vis_proj_b = Tensor({c});
    }
    return w;
}

namespace {

// Row-wise helpers shared by prefill and decode; all loops accumulate in a
// fixed order so a one-row computation matches the same row of a batched one
// bit-for-bit.
void layernorm_row(const float* in, const float* gain, const float* bias, int64_t c, float* out) {
    float mean = 0.0f;
    for (int64_t j = 0; j < c; ++j) mean += in[j];
    mean /= static_cast<float>(c);
    float var = 0.0f;
    for (int64_t j = 0; j < c; ++j) {
        const float d = in[j] - mean;
        var += d * d;
    }
    var /= static_cast<float>(c);
    const float inv_std = 1.0f / std::sqrt(var + 1e-5f);
    for (int64_t j = 0; j < c; ++j) out[j] = (in[j] - mean) * inv_std * gain[j] + bias[j];
}

void matvec(const float* row, const Tensor& w, const Tensor* bias, float* out) {
    const int64_t k = w.size(0), p = w.size(1);
    for (int64_t j = 0; j < p; ++j) out[j] = bias ? (*bias)[j] : 0.0f;
    for (int64_t kk = 0; kk < k; ++kk) {
        const float v = row[kk];
        const float* wrow = w.data() + kk * p;
        for (int64_t j = 0; j < p; ++j) out[j] += v * wrow[j];
    }
}

// Causal attention of one query row against a span of key/value rows
// ([count][C] each), writing the per-head context into out[C].
void attend_row(const float* q_row, const float* keys, const float* values, int64_t count,
                int64_t heads, int64_t dh, float* out, std::vector<float>& scratch) {
    const int64_t c = heads * dh;
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
    scratch.resize(static_cast<size_t>(count));
    for (int64_t hi = 0; hi < heads; ++hi) {
        const int64_t off = hi * dh;
        float mx = -std::numeric_limits<float>::infinity();
        for (int64_t j = 0; j < count; ++j) {
            const float* kj = keys + j * c + off;
            float dot = 0.0f;
            for (int64_t cc = 0; cc < dh; ++cc) dot += q_row[off + cc] * kj[cc];
            const float logit = dot * inv_sqrt_dh;
            scratch[static_cast<size_t>(j)] = logit;
            mx = logit > mx ? logit : mx;
        }
        float sum = 0.0f;
        for (int64_t j = 0; j < count; ++j) {
            scratch[static_cast<size_t>(j)] = std::exp(scratch[static_cast<size_t>(j)] - mx);
            sum += scratch[static_cast<size_t>(j)];
        }
        const float inv = 1.0f / sum;
        for (int64_t cc = 0; cc < dh; ++cc) out[off + cc] = 0.0f;
        for (int64_t j = 0; j < count; ++j) {
            const float a = scratch[static_cast<size_t>(j)] * inv;
            const float* vj = values + j * c + off;
            for (int64_t cc = 0; cc < dh; ++cc) out[off + cc] += a * vj[cc];
        }
    }
}

void ffn_row(const float* in, const LmLayerWeights& w, int64_t c, int64_t hidden, float* out,
             std::vector<float>& scratch_h, std::vector<float>& scratch_ln) {
    scratch_ln.resize(static_cast<size_t>(c));
    layernorm_row(in, w.ln2_gain.data(), w.ln2_bias.data(), c, scratch_ln.data());
    scratch_h.resize(static_cast<size_t>(hidden));
    matvec(scratch_ln.data(), w.fc1_w, &w.fc1_b, scratch_h.data());
    constexpr float kSqrt2OverPi = 0.7978845608028654f;
    for (int64_t j = 0; j < hidden; ++j) {
        const float v = scratch_h[static_cast<size_t>(j)];
        scratch_h[static_cast<size_t>(j)] =
            0.5f * v * (1.0f + std::tanh(kSqrt2OverPi * (v + 0.044715f * v * v * v)));
    }
    std::vector<float> o(static_cast<size_t>(c));
    matvec(scratch_h.data(), w.fc2_w, &w.fc2_b, o.data());
    for (int64_t j = 0; j < c; ++j) out[j] = in[j] + o[static_cast<size_t>(j)];
}

Tensor head_logits(const float* row, const LmConfig& cfg, const LmWeights& w,
                   std::vector<float>& scratch_ln) {
    scratch_ln.resize(static_cast<size_t>(cfg.dim));
    layernorm_row(row, w.ln_f_gain.data(), w.ln_f_bias.data(), cfg.dim, scratch_ln.data());
    Tensor logits({cfg.vocab_size});
    matvec(scratch_ln.data(), w.head_w, nullptr, logits.data());
    return logits;
}

}  // namespace

PrefillResult prefill(const Tensor& prompt_embeds, const LmConfig& cfg, const LmWeights& w,
                      Tensor* last_attention) {
    cfg.validate();
    if (prompt_embeds.ndim() != 3 || prompt_embeds.size(0) != 1 ||
        prompt_embeds.size(2) != cfg.dim)
        throw std::invalid_argument("prefill: expected [1,T," + std::to_string(cfg.dim) +
                                    "], got " + prompt_embeds.shape_str());
    const int64_t t0 = prompt_embeds.size(1), c = cfg.dim;
    if (t0 > cfg.max_seq) throw std::invalid_argument("prefill: prompt exceeds max_seq");
    if (cfg.visual_end > t0) throw std::invalid_argument("prefill: visual span exceeds prompt");
    const int64_t hidden = static_cast<int64_t>(cfg.mlp_ratio) * c;
    const int64_t dh = c / cfg.heads;

    // x rows carry their original ids throughout; pruning removes rows but
    // never renumbers them.
    std::vector<float> x(static_cast<size_t>(t0 * c));
    std::vector<int> ids(static_cast<size_t>(t0));
    for (int64_t i = 0; i < t0; ++i) {
        ids[static_cast<size_t>(i)] = static_cast<int>(i);
        const float* e = prompt_embeds.data() + i * c;
        const float* p = w.pos_embed.data() + i * c;
        float* row = x.data() + i * c;
        for (int64_t cc = 0; cc < c; ++cc) row[cc] = e[cc] + p[cc];
    }

    PrefillResult res;
    res.cache.layers.resize(static_cast<size_t>(cfg.layers));
    res.cache.dim = cfg.dim;
    res.cache.heads = cfg.heads;
    res.cache.max_seq = cfg.max_seq;
    res.cache.next_pos_id = static_cast<int>(t0);

    std::vector<float> ln_row(static_cast<size_t>(c));
    std::vector<float> scratch, ffn_hidden, ffn_ln;
    const bool prune_enabled = cfg.prune.mode == PruneMode::Saint && !cfg.prune_layers.empty() &&
                               cfg.visual_end > cfg.visual_start;

    for (int l = 0; l < cfg.layers; ++l) {
        const LmLayerWeights& lw = w.layers[static_cast<size_t>(l)];
        const int64_t t = static_cast<int64_t>(ids.size());

        // QKV for every present row.
        std::vector<float> qkv(static_cast<size_t>(t * 3 * c));
        for (int64_t i = 0; i < t; ++i) {
            layernorm_row(x.data() + i * c, lw.ln1_gain.data(), lw.ln1_bias.data(), c,
                          ln_row.data());
            matvec(ln_row.data(), lw.qkv_w, &lw.qkv_b, qkv.data() + i * 3 * c);
        }
        // Contiguous K/V views for causal attention.
        std::vector<float> keys(static_cast<size_t>(t * c)), values(static_cast<size_t>(t * c));
        for (int64_t i = 0; i < t; ++i) {
            std::copy(qkv.data() + i * 3 * c + c, qkv.data() + i * 3 * c + 2 * c,
                      keys.data() + i * c);
            std::copy(qkv.data() + i * 3 * c + 2 * c, qkv.data() + i * 3 * c + 3 * c,
                      values.data() + i * c);
        }
        std::vector<float> ctx(static_cast<size_t>(c)), proj_out(static_cast<size_t>(c));
        for (int64_t i = 0; i < t; ++i) {
            attend_row(qkv.data() + i * 3 * c, keys.data(), values.data(), i + 1, cfg.heads, dh,
                       ctx.data(), scratch);
            matvec(ctx.data(), lw.proj_w, &lw.proj_b, proj_out.data());
            float* row = x.data() + i * c;
            for (int64_t cc = 0; cc < c; ++cc) row[cc] += proj_out[static_cast<size_t>(cc)];
        }
        if (last_attention && l == cfg.layers - 1) {
            // Head-averaged causal attention of the final layer; upper
            // triangle stays zero, rows are stochastic.
            *last_attention = Tensor({t, t});
            const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
            std::vector<float> logits_row;
            for (int64_t i = 0; i < t; ++i) {
                const float* qi = qkv.data() + i * 3 * c;
                for (int64_t hi = 0; hi < cfg.heads; ++hi) {
                    const int64_t off = hi * dh;
                    logits_row.assign(static_cast<size_t>(i + 1), 0.0f);
                    float mx = -std::numeric_limits<float>::infinity();
                    for (int64_t j = 0; j <= i; ++j) {
                        float dot = 0.0f;
                        for (int64_t cc = 0; cc < dh; ++cc)
                            dot += qi[off + cc] * keys[static_cast<size_t>(j * c + off + cc)];
                        const float v = dot * inv_sqrt_dh;
                        logits_row[static_cast<size_t>(j)] = v;
                        mx = v > mx ? v : mx;
                    }
                    float sum = 0.0f;
                    for (int64_t j = 0; j <= i; ++j) {
                        logits_row[static_cast<size_t>(j)] =
                            std::exp(logits_row[static_cast<size_t>(j)] - mx);
                        sum += logits_row[static_cast<size_t>(j)];
                    }
                    for (int64_t j = 0; j <= i; ++j)
                        last_attention->data()[i * t + j] +=
                            logits_row[static_cast<size_t>(j)] / sum /
                            static_cast<float>(cfg.heads);
                }
            }
        }

        // Prune hook: visual-span rows only, using this layer's head-averaged
        // keys; survivors keep their original ids (positional order).
        std::vector<int> dropped_ids;
        if (prune_enabled && cfg.prune_layers.count(l) > 0) {
            std::vector<int> vis_rows;
            for (int64_t i = 0; i < t; ++i)
                if (ids[static_cast<size_t>(i)] >= cfg.visual_start &&
                    ids[static_cast<size_t>(i)] < cfg.visual_end)
                    vis_rows.push_back(static_cast<int>(i));
            if (vis_rows.size() >= 2) {
                Tensor vis_keys({1, static_cast<int64_t>(vis_rows.size()), dh});
                for (size_t vi = 0; vi < vis_rows.size(); ++vi) {
                    const float* krow = keys.data() + static_cast<int64_t>(vis_rows[vi]) * c;
                    float* dst = vis_keys.data() + static_cast<int64_t>(vi) * dh;
                    for (int64_t cc = 0; cc < dh; ++cc) dst[cc] = 0.0f;
                    for (int64_t hi = 0; hi < cfg.heads; ++hi)
                        for (int64_t cc = 0; cc < dh; ++cc)
                            dst[cc] += krow[hi * dh + cc] / static_cast<float>(cfg.heads);
                }
                PruneConfig pcfg = cfg.prune;
                pcfg.tau = cfg.layer_tau(l);
                pcfg.protected_count = 0;
                const PruneDecision d = saint_decide(vis_keys, pcfg);
                if (!d.identity) {
                    const auto kept_rel = kept_positions(d, OrderPolicy::PositionalOrder)[0];
                    std::vector<uint8_t> keep_row(static_cast<size_t>(t), 1);
                    for (int vr : vis_rows) keep_row[static_cast<size_t>(vr)] = 0;
                    for (int kr : kept_rel)
                        keep_row[static_cast<size_t>(vis_rows[static_cast<size_t>(kr)])] = 1;
                    std::vector<float> nx;
                    std::vector<int> nids;
                    std::vector<float> nkeys, nvalues;
                    nx.reserve(x.size());
                    for (int64_t i = 0; i < t; ++i) {
                        if (!keep_row[static_cast<size_t>(i)]) {
                            dropped_ids.push_back(ids[static_cast<size_t>(i)]);
                            continue;
                        }
                        nx.insert(nx.end(), x.data() + i * c, x.data() + (i + 1) * c);
                        nkeys.insert(nkeys.end(), keys.data() + i * c, keys.data() + (i + 1) * c);
                        nvalues.insert(nvalues.end(), values.data() + i * c,
                                       values.data() + (i + 1) * c);
                        nids.push_back(ids[static_cast<size_t>(i)]);
                    }
                    x = std::move(nx);
                    ids = std::move(nids);
                    keys = std::move(nkeys);
                    values = std::move(nvalues);
                }
            }
        }

        // This layer's cache holds only the survivors.
        auto& cl = res.cache.layers[static_cast<size_t>(l)];
        cl.keys = keys;
        cl.values = values;
        cl.pos_ids = ids;

        const int64_t t_out = static_cast<int64_t>(ids.size());
        for (int64_t i = 0; i < t_out; ++i)
            ffn_row(x.data() + i * c, lw, c, hidden, x.data() + i * c, ffn_hidden, ffn_ln);

        res.r_schedule.push_back(static_cast<int>(t - t_out));
        res.dropped_per_layer.push_back(std::move(dropped_ids));
        int vis_retained = 0;
        for (int id : ids)
            if (id >= cfg.visual_start && id < cfg.visual_end) ++vis_retained;
        res.visual_retained_per_layer.push_back(vis_retained);

        FlopsLedger::Entry entry;
        entry.attention_flops = attention_flops(t, c);
        entry.ffn_flops = ffn_flops(t_out, c, cfg.mlp_ratio);
        res.flops.layers.push_back(entry);
    }

    std::vector<float> ln_scratch;
    const int64_t t_final = static_cast<int64_t>(ids.size());
    res.last_logits = head_logits(x.data() + (t_final - 1) * c, cfg, w, ln_scratch);
    return res;
}

Tensor decode_step(KvCache& cache, const Tensor& token_embed, const LmConfig& cfg,
                   const LmWeights& w) {
    if (token_embed.ndim() != 1 || token_embed.size(0) != cfg.dim)
        throw std::invalid_argument("decode_step: expected [C] embedding");
    if (cache.next_pos_id >= cache.max_seq)
        throw std::invalid_argument("decode_step: max_seq exceeded");
    const int64_t c = cfg.dim, dh = c / cfg.heads;
    const int64_t hidden = static_cast<int64_t>(cfg.mlp_ratio) * c;
    const int pos = cache.next_pos_id;

    std::vector<float> row(static_cast<size_t>(c));
    for (int64_t cc = 0; cc < c; ++cc)
        row[static_cast<size_t>(cc)] = token_embed[cc] + w.pos_embed.data()[pos * c + cc];

    std::vector<float> ln_row(static_cast<size_t>(c)), qkv(static_cast<size_t>(3 * c));
    std::vector<float> ctx(static_cast<size_t>(c)), proj_out(static_cast<size_t>(c));
    std::vector<float> scratch, ffn_hidden, ffn_ln;
    for (int l = 0; l < cfg.layers; ++l) {
        const LmLayerWeights& lw = w.layers[static_cast<size_t>(l)];
        auto& cl = cache.layers[static_cast<size_t>(l)];
        layernorm_row(row.data(), lw.ln1_gain.data(), lw.ln1_bias.data(), c, ln_row.data());
        matvec(ln_row.data(), lw.qkv_w, &lw.qkv_b, qkv.data());
        // Append own K/V so the token attends to the cache plus itself.
        cl.keys.insert(cl.keys.end(), qkv.data() + c, qkv.data() + 2 * c);
        cl.values.insert(cl.values.end(), qkv.data() + 2 * c, qkv.data() + 3 * c);
        cl.pos_ids.push_back(pos);
        attend_row(qkv.data(), cl.keys.data(), cl.values.data(), cl.len(), cfg.heads, dh,
                   ctx.data(), scratch);
        matvec(ctx.data(), lw.proj_w, &lw.proj_b, proj_out.data());
        for (int64_t cc = 0; cc < c; ++cc) row[static_cast<size_t>(cc)] += proj_out[static_cast<size_t>(cc)];
        ffn_row(row.data(), lw, c, hidden, row.data(), ffn_hidden, ffn_ln);
    }
    ++cache.next_pos_id;
    std::vector<float> ln_scratch;
    return head_logits(row.data(), cfg, w, ln_scratch);
}

uint64_t decode_step_flops(const KvCache& cache, const LmConfig& cfg) {
    const uint64_t c = static_cast<uint64_t>(cfg.dim);
    uint64_t total = 0;
    for (const auto& cl : cache.layers) {
        const uint64_t ctx_len = static_cast<uint64_t>(cl.len()) + 1;  // cache plus self
        total += 4 * c * c + 2 * ctx_len * c;                          // projections + scores/mix
        total += 2 * static_cast<uint64_t>(cfg.mlp_ratio) * c * c;     // ffn
    }
    return total;
}

PreLlmResult pre_llm_prune(const Tensor& visual_tokens, const Tensor& keys,
                           const PruneConfig& cfg, std::optional<int> target_retain) {
    if (visual_tokens.ndim() != 3 || keys.ndim() != 3 ||
        visual_tokens.size(1) != keys.size(1) || visual_tokens.size(0) != keys.size(0))
        throw std::invalid_argument("pre_llm_prune: tokens/keys must share [B,N]");
    PruneConfig pcfg = cfg;
    pcfg.mode = PruneMode::Saint;
    pcfg.protected_count = 0;
    const int nv = static_cast<int>(visual_tokens.size(1));
    PreLlmResult res;
    if (!target_retain.has_value()) {
        const PruneDecision d = saint_decide(keys, pcfg);
        res.r = d.r;
        res.kept = kept_positions(d, OrderPolicy::PositionalOrder)[0];
        res.tokens = apply_decision(visual_tokens, d, OrderPolicy::PositionalOrder);
        return res;
    }
    // Target-count mode. A single bipartite pass can drop at most the src
    // half, so the ranking is applied repeatedly until exactly the target
    // remains; dst tokens of one pass become candidates of the next.
    const int target = *target_retain;
    if (target < 1 || target > nv)
        throw std::invalid_argument("pre_llm_prune: target retain out of [1, N]");
    Tensor cur_tokens = visual_tokens;
    Tensor cur_keys = keys;
    std::vector<int> kept_abs(static_cast<size_t>(nv));
    std::iota(kept_abs.begin(), kept_abs.end(), 0);
    while (static_cast<int>(cur_tokens.size(1)) > target) {
        const int n = static_cast<int>(cur_tokens.size(1));
        const int ns = (n + 1) / 2;
        const int r = std::min(n - target, ns);
        const PruneDecision d = constant_decide(cur_keys, pcfg, r);
        const auto kept_rel = kept_positions(d, OrderPolicy::PositionalOrder)[0];
        cur_tokens = apply_decision(cur_tokens, d, OrderPolicy::PositionalOrder);
        cur_keys = apply_decision(cur_keys, d, OrderPolicy::PositionalOrder);
        std::vector<int> next_abs;
        next_abs.reserve(kept_rel.size());
        for (int rel : kept_rel) next_abs.push_back(kept_abs[static_cast<size_t>(rel)]);
        kept_abs = std::move(next_abs);
    }
    res.r = nv - static_cast<int>(cur_tokens.size(1));
    res.kept = std::move(kept_abs);
    res.tokens = std::move(cur_tokens);
    return res;
}

double retained_average(const std::vector<int>& retained_per_layer) {
    if (retained_per_layer.empty())
        throw std::invalid_argument("retained_average: empty schedule");
    double sum = 0.0;
    for (int v : retained_per_layer) sum += v;
    return sum / static_cast<double>(retained_per_layer.size());
}

namespace {

int argmax_index(const Tensor& logits) {
    int best = 0;
    for (int64_t i = 1; i < logits.numel(); ++i)
        if (logits[i] > logits[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace

RunModeResult run_mode(VlmMode mode, const VlmInputs& inputs, const LmConfig& cfg,
                       const LmWeights& w, int decode_steps, double pre_llm_fraction,
                       std::optional<int> pre_target_retain) {
    cfg.validate();
    if (cfg.proj_in <= 0 || w.vis_proj_w.empty())
        throw std::invalid_argument("run_mode: LM weights lack a visual projection");
    if (inputs.visual_tokens.size(2) != cfg.proj_in)
        throw std::invalid_argument("run_mode: visual token width != proj_in");

    // Stage 1: text-agnostic pruning before the projection.
    Tensor visual = inputs.visual_tokens;
    if (mode == VlmMode::VitOnly || mode == VlmMode::Hybrid) {
        std::optional<int> target = pre_target_retain;
        if (!target.has_value() && mode == VlmMode::Hybrid) {
            const int nv = static_cast<int>(visual.size(1));
            target = nv - static_cast<int>(std::floor(pre_llm_fraction * nv));
        }
        PruneConfig pcfg = cfg.prune;
        pcfg.mode = PruneMode::Saint;
        visual = pre_llm_prune(visual, inputs.visual_keys, pcfg, target).tokens;
    }

    // Projection into LM space, then prompt assembly.
    const int64_t nv = visual.size(1), c = cfg.dim;
    Tensor vis2(std::vector<int64_t>{nv, static_cast<int64_t>(cfg.proj_in)},
                std::vector<float>(visual.vec()));
    Tensor projected = matmul(vis2, w.vis_proj_w);
    for (int64_t i = 0; i < nv; ++i)
        for (int64_t cc = 0; cc < c; ++cc)
            projected.data()[i * c + cc] += w.vis_proj_b[cc];

    const int64_t prefix = static_cast<int64_t>(inputs.text_prefix.size());
    const int64_t suffix = static_cast<int64_t>(inputs.text_suffix.size());
    const int64_t t0 = prefix + nv + suffix;
    Tensor prompt({1, t0, c});
    int64_t row = 0;
    auto emit_token = [&](int id) {
        std::copy(w.tok_embed.data() + static_cast<int64_t>(id) * c,
                  w.tok_embed.data() + static_cast<int64_t>(id) * c + c,
                  prompt.data() + row * c);
        ++row;
    };
    for (int id : inputs.text_prefix) emit_token(id);
    std::copy(projected.data(), projected.data() + nv * c, prompt.data() + row * c);
    row += nv;
    for (int id : inputs.text_suffix) emit_token(id);

    LmConfig run_cfg = cfg;
    run_cfg.visual_start = static_cast<int>(prefix);
    run_cfg.visual_end = static_cast<int>(prefix + nv);
    // Stage 2 (LLM-side prefill pruning) only in LlmOnly and Hybrid.
    if (mode == VlmMode::VitOnly) run_cfg.prune.mode = PruneMode::Off;

    PrefillResult pre = prefill(prompt, run_cfg, w);

    RunModeResult res;
    res.prompt_len = static_cast<int>(t0);
    res.visual_after_pre = static_cast<int>(nv);
    res.visual_retained_per_layer = pre.visual_retained_per_layer;
    res.avg_retained_visual = retained_average(pre.visual_retained_per_layer);
    res.flops = pre.flops;

    Tensor logits = pre.last_logits;
    std::vector<float> ln_scratch;
    for (int step = 0; step < decode_steps; ++step) {
        const int tok = argmax_index(logits);
        res.generated.push_back(tok);
        // Decode cost rides in the "other" slot; prefill entries keep the
        // attention/ffn split.
        res.flops.layers.push_back({0, 0, decode_step_flops(pre.cache, run_cfg)});
        Tensor embed({c});
        std::copy(w.tok_embed.data() + static_cast<int64_t>(tok) * c,
                  w.tok_embed.data() + static_cast<int64_t>(tok) * c + c, embed.data());
        logits = decode_step(pre.cache, embed, run_cfg, w);
    }
    return res;
}

}  // namespace saint
