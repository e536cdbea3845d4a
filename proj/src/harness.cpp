#include "saint/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "saint/csv.hpp"
#include "saint/kernels.hpp"
#include "saint/metrics.hpp"
#include "saint/rng.hpp"

namespace saint {

namespace {

std::string block_name(int layer, const char* leaf) {
    return "blocks." + std::to_string(layer) + "." + leaf;
}

const Tensor& need(const std::map<std::string, Tensor>& tensors, const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::runtime_error("model file: missing tensor '" + name + "'");
    return it->second;
}

void check_shape(const Tensor& t, const std::vector<int64_t>& dims, const std::string& name) {
    if (t.dims() != dims) {
        std::string want = "[";
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) want += ",";
            want += std::to_string(dims[i]);
        }
        want += "]";
        throw std::runtime_error("model file: tensor '" + name + "' has shape " + t.shape_str() +
                                 ", expected " + want);
    }
}

template <typename LayerT>
void put_block(std::map<std::string, Tensor>& out, int layer, const LayerT& lw) {
    out[block_name(layer, "ln1.gain")] = lw.ln1_gain;
    out[block_name(layer, "ln1.bias")] = lw.ln1_bias;
    out[block_name(layer, "qkv.weight")] = lw.qkv_w;
    out[block_name(layer, "qkv.bias")] = lw.qkv_b;
    out[block_name(layer, "proj.weight")] = lw.proj_w;
    out[block_name(layer, "proj.bias")] = lw.proj_b;
    out[block_name(layer, "ln2.gain")] = lw.ln2_gain;
    out[block_name(layer, "ln2.bias")] = lw.ln2_bias;
    out[block_name(layer, "fc1.weight")] = lw.fc1_w;
    out[block_name(layer, "fc1.bias")] = lw.fc1_b;
    out[block_name(layer, "fc2.weight")] = lw.fc2_w;
    out[block_name(layer, "fc2.bias")] = lw.fc2_b;
}

template <typename LayerT>
LayerT get_block(const std::map<std::string, Tensor>& tensors, int layer, int64_t c,
                 int64_t hidden) {
    LayerT lw;
    lw.ln1_gain = need(tensors, block_name(layer, "ln1.gain"));
    lw.ln1_bias = need(tensors, block_name(layer, "ln1.bias"));
    lw.qkv_w = need(tensors, block_name(layer, "qkv.weight"));
    lw.qkv_b = need(tensors, block_name(layer, "qkv.bias"));
    lw.proj_w = need(tensors, block_name(layer, "proj.weight"));
    lw.proj_b = need(tensors, block_name(layer, "proj.bias"));
    lw.ln2_gain = need(tensors, block_name(layer, "ln2.gain"));
    lw.ln2_bias = need(tensors, block_name(layer, "ln2.bias"));
    lw.fc1_w = need(tensors, block_name(layer, "fc1.weight"));
    lw.fc1_b = need(tensors, block_name(layer, "fc1.bias"));
    lw.fc2_w = need(tensors, block_name(layer, "fc2.weight"));
    lw.fc2_b = need(tensors, block_name(layer, "fc2.bias"));
    check_shape(lw.qkv_w, {c, 3 * c}, block_name(layer, "qkv.weight"));
    check_shape(lw.fc1_w, {c, hidden}, block_name(layer, "fc1.weight"));
    check_shape(lw.fc2_w, {hidden, c}, block_name(layer, "fc2.weight"));
    return lw;
}

}  // namespace

std::map<std::string, Tensor> vit_weights_to_tensors(const VitConfig& cfg, const VitWeights& w) {
    std::map<std::string, Tensor> out;
    out["patch_embed.weight"] = w.patch_w;
    out["patch_embed.bias"] = w.patch_b;
    out["pos_embed"] = w.pos_embed;
    if (cfg.cls_token) out["cls_token"] = w.cls_tok;
    if (cfg.distill_token) out["distill_token"] = w.distill_tok;
    for (int l = 0; l < cfg.layers; ++l) put_block(out, l, w.layers[static_cast<size_t>(l)]);
    out["ln_f.gain"] = w.ln_f_gain;
    out["ln_f.bias"] = w.ln_f_bias;
    out["head.weight"] = w.head_w;
    out["head.bias"] = w.head_b;
    return out;
}

VitWeights vit_weights_from_tensors(const VitConfig& cfg,
                                    const std::map<std::string, Tensor>& tensors) {
    const int64_t c = cfg.dim, hidden = static_cast<int64_t>(cfg.mlp_ratio) * c;
    VitWeights w;
    w.patch_w = need(tensors, "patch_embed.weight");
    check_shape(w.patch_w, {3LL * cfg.patch * cfg.patch, c}, "patch_embed.weight");
    w.patch_b = need(tensors, "patch_embed.bias");
    w.pos_embed = need(tensors, "pos_embed");
    check_shape(w.pos_embed, {cfg.token_count(), c}, "pos_embed");
    if (cfg.cls_token) w.cls_tok = need(tensors, "cls_token");
    if (cfg.distill_token) w.distill_tok = need(tensors, "distill_token");
    for (int l = 0; l < cfg.layers; ++l)
        w.layers.push_back(get_block<VitLayerWeights>(tensors, l, c, hidden));
    w.ln_f_gain = need(tensors, "ln_f.gain");
    w.ln_f_bias = need(tensors, "ln_f.bias");
    w.head_w = need(tensors, "head.weight");
    check_shape(w.head_w, {c, cfg.num_classes}, "head.weight");
    w.head_b = need(tensors, "head.bias");
    return w;
}

std::map<std::string, Tensor> lm_weights_to_tensors(const LmConfig& cfg, const LmWeights& w) {
    std::map<std::string, Tensor> out;
    out["tok_embed"] = w.tok_embed;
    out["pos_embed"] = w.pos_embed;
    for (int l = 0; l < cfg.layers; ++l) put_block(out, l, w.layers[static_cast<size_t>(l)]);
    out["ln_f.gain"] = w.ln_f_gain;
    out["ln_f.bias"] = w.ln_f_bias;
    out["head.weight"] = w.head_w;
    if (cfg.proj_in > 0) {
        out["vis_proj.weight"] = w.vis_proj_w;
        out["vis_proj.bias"] = w.vis_proj_b;
    }
    return out;
}

LmWeights lm_weights_from_tensors(const LmConfig& cfg,
                                  const std::map<std::string, Tensor>& tensors) {
    const int64_t c = cfg.dim, hidden = static_cast<int64_t>(cfg.mlp_ratio) * c;
    LmWeights w;
    w.tok_embed = need(tensors, "tok_embed");
    check_shape(w.tok_embed, {cfg.vocab_size, c}, "tok_embed");
    w.pos_embed = need(tensors, "pos_embed");
    check_shape(w.pos_embed, {cfg.max_seq, c}, "pos_embed");
    for (int l = 0; l < cfg.layers; ++l)
        w.layers.push_back(get_block<LmLayerWeights>(tensors, l, c, hidden));
    w.ln_f_gain = need(tensors, "ln_f.gain");
    w.ln_f_bias = need(tensors, "ln_f.bias");
    w.head_w = need(tensors, "head.weight");
    check_shape(w.head_w, {c, cfg.vocab_size}, "head.weight");
    if (cfg.proj_in > 0) {
        w.vis_proj_w = need(tensors, "vis_proj.weight");
        check_shape(w.vis_proj_w, {cfg.proj_in, c}, "vis_proj.weight");
        w.vis_proj_b = need(tensors, "vis_proj.bias");
    }
    return w;
}

void gen_model_file(const ExperimentConfig& cfg, const std::string& path) {
    if (cfg.model.kind == "vit") {
        const VitConfig vit = make_vit_config(cfg);
        write_snt1(path, vit_weights_to_tensors(vit, random_vit_weights(vit, cfg.data.seed)));
    } else {
        const LmConfig lm = make_lm_config(cfg);
        write_snt1(path, lm_weights_to_tensors(lm, random_lm_weights(lm, cfg.data.seed)));
    }
}

VitWeights obtain_vit_weights(const ExperimentConfig& cfg, const VitConfig& vit) {
    if (!cfg.model.weights.empty())
        return vit_weights_from_tensors(vit, read_snt1(cfg.model.weights));
    return random_vit_weights(vit, cfg.data.seed);
}

LmWeights obtain_lm_weights(const ExperimentConfig& cfg, const LmConfig& lm) {
    if (!cfg.model.weights.empty())
        return lm_weights_from_tensors(lm, read_snt1(cfg.model.weights));
    return random_lm_weights(lm, cfg.data.seed);
}

Tensor synth_images(const VitConfig& cfg, int batch, uint64_t seed, const std::string& generator) {
    Rng rng(seed);
    const int64_t s = cfg.image_size, p = cfg.patch, g = cfg.grid();
    if (generator == "uniform") return rng_uniform(rng, {batch, 3, s, s});
    if (generator == "gaussian") return rng_normal(rng, {batch, 3, s, s});
    if (generator == "duplicated_patches") {
        // Every odd patch is a copy of its even neighbor in row-major patch
        // order, so the bipartite split sees exact duplicates.
        Tensor img({batch, 3, s, s});
        for (int64_t bi = 0; bi < batch; ++bi) {
            Tensor base = rng_normal(rng, {3, p * p * ((g * g + 1) / 2)});
            for (int64_t pi = 0; pi < g * g; ++pi) {
                const int64_t src_patch = pi / 2;
                const int64_t gy = pi / g, gx = pi % g;
                for (int64_t ch = 0; ch < 3; ++ch)
                    for (int64_t py = 0; py < p; ++py)
                        for (int64_t px = 0; px < p; ++px)
                            img.at({bi, ch, gy * p + py, gx * p + px}) =
                                base.at({ch, src_patch * p * p + py * p + px});
            }
        }
        return img;
    }
    throw std::invalid_argument("synth_images: unknown generator '" + generator + "'");
}

Tensor synth_prompt_embeds(const LmConfig& cfg, const LmWeights& w, int prompt_len, uint64_t seed,
                           const std::string& generator) {
    if (prompt_len > cfg.max_seq)
        throw std::invalid_argument("synth_prompt_embeds: prompt exceeds max_seq");
    if (cfg.visual_end > prompt_len)
        throw std::invalid_argument("synth_prompt_embeds: visual span exceeds prompt");
    Rng rng(seed);
    const int64_t c = cfg.dim;
    Tensor out({1, prompt_len, c});
    for (int64_t i = 0; i < prompt_len; ++i) {
        const bool visual = i >= cfg.visual_start && i < cfg.visual_end;
        float* row = out.data() + i * c;
        if (!visual) {
            const int64_t id = static_cast<int64_t>(rng.next_below(
                static_cast<uint64_t>(cfg.vocab_size)));
            std::copy(w.tok_embed.data() + id * c, w.tok_embed.data() + (id + 1) * c, row);
            continue;
        }
        const int64_t vis_off = i - cfg.visual_start;
        if (generator == "duplicated_patches" && vis_off % 2 == 1) {
            std::copy(row - c, row, row);  // copy the previous visual token
            continue;
        }
        for (int64_t cc = 0; cc < c; ++cc) row[cc] = 0.02f * rng.normal();
    }
    return out;
}

double logit_mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("logit_mse: shape mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double top1_agreement(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b) || a.ndim() != 2)
        throw std::invalid_argument("top1_agreement: expected matching [B,K]");
    const int64_t batch = a.size(0), k = a.size(1);
    int agree = 0;
    for (int64_t bi = 0; bi < batch; ++bi) {
        const float* ra = a.data() + bi * k;
        const float* rb = b.data() + bi * k;
        const int64_t ia = std::max_element(ra, ra + k) - ra;
        const int64_t ib = std::max_element(rb, rb + k) - rb;
        if (ia == ib) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(batch);
}

void run_vit_csv(const ExperimentConfig& cfg, const std::string& csv_path) {
    const VitConfig vit = make_vit_config(cfg);
    const VitWeights w = obtain_vit_weights(cfg, vit);
    const Tensor images = synth_images(vit, cfg.data.batch, cfg.data.seed + 1,
                                       cfg.data.generator);
    const VitOutput out = vit_forward(images, vit, w);
    CsvWriter csv(csv_path);
    csv.header({"layer", "tokens_in", "tokens_out", "prune_r", "attention_flops", "ffn_flops"});
    uint64_t attn_total = 0, ffn_total = 0;
    int r_total = 0;
    for (size_t l = 0; l < out.traces.size(); ++l) {
        const auto& tr = out.traces[l];
        const auto& fl = out.flops.layers[l];
        csv.col(tr.layer_index)
            .col(tr.token_count_in)
            .col(tr.token_count_out)
            .col(tr.prune_r)
            .col(fl.attention_flops)
            .col(fl.ffn_flops);
        csv.end_row();
        attn_total += fl.attention_flops;
        ffn_total += fl.ffn_flops;
        r_total += tr.prune_r;
    }
    csv.col(std::string("total"))
        .col(out.traces.front().token_count_in)
        .col(out.traces.back().token_count_out)
        .col(r_total)
        .col(attn_total)
        .col(ffn_total);
    csv.end_row();
}

void run_metrics_csv(const ExperimentConfig& cfg, const std::string& csv_path) {
    if (cfg.model.kind != "vit")
        throw std::invalid_argument("metrics: only vit configs are supported");
    const VitConfig vit = make_vit_config(cfg);
    const VitWeights w = obtain_vit_weights(cfg, vit);
    const Tensor images = synth_images(vit, cfg.data.batch, cfg.data.seed + 1,
                                       cfg.data.generator);
    TraceFlags flags;
    flags.keys = true;
    flags.attention = true;
    const VitOutput out = vit_forward(images, vit, w, flags);
    CsvWriter csv(csv_path);
    csv.header({"layer", "token_count", "key_similarity", "cls_entropy", "token_entropy",
                "mean_cls_attention", "flops"});
    for (size_t l = 0; l < out.traces.size(); ++l) {
        const auto& tr = out.traces[l];
        const auto& fl = out.flops.layers[l];
        const DynamicsRecord rec =
            summarize_layer(tr.layer_index, tr.keys_head_avg, tr.attention, vit.cls_token,
                            fl.attention_flops + fl.ffn_flops + fl.other_flops);
        csv.col(rec.layer_index)
            .col(rec.token_count)
            .col(rec.key_similarity)
            .col(rec.cls_entropy)
            .col(rec.token_entropy)
            .col(rec.mean_cls_attention)
            .col(rec.flops);
        csv.end_row();
    }
}

namespace {

std::string join_schedule(const std::vector<int>& r_per_layer) {
    std::string s;
    for (size_t i = 0; i < r_per_layer.size(); ++i) {
        if (i) s += '|';
        s += std::to_string(r_per_layer[i]);
    }
    return s;
}

struct SweepPoint {
    std::vector<int> r_schedule;
    uint64_t total_flops = 0;
    double retained = 0.0;
    DynamicsRecord rec;
    double mse = 0.0;
    double top1 = 1.0;
};

// One sweep evaluation for a vit config: pruned vs unpruned on the same input.
SweepPoint eval_vit_point(const ExperimentConfig& cfg) {
    const VitConfig vit = make_vit_config(cfg);
    const VitWeights w = obtain_vit_weights(cfg, vit);
    const Tensor images = synth_images(vit, cfg.data.batch, cfg.data.seed + 1,
                                       cfg.data.generator);
    TraceFlags flags;
    flags.keys = true;
    flags.attention = true;
    const VitOutput pruned = vit_forward(images, vit, w, flags);
    VitConfig base = vit;
    base.prune_layers.clear();
    const VitOutput clean = vit_forward(images, base, w);
    SweepPoint pt;
    for (const auto& tr : pruned.traces) pt.r_schedule.push_back(tr.prune_r);
    pt.total_flops = pruned.flops.total();
    pt.retained = static_cast<double>(pruned.traces.back().token_count_out);
    const auto& last = pruned.traces.back();
    pt.rec = summarize_layer(last.layer_index, last.keys_head_avg, last.attention, vit.cls_token,
                             0);
    pt.mse = logit_mse(pruned.logits, clean.logits);
    pt.top1 = top1_agreement(pruned.logits, clean.logits);
    return pt;
}

// LM analogue: drift of the last prompt logits; metrics from the final
// layer's cache keys and captured attention (column 0 plays the class role).
SweepPoint eval_lm_point(const ExperimentConfig& cfg) {
    const LmConfig lm = make_lm_config(cfg);
    const LmWeights w = obtain_lm_weights(cfg, lm);
    const int prompt_len = std::min(lm.max_seq, lm.visual_end + 8);
    const Tensor prompt = synth_prompt_embeds(lm, w, prompt_len, cfg.data.seed + 1,
                                              cfg.data.generator);
    Tensor attn;
    const PrefillResult pruned = prefill(prompt, lm, w, &attn);
    LmConfig base = lm;
    base.prune.mode = PruneMode::Off;
    const PrefillResult clean = prefill(prompt, base, w);

    SweepPoint pt;
    pt.r_schedule = pruned.r_schedule;
    pt.total_flops = pruned.flops.total();
    pt.retained = retained_average(pruned.visual_retained_per_layer);

    const auto& final_cache = pruned.cache.layers.back();
    const int64_t len = final_cache.len(), c = lm.dim, dh = c / lm.heads;
    Tensor keys_avg({1, len, dh});
    for (int64_t i = 0; i < len; ++i) {
        const float* krow = final_cache.keys.data() + i * c;
        float* dst = keys_avg.data() + i * dh;
        for (int64_t hi = 0; hi < lm.heads; ++hi)
            for (int64_t cc = 0; cc < dh; ++cc)
                dst[cc] += krow[hi * dh + cc] / static_cast<float>(lm.heads);
    }
    pt.rec.token_count = static_cast<int>(len);
    pt.rec.key_similarity = key_similarity_score(keys_avg)[0];
    const int64_t t_attn = attn.size(0);
    Tensor last_row(std::vector<int64_t>{t_attn},
                    std::vector<float>(attn.data() + (t_attn - 1) * t_attn,
                                       attn.data() + t_attn * t_attn));
    pt.rec.cls_entropy = cls_attention_entropy(last_row);
    pt.rec.token_entropy = token_attention_entropy(attn, /*cls_present=*/false);
    pt.rec.mean_cls_attention = mean_cls_attention(attn);

    Tensor pl(std::vector<int64_t>{1, lm.vocab_size},
              std::vector<float>(pruned.last_logits.vec()));
    Tensor cl(std::vector<int64_t>{1, lm.vocab_size},
              std::vector<float>(clean.last_logits.vec()));
    pt.mse = logit_mse(pl, cl);
    pt.top1 = top1_agreement(pl, cl);
    return pt;
}

ExperimentConfig apply_axis(const ExperimentConfig& cfg, const std::string& axis, double value) {
    ExperimentConfig out = cfg;
    if (axis == "tau") {
        out.prune.tau = value;
    } else if (axis == "k") {
        out.prune.k = static_cast<int>(value);
    } else if (axis == "gamma") {
        out.prune.gamma = value;
    } else if (axis == "constant_r") {
        out.prune.constant_r = static_cast<int>(value);
    } else if (axis == "layer_count") {
        // Prune the first v layers.
        const int v = static_cast<int>(value);
        if (v < 0 || v > cfg.model.layers)
            throw std::invalid_argument("sweep: layer_count out of range");
        out.prune.layers = v == 0 ? "0,0" : "0.." + std::to_string(v - 1);
        if (v == 0) out.prune.mode = "off";
    } else if (axis == "start_layer") {
        // Shift a half-depth pruning window to start at v.
        const int v = static_cast<int>(value);
        const int hi = std::min(cfg.model.layers - 1, v + cfg.model.layers / 2 - 1);
        if (v < 0 || v >= cfg.model.layers)
            throw std::invalid_argument("sweep: start_layer out of range");
        out.prune.layers = std::to_string(v) + ".." + std::to_string(hi);
    } else {
        throw std::invalid_argument("sweep: unknown axis '" + axis + "'");
    }
    return out;
}

}  // namespace

void run_sweep_csv(const ExperimentConfig& cfg, const std::string& axis,
                   const std::vector<double>& values, const std::string& csv_path) {
    if (values.empty()) throw std::invalid_argument("sweep: empty value list");
    CsvWriter csv(csv_path);
    csv.header({"axis", "value", "r_schedule", "total_flops", "retained_tokens",
                "key_similarity", "cls_entropy", "token_entropy", "mean_cls_attention",
                "logit_mse", "top1_agreement"});
    for (double v : values) {
        const ExperimentConfig point_cfg = apply_axis(cfg, axis, v);
        const SweepPoint pt =
            cfg.model.kind == "vit" ? eval_vit_point(point_cfg) : eval_lm_point(point_cfg);
        csv.col(axis)
            .col(v)
            .col(join_schedule(pt.r_schedule))
            .col(pt.total_flops)
            .col(pt.retained)
            .col(pt.rec.key_similarity)
            .col(pt.rec.cls_entropy)
            .col(pt.rec.token_entropy)
            .col(pt.rec.mean_cls_attention)
            .col(pt.mse)
            .col(pt.top1);
        csv.end_row();
    }
}

namespace {

// Fig. 2-style recipe helpers: percent-to-count uses floor on the
// unprotected token count.
int pct_count(int unprotected, double pct) {
    return static_cast<int>(std::floor(pct * unprotected));
}

struct Fig2Row {
    std::string strategy;
    std::string schedule;
    int layer;
    std::vector<int> r_schedule;
    uint64_t total_flops;
    double mse;
    double top1;
};

PruneMode strategy_mode(const std::string& strategy) {
    if (strategy == "attn_drop") return PruneMode::AttentionDrop;
    if (strategy == "sim_merge") return PruneMode::Merge;
    if (strategy == "sim_drop") return PruneMode::ConstantDrop;
    if (strategy == "random") return PruneMode::RandomDrop;
    throw std::invalid_argument("fig2: unknown strategy '" + strategy + "'");
}

}  // namespace

void recipe_fig2_csv(const ExperimentConfig& cfg, const std::string& csv_path) {
    if (cfg.model.kind != "vit")
        throw std::invalid_argument("fig2: only vit configs are supported");
    ExperimentConfig base_cfg = cfg;
    base_cfg.prune.mode = "off";
    const VitConfig vit_plain = [&] {
        VitConfig v = make_vit_config(base_cfg);
        v.prune_layers.clear();
        return v;
    }();
    const VitWeights w = obtain_vit_weights(cfg, vit_plain);
    const Tensor images = synth_images(vit_plain, cfg.data.batch, cfg.data.seed + 1,
                                       cfg.data.generator);
    const VitOutput clean = vit_forward(images, vit_plain, w);

    const int layers = vit_plain.layers;
    const int unprot0 = vit_plain.token_count() - vit_plain.protected_count();
    std::vector<Fig2Row> rows;

    auto run_one = [&](const std::string& strategy, const std::string& schedule, int layer,
                       const VitConfig& v) {
        const VitOutput out = vit_forward(images, v, w);
        Fig2Row row;
        row.strategy = strategy;
        row.schedule = schedule;
        row.layer = layer;
        for (const auto& tr : out.traces) row.r_schedule.push_back(tr.prune_r);
        row.total_flops = out.flops.total();
        row.mse = logit_mse(out.logits, clean.logits);
        row.top1 = top1_agreement(out.logits, clean.logits);
        rows.push_back(std::move(row));
    };

    for (const std::string strategy : {"attn_drop", "sim_merge", "sim_drop", "random"}) {
        const PruneMode mode = strategy == "sim_drop" ? PruneMode::ConstantDrop
                                                      : strategy_mode(strategy);
        // Single layer: 40% of the unprotected tokens at one layer.
        for (int l = 0; l < layers; ++l) {
            VitConfig v = vit_plain;
            v.prune.mode = mode;
            v.prune.tau = static_cast<float>(cfg.prune.tau);
            v.prune.k_neighbors = cfg.prune.k;
            v.prune.gamma = static_cast<float>(cfg.prune.gamma);
            v.prune.seed = cfg.data.seed;
            v.prune.vote_rate = false;
            v.prune.constant_r = pct_count(unprot0, 0.40);
            v.prune_layers = {l};
            run_one(strategy, "single_layer", l, v);
        }
        // Progressive: a constant 100/depth percent per layer up to a depth.
        for (int depth = 0; depth < layers; ++depth) {
            VitConfig v = vit_plain;
            v.prune.mode = mode;
            v.prune.tau = static_cast<float>(cfg.prune.tau);
            v.prune.k_neighbors = cfg.prune.k;
            v.prune.gamma = static_cast<float>(cfg.prune.gamma);
            v.prune.seed = cfg.data.seed;
            v.prune.vote_rate = false;
            const int r_const = pct_count(unprot0, 1.0 / layers);
            int remaining = unprot0;
            for (int l = 0; l <= depth; ++l) {
                PruneConfig pc = v.prune;
                // Bipartite strategies can drop at most the src half at one
                // layer; clamp the constant amount against that bound.
                const int ns = (remaining + 1) / 2;
                pc.constant_r = (mode == PruneMode::ConstantDrop || mode == PruneMode::Merge)
                                    ? std::min(r_const, ns)
                                    : std::min(r_const, remaining);
                v.prune_layers.insert(l);
                v.prune_overrides[l] = pc;
                remaining -= pc.constant_r;
            }
            run_one(strategy, "progressive", depth, v);
        }
        // Voting over the first half of the layers.
        {
            VitConfig v = vit_plain;
            v.prune.mode = strategy == "sim_drop" ? PruneMode::Saint : mode;
            v.prune.tau = static_cast<float>(cfg.prune.tau);
            v.prune.k_neighbors = cfg.prune.k;
            v.prune.gamma = static_cast<float>(cfg.prune.gamma);
            v.prune.seed = cfg.data.seed;
            v.prune.vote_rate = true;
            for (int l = 0; l < layers / 2; ++l) v.prune_layers.insert(l);
            run_one(strategy, "voting_first_half", layers / 2 - 1, v);
        }
    }

    CsvWriter csv(csv_path);
    csv.header({"strategy", "schedule", "layer", "r_schedule", "total_flops", "logit_mse",
                "top1_agreement"});
    for (const auto& row : rows) {
        csv.col(row.strategy)
            .col(row.schedule)
            .col(row.layer)
            .col(join_schedule(row.r_schedule))
            .col(row.total_flops)
            .col(row.mse)
            .col(row.top1);
        csv.end_row();
    }
}

void run_lm_csv(const ExperimentConfig& cfg, const std::string& csv_path,
                std::optional<VlmMode> vlm_mode, int decode_steps) {
    if (cfg.model.kind != "lm")
        throw std::invalid_argument("run-lm: config kind must be 'lm'");
    LmConfig lm = make_lm_config(cfg);
    CsvWriter csv(csv_path);
    csv.header({"phase", "index", "tokens", "visual_retained", "prune_r", "token_id", "flops"});

    if (!vlm_mode.has_value()) {
        // Standalone prefill + greedy decode on a synthetic prompt.
        const LmWeights w = obtain_lm_weights(cfg, lm);
        const int prompt_len = std::min(lm.max_seq, lm.visual_end + 8);
        const Tensor prompt = synth_prompt_embeds(lm, w, prompt_len, cfg.data.seed + 1,
                                                  cfg.data.generator);
        PrefillResult pre = prefill(prompt, lm, w);
        for (int l = 0; l < lm.layers; ++l) {
            const auto& fl = pre.flops.layers[static_cast<size_t>(l)];
            csv.col(std::string("prefill"))
                .col(l)
                .col(pre.cache.layers[static_cast<size_t>(l)].len())
                .col(pre.visual_retained_per_layer[static_cast<size_t>(l)])
                .col(pre.r_schedule[static_cast<size_t>(l)])
                .col(-1)
                .col(fl.attention_flops + fl.ffn_flops + fl.other_flops);
            csv.end_row();
        }
        Tensor logits = pre.last_logits;
        for (int step = 0; step < decode_steps; ++step) {
            int tok = 0;
            for (int64_t i = 1; i < logits.numel(); ++i)
                if (logits[i] > logits[tok]) tok = static_cast<int>(i);
            const uint64_t step_flops = decode_step_flops(pre.cache, lm);
            Tensor embed({lm.dim});
            std::copy(w.tok_embed.data() + static_cast<int64_t>(tok) * lm.dim,
                      w.tok_embed.data() + static_cast<int64_t>(tok + 1) * lm.dim, embed.data());
            logits = decode_step(pre.cache, embed, lm, w);
            csv.col(std::string("decode"))
                .col(step)
                .col(pre.cache.layers.back().len())
                .col(-1)
                .col(0)
                .col(tok)
                .col(step_flops);
            csv.end_row();
        }
        csv.col(std::string("summary"))
            .col(-1)
            .col(prompt_len)
            .col(retained_average(pre.visual_retained_per_layer))
            .col(0)
            .col(-1)
            .col(pre.flops.total());
        csv.end_row();
        return;
    }

    // Three-placement VLM run on synthetic visual features.
    const LmWeights w = obtain_lm_weights(cfg, lm);
    const int nv = lm.visual_end - lm.visual_start;
    Rng rng(cfg.data.seed + 2);
    VlmInputs inputs;
    inputs.visual_tokens = rng_normal(rng, {1, nv, lm.proj_in});
    inputs.visual_keys = rng_normal(rng, {1, nv, lm.dim / lm.heads});
    if (cfg.data.generator == "duplicated_patches") {
        for (int i = 1; i < nv; i += 2) {
            std::copy(inputs.visual_tokens.data() + (i - 1) * lm.proj_in,
                      inputs.visual_tokens.data() + i * lm.proj_in,
                      inputs.visual_tokens.data() + i * lm.proj_in);
            const int64_t dk = inputs.visual_keys.size(2);
            std::copy(inputs.visual_keys.data() + (i - 1) * dk,
                      inputs.visual_keys.data() + i * dk,
                      inputs.visual_keys.data() + i * dk);
        }
    }
    for (int i = 0; i < lm.visual_start; ++i)
        inputs.text_prefix.push_back(
            static_cast<int>(rng.next_below(static_cast<uint64_t>(lm.vocab_size))));
    for (int i = 0; i < 8; ++i)
        inputs.text_suffix.push_back(
            static_cast<int>(rng.next_below(static_cast<uint64_t>(lm.vocab_size))));

    const RunModeResult res = run_mode(*vlm_mode, inputs, lm, w, decode_steps);
    for (int l = 0; l < lm.layers; ++l) {
        csv.col(std::string("prefill"))
            .col(l)
            .col(-1)
            .col(res.visual_retained_per_layer[static_cast<size_t>(l)])
            .col(-1)
            .col(-1)
            .col(res.flops.layers[static_cast<size_t>(l)].attention_flops +
                 res.flops.layers[static_cast<size_t>(l)].ffn_flops);
        csv.end_row();
    }
    for (size_t step = 0; step < res.generated.size(); ++step) {
        csv.col(std::string("decode"))
            .col(static_cast<int>(step))
            .col(-1)
            .col(-1)
            .col(0)
            .col(res.generated[step])
            .col(res.flops.layers[static_cast<size_t>(lm.layers) + step].other_flops);
        csv.end_row();
    }
    csv.col(std::string("summary"))
        .col(-1)
        .col(res.prompt_len)
        .col(res.avg_retained_visual)
        .col(res.visual_after_pre)
        .col(-1)
        .col(res.flops.total());
    csv.end_row();
}

void run_flops_csv(const FlopsArch& arch, const std::vector<int64_t>& schedule,
                   const std::string& csv_path) {
    const FlopsLedger ledger = flops_model(arch, schedule);
    CsvWriter csv(csv_path);
    csv.header({"component", "tokens", "attention_flops", "ffn_flops", "other_flops"});
    for (size_t l = 0; l < ledger.layers.size(); ++l) {
        csv.col(std::to_string(l))
            .col(schedule[l])
            .col(ledger.layers[l].attention_flops)
            .col(ledger.layers[l].ffn_flops)
            .col(ledger.layers[l].other_flops);
        csv.end_row();
    }
    csv.col(std::string("patch_embed")).col(0).col(uint64_t{0}).col(uint64_t{0})
        .col(ledger.patch_embed_flops);
    csv.end_row();
    csv.col(std::string("head")).col(0).col(uint64_t{0}).col(uint64_t{0}).col(ledger.head_flops);
    csv.end_row();
    csv.col(std::string("total")).col(0).col(uint64_t{0}).col(uint64_t{0}).col(ledger.total());
    csv.end_row();
}

}  // namespace saint
