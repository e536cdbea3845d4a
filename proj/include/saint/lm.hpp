#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "saint/flops.hpp"
#include "saint/prune.hpp"
#include "saint/tensor.hpp"

namespace saint {

// Small decoder-only LM (learned absolute positions, pre-norm blocks) with a
// per-layer KV cache. Pruning runs only during prefill, only on the visual
// span, between attention and FFN of the selected layers; survivors keep
// their original position ids. Batch size is fixed at 1.
struct LmConfig {
    int layers = 32;
    int dim = 64;
    int heads = 4;
    int mlp_ratio = 4;
    int vocab_size = 256;
    int max_seq = 1024;
    int proj_in = 0;  // input width of the visual projection; 0 = no projection

    std::set<int> prune_layers = {8, 9, 10, 11, 12, 13, 14, 15, 16};
    PruneConfig prune;          // mode Off or Saint; tau may vary per layer below
    std::vector<float> tau_per_layer;  // optional per-layer tau table, size == layers

    int visual_start = 0;  // [start, end) span of visual tokens in the prompt
    int visual_end = 0;

    float layer_tau(int layer) const {
        return tau_per_layer.empty() ? prune.tau
                                     : tau_per_layer[static_cast<size_t>(layer)];
    }
    void validate() const;
};

struct LmLayerWeights {
    Tensor ln1_gain, ln1_bias;
    Tensor qkv_w, qkv_b;
    Tensor proj_w, proj_b;
    Tensor ln2_gain, ln2_bias;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;
};

struct LmWeights {
    Tensor tok_embed;  // [V, C]
    Tensor pos_embed;  // [max_seq, C]
    std::vector<LmLayerWeights> layers;
    Tensor ln_f_gain, ln_f_bias;
    Tensor head_w;       // [C, V]
    Tensor vis_proj_w;   // [proj_in, C], empty when proj_in == 0
    Tensor vis_proj_b;   // [C]
};

LmWeights random_lm_weights(const LmConfig& cfg, uint64_t seed);

// Per-layer compressed cache. Rows are stored in position order; pos_ids are
// the original prompt indices and stay strictly increasing.
struct KvCache {
    struct Layer {
        std::vector<float> keys;    // [len][C]
        std::vector<float> values;  // [len][C]
        std::vector<int> pos_ids;
        int len() const { return static_cast<int>(pos_ids.size()); }
    };
    std::vector<Layer> layers;
    int dim = 0;
    int heads = 0;
    int max_seq = 0;
    int next_pos_id = 0;  // original id assigned to the next decoded token
};

struct PrefillResult {
    KvCache cache;
    Tensor last_logits;  // [V]
    std::vector<int> r_schedule;                       // tokens dropped per layer
    std::vector<std::vector<int>> dropped_per_layer;   // original ids dropped at each layer
    std::vector<int> visual_retained_per_layer;        // visual tokens after each layer's hook
    FlopsLedger flops;
};

// Full-prompt forward building the cache. prompt_embeds: [1, T, C] without
// positional embeddings (added inside from original ids 0..T-1). When
// last_attention is given it receives the final layer's head-averaged causal
// attention over the tokens present at that layer (square, rows stochastic).
PrefillResult prefill(const Tensor& prompt_embeds, const LmConfig& cfg, const LmWeights& w,
                      Tensor* last_attention = nullptr);

// One greedy-decode step: appends the token's KV to every layer.
Tensor decode_step(KvCache& cache, const Tensor& token_embed, const LmConfig& cfg,
                   const LmWeights& w);

// Analytic cost of one decode step given current cache lengths.
uint64_t decode_step_flops(const KvCache& cache, const LmConfig& cfg);

// One similarity-aware pass over pre-projection visual tokens. With
// target_retain set, r is forced to visual_count - target_retain; otherwise
// the voting rate applies. Survivors keep positional order.
struct PreLlmResult {
    Tensor tokens;  // [1, Nv - r, C]
    std::vector<int> kept;  // indices into the input visual sequence
    int r = 0;
};
PreLlmResult pre_llm_prune(const Tensor& visual_tokens, const Tensor& keys,
                           const PruneConfig& cfg, std::optional<int> target_retain = {});

// Layer-weighted mean of retained visual tokens across LM layers (the
// token-retention comparison axis).
double retained_average(const std::vector<int>& retained_per_layer);

enum class VlmMode { VitOnly, LlmOnly, Hybrid };

struct VlmInputs {
    Tensor visual_tokens;        // [1, Nv, proj_in] encoder output, pre projection
    Tensor visual_keys;          // [1, Nv, Dk] penultimate-layer head-averaged keys
    std::vector<int> text_prefix;  // token ids before the visual span
    std::vector<int> text_suffix;  // token ids after the visual span
};

struct RunModeResult {
    std::vector<int> generated;
    int prompt_len = 0;
    int visual_after_pre = 0;                 // visual tokens entering the LM
    std::vector<int> visual_retained_per_layer;
    double avg_retained_visual = 0.0;
    FlopsLedger flops;                        // prefill + decode
};

// The three pruning placements: before the projection (VitOnly), inside the
// LM during prefill (LlmOnly), or both (Hybrid, pre_llm_fraction of the
// visual tokens removed up front).
RunModeResult run_mode(VlmMode mode, const VlmInputs& inputs, const LmConfig& cfg,
                       const LmWeights& w, int decode_steps, double pre_llm_fraction = 0.3,
                       std::optional<int> pre_target_retain = {});

}  // namespace saint
