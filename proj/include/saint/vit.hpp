#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "saint/flops.hpp"
#include "saint/prune.hpp"
#include "saint/tensor.hpp"

namespace saint {

// Small pre-norm ViT-style encoder. The prune hook sits between the
// attention block and the FFN of each selected layer and sees that layer's
// head-averaged keys.
struct VitConfig {
    int layers = 8;
    int dim = 128;
    int heads = 4;
    int mlp_ratio = 4;
    int patch = 16;
    int image_size = 112;
    bool cls_token = true;
    bool distill_token = false;
    int num_classes = 10;

    PruneConfig prune;                       // base hook config
    std::set<int> prune_layers;              // layers where the hook fires
    std::map<int, PruneConfig> prune_overrides;

    int protected_count() const { return (cls_token ? 1 : 0) + (distill_token ? 1 : 0); }
    int grid() const { return image_size / patch; }
    int token_count() const { return grid() * grid() + protected_count(); }
    void validate() const;
};

struct VitLayerWeights {
    Tensor ln1_gain, ln1_bias;  // [C]
    Tensor qkv_w, qkv_b;        // [C, 3C], [3C]
    Tensor proj_w, proj_b;      // [C, C], [C]
    Tensor ln2_gain, ln2_bias;  // [C]
    Tensor fc1_w, fc1_b;        // [C, rho*C], [rho*C]
    Tensor fc2_w, fc2_b;        // [rho*C, C], [C]
};

struct VitWeights {
    Tensor patch_w, patch_b;    // [3*P*P, C], [C]
    Tensor pos_embed;           // [token_count, C]
    Tensor cls_tok;             // [C], present when cls_token
    Tensor distill_tok;         // [C], present when distill_token
    std::vector<VitLayerWeights> layers;
    Tensor ln_f_gain, ln_f_bias;
    Tensor head_w, head_b;      // [C, num_classes], [num_classes]
};

// Seeded Gaussian init (scale 0.02); same seed gives identical weights.
VitWeights random_vit_weights(const VitConfig& cfg, uint64_t seed);

struct TraceFlags {
    bool keys = false;       // capture head-averaged keys per layer
    bool attention = false;  // capture full [B,H,N,N] attention per layer
};

struct LayerTrace {
    int layer_index = 0;
    int token_count_in = 0;
    int token_count_out = 0;
    int prune_r = 0;
    Tensor keys_head_avg;  // [B, N_in, Dh] (pre-prune), when requested
    Tensor attention;      // [B, H, N_in, N_in], when requested
};

struct VitOutput {
    Tensor logits;  // [B, num_classes]
    Tensor pooled;  // [B, C] final representation fed to the head
    std::vector<LayerTrace> traces;
    std::vector<int64_t> token_schedule;  // tokens entering each layer
    FlopsLedger flops;                    // realized cost of this forward
};

// Unfold + linear patch embedding; prepends class/distill tokens and adds the
// learned positional embedding (before any pruning).
Tensor patch_embed(const Tensor& image, const VitConfig& cfg, const VitWeights& w);

// Full forward from an image [B, 3, S, S].
VitOutput vit_forward(const Tensor& image, const VitConfig& cfg, const VitWeights& w,
                      TraceFlags flags = {});

// Forward from pre-built token embeddings [B, N, C] (positional information
// assumed already attached); skips patch embedding.
VitOutput vit_forward_embeds(const Tensor& embeds, const VitConfig& cfg, const VitWeights& w,
                             TraceFlags flags = {});

}  // namespace saint
