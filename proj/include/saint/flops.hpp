#pragma once

#include <cstdint>
#include <vector>

namespace saint {

// Analytic cost model for a pre-norm transformer encoder.
//
// Counting convention: one multiply-accumulate = one FLOP (the convention
// used by the common profiler-style GFLOP tables this model is checked
// against). Set flops_per_mac = 2 to count multiply and add separately.
// Per layer with N tokens, width C and MLP ratio rho:
//   attention = 4*N*C^2 + 2*N^2*C     (QKV + output projections, scores,
//                                      weighted sum)
//   ffn       = 2*rho*N*C^2           (two C <-> rho*C projections)
// Patch embedding adds P^2 * in_channels * C per patch and is included by
// default; the classifier head (C * num_classes) is excluded by default.
struct FlopsArch {
    int64_t dim = 768;       // C
    int64_t mlp_ratio = 4;   // rho
    int64_t patch = 16;      // P
    int64_t image_size = 224;
    int64_t in_channels = 3;
    int64_t num_classes = 1000;
    bool include_patch_embed = true;
    bool include_head = false;
    int64_t flops_per_mac = 1;
};

struct FlopsLedger {
    struct Entry {
        uint64_t attention_flops = 0;
        uint64_t ffn_flops = 0;
        uint64_t other_flops = 0;
    };
    std::vector<Entry> layers;
    uint64_t patch_embed_flops = 0;
    uint64_t head_flops = 0;

    // Total is the sum of every component above; tested as an invariant.
    uint64_t total() const {
        uint64_t t = patch_embed_flops + head_flops;
        for (const auto& e : layers) t += e.attention_flops + e.ffn_flops + e.other_flops;
        return t;
    }
};

// Per-layer cost pieces, reused by the realized ledgers of the model stacks.
uint64_t attention_flops(int64_t tokens, int64_t dim, int64_t flops_per_mac = 1);
uint64_t ffn_flops(int64_t tokens, int64_t dim, int64_t mlp_ratio = 4, int64_t flops_per_mac = 1);

// token_schedule holds the token count of each layer; its length is the
// layer count. Empty schedules are rejected.
FlopsLedger flops_model(const FlopsArch& arch, const std::vector<int64_t>& token_schedule);

}  // namespace saint
