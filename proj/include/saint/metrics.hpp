#pragma once

#include <cstdint>
#include <vector>

#include "saint/tensor.hpp"

namespace saint {

// Per-layer token-dynamics snapshot: head-averaged key similarity, the two
// attention entropies (natural log) and the mean attention mass on the class
// token, plus the realized cost of the layer.
struct DynamicsRecord {
    int layer_index = 0;
    int token_count = 0;
    float key_similarity = 0.0f;      // mean pairwise cosine of head-averaged keys
    float cls_entropy = 0.0f;         // entropy of the class token's attention row
    float token_entropy = 0.0f;       // mean entropy of the non-class rows
    float mean_cls_attention = 0.0f;  // mean attention mass received by the class token
    uint64_t flops = 0;
};

// [B,H,N,Dh] -> [B,N,Dh], plain mean over the head axis (no normalization).
Tensor head_avg_keys(const Tensor& keys_per_head);

// Mean pairwise cosine similarity over all ordered key pairs, diagonal
// included, one value per batch item. Keys with exactly zero norm are a
// degenerate input and raise std::domain_error.
std::vector<float> key_similarity_score(const Tensor& keys);

// Entropy -sum p ln p of one attention row (0 ln 0 := 0). The row must be a
// probability distribution: entries nonnegative, sum within 1e-5 of 1.
float cls_attention_entropy(const Tensor& attn_row);

// Mean row entropy of an [N,N] attention matrix. When cls_present, the first
// row is excluded and the mean runs over the remaining N-1 rows; for N == 1
// there are no such rows and the result is 0.
float token_attention_entropy(const Tensor& attn, bool cls_present);

// Mean of column 0 of an [N,N] row-stochastic attention matrix.
float mean_cls_attention(const Tensor& attn);

// [B,H,N,N] -> [B,N,N], mean over heads.
Tensor head_avg_attention(const Tensor& attn);

// Batch-mean DynamicsRecord for one layer from its head-averaged keys
// [B,N,Dh] and per-head attention [B,H,N,N].
DynamicsRecord summarize_layer(int layer_index, const Tensor& keys_head_avg,
                               const Tensor& attention, bool cls_present, uint64_t flops);

}  // namespace saint
