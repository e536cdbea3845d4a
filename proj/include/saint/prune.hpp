#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "saint/tensor.hpp"

namespace saint {

enum class PruneMode { Off, Saint, AttentionDrop, Merge, RandomDrop, ConstantDrop };

// How a drop decision writes its survivors back into the sequence.
// ScoreOrder keeps the surviving src tokens in descending-score order ahead
// of the dst block, which is safe for permutation-equivariant encoders.
// PositionalOrder re-sorts survivors by original position, required wherever
// order is semantic (causal LM).
enum class OrderPolicy { ScoreOrder, PositionalOrder };

struct PruneConfig {
    PruneMode mode = PruneMode::Saint;
    float tau = 0.75f;       // similarity threshold for a graph edge
    int k_neighbors = 5;     // minimum degree for a token to vote as redundant
    float gamma = 10.0f;     // scale of the mean-similarity term in the score
    int protected_count = 0; // class/distill tokens at the sequence front
    int constant_r = 0;      // fixed drop count for ConstantDrop
    uint64_t seed = 0;       // RandomDrop stream
    // Baseline modes normally use constant_r; with vote_rate set they take r
    // from the degree vote instead (the voting schedule applied to every
    // strategy). Saint mode always votes.
    bool vote_rate = false;

    bool operator==(const PruneConfig&) const = default;

    void validate() const;   // throws std::invalid_argument on bad fields
};

// Thresholded bipartite similarity graph between the src (even-offset) and
// dst (odd-offset) halves of the unprotected tokens.
struct BipartiteSimGraph {
    Tensor scores;               // [B, Ns, Nd] cosine similarities
    std::vector<uint8_t> valid;  // B*Ns*Nd, scores >= tau
    std::vector<int> degrees;    // B*Ns, count of valid edges per src token
    int batch = 0;
    int src_count = 0;
    int dst_count = 0;
    int zero_norm_keys = 0;      // diagnostic: keys normalized to the zero vector
};

// Outcome of a drop decision. r is shared batch-wide so pruned batches stay
// rectangular; the kept src sets may differ per item.
struct PruneDecision {
    int seq_len = 0;
    int protected_count = 0;
    int src_count = 0;
    int dst_count = 0;
    int r = 0;
    bool identity = true;  // apply() returns the input bit-identically
    // Per item: src-set indices at ranks r..Ns-1 of the descending-score
    // order (stable; ties keep the lower src index first).
    std::vector<std::vector<int>> kept_src_ranks;
    std::vector<std::vector<float>> scores_snapshot;  // per-src redundancy scores
};

// Alternating split of the unprotected positions: even offsets form src,
// odd offsets form dst. Positions are absolute into the full sequence.
// Requires seq_len - protected_count >= 2.
std::pair<std::vector<int>, std::vector<int>> split_bipartite(int seq_len, int protected_count);

// L2-normalizes both key sets, then scores[b][i][j] = src_i . dst_j.
// Zero-norm keys normalize to the zero vector (their similarities are 0) and
// are counted into *zero_norm_count when provided.
Tensor similarity_matrix(const Tensor& src_keys, const Tensor& dst_keys,
                         int* zero_norm_count = nullptr);

// Degree of each src node: number of dst entries with score >= tau
// (inclusive comparison). Optionally exports the validity mask.
std::vector<int> node_degrees(const Tensor& scores, float tau,
                              std::vector<uint8_t>* valid_out = nullptr);

// Batch-level vote: R_b = #{i : degree >= k} per item, r = floor(mean_b R_b).
int vote_prune_rate(const std::vector<int>& degrees, int batch, int src_count, int k_neighbors);

// Redundancy score per src node (flattened B*Ns):
//   degree > 0:  d * exp(gamma * (m - tau)), m = mean similarity over valid edges
//   degree == 0: mean similarity over all dst tokens
std::vector<float> redundancy_scores(const BipartiteSimGraph& graph, float tau, float gamma);

// Splits the unprotected keys, builds the thresholded graph.
// keys: [B, N, D]; the first protected_count tokens are excluded.
BipartiteSimGraph build_graph(const Tensor& keys, int protected_count, float tau);

// Full voting pipeline: graph, vote, rank. Sequences too short to split
// (N - protected < 2) and r == 0 both yield an identity decision.
PruneDecision saint_decide(const Tensor& keys, const PruneConfig& cfg);

// Same ranking but a caller-fixed r instead of the vote. r must be <= Ns.
PruneDecision constant_decide(const Tensor& keys, const PruneConfig& cfg, int r);

// Absolute token positions each batch item keeps, in output order
// (protected prefix first, then src/dst per the policy).
std::vector<std::vector<int>> kept_positions(const PruneDecision& decision, OrderPolicy policy);

// Gathers surviving rows: [B, N, C] -> [B, N - r, C].
Tensor apply_decision(const Tensor& tokens, const PruneDecision& decision, OrderPolicy policy);

// Drops the r unprotected tokens with the lowest class-token attention mass
// (stable ties by position). cls_rows: [B, N] attention row of the class token.
Tensor attention_drop(const Tensor& tokens, const Tensor& cls_rows, int r, int protected_count);

// Merged tokens carry a size weight for proportional attention downstream.
struct MergeResult {
    Tensor tokens;  // [B, N - r, C]
    Tensor sizes;   // [B, N - r]
};

// ToMe-style merge: the r src tokens with the highest max-similarity are
// size-weighted-averaged into their best dst match. sizes_in defaults to
// all ones and must be [B, N] when given.
MergeResult similarity_merge(const Tensor& tokens, const Tensor& keys, int r, int protected_count,
                             const Tensor* sizes_in = nullptr);

// Uniform sample of r unprotected positions, without replacement, seeded.
Tensor random_drop(const Tensor& tokens, int r, int protected_count, uint64_t seed);

// Redundancy ranking with a fixed drop count (no voting).
Tensor constant_drop(const Tensor& tokens, const Tensor& keys, const PruneConfig& cfg, int r);

}  // namespace saint
