#include "saint/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "saint/rng.hpp"

namespace saint {

void PruneConfig::validate() const {
    if (!(tau >= -1.0f && tau <= 1.0f))
        throw std::invalid_argument("PruneConfig: tau out of [-1,1]");
    if (k_neighbors < 1) throw std::invalid_argument("PruneConfig: k_neighbors must be >= 1");
    if (gamma < 0.0f) throw std::invalid_argument("PruneConfig: gamma must be >= 0");
    if (protected_count < 0)
        throw std::invalid_argument("PruneConfig: protected_count must be >= 0");
    if (constant_r < 0) throw std::invalid_argument("PruneConfig: constant_r must be >= 0");
}

std::pair<std::vector<int>, std::vector<int>> split_bipartite(int seq_len, int protected_count) {
    if (protected_count < 0 || protected_count >= seq_len)
        throw std::invalid_argument("split_bipartite: protected_count out of range");
    const int unprotected = seq_len - protected_count;
    if (unprotected < 2)
        throw std::invalid_argument("split_bipartite: need at least 2 unprotected tokens, got " +
                                    std::to_string(unprotected));
    std::vector<int> src, dst;
    src.reserve(static_cast<size_t>((unprotected + 1) / 2));
    dst.reserve(static_cast<size_t>(unprotected / 2));
    for (int off = 0; off < unprotected; ++off) {
        if (off % 2 == 0)
            src.push_back(protected_count + off);
        else
            dst.push_back(protected_count + off);
    }
    return {std::move(src), std::move(dst)};
}

namespace {

// Normalizes the i-th key of a [B,N,D] tensor in place into `out`.
// A zero-norm key becomes the zero vector.
bool normalize_key(const float* key, int64_t d, float* out) {
    float norm_sq = 0.0f;
    for (int64_t c = 0; c < d; ++c) norm_sq += key[c] * key[c];
    if (norm_sq == 0.0f) {
        for (int64_t c = 0; c < d; ++c) out[c] = 0.0f;
        return false;
    }
    const float inv = 1.0f / std::sqrt(norm_sq);
    for (int64_t c = 0; c < d; ++c) out[c] = key[c] * inv;
    return true;
}

Tensor normalize_keys(const Tensor& keys, int* zero_norm_count) {
    Tensor out(keys.dims());
    const int64_t b = keys.size(0), n = keys.size(1), d = keys.size(2);
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < n; ++i) {
            const int64_t base = (bi * n + i) * d;
            if (!normalize_key(keys.data() + base, d, out.data() + base) && zero_norm_count)
                ++(*zero_norm_count);
        }
    }
    return out;
}

void require_rank3(const Tensor& t, const char* who) {
    if (t.ndim() != 3)
        throw std::invalid_argument(std::string(who) + ": expected [B,N,D], got " + t.shape_str());
}

}  // namespace

Tensor similarity_matrix(const Tensor& src_keys, const Tensor& dst_keys, int* zero_norm_count) {
    require_rank3(src_keys, "similarity_matrix");
    require_rank3(dst_keys, "similarity_matrix");
    if (src_keys.size(0) != dst_keys.size(0) || src_keys.size(2) != dst_keys.size(2))
        throw std::invalid_argument("similarity_matrix: batch/feature dims disagree: " +
                                    src_keys.shape_str() + " vs " + dst_keys.shape_str());
    const int64_t b = src_keys.size(0), ns = src_keys.size(1), nd = dst_keys.size(1),
                  d = src_keys.size(2);
    const Tensor src_n = normalize_keys(src_keys, zero_norm_count);
    const Tensor dst_n = normalize_keys(dst_keys, zero_norm_count);
    Tensor scores({b, ns, nd});
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < ns; ++i) {
            const float* si = src_n.data() + (bi * ns + i) * d;
            float* row = scores.data() + (bi * ns + i) * nd;
            for (int64_t j = 0; j < nd; ++j) {
                const float* dj = dst_n.data() + (bi * nd + j) * d;
                float dot = 0.0f;
                for (int64_t c = 0; c < d; ++c) dot += si[c] * dj[c];
                row[j] = dot;
            }
        }
    }
    return scores;
}

std::vector<int> node_degrees(const Tensor& scores, float tau, std::vector<uint8_t>* valid_out) {
    require_rank3(scores, "node_degrees");
    const int64_t b = scores.size(0), ns = scores.size(1), nd = scores.size(2);
    std::vector<int> degrees(static_cast<size_t>(b * ns), 0);
    if (valid_out) valid_out->assign(static_cast<size_t>(b * ns * nd), 0);
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < ns; ++i) {
            const float* row = scores.data() + (bi * ns + i) * nd;
            int deg = 0;
            for (int64_t j = 0; j < nd; ++j) {
                if (row[j] >= tau) {
                    ++deg;
                    if (valid_out) (*valid_out)[static_cast<size_t>((bi * ns + i) * nd + j)] = 1;
                }
            }
            degrees[static_cast<size_t>(bi * ns + i)] = deg;
        }
    }
    return degrees;
}

int vote_prune_rate(const std::vector<int>& degrees, int batch, int src_count, int k_neighbors) {
    if (k_neighbors < 1) throw std::invalid_argument("vote_prune_rate: k_neighbors must be >= 1");
    if (batch <= 0 || degrees.size() != static_cast<size_t>(batch) * static_cast<size_t>(src_count))
        throw std::invalid_argument("vote_prune_rate: degrees size does not match batch layout");
    uint64_t total = 0;
    for (int b = 0; b < batch; ++b) {
        int redundant = 0;
        for (int i = 0; i < src_count; ++i)
            if (degrees[static_cast<size_t>(b) * src_count + i] >= k_neighbors) ++redundant;
        total += static_cast<uint64_t>(redundant);
    }
    // Integer division floors the batch mean; counts are non-negative.
    return static_cast<int>(total / static_cast<uint64_t>(batch));
}

std::vector<float> redundancy_scores(const BipartiteSimGraph& graph, float tau, float gamma) {
    const int64_t b = graph.batch, ns = graph.src_count, nd = graph.dst_count;
    std::vector<float> out(static_cast<size_t>(b * ns), 0.0f);
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t i = 0; i < ns; ++i) {
            const size_t node = static_cast<size_t>(bi * ns + i);
            const float* row = graph.scores.data() + (bi * ns + i) * nd;
            const int deg = graph.degrees[node];
            if (deg > 0) {
                float valid_sum = 0.0f;
                for (int64_t j = 0; j < nd; ++j)
                    if (graph.valid[node * static_cast<size_t>(nd) + static_cast<size_t>(j)])
                        valid_sum += row[j];
                // Degree is clamped to >= 1 even though this branch never sees 0.
                const float mean_valid = valid_sum / static_cast<float>(std::max(deg, 1));
                out[node] = static_cast<float>(deg) * std::exp(gamma * (mean_valid - tau));
            } else {
                float sum = 0.0f;
                for (int64_t j = 0; j < nd; ++j) sum += row[j];
                out[node] = sum / static_cast<float>(nd);
            }
        }
    }
    return out;
}

BipartiteSimGraph build_graph(const Tensor& keys, int protected_count, float tau) {
    require_rank3(keys, "build_graph");
    const int64_t b = keys.size(0), n = keys.size(1), d = keys.size(2);
    const int unprot = static_cast<int>(n) - protected_count;
    if (protected_count < 0 || unprot < 2)
        throw std::invalid_argument("build_graph: need at least 2 unprotected tokens");
    const int ns = (unprot + 1) / 2, nd = unprot / 2;
    Tensor src_keys({b, ns, d}), dst_keys({b, nd, d});
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int off = 0; off < unprot; ++off) {
            const float* row = keys.data() + (bi * n + protected_count + off) * d;
            float* out = (off % 2 == 0) ? src_keys.data() + (bi * ns + off / 2) * d
                                        : dst_keys.data() + (bi * nd + off / 2) * d;
            std::copy(row, row + d, out);
        }
    }
    BipartiteSimGraph g;
    g.batch = static_cast<int>(b);
    g.src_count = ns;
    g.dst_count = nd;
    g.scores = similarity_matrix(src_keys, dst_keys, &g.zero_norm_keys);
    g.degrees = node_degrees(g.scores, tau, &g.valid);
    return g;
}

namespace {

PruneDecision identity_decision(int seq_len, int protected_count) {
    PruneDecision d;
    d.seq_len = seq_len;
    d.protected_count = protected_count;
    d.identity = true;
    return d;
}

// Stable descending argsort of each item's scores, then keep ranks r..Ns-1.
PruneDecision rank_and_keep(const Tensor& keys, const PruneConfig& cfg, int r,
                            const BipartiteSimGraph& graph, const std::vector<float>& scores) {
    const int b = graph.batch, ns = graph.src_count;
    PruneDecision d;
    d.seq_len = static_cast<int>(keys.size(1));
    d.protected_count = cfg.protected_count;
    d.src_count = ns;
    d.dst_count = graph.dst_count;
    d.r = r;
    d.identity = (r == 0);
    d.kept_src_ranks.resize(static_cast<size_t>(b));
    d.scores_snapshot.resize(static_cast<size_t>(b));
    std::vector<int> order(static_cast<size_t>(ns));
    for (int bi = 0; bi < b; ++bi) {
        const float* s = scores.data() + static_cast<size_t>(bi) * ns;
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [s](int lhs, int rhs) { return s[lhs] > s[rhs]; });
        d.kept_src_ranks[static_cast<size_t>(bi)].assign(order.begin() + r, order.end());
        d.scores_snapshot[static_cast<size_t>(bi)].assign(s, s + ns);
    }
    return d;
}

}  // namespace

PruneDecision saint_decide(const Tensor& keys, const PruneConfig& cfg) {
    cfg.validate();
    if (cfg.mode != PruneMode::Saint)
        throw std::invalid_argument("saint_decide: config mode is not Saint");
    require_rank3(keys, "saint_decide");
    const int n = static_cast<int>(keys.size(1));
    if (n - cfg.protected_count < 2) return identity_decision(n, cfg.protected_count);
    const BipartiteSimGraph graph = build_graph(keys, cfg.protected_count, cfg.tau);
    const int r = vote_prune_rate(graph.degrees, graph.batch, graph.src_count, cfg.k_neighbors);
    const std::vector<float> scores = redundancy_scores(graph, cfg.tau, cfg.gamma);
    return rank_and_keep(keys, cfg, r, graph, scores);
}

PruneDecision constant_decide(const Tensor& keys, const PruneConfig& cfg, int r) {
    cfg.validate();
    require_rank3(keys, "constant_decide");
    const int n = static_cast<int>(keys.size(1));
    if (n - cfg.protected_count < 2) {
        if (r > 0)
            throw std::invalid_argument("constant_decide: r > 0 but sequence too short to split");
        return identity_decision(n, cfg.protected_count);
    }
    const BipartiteSimGraph graph = build_graph(keys, cfg.protected_count, cfg.tau);
    if (r < 0 || r > graph.src_count)
        throw std::invalid_argument("constant_decide: r out of [0, src_count]");
    const std::vector<float> scores = redundancy_scores(graph, cfg.tau, cfg.gamma);
    return rank_and_keep(keys, cfg, r, graph, scores);
}

std::vector<std::vector<int>> kept_positions(const PruneDecision& decision, OrderPolicy policy) {
    const int p = decision.protected_count;
    const int batch = decision.identity && decision.kept_src_ranks.empty()
                          ? 1
                          : static_cast<int>(decision.kept_src_ranks.size());
    std::vector<std::vector<int>> out(static_cast<size_t>(batch));
    for (int bi = 0; bi < batch; ++bi) {
        auto& pos = out[static_cast<size_t>(bi)];
        if (decision.identity) {
            pos.resize(static_cast<size_t>(decision.seq_len));
            std::iota(pos.begin(), pos.end(), 0);
            continue;
        }
        pos.reserve(static_cast<size_t>(decision.seq_len - decision.r));
        for (int i = 0; i < p; ++i) pos.push_back(i);
        const auto& kept = decision.kept_src_ranks[static_cast<size_t>(bi)];
        if (policy == OrderPolicy::ScoreOrder) {
            for (int rank : kept) pos.push_back(p + 2 * rank);
            for (int j = 0; j < decision.dst_count; ++j) pos.push_back(p + 2 * j + 1);
        } else {
            std::vector<int> tail;
            tail.reserve(kept.size() + static_cast<size_t>(decision.dst_count));
            for (int rank : kept) tail.push_back(p + 2 * rank);
            for (int j = 0; j < decision.dst_count; ++j) tail.push_back(p + 2 * j + 1);
            std::sort(tail.begin(), tail.end());
            pos.insert(pos.end(), tail.begin(), tail.end());
        }
    }
    return out;
}

Tensor apply_decision(const Tensor& tokens, const PruneDecision& decision, OrderPolicy policy) {
    require_rank3(tokens, "apply_decision");
    if (static_cast<int>(tokens.size(1)) != decision.seq_len)
        throw std::invalid_argument("apply_decision: sequence length " +
                                    std::to_string(tokens.size(1)) +
                                    " does not match decision for " +
                                    std::to_string(decision.seq_len));
    if (decision.identity) return tokens;
    const int64_t b = tokens.size(0), n = tokens.size(1), c = tokens.size(2);
    if (!decision.kept_src_ranks.empty() &&
        decision.kept_src_ranks.size() != static_cast<size_t>(b))
        throw std::invalid_argument("apply_decision: batch size does not match decision");
    const auto positions = kept_positions(decision, policy);
    const int64_t n_out = n - decision.r;
    Tensor out({b, n_out, c});
    for (int64_t bi = 0; bi < b; ++bi) {
        const auto& pos = positions[static_cast<size_t>(bi)];
        for (int64_t row = 0; row < n_out; ++row) {
            const float* src = tokens.data() + (bi * n + pos[static_cast<size_t>(row)]) * c;
            std::copy(src, src + c, out.data() + (bi * n_out + row) * c);
        }
    }
    return out;
}

namespace {

void check_drop_count(int r, int limit, const char* who) {
    if (r < 0 || r > limit)
        throw std::invalid_argument(std::string(who) + ": drop count " + std::to_string(r) +
                                    " out of [0, " + std::to_string(limit) + "]");
}

Tensor gather_survivors(const Tensor& tokens, const std::vector<std::vector<int>>& kept) {
    const int64_t b = tokens.size(0), n = tokens.size(1), c = tokens.size(2);
    const int64_t n_out = static_cast<int64_t>(kept.front().size());
    Tensor out({b, n_out, c});
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t row = 0; row < n_out; ++row) {
            const int src_pos = kept[static_cast<size_t>(bi)][static_cast<size_t>(row)];
            const float* src = tokens.data() + (bi * n + src_pos) * c;
            std::copy(src, src + c, out.data() + (bi * n_out + row) * c);
        }
    }
    return out;
}

}  // namespace

Tensor attention_drop(const Tensor& tokens, const Tensor& cls_rows, int r, int protected_count) {
    require_rank3(tokens, "attention_drop");
    const int64_t b = tokens.size(0), n = tokens.size(1);
    if (cls_rows.ndim() != 2 || cls_rows.size(0) != b || cls_rows.size(1) != n)
        throw std::invalid_argument("attention_drop: cls_rows must be [B,N]");
    check_drop_count(r, static_cast<int>(n) - protected_count, "attention_drop");
    if (r == 0) return tokens;
    std::vector<std::vector<int>> kept(static_cast<size_t>(b));
    std::vector<int> order;
    for (int64_t bi = 0; bi < b; ++bi) {
        const float* row = cls_rows.data() + bi * n;
        order.resize(static_cast<size_t>(n) - static_cast<size_t>(protected_count));
        std::iota(order.begin(), order.end(), protected_count);
        // Lowest attention mass first; stable, so ties keep position order.
        std::stable_sort(order.begin(), order.end(),
                         [row](int lhs, int rhs) { return row[lhs] < row[rhs]; });
        std::vector<uint8_t> dropped(static_cast<size_t>(n), 0);
        for (int i = 0; i < r; ++i) dropped[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
        auto& k = kept[static_cast<size_t>(bi)];
        k.reserve(static_cast<size_t>(n) - static_cast<size_t>(r));
        for (int pos = 0; pos < n; ++pos)
            if (!dropped[static_cast<size_t>(pos)]) k.push_back(pos);
    }
    return gather_survivors(tokens, kept);
}

MergeResult similarity_merge(const Tensor& tokens, const Tensor& keys, int r, int protected_count,
                             const Tensor* sizes_in) {
    require_rank3(tokens, "similarity_merge");
    require_rank3(keys, "similarity_merge");
    const int64_t b = tokens.size(0), n = tokens.size(1), c = tokens.size(2);
    if (keys.size(0) != b || keys.size(1) != n)
        throw std::invalid_argument("similarity_merge: keys must cover the same [B,N]");
    if (sizes_in && (sizes_in->ndim() != 2 || sizes_in->size(0) != b || sizes_in->size(1) != n))
        throw std::invalid_argument("similarity_merge: sizes must be [B,N]");
    const int unprot = static_cast<int>(n) - protected_count;
    if (unprot < 2) {
        if (r > 0) throw std::invalid_argument("similarity_merge: sequence too short to split");
        MergeResult res{tokens, sizes_in ? *sizes_in : Tensor::full({b, n}, 1.0f)};
        return res;
    }
    const int ns = (unprot + 1) / 2, nd = unprot / 2;
    check_drop_count(r, ns, "similarity_merge");
    if (r == 0) {
        MergeResult res{tokens, sizes_in ? *sizes_in : Tensor::full({b, n}, 1.0f)};
        return res;
    }

    const BipartiteSimGraph graph = build_graph(keys, protected_count, /*tau=*/-1.0f);
    const int64_t n_out = n - r;
    MergeResult res{Tensor({b, n_out, c}), Tensor({b, n_out})};
    std::vector<int> order(static_cast<size_t>(ns));
    for (int64_t bi = 0; bi < b; ++bi) {
        // Best dst match per src; ties resolve to the lowest dst index.
        std::vector<int> best_dst(static_cast<size_t>(ns), 0);
        std::vector<float> best_sim(static_cast<size_t>(ns), 0.0f);
        for (int i = 0; i < ns; ++i) {
            const float* row = graph.scores.data() + (bi * ns + i) * nd;
            int arg = 0;
            float best = row[0];
            for (int j = 1; j < nd; ++j)
                if (row[j] > best) { best = row[j]; arg = j; }
            best_dst[static_cast<size_t>(i)] = arg;
            best_sim[static_cast<size_t>(i)] = best;
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&best_sim](int lhs, int rhs) {
            return best_sim[static_cast<size_t>(lhs)] > best_sim[static_cast<size_t>(rhs)];
        });
        std::vector<uint8_t> merged(static_cast<size_t>(ns), 0);
        for (int i = 0; i < r; ++i) merged[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;

        auto size_of = [&](int pos) {
            return sizes_in ? sizes_in->data()[bi * n + pos] : 1.0f;
        };
        // Accumulate size-weighted sums into each dst, then divide.
        std::vector<float> dst_acc(static_cast<size_t>(nd) * static_cast<size_t>(c));
        std::vector<float> dst_mass(static_cast<size_t>(nd));
        for (int j = 0; j < nd; ++j) {
            const int pos = protected_count + 2 * j + 1;
            const float sz = size_of(pos);
            const float* row = tokens.data() + (bi * n + pos) * c;
            for (int64_t cc = 0; cc < c; ++cc)
                dst_acc[static_cast<size_t>(j) * c + static_cast<size_t>(cc)] = row[cc] * sz;
            dst_mass[static_cast<size_t>(j)] = sz;
        }
        for (int i = 0; i < ns; ++i) {
            if (!merged[static_cast<size_t>(i)]) continue;
            const int pos = protected_count + 2 * i;
            const int j = best_dst[static_cast<size_t>(i)];
            const float sz = size_of(pos);
            const float* row = tokens.data() + (bi * n + pos) * c;
            for (int64_t cc = 0; cc < c; ++cc)
                dst_acc[static_cast<size_t>(j) * c + static_cast<size_t>(cc)] += row[cc] * sz;
            dst_mass[static_cast<size_t>(j)] += sz;
        }

        int64_t out_row = 0;
        auto emit = [&](const float* data, float sz) {
            std::copy(data, data + c, res.tokens.data() + (bi * n_out + out_row) * c);
            res.sizes.data()[bi * n_out + out_row] = sz;
            ++out_row;
        };
        for (int i = 0; i < protected_count; ++i)
            emit(tokens.data() + (bi * n + i) * c, size_of(i));
        for (int i = 0; i < ns; ++i) {
            if (merged[static_cast<size_t>(i)]) continue;
            const int pos = protected_count + 2 * i;
            emit(tokens.data() + (bi * n + pos) * c, size_of(pos));
        }
        std::vector<float> dst_row(static_cast<size_t>(c));
        for (int j = 0; j < nd; ++j) {
            const float mass = dst_mass[static_cast<size_t>(j)];
            for (int64_t cc = 0; cc < c; ++cc)
                dst_row[static_cast<size_t>(cc)] =
                    dst_acc[static_cast<size_t>(j) * c + static_cast<size_t>(cc)] / mass;
            emit(dst_row.data(), mass);
        }
    }
    return res;
}

Tensor random_drop(const Tensor& tokens, int r, int protected_count, uint64_t seed) {
    require_rank3(tokens, "random_drop");
    const int64_t b = tokens.size(0), n = tokens.size(1);
    const int unprot = static_cast<int>(n) - protected_count;
    check_drop_count(r, unprot, "random_drop");
    if (r == 0) return tokens;
    Rng rng(seed);
    std::vector<std::vector<int>> kept(static_cast<size_t>(b));
    for (int64_t bi = 0; bi < b; ++bi) {
        // Partial Fisher-Yates over the unprotected offsets.
        std::vector<int> pool(static_cast<size_t>(unprot));
        std::iota(pool.begin(), pool.end(), 0);
        for (int t = 0; t < r; ++t) {
            const int j = t + static_cast<int>(rng.next_below(static_cast<uint64_t>(unprot - t)));
            std::swap(pool[static_cast<size_t>(t)], pool[static_cast<size_t>(j)]);
        }
        std::vector<uint8_t> dropped(static_cast<size_t>(n), 0);
        for (int t = 0; t < r; ++t)
            dropped[static_cast<size_t>(protected_count + pool[static_cast<size_t>(t)])] = 1;
        auto& k = kept[static_cast<size_t>(bi)];
        k.reserve(static_cast<size_t>(n) - static_cast<size_t>(r));
        for (int pos = 0; pos < n; ++pos)
            if (!dropped[static_cast<size_t>(pos)]) k.push_back(pos);
    }
    return gather_survivors(tokens, kept);
}

Tensor constant_drop(const Tensor& tokens, const Tensor& keys, const PruneConfig& cfg, int r) {
    const PruneDecision d = constant_decide(keys, cfg, r);
    return apply_decision(tokens, d, OrderPolicy::ScoreOrder);
}

}  // namespace saint
