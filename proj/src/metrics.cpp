#include "saint/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace saint {

Tensor head_avg_keys(const Tensor& keys_per_head) {
    if (keys_per_head.ndim() != 4)
        throw std::invalid_argument("head_avg_keys: expected [B,H,N,Dh], got " +
                                    keys_per_head.shape_str());
    const int64_t b = keys_per_head.size(0), h = keys_per_head.size(1);
    const int64_t n = keys_per_head.size(2), d = keys_per_head.size(3);
    Tensor out({b, n, d});
    const float inv_h = 1.0f / static_cast<float>(h);
    for (int64_t bi = 0; bi < b; ++bi) {
        for (int64_t hi = 0; hi < h; ++hi) {
            const float* src = keys_per_head.data() + ((bi * h + hi) * n) * d;
            float* dst = out.data() + bi * n * d;
            for (int64_t i = 0; i < n * d; ++i) dst[i] += src[i];
        }
    }
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= inv_h;
    return out;
}

std::vector<float> key_similarity_score(const Tensor& keys) {
    if (keys.ndim() != 3)
        throw std::invalid_argument("key_similarity_score: expected [B,N,D], got " +
                                    keys.shape_str());
    const int64_t b = keys.size(0), n = keys.size(1), d = keys.size(2);
    std::vector<float> out(static_cast<size_t>(b));
    std::vector<double> dir_sum(static_cast<size_t>(d));
    for (int64_t bi = 0; bi < b; ++bi) {
        // sum_{i,j} cos(k_i, k_j) == ||sum_i k_i/||k_i|| ||^2, so one pass over
        // the normalized keys suffices; the diagonal terms are included.
        std::fill(dir_sum.begin(), dir_sum.end(), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            const float* k = keys.data() + (bi * n + i) * d;
            double norm_sq = 0.0;
            for (int64_t c = 0; c < d; ++c) norm_sq += static_cast<double>(k[c]) * k[c];
            if (norm_sq == 0.0)
                throw std::domain_error("key_similarity_score: zero-norm key at batch " +
                                        std::to_string(bi) + " token " + std::to_string(i));
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (int64_t c = 0; c < d; ++c) dir_sum[static_cast<size_t>(c)] += k[c] * inv;
        }
        double total = 0.0;
        for (int64_t c = 0; c < d; ++c) total += dir_sum[static_cast<size_t>(c)] * dir_sum[static_cast<size_t>(c)];
        out[static_cast<size_t>(bi)] = static_cast<float>(total / (static_cast<double>(n) * n));
    }
    return out;
}

namespace {

double row_entropy_checked(const float* p, int64_t n, const char* who) {
    double sum = 0.0;
    double h = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        if (p[j] < 0.0f)
            throw std::domain_error(std::string(who) + ": negative probability entry");
        sum += p[j];
        if (p[j] > 0.0f) h -= static_cast<double>(p[j]) * std::log(static_cast<double>(p[j]));
    }
    if (std::fabs(sum - 1.0) > 1e-5)
        throw std::domain_error(std::string(who) + ": row does not sum to 1 (got " +
                                std::to_string(sum) + ")");
    return h;
}

}  // namespace

float cls_attention_entropy(const Tensor& attn_row) {
    if (attn_row.ndim() != 1)
        throw std::invalid_argument("cls_attention_entropy: expected rank-1 row, got " +
                                    attn_row.shape_str());
    return static_cast<float>(row_entropy_checked(attn_row.data(), attn_row.size(0),
                                                  "cls_attention_entropy"));
}

float token_attention_entropy(const Tensor& attn, bool cls_present) {
    if (attn.ndim() != 2 || attn.size(0) != attn.size(1))
        throw std::invalid_argument("token_attention_entropy: expected square [N,N], got " +
                                    attn.shape_str());
    const int64_t n = attn.size(0);
    const int64_t first = cls_present ? 1 : 0;
    if (n - first <= 0) return 0.0f;
    double total = 0.0;
    for (int64_t i = first; i < n; ++i)
        total += row_entropy_checked(attn.data() + i * n, n, "token_attention_entropy");
    return static_cast<float>(total / static_cast<double>(n - first));
}

float mean_cls_attention(const Tensor& attn) {
    if (attn.ndim() != 2 || attn.size(0) != attn.size(1))
        throw std::invalid_argument("mean_cls_attention: expected square [N,N], got " +
                                    attn.shape_str());
    const int64_t n = attn.size(0);
    for (int64_t i = 0; i < n; ++i)
        row_entropy_checked(attn.data() + i * n, n, "mean_cls_attention");
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) total += attn[i * n + 0];
    return static_cast<float>(total / static_cast<double>(n));
}

Tensor head_avg_attention(const Tensor& attn) {
    if (attn.ndim() != 4)
        throw std::invalid_argument("head_avg_attention: expected [B,H,N,N], got " +
                                    attn.shape_str());
    const int64_t b = attn.size(0), h = attn.size(1), n = attn.size(2);
    Tensor out({b, n, n});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t hi = 0; hi < h; ++hi) {
            const float* src = attn.data() + (bi * h + hi) * n * n;
            float* dst = out.data() + bi * n * n;
            for (int64_t i = 0; i < n * n; ++i) dst[i] += src[i] / static_cast<float>(h);
        }
    return out;
}

DynamicsRecord summarize_layer(int layer_index, const Tensor& keys_head_avg,
                               const Tensor& attention, bool cls_present, uint64_t flops) {
    const int64_t b = keys_head_avg.size(0), n = keys_head_avg.size(1);
    DynamicsRecord rec;
    rec.layer_index = layer_index;
    rec.token_count = static_cast<int>(n);
    rec.flops = flops;
    const auto sims = key_similarity_score(keys_head_avg);
    double s = 0.0;
    for (float v : sims) s += v;
    rec.key_similarity = static_cast<float>(s / static_cast<double>(b));

    const Tensor avg = head_avg_attention(attention);
    double cls_e = 0.0, tok_e = 0.0, a_cls = 0.0;
    for (int64_t bi = 0; bi < b; ++bi) {
        Tensor item(std::vector<int64_t>{n, n},
                    std::vector<float>(avg.data() + bi * n * n, avg.data() + (bi + 1) * n * n));
        Tensor row0(std::vector<int64_t>{n},
                    std::vector<float>(item.data(), item.data() + n));
        cls_e += cls_attention_entropy(row0);
        tok_e += token_attention_entropy(item, cls_present);
        a_cls += mean_cls_attention(item);
    }
    rec.cls_entropy = static_cast<float>(cls_e / static_cast<double>(b));
    rec.token_entropy = static_cast<float>(tok_e / static_cast<double>(b));
    rec.mean_cls_attention = static_cast<float>(a_cls / static_cast<double>(b));
    return rec;
}

}  // namespace saint
