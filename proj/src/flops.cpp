#include "saint/flops.hpp"

#include <stdexcept>

namespace saint {

uint64_t attention_flops(int64_t tokens, int64_t dim, int64_t flops_per_mac) {
    const uint64_t n = static_cast<uint64_t>(tokens), c = static_cast<uint64_t>(dim);
    return static_cast<uint64_t>(flops_per_mac) * (4 * n * c * c + 2 * n * n * c);
}

uint64_t ffn_flops(int64_t tokens, int64_t dim, int64_t mlp_ratio, int64_t flops_per_mac) {
    const uint64_t n = static_cast<uint64_t>(tokens), c = static_cast<uint64_t>(dim);
    return static_cast<uint64_t>(flops_per_mac) * (2 * static_cast<uint64_t>(mlp_ratio) * n * c * c);
}

FlopsLedger flops_model(const FlopsArch& arch, const std::vector<int64_t>& token_schedule) {
    if (token_schedule.empty()) throw std::invalid_argument("flops_model: empty token schedule");
    FlopsLedger ledger;
    ledger.layers.reserve(token_schedule.size());
    for (int64_t n : token_schedule) {
        if (n < 0) throw std::invalid_argument("flops_model: negative token count");
        FlopsLedger::Entry e;
        e.attention_flops = attention_flops(n, arch.dim, arch.flops_per_mac);
        e.ffn_flops = ffn_flops(n, arch.dim, arch.mlp_ratio, arch.flops_per_mac);
        ledger.layers.push_back(e);
    }
    if (arch.include_patch_embed) {
        const uint64_t patches =
            static_cast<uint64_t>((arch.image_size / arch.patch) * (arch.image_size / arch.patch));
        const uint64_t per_patch = static_cast<uint64_t>(arch.patch * arch.patch *
                                                         arch.in_channels * arch.dim);
        ledger.patch_embed_flops = static_cast<uint64_t>(arch.flops_per_mac) * patches * per_patch;
    }
    if (arch.include_head) {
        ledger.head_flops = static_cast<uint64_t>(arch.flops_per_mac) *
                            static_cast<uint64_t>(arch.dim * arch.num_classes);
    }
    return ledger;
}

}  // namespace saint
