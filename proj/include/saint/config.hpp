#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "saint/lm.hpp"
#include "saint/prune.hpp"
#include "saint/vit.hpp"

namespace saint {

// JSON-backed experiment description. parse_config validates the schema
// (unknown keys are rejected, invariants checked) and fills defaults;
// serialize_config emits the canonical form, a fixpoint of parse.
struct ModelSection {
    std::string kind = "vit";  // "vit" | "lm"
    int layers = 8;
    int dim = 128;
    int heads = 4;
    int mlp_ratio = 4;
    // vit
    int patch = 16;
    int image_size = 112;
    bool cls_token = true;
    bool distill_token = false;
    int num_classes = 10;
    // lm
    int vocab_size = 256;
    int max_seq = 512;
    int visual_start = 4;
    int visual_end = 68;
    std::string weights;  // optional SNT1 path; empty = seeded random

    bool operator==(const ModelSection&) const = default;
};

struct PruneSection {
    std::string mode = "saint";
    double tau = 0.75;
    int k = 5;
    double gamma = 10.0;
    std::string layers;  // "first_half", "a..b" (inclusive), "a,b,c"; "" = kind default
    std::string schedule = "voting_first_half";
    int constant_r = 0;

    bool operator==(const PruneSection&) const = default;
};

struct DataSection {
    uint64_t seed = 42;
    int batch = 2;
    std::string generator = "gaussian";

    bool operator==(const DataSection&) const = default;
};

struct OutputSection {
    std::string csv;
    int trace = 0;

    bool operator==(const OutputSection&) const = default;
};

struct ExperimentConfig {
    ModelSection model;
    PruneSection prune;
    DataSection data;
    OutputSection output;

    bool operator==(const ExperimentConfig&) const = default;
};

// Throws std::invalid_argument with a JSON-path message on malformed input,
// unknown keys, or invariant violations.
ExperimentConfig parse_config(const std::string& json_text);
std::string serialize_config(const ExperimentConfig& cfg);

PruneMode prune_mode_from_string(const std::string& s);
std::string prune_mode_to_string(PruneMode m);

// Layer-spec parser; layer_count bounds the result. Empty spec yields the
// kind default: first half for "vit", 8..16 for "lm".
std::set<int> parse_layer_spec(const std::string& spec, int layer_count,
                               const std::string& kind);

// Builders combining the sections into runnable model configs.
VitConfig make_vit_config(const ExperimentConfig& cfg);
LmConfig make_lm_config(const ExperimentConfig& cfg);

}  // namespace saint
