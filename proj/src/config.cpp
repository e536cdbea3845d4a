#include "saint/config.hpp"

#include <json.hpp>
#include <stdexcept>

namespace saint {

using json = nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::invalid_argument("config: " + path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) { ok = true; break; }
        if (!ok) fail(path + "." + key, "unknown key");
    }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "wrong type");
    }
}

}  // namespace

PruneMode prune_mode_from_string(const std::string& s) {
    if (s == "off") return PruneMode::Off;
    if (s == "saint") return PruneMode::Saint;
    if (s == "attention_drop") return PruneMode::AttentionDrop;
    if (s == "merge") return PruneMode::Merge;
    if (s == "random_drop") return PruneMode::RandomDrop;
    if (s == "constant_drop") return PruneMode::ConstantDrop;
    throw std::invalid_argument("config: unknown prune mode '" + s + "'");
}

std::string prune_mode_to_string(PruneMode m) {
    switch (m) {
        case PruneMode::Off: return "off";
        case PruneMode::Saint: return "saint";
        case PruneMode::AttentionDrop: return "attention_drop";
        case PruneMode::Merge: return "merge";
        case PruneMode::RandomDrop: return "random_drop";
        case PruneMode::ConstantDrop: return "constant_drop";
    }
    return "off";
}

namespace {

long parse_decimal(const std::string& piece, const std::string& spec) {
    if (piece.empty() || piece.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument("config: bad layer spec '" + spec + "'");
    return std::stol(piece);
}

}  // namespace

std::set<int> parse_layer_spec(const std::string& spec, int layer_count,
                               const std::string& kind) {
    std::set<int> out;
    std::string s = spec;
    if (s.empty()) s = (kind == "lm") ? "8..16" : "first_half";
    auto add_checked = [&](long v) {
        if (v < 0 || v >= layer_count)
            throw std::invalid_argument("config: layer " + std::to_string(v) + " out of [0, " +
                                        std::to_string(layer_count) + ")");
        out.insert(static_cast<int>(v));
    };
    if (s == "first_half") {
        for (int l = 0; l < layer_count / 2; ++l) out.insert(l);
        return out;
    }
    if (s == "all") {
        for (int l = 0; l < layer_count; ++l) out.insert(l);
        return out;
    }
    const auto range_pos = s.find("..");
    if (range_pos != std::string::npos) {
        const long lo = parse_decimal(s.substr(0, range_pos), s);
        const long hi = parse_decimal(s.substr(range_pos + 2), s);
        if (hi < lo) throw std::invalid_argument("config: bad layer range '" + s + "'");
        for (long l = lo; l <= hi; ++l) add_checked(l);  // inclusive range
        return out;
    }
    size_t start = 0;
    while (start <= s.size()) {
        const size_t comma = s.find(',', start);
        const std::string piece =
            s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        add_checked(parse_decimal(piece, s));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
    if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
    check_keys(root, "$", {"model", "prune", "data", "output"});

    ExperimentConfig cfg;
    if (root.contains("model")) {
        const json& m = root["model"];
        if (!m.is_object()) fail("$.model", "must be an object");
        check_keys(m, "$.model",
                   {"kind", "layers", "dim", "heads", "mlp_ratio", "patch", "image_size",
                    "cls_token", "distill_token", "num_classes", "vocab_size", "max_seq",
                    "visual_start", "visual_end", "weights"});
        read_field(m, "$.model", "kind", cfg.model.kind);
        if (cfg.model.kind != "vit" && cfg.model.kind != "lm")
            fail("$.model.kind", "must be 'vit' or 'lm'");
        if (cfg.model.kind == "lm") cfg.model.layers = 32;  // keeps the 8..16 default valid
        read_field(m, "$.model", "layers", cfg.model.layers);
        read_field(m, "$.model", "dim", cfg.model.dim);
        read_field(m, "$.model", "heads", cfg.model.heads);
        read_field(m, "$.model", "mlp_ratio", cfg.model.mlp_ratio);
        read_field(m, "$.model", "patch", cfg.model.patch);
        read_field(m, "$.model", "image_size", cfg.model.image_size);
        read_field(m, "$.model", "cls_token", cfg.model.cls_token);
        read_field(m, "$.model", "distill_token", cfg.model.distill_token);
        read_field(m, "$.model", "num_classes", cfg.model.num_classes);
        read_field(m, "$.model", "vocab_size", cfg.model.vocab_size);
        read_field(m, "$.model", "max_seq", cfg.model.max_seq);
        read_field(m, "$.model", "visual_start", cfg.model.visual_start);
        read_field(m, "$.model", "visual_end", cfg.model.visual_end);
        read_field(m, "$.model", "weights", cfg.model.weights);
    }
    if (root.contains("prune")) {
        const json& p = root["prune"];
        if (!p.is_object()) fail("$.prune", "must be an object");
        check_keys(p, "$.prune",
                   {"mode", "tau", "k", "gamma", "layers", "schedule", "constant_r"});
        read_field(p, "$.prune", "mode", cfg.prune.mode);
        prune_mode_from_string(cfg.prune.mode);  // validates
        read_field(p, "$.prune", "tau", cfg.prune.tau);
        if (!(cfg.prune.tau >= -1.0 && cfg.prune.tau <= 1.0))
            fail("$.prune.tau", "tau out of [-1,1]");
        read_field(p, "$.prune", "k", cfg.prune.k);
        if (cfg.prune.k < 1) fail("$.prune.k", "must be >= 1");
        read_field(p, "$.prune", "gamma", cfg.prune.gamma);
        if (cfg.prune.gamma < 0.0) fail("$.prune.gamma", "must be >= 0");
        read_field(p, "$.prune", "layers", cfg.prune.layers);
        read_field(p, "$.prune", "schedule", cfg.prune.schedule);
        if (cfg.prune.schedule != "single_layer" && cfg.prune.schedule != "progressive_constant" &&
            cfg.prune.schedule != "voting_first_half" && cfg.prune.schedule != "custom")
            fail("$.prune.schedule", "unknown schedule '" + cfg.prune.schedule + "'");
        read_field(p, "$.prune", "constant_r", cfg.prune.constant_r);
        if (cfg.prune.constant_r < 0) fail("$.prune.constant_r", "must be >= 0");
    }
    if (root.contains("data")) {
        const json& d = root["data"];
        if (!d.is_object()) fail("$.data", "must be an object");
        check_keys(d, "$.data", {"seed", "batch", "generator"});
        read_field(d, "$.data", "seed", cfg.data.seed);
        read_field(d, "$.data", "batch", cfg.data.batch);
        if (cfg.data.batch < 1) fail("$.data.batch", "must be >= 1");
        read_field(d, "$.data", "generator", cfg.data.generator);
        if (cfg.data.generator != "gaussian" && cfg.data.generator != "uniform" &&
            cfg.data.generator != "duplicated_patches")
            fail("$.data.generator", "unknown generator '" + cfg.data.generator + "'");
    }
    if (root.contains("output")) {
        const json& o = root["output"];
        if (!o.is_object()) fail("$.output", "must be an object");
        check_keys(o, "$.output", {"csv", "trace"});
        read_field(o, "$.output", "csv", cfg.output.csv);
        read_field(o, "$.output", "trace", cfg.output.trace);
    }

    // Cross-field invariants.
    const std::set<int> layers =
        parse_layer_spec(cfg.prune.layers, cfg.model.layers, cfg.model.kind);
    if (cfg.prune.schedule == "single_layer" && layers.size() != 1)
        fail("$.prune", "single_layer schedule needs exactly one layer in the spec");
    if (cfg.model.kind == "lm") {
        if (cfg.model.visual_start < 0 || cfg.model.visual_end < cfg.model.visual_start)
            fail("$.model", "bad visual span");
        if (cfg.model.visual_end > cfg.model.max_seq)
            fail("$.model", "visual span exceeds max_seq");
    }
    return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json root;  // nlohmann::json orders keys lexicographically: canonical form
    root["model"]["kind"] = cfg.model.kind;
    root["model"]["layers"] = cfg.model.layers;
    root["model"]["dim"] = cfg.model.dim;
    root["model"]["heads"] = cfg.model.heads;
    root["model"]["mlp_ratio"] = cfg.model.mlp_ratio;
    root["model"]["patch"] = cfg.model.patch;
    root["model"]["image_size"] = cfg.model.image_size;
    root["model"]["cls_token"] = cfg.model.cls_token;
    root["model"]["distill_token"] = cfg.model.distill_token;
    root["model"]["num_classes"] = cfg.model.num_classes;
    root["model"]["vocab_size"] = cfg.model.vocab_size;
    root["model"]["max_seq"] = cfg.model.max_seq;
    root["model"]["visual_start"] = cfg.model.visual_start;
    root["model"]["visual_end"] = cfg.model.visual_end;
    root["model"]["weights"] = cfg.model.weights;
    root["prune"]["mode"] = cfg.prune.mode;
    root["prune"]["tau"] = cfg.prune.tau;
    root["prune"]["k"] = cfg.prune.k;
    root["prune"]["gamma"] = cfg.prune.gamma;
    root["prune"]["layers"] = cfg.prune.layers;
    root["prune"]["schedule"] = cfg.prune.schedule;
    root["prune"]["constant_r"] = cfg.prune.constant_r;
    root["data"]["seed"] = cfg.data.seed;
    root["data"]["batch"] = cfg.data.batch;
    root["data"]["generator"] = cfg.data.generator;
    root["output"]["csv"] = cfg.output.csv;
    root["output"]["trace"] = cfg.output.trace;
    return root.dump(2) + "\n";
}

VitConfig make_vit_config(const ExperimentConfig& cfg) {
    if (cfg.model.kind != "vit")
        throw std::invalid_argument("make_vit_config: model kind is not 'vit'");
    VitConfig v;
    v.layers = cfg.model.layers;
    v.dim = cfg.model.dim;
    v.heads = cfg.model.heads;
    v.mlp_ratio = cfg.model.mlp_ratio;
    v.patch = cfg.model.patch;
    v.image_size = cfg.model.image_size;
    v.cls_token = cfg.model.cls_token;
    v.distill_token = cfg.model.distill_token;
    v.num_classes = cfg.model.num_classes;
    v.prune.mode = prune_mode_from_string(cfg.prune.mode);
    v.prune.tau = static_cast<float>(cfg.prune.tau);
    v.prune.k_neighbors = cfg.prune.k;
    v.prune.gamma = static_cast<float>(cfg.prune.gamma);
    v.prune.constant_r = cfg.prune.constant_r;
    v.prune.seed = cfg.data.seed;
    v.prune.vote_rate = cfg.prune.schedule == "voting_first_half";
    if (v.prune.mode != PruneMode::Off)
        v.prune_layers = parse_layer_spec(cfg.prune.layers, v.layers, "vit");
    v.validate();
    return v;
}

LmConfig make_lm_config(const ExperimentConfig& cfg) {
    if (cfg.model.kind != "lm")
        throw std::invalid_argument("make_lm_config: model kind is not 'lm'");
    LmConfig l;
    l.layers = cfg.model.layers;
    l.dim = cfg.model.dim;
    l.heads = cfg.model.heads;
    l.mlp_ratio = cfg.model.mlp_ratio;
    l.vocab_size = cfg.model.vocab_size;
    l.max_seq = cfg.model.max_seq;
    l.proj_in = cfg.model.dim;  // visual projection always present in lm files
    l.visual_start = cfg.model.visual_start;
    l.visual_end = cfg.model.visual_end;
    l.prune.mode = prune_mode_from_string(cfg.prune.mode);
    l.prune.tau = static_cast<float>(cfg.prune.tau);
    l.prune.k_neighbors = cfg.prune.k;
    l.prune.gamma = static_cast<float>(cfg.prune.gamma);
    l.prune.seed = cfg.data.seed;
    l.prune_layers = parse_layer_spec(cfg.prune.layers, l.layers, "lm");
    l.validate();
    return l;
}

}  // namespace saint
