// Command-line front end for the token-pruning engine: model generation,
// encoder/LM runs, parameter sweeps, the pruning-strategy recipe and the
// analytic FLOP model. All outputs are deterministic CSV files.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "saint/config.hpp"
#include "saint/harness.hpp"

namespace {

saint::ExperimentConfig load_config(const std::string& path,
                                    const std::string& fallback = "{}") {
    if (path.empty()) return saint::parse_config(fallback);
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return saint::parse_config(ss.str());
}

struct CommonOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<double> tau;
    std::optional<int> k;
    std::optional<double> gamma;
    std::optional<std::string> layers;
    std::string out_path;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_out) {
    cmd->add_option("--config", o.config_path, "JSON experiment config");
    cmd->add_option("--seed", o.seed, "override data.seed");
    cmd->add_option("--mode", o.mode, "override prune.mode (off|saint|attention_drop|merge|random_drop|constant_drop)");
    cmd->add_option("--tau", o.tau, "override prune.tau");
    cmd->add_option("--k", o.k, "override prune.k");
    cmd->add_option("--gamma", o.gamma, "override prune.gamma");
    cmd->add_option("--layers", o.layers, "override prune.layers (e.g. 0..6 or 8,16,24)");
    auto* out = cmd->add_option("--out", o.out_path, "output CSV path");
    if (need_out) out->required();
}

saint::ExperimentConfig resolve(const CommonOpts& o, const std::string& fallback = "{}") {
    saint::ExperimentConfig cfg = load_config(o.config_path, fallback);
    if (o.seed) cfg.data.seed = *o.seed;
    if (o.mode) cfg.prune.mode = *o.mode;
    if (o.tau) cfg.prune.tau = *o.tau;
    if (o.k) cfg.prune.k = *o.k;
    if (o.gamma) cfg.prune.gamma = *o.gamma;
    if (o.layers) cfg.prune.layers = *o.layers;
    // Re-validate after overrides.
    return saint::parse_config(saint::serialize_config(cfg));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"similarity-aware inference-time token pruning toolkit"};
    app.require_subcommand(1);

    // gen-model
    CommonOpts gen_opts;
    std::string gen_kind = "vit";
    auto* gen = app.add_subcommand("gen-model", "write seeded random weights to an SNT1 file");
    add_common(gen, gen_opts, /*need_out=*/true);
    gen->add_option("--kind", gen_kind, "vit or lm");

    // run-vit
    CommonOpts vit_opts;
    auto* runvit = app.add_subcommand("run-vit", "run the encoder, emit per-layer CSV");
    add_common(runvit, vit_opts, /*need_out=*/true);

    // metrics
    CommonOpts met_opts;
    auto* metrics = app.add_subcommand("metrics", "per-layer token-dynamics CSV (vit)");
    add_common(metrics, met_opts, /*need_out=*/true);

    // run-lm
    CommonOpts lm_opts;
    std::string vlm_mode_str;
    int decode_steps = 8;
    auto* runlm = app.add_subcommand("run-lm", "prefill + greedy decode, emit CSV");
    add_common(runlm, lm_opts, /*need_out=*/true);
    runlm->add_option("--vlm-mode", vlm_mode_str, "vit_only | llm_only | hybrid (default: standalone prefill)");
    runlm->add_option("--steps", decode_steps, "greedy decode steps");

    // sweep
    CommonOpts sweep_opts;
    std::string axis;
    std::vector<double> values;
    auto* sweep = app.add_subcommand("sweep", "sweep one parameter, one CSV row per value");
    add_common(sweep, sweep_opts, /*need_out=*/true);
    sweep->add_option("--axis", axis, "tau | k | gamma | constant_r | layer_count | start_layer")
        ->required();
    sweep->add_option("--values", values, "value list")->required()->expected(-1);

    // fig2
    CommonOpts fig2_opts;
    auto* fig2 = app.add_subcommand(
        "fig2", "strategy x schedule pruning recipe (drift + FLOPs per layer)");
    add_common(fig2, fig2_opts, /*need_out=*/true);

    // flops
    std::string flops_out;
    int fl_layers = 12;
    int64_t fl_dim = 768, fl_tokens = 197, fl_patch = 16, fl_image = 224, fl_mlp = 4;
    bool fl_no_patch_embed = false, fl_with_head = false;
    int64_t fl_per_mac = 1;
    std::vector<int64_t> fl_schedule;
    auto* flops = app.add_subcommand("flops", "analytic FLOP model CSV");
    flops->add_option("--out", flops_out, "output CSV path")->required();
    flops->add_option("--layers", fl_layers, "layer count");
    flops->add_option("--dim", fl_dim, "model width");
    flops->add_option("--tokens", fl_tokens, "tokens per layer (constant schedule)");
    flops->add_option("--schedule", fl_schedule, "explicit per-layer token counts")->expected(-1);
    flops->add_option("--patch", fl_patch, "patch size");
    flops->add_option("--image", fl_image, "image size");
    flops->add_option("--mlp-ratio", fl_mlp, "FFN expansion ratio");
    flops->add_option("--flops-per-mac", fl_per_mac, "1 = count multiply-accumulates, 2 = count multiplies and adds");
    flops->add_flag("--no-patch-embed", fl_no_patch_embed, "exclude patch embedding");
    flops->add_flag("--with-head", fl_with_head, "include the classifier head");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const std::string fallback =
                gen_kind == "lm" ? R"({"model":{"kind":"lm"}})" : "{}";
            saint::ExperimentConfig cfg = resolve(gen_opts, fallback);
            if (cfg.model.kind != gen_kind)
                throw std::invalid_argument("--kind disagrees with the config's model.kind");
            saint::gen_model_file(cfg, gen_opts.out_path);
            std::cout << "wrote " << gen_opts.out_path << "\n";
        } else if (runvit->parsed()) {
            saint::run_vit_csv(resolve(vit_opts), vit_opts.out_path);
            std::cout << "wrote " << vit_opts.out_path << "\n";
        } else if (metrics->parsed()) {
            saint::run_metrics_csv(resolve(met_opts), met_opts.out_path);
            std::cout << "wrote " << met_opts.out_path << "\n";
        } else if (runlm->parsed()) {
            saint::ExperimentConfig cfg = resolve(lm_opts, R"({"model":{"kind":"lm"}})");
            std::optional<saint::VlmMode> mode;
            if (!vlm_mode_str.empty()) {
                if (vlm_mode_str == "vit_only") mode = saint::VlmMode::VitOnly;
                else if (vlm_mode_str == "llm_only") mode = saint::VlmMode::LlmOnly;
                else if (vlm_mode_str == "hybrid") mode = saint::VlmMode::Hybrid;
                else throw std::invalid_argument("unknown --vlm-mode: " + vlm_mode_str);
            }
            saint::run_lm_csv(cfg, lm_opts.out_path, mode, decode_steps);
            std::cout << "wrote " << lm_opts.out_path << "\n";
        } else if (sweep->parsed()) {
            saint::run_sweep_csv(resolve(sweep_opts), axis, values, sweep_opts.out_path);
            std::cout << "wrote " << sweep_opts.out_path << "\n";
        } else if (fig2->parsed()) {
            saint::recipe_fig2_csv(resolve(fig2_opts), fig2_opts.out_path);
            std::cout << "wrote " << fig2_opts.out_path << "\n";
        } else if (flops->parsed()) {
            saint::FlopsArch arch;
            arch.dim = fl_dim;
            arch.mlp_ratio = fl_mlp;
            arch.patch = fl_patch;
            arch.image_size = fl_image;
            arch.include_patch_embed = !fl_no_patch_embed;
            arch.include_head = fl_with_head;
            arch.flops_per_mac = fl_per_mac;
            std::vector<int64_t> schedule = fl_schedule;
            if (schedule.empty())
                schedule.assign(static_cast<size_t>(fl_layers), fl_tokens);
            saint::run_flops_csv(arch, schedule, flops_out);
            const saint::FlopsLedger ledger = saint::flops_model(arch, schedule);
            std::cout << "total: " << ledger.total() << " ("
                      << static_cast<double>(ledger.total()) / 1e9 << " GFLOPs)\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
