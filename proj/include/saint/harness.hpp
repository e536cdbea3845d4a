#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saint/config.hpp"
#include "saint/lm.hpp"
#include "saint/snt1.hpp"
#include "saint/tensor.hpp"
#include "saint/vit.hpp"

namespace saint {

// Canonical tensor-name mapping for SNT1 model files.
std::map<std::string, Tensor> vit_weights_to_tensors(const VitConfig& cfg, const VitWeights& w);
VitWeights vit_weights_from_tensors(const VitConfig& cfg,
                                    const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> lm_weights_to_tensors(const LmConfig& cfg, const LmWeights& w);
LmWeights lm_weights_from_tensors(const LmConfig& cfg,
                                  const std::map<std::string, Tensor>& tensors);

// Seeded model generation; same seed gives a byte-identical file.
void gen_model_file(const ExperimentConfig& cfg, const std::string& path);

// Loads cfg.model.weights when set, otherwise generates from cfg.data.seed.
VitWeights obtain_vit_weights(const ExperimentConfig& cfg, const VitConfig& vit);
LmWeights obtain_lm_weights(const ExperimentConfig& cfg, const LmConfig& lm);

// Deterministic synthetic inputs. "duplicated_patches" tiles each random
// patch twice so adjacent tokens are exact duplicates (highly prunable).
Tensor synth_images(const VitConfig& cfg, int batch, uint64_t seed, const std::string& generator);
Tensor synth_prompt_embeds(const LmConfig& cfg, const LmWeights& w, int prompt_len, uint64_t seed,
                           const std::string& generator);

// Output drift between pruned and unpruned logits [B, K].
double logit_mse(const Tensor& a, const Tensor& b);
double top1_agreement(const Tensor& a, const Tensor& b);

// CSV runners behind the CLI subcommands. Every file they emit is
// byte-identical across runs for a fixed config + seed.
void run_vit_csv(const ExperimentConfig& cfg, const std::string& csv_path);
void run_metrics_csv(const ExperimentConfig& cfg, const std::string& csv_path);
void run_lm_csv(const ExperimentConfig& cfg, const std::string& csv_path,
                std::optional<VlmMode> vlm_mode, int decode_steps);
void run_sweep_csv(const ExperimentConfig& cfg, const std::string& axis,
                   const std::vector<double>& values, const std::string& csv_path);
void recipe_fig2_csv(const ExperimentConfig& cfg, const std::string& csv_path);
void run_flops_csv(const FlopsArch& arch, const std::vector<int64_t>& schedule,
                   const std::string& csv_path);

}  // namespace saint
