#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "zrigf/model.hpp"

namespace zrigf {

struct StageConfig {
  double lr = 2e-5;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::size_t max_steps = 0;  // 0 = run every epoch
  double weight_decay = 0.05;
  std::string freeze;         // comma-separated parameter groups

  std::set<std::string> frozen_groups() const;
};

struct TrainConfig {
  ModelConfig model;
  std::uint64_t seed = 0;
  std::string precision = "32";
  StageConfig stage1;
  StageConfig stage2{2e-5, 8, 10, 0, 0.01, ""};
  double warmup_fraction = 0.10;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda1 = 0.2;
  double lambda2 = 0.1;
  std::size_t top_k = 3;
  double mask_ratio = 0.4;
  double label_smoothing = 0.1;
  std::size_t beam = 3;
  std::size_t max_generate_len = 20;
  ModuleToggles toggles;

  TrainConfig() { stage1.freeze = "text_encoder,word_embedding,fusion,decoder"; }

  void validate() const;
  // Every key on its own line, fixed order; parse(to_text()) round-trips.
  std::string to_text() const;
  // Applies key=value lines over the current values. '#' starts a comment.
  void apply_text(const std::string& text);
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
};

}  // namespace zrigf
