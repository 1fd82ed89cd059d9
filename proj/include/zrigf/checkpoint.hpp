#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zrigf/config.hpp"
#include "zrigf/optim.hpp"
#include "zrigf/rng.hpp"

namespace zrigf {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string stage;  // "contrastive" or "generative"
  std::string config_text;
  std::vector<std::string> vocab;
  std::vector<NamedArray> params;
  AdamState optimizer;
  std::size_t step = 0;  // optimizer steps completed in this stage
  RngState rng;

  TrainConfig config() const { return TrainConfig::parse(config_text); }
};

Checkpoint capture_checkpoint(const std::string& stage, const TrainConfig& config, const ModelBundle& model,
                              const AdamState& optimizer, std::size_t step, RngState rng);

// Copies arrays into an existing model by name. A missing name or a shape
// that disagrees with the model raises FormatError naming the tensor.
void load_parameters(const Checkpoint& checkpoint, ModelBundle& model);

// Builds a model from the checkpoint's own config and vocabulary.
ModelBundle restore_model(const Checkpoint& checkpoint);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace zrigf
