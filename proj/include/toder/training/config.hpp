#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "toder/geometry/losses.hpp"

namespace toder::train {

using geometry::ConsistencyMode;
using geometry::LossWeights;

/// Which parts of the method a run uses.
///  full        - both translators, both depth nets, cross-network self-supervision, pose net.
///  no_tnet     - stage 3 without the pose network and its photometric/consistency terms.
///  no_bidirect - one adaptation direction: only the target-domain depth net is trained.
enum class Variant { full, no_tnet, no_bidirect };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_tnet: return "no_tnet";
    case Variant::no_bidirect: return "no_bidirect";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_tnet") return Variant::no_tnet;
  if (s == "no_bidirect") return Variant::no_bidirect;
  throw ValidationError("unknown variant '" + s + "' (expected full, no_tnet or no_bidirect)");
}

struct StageConfig {
  int stage = 1;
  int epochs = 1;
  float lr = 1e-4f;
  int batch_size = 4;
  uint64_t seed = 0;
  LossWeights weights;
  int height = 96;
  int width = 96;

  void validate() const {
    const std::string s = "stage" + std::to_string(stage);
    require(stage >= 1 && stage <= 3, "stage id must be 1, 2 or 3");
    require(epochs >= 1, s + ".epochs must be >= 1");
    require(lr > 0, s + ".lr must be positive");
    require(batch_size >= 1, s + ".batch_size must be >= 1");
    require(height > 0 && width > 0, s + ": image size must be positive");
    weights.validate();
  }
};

struct NetworkWidths {
  int depth = 16;
  int translator = 16;
  int residual_blocks = 4;
  int tnet = 16;
  float min_depth = 0.01f;
  float max_depth = 20.0f;
  float initial_depth = 1.0f;
};

struct TrainConfig {
  uint64_t seed = 0;
  int height = 96;
  int width = 96;
  std::array<StageConfig, 3> stages{};
  NetworkWidths widths;
  Variant variant = Variant::full;
  ConsistencyMode cons_mode = ConsistencyMode::warped_z;
  /// Keep updating the translators after stage 1 (through the depth losses).
  bool refine_translators = false;
  /// Frame gap between the two images of a training pair.
  int pair_stride = 1;

  /// Stage settings with the schedule of the full-scale configuration.
  TrainConfig() {
    const int epochs[3] = {200, 110, 110};
    const float lrs[3] = {5e-5f, 1e-4f, 1e-4f};
    for (int i = 0; i < 3; ++i) {
      stages[i].stage = i + 1;
      stages[i].epochs = epochs[i];
      stages[i].lr = lrs[i];
    }
    sync();
  }

  /// Propagates the global seed and image size into the stage records.
  void sync() {
    for (auto& s : stages) {
      s.seed = seed;
      s.height = height;
      s.width = width;
    }
  }

  void validate() const {
    for (const auto& s : stages) s.validate();
    require(pair_stride >= 1, "pair_stride must be >= 1");
    require(widths.depth >= 1 && widths.translator >= 1 && widths.tnet >= 1 && widths.residual_blocks >= 0,
            "network widths must be positive");
  }
};

}  // namespace toder::train
