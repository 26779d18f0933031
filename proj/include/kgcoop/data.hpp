#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgcoop/encoder.hpp"
#include "kgcoop/prompt.hpp"

namespace kgcoop {

struct GenParams {
  std::uint64_t seed = 42;
  int n_classes = 10;
  double base_fraction = 0.5;  // share of classes seen during training
  int k_shot = 16;             // training samples per seen class
  int test_per_class = 50;
  // Calibrated pair: wide enough drift that plain context tuning overfits
  // the seen classes, low enough noise that the damage shows up in held-out
  // accuracy. Tuned once against the default encoder, then frozen.
  double noise_sigma = 0.15;   // sample spread around the class prototype
  double drift_alpha = 0.30;   // how far prototypes drift off the anchors
  double shift_beta = 0.0;     // test-time prototype offset
  bool all_seen = false;       // few-shot regime: every class is seen
};

struct Sample {
  std::vector<double> x;  // unit-norm joint-space embedding
  int label = 0;          // global class id
};

struct SyntheticTask {
  ClassSet classes;
  std::vector<int> base_ids, new_ids;
  std::vector<Sample> train, test_base, test_new;
  GenParams params;
  int d_joint = 0;
};

// Samples around class prototypes that interpolate between the anchor
// embeddings (drift_alpha = 0) and random directions (drift_alpha = 1):
//   mu_i = normalize((1 - alpha) * anchor_i + alpha * dir_i)
//   x    = normalize(mu_i + eps),  eps ~ N(0, noise_sigma^2 I)
// Class names are synthesized (class_0, class_1, ...) and must be present
// in the vocabulary. Base classes are the first round(n * base_fraction)
// ids; test prototypes get an extra `shift_beta` offset when nonzero.
SyntheticTask generate(const GenParams& params, const FrozenTextEncoder& enc,
                       const Vocabulary& vocab, const PromptTemplate& tmpl);

// Line-oriented UTF-8 snapshot: key=value header (all generate parameters,
// counts, per-split FNV-1a checksums), then one line per sample holding the
// split name, the class id, and the embedding at 17 significant digits.
void save_manifest(const SyntheticTask& task, const std::string& path);
SyntheticTask load_manifest(const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace kgcoop
