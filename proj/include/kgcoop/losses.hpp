#pragma once

#include <string>
#include <vector>

#include "kgcoop/encoder.hpp"
#include "kgcoop/tensor.hpp"

namespace kgcoop {

enum class Regularizer { kg, pt, kl, none };

Regularizer regularizer_from_string(const std::string& s);  // ConfigError
std::string to_string(Regularizer r);

struct LossConfig {
  double lambda = 8.0;
  double temperature = 0.07;  // frozen; logits are cosine / temperature
  Regularizer regularizer = Regularizer::kg;
};

// Probability row over W's classes for one joint-space embedding:
// softmax of cos(x, w_i) / tau.
Tensor predict(Graph& g, const Tensor& x, const ClassEmbeddings& w,
               double tau);

// Mean over the batch of -log p(label | x).
Tensor ce_loss(Graph& g, const Tensor& xs, const std::vector<int>& labels,
               const ClassEmbeddings& w, double tau);

// Mean squared distance between learned and anchor class embeddings,
// (1/n) * sum_i |w_i - w_i^anchor|^2. Both sides must live in the same
// space (normalized with normalized).
Tensor kg_loss(Graph& g, const ClassEmbeddings& w,
               const ClassEmbeddings& anchors);

// Mean squared distance between the context rows and the template's token
// rows; anchors the prompt in token space instead of embedding space.
Tensor pt_loss(Graph& g, const Tensor& context, const Tensor& reference);

// Mean KL(anchor prediction || learned prediction) over the batch; anchors
// the predicted distributions instead of the embeddings.
Tensor kl_loss(Graph& g, const Tensor& xs, const ClassEmbeddings& w,
               const ClassEmbeddings& anchors, double tau);

struct LossParts {
  Tensor total;          // always defined
  Tensor ce;             // always defined
  Tensor reg;            // undefined when the anchor term is off
  Tensor seen_embeddings;  // normalized class rows used by this pass
};

// Everything one objective evaluation needs. `labels` index into `seen_ids`,
// and `anchors_seen` rows align with `seen_ids`.
struct LossInputs {
  Tensor xs;                     // {n, d_joint}
  std::vector<int> labels;       // positions into seen_ids
  const FrozenTextEncoder* enc = nullptr;
  const PromptAssembly* assembly = nullptr;
  std::vector<int> seen_ids;
  ClassEmbeddings anchors_seen;  // normalized
  Tensor pt_reference;           // {m, d_tok}; required for Regularizer::pt
};

// ce + lambda * regularizer on one batch. With regularizer none or
// lambda == 0 the anchor term is skipped entirely, so the result is the
// plain ce objective, bit for bit.
LossParts total_loss(Graph& g, const LossInputs& in, const LossConfig& cfg);

}  // namespace kgcoop
