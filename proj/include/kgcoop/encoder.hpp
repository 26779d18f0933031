#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kgcoop/prompt.hpp"
#include "kgcoop/tensor.hpp"

namespace kgcoop {

struct EncoderConfig {
  int n_blocks = 2;
  int n_heads = 2;
  int d_tok = 32;
  int d_joint = 16;
  int max_len = 24;
  std::uint64_t seed = 7;
};

// Small pre-layer-norm transformer over token embedding rows, pooled at the
// last position and projected into the joint space. Every parameter is
// seeded at construction and never updated: weights N(0, 0.02^2), biases 0,
// layer-norm gains 1. It stands in for a text tower whose weights we do not
// train; gradients flow through it to the prompt rows, not into it.
class FrozenTextEncoder {
 public:
  explicit FrozenTextEncoder(const EncoderConfig& cfg);

  // tokens: {len, d_tok}, 1 <= len <= max_len  ->  {d_joint}
  Tensor encode(Graph& g, const Tensor& tokens) const;

  const EncoderConfig& config() const { return cfg_; }

  // every parameter tensor with a stable name, for freezing checks
  std::vector<std::pair<std::string, Tensor>> parameters() const;

 private:
  EncoderConfig cfg_;
  Tensor pos_emb_;  // {max_len, d_tok}
  struct Block {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;  // FFN, hidden width 4 * d_tok
  };
  std::vector<Block> blocks_;
  Tensor proj_;  // {d_tok, d_joint}
};

// Learned or anchor class embeddings, one row per class. `normalized`
// records whether rows were already scaled to unit norm.
struct ClassEmbeddings {
  Tensor rows;
  bool normalized = false;

  std::size_t n_classes() const { return rows.rows(); }
  ClassEmbeddings select(const std::vector<int>& ids) const;  // detached copy
};

// Embeddings of the given classes through the prompt learner, on the tape.
ClassEmbeddings embed_classes(Graph& g, const FrozenTextEncoder& enc,
                              const PromptAssembly& pa,
                              const std::vector<int>& ids, bool normalize);
ClassEmbeddings embed_all_classes(Graph& g, const FrozenTextEncoder& enc,
                                  const PromptAssembly& pa, bool normalize);

// Anchor embeddings from the hand-written template. Pure function of frozen
// state: callers compute it once per run and reuse the result.
ClassEmbeddings embed_anchor_classes(const FrozenTextEncoder& enc,
                                     const PromptTemplate& tmpl,
                                     const ClassSet& classes,
                                     const Vocabulary& vocab, bool normalize);

}  // namespace kgcoop
