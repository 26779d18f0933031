#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgcoop/tensor.hpp"

namespace kgcoop {

// Class catalog: one single-token name per class, plus one descriptor word
// used by the template variant with a second slot ("..., a type of {}").
struct ClassSet {
  std::vector<std::string> names;
  std::vector<std::string> descriptors;
};

// class_0..class_{n-1} with descriptors desc_0..desc_{n-1}
ClassSet default_class_set(int n_classes);

// Closed vocabulary over a frozen token-embedding table. Ids are dense and
// fully determined by (class set, d_tok, seed). Ids 0..2 are reserved for
// padding and the class/descriptor slots; they never appear in encoded text.
struct Vocabulary {
  int d_tok = 0;
  std::vector<std::string> words;            // id -> word
  std::unordered_map<std::string, int> ids;  // word -> id
  Tensor embeddings;                         // {|words|, d_tok}, frozen

  static constexpr int pad_id = 0;
  static constexpr int class_slot_id = 1;
  static constexpr int desc_slot_id = 2;

  std::size_t size() const { return words.size(); }
  int id_of(const std::string& word) const;          // VocabError
  std::vector<double> embedding_row(int id) const;   // copy of one row
};

Vocabulary make_vocabulary(const ClassSet& classes, int d_tok,
                           std::uint64_t seed);

// Prompt text with exactly one class slot and at most one descriptor slot.
// Built-in set:
//   T1  "{}"
//   T2  "a photo of a {}"
//   T3  "itap of a {}"
//   T4  "a photo of the large {}"
//   T5  "a {} in a video game"
//   T6  "a photo of a {}, a type of {}"
struct PromptTemplate {
  enum class Piece { word, class_slot, desc_slot };
  std::string id;
  std::vector<Piece> pieces;
  std::vector<std::string> piece_words;  // aligned; empty string for slots

  static PromptTemplate builtin(const std::string& id);  // ConfigError
  static PromptTemplate parse(std::string id, const std::string& text);
  static const std::vector<std::string>& builtin_ids();

  bool has_descriptor() const;
  std::vector<std::string> context_words() const;  // words only, in order
};

// Token ids with the class name (and descriptor, if the template has a
// second slot) substituted in place.
std::vector<int> tokenize(const PromptTemplate& tmpl,
                          const std::string& class_name,
                          const Vocabulary& vocab,
                          const std::string& descriptor = "");

enum class ContextInit { from_template, gaussian };

// Trainable context block V of shape {m, d_tok}. from_template copies the
// template's word embeddings (prefixed with "X" filler rows when m exceeds
// the word count); gaussian draws N(0, 0.02^2) from the seeded stream.
Tensor init_context(ContextInit mode, int m, const Vocabulary& vocab,
                    const PromptTemplate& tmpl, std::uint64_t seed);

// The prompt learner's state: one shared context block plus the frozen
// class-token rows it is combined with.
struct PromptAssembly {
  Tensor context;       // {m, d_tok}, the only trainable tensor anywhere
  Tensor class_tokens;  // {n_classes, d_tok}, frozen
  int context_len = 0;
  ClassSet classes;

  int n_classes() const { return static_cast<int>(classes.names.size()); }
};

PromptAssembly make_assembly(const Vocabulary& vocab, const ClassSet& classes,
                             int context_len, ContextInit mode,
                             const PromptTemplate& tmpl, std::uint64_t seed);

// Prompt matrix {m+1, d_tok} for one class: context rows then the class
// token. Gradients flow to the context block only.
Tensor assemble(Graph& g, const PromptAssembly& pa, int class_index);

// Hand-written prompt for the frozen anchor side: embedding rows of the
// tokenized template, class name substituted. No trainable parts.
Tensor clip_prompt_tokens(const PromptTemplate& tmpl, int class_index,
                          const ClassSet& classes, const Vocabulary& vocab);

}  // namespace kgcoop
