#include "kgcoop/prompt.hpp"

#include <algorithm>

#include "kgcoop/errors.hpp"
#include "kgcoop/rng.hpp"

namespace kgcoop {

ClassSet default_class_set(int n_classes) {
  if (n_classes < 1)
    throw ConfigError("class set needs at least 1 class, got " +
                      std::to_string(n_classes));
  ClassSet cs;
  for (int i = 0; i < n_classes; ++i) {
    cs.names.push_back("class_" + std::to_string(i));
    cs.descriptors.push_back("desc_" + std::to_string(i));
  }
  return cs;
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = ids.find(word);
  if (it == ids.end())
    throw VocabError("word '" + word + "' is not in the vocabulary");
  return it->second;
}

std::vector<double> Vocabulary::embedding_row(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words.size())
    throw VocabError("token id " + std::to_string(id) + " outside [0, " +
                     std::to_string(words.size()) + ")");
  const auto& v = embeddings.values();
  const std::size_t d = static_cast<std::size_t>(d_tok);
  return std::vector<double>(v.begin() + id * d, v.begin() + (id + 1) * d);
}

// Words every built-in template can need, beyond class/descriptor tokens.
static const std::vector<std::string>& template_words() {
  static const std::vector<std::string> w = {
      "a", "photo", "of", "the", "large", "itap",
      "in", "video", "game", "type", ","};
  return w;
}

Vocabulary make_vocabulary(const ClassSet& classes, int d_tok,
                           std::uint64_t seed) {
  if (d_tok < 1)
    throw ConfigError("d_tok must be >= 1, got " + std::to_string(d_tok));
  Vocabulary v;
  v.d_tok = d_tok;
  auto push = [&v](const std::string& w) {
    if (!v.ids.emplace(w, static_cast<int>(v.words.size())).second)
      throw ConfigError("duplicate vocabulary word '" + w + "'");
    v.words.push_back(w);
  };
  push("<pad>");
  push("<class>");
  push("<desc>");
  for (const auto& w : template_words()) push(w);
  push("X");
  for (const auto& n : classes.names) push(n);
  for (const auto& d : classes.descriptors) push(d);

  SeededRng rng(derive_seed(seed, SeedStream::vocabulary));
  std::vector<double> table(v.words.size() * d_tok);
  for (auto& e : table) e = rng.gaussian(0.0, 0.02);
  v.embeddings = Tensor::from_data(
      {v.words.size(), static_cast<std::size_t>(d_tok)}, std::move(table));
  return v;
}

const std::vector<std::string>& PromptTemplate::builtin_ids() {
  static const std::vector<std::string> ids = {"T1", "T2", "T3",
                                               "T4", "T5", "T6"};
  return ids;
}

PromptTemplate PromptTemplate::builtin(const std::string& id) {
  if (id == "T1") return parse(id, "{}");
  if (id == "T2") return parse(id, "a photo of a {}");
  if (id == "T3") return parse(id, "itap of a {}");
  if (id == "T4") return parse(id, "a photo of the large {}");
  if (id == "T5") return parse(id, "a {} in a video game");
  if (id == "T6") return parse(id, "a photo of a {}, a type of {}");
  throw ConfigError("unknown template '" + id + "' (expected T1..T6)");
}

PromptTemplate PromptTemplate::parse(std::string id, const std::string& text) {
  PromptTemplate t;
  t.id = std::move(id);
  int slots = 0;
  std::size_t i = 0;
  auto emit_word = [&t](const std::string& w) {
    t.pieces.push_back(Piece::word);
    t.piece_words.push_back(w);
  };
  while (i < text.size()) {
    if (text[i] == ' ') {
      ++i;
    } else if (text.compare(i, 2, "{}") == 0) {
      ++slots;
      if (slots > 2)
        throw ParseError("template '" + t.id + "': more than two {} slots");
      t.pieces.push_back(slots == 1 ? Piece::class_slot : Piece::desc_slot);
      t.piece_words.emplace_back();
      i += 2;
    } else if (text[i] == ',') {
      emit_word(",");
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ' && text[j] != ',' &&
             text.compare(j, 2, "{}") != 0)
        ++j;
      emit_word(text.substr(i, j - i));
      i = j;
    }
  }
  if (slots == 0)
    throw ParseError("template '" + t.id + "' has no {} class slot");
  return t;
}

bool PromptTemplate::has_descriptor() const {
  return std::find(pieces.begin(), pieces.end(), Piece::desc_slot) !=
         pieces.end();
}

std::vector<std::string> PromptTemplate::context_words() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < pieces.size(); ++i)
    if (pieces[i] == Piece::word) out.push_back(piece_words[i]);
  return out;
}

static void check_single_token(const std::string& name, const char* what) {
  if (name.empty() || name.find(' ') != std::string::npos)
    throw VocabError(std::string(what) + " '" + name +
                     "' is not a single token");
}

std::vector<int> tokenize(const PromptTemplate& tmpl,
                          const std::string& class_name,
                          const Vocabulary& vocab,
                          const std::string& descriptor) {
  check_single_token(class_name, "class name");
  std::vector<int> out;
  for (std::size_t i = 0; i < tmpl.pieces.size(); ++i) {
    switch (tmpl.pieces[i]) {
      case PromptTemplate::Piece::word:
        out.push_back(vocab.id_of(tmpl.piece_words[i]));
        break;
      case PromptTemplate::Piece::class_slot:
        out.push_back(vocab.id_of(class_name));
        break;
      case PromptTemplate::Piece::desc_slot:
        if (descriptor.empty())
          throw ContractError("template '" + tmpl.id +
                              "' has a descriptor slot but no descriptor "
                              "was given");
        check_single_token(descriptor, "descriptor");
        out.push_back(vocab.id_of(descriptor));
        break;
    }
  }
  return out;
}

Tensor init_context(ContextInit mode, int m, const Vocabulary& vocab,
                    const PromptTemplate& tmpl, std::uint64_t seed) {
  if (m < 1)
    throw ConfigError("context length must be >= 1, got " + std::to_string(m));
  const std::size_t d = static_cast<std::size_t>(vocab.d_tok);
  if (mode == ContextInit::gaussian) {
    SeededRng rng(derive_seed(seed, SeedStream::context_init));
    std::vector<double> data(static_cast<std::size_t>(m) * d);
    for (auto& e : data) e = rng.gaussian(0.0, 0.02);
    return Tensor::from_data({static_cast<std::size_t>(m), d},
                             std::move(data), /*trainable=*/true);
  }
  const auto words = tmpl.context_words();
  if (words.size() > static_cast<std::size_t>(m))
    throw ConfigError("context length " + std::to_string(m) +
                      " cannot hold the " + std::to_string(words.size()) +
                      " context words of template '" + tmpl.id + "'");
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m) * d);
  const std::size_t pad = static_cast<std::size_t>(m) - words.size();
  const auto filler = vocab.embedding_row(vocab.id_of("X"));
  for (std::size_t i = 0; i < pad; ++i)
    data.insert(data.end(), filler.begin(), filler.end());
  for (const auto& w : words) {
    const auto row = vocab.embedding_row(vocab.id_of(w));
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor::from_data({static_cast<std::size_t>(m), d}, std::move(data),
                           /*trainable=*/true);
}

PromptAssembly make_assembly(const Vocabulary& vocab, const ClassSet& classes,
                             int context_len, ContextInit mode,
                             const PromptTemplate& tmpl, std::uint64_t seed) {
  if (classes.names.empty()) throw ConfigError("assembly needs classes");
  PromptAssembly pa;
  pa.context = init_context(mode, context_len, vocab, tmpl, seed);
  pa.context_len = context_len;
  pa.classes = classes;
  const std::size_t d = static_cast<std::size_t>(vocab.d_tok);
  std::vector<double> rows;
  rows.reserve(classes.names.size() * d);
  for (const auto& name : classes.names) {
    check_single_token(name, "class name");
    const auto row = vocab.embedding_row(vocab.id_of(name));
    rows.insert(rows.end(), row.begin(), row.end());
  }
  pa.class_tokens =
      Tensor::from_data({classes.names.size(), d}, std::move(rows));
  return pa;
}

Tensor assemble(Graph& g, const PromptAssembly& pa, int class_index) {
  if (class_index < 0 || class_index >= pa.n_classes())
    throw ContractError("assemble: class index " +
                        std::to_string(class_index) + " outside [0, " +
                        std::to_string(pa.n_classes()) + ")");
  const std::size_t d = pa.class_tokens.cols();
  // The class row enters as a fresh constant: the tape never routes a
  // gradient toward the frozen class-token table.
  std::vector<double> row(d);
  for (std::size_t j = 0; j < d; ++j)
    row[j] = pa.class_tokens.at(static_cast<std::size_t>(class_index), j);
  return concat_rows(g, pa.context, Tensor::from_data({d}, std::move(row)));
}

Tensor clip_prompt_tokens(const PromptTemplate& tmpl, int class_index,
                          const ClassSet& classes, const Vocabulary& vocab) {
  if (class_index < 0 ||
      static_cast<std::size_t>(class_index) >= classes.names.size())
    throw ContractError("clip_prompt_tokens: class index " +
                        std::to_string(class_index) + " outside [0, " +
                        std::to_string(classes.names.size()) + ")");
  const std::string desc =
      tmpl.has_descriptor() ? classes.descriptors.at(class_index) : "";
  const auto ids =
      tokenize(tmpl, classes.names[class_index], vocab, desc);
  const std::size_t d = static_cast<std::size_t>(vocab.d_tok);
  std::vector<double> data;
  data.reserve(ids.size() * d);
  for (int id : ids) {
    const auto row = vocab.embedding_row(id);
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor::from_data({ids.size(), d}, std::move(data));
}

}  // namespace kgcoop
