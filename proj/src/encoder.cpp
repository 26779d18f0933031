#include "kgcoop/encoder.hpp"

#include <cmath>

#include "kgcoop/errors.hpp"
#include "kgcoop/rng.hpp"

namespace kgcoop {

static constexpr double kLayerNormEps = 1e-5;

FrozenTextEncoder::FrozenTextEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.d_tok < 1 || cfg.d_joint < 1 || cfg.n_blocks < 1 ||
      cfg.n_heads < 1 || cfg.max_len < 1)
    throw ConfigError("encoder sizes must all be >= 1");
  if (cfg.d_tok % cfg.n_heads != 0)
    throw ConfigError("d_tok " + std::to_string(cfg.d_tok) +
                      " is not divisible by n_heads " +
                      std::to_string(cfg.n_heads));

  SeededRng rng(derive_seed(cfg.seed, SeedStream::encoder));
  auto gauss = [&rng](std::size_t r, std::size_t c) {
    std::vector<double> v(r * c);
    for (auto& e : v) e = rng.gaussian(0.0, 0.02);
    return Tensor::from_data({r, c}, std::move(v));
  };
  auto vec = [](std::size_t n, double fill) {
    return Tensor::from_data({n}, std::vector<double>(n, fill));
  };

  const auto d = static_cast<std::size_t>(cfg.d_tok);
  const auto dj = static_cast<std::size_t>(cfg.d_joint);
  const std::size_t d_ff = 4 * d;
  pos_emb_ = gauss(static_cast<std::size_t>(cfg.max_len), d);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    Block blk;
    blk.ln1_gain = vec(d, 1.0);
    blk.ln1_bias = vec(d, 0.0);
    blk.wq = gauss(d, d);
    blk.bq = vec(d, 0.0);
    blk.wk = gauss(d, d);
    blk.bk = vec(d, 0.0);
    blk.wv = gauss(d, d);
    blk.bv = vec(d, 0.0);
    blk.wo = gauss(d, d);
    blk.bo = vec(d, 0.0);
    blk.ln2_gain = vec(d, 1.0);
    blk.ln2_bias = vec(d, 0.0);
    blk.w1 = gauss(d, d_ff);
    blk.b1 = vec(d_ff, 0.0);
    blk.w2 = gauss(d_ff, d);
    blk.b2 = vec(d, 0.0);
    blocks_.push_back(std::move(blk));
  }
  proj_ = gauss(d, dj);
}

Tensor FrozenTextEncoder::encode(Graph& g, const Tensor& tokens) const {
  if (tokens.ndim() != 2 ||
      tokens.cols() != static_cast<std::size_t>(cfg_.d_tok))
    throw ShapeError("encode: expected {len, " + std::to_string(cfg_.d_tok) +
                     "} tokens, got " + shape_str(tokens.shape()));
  const std::size_t len = tokens.rows();
  if (len > static_cast<std::size_t>(cfg_.max_len))
    throw LengthError("encode: sequence length " + std::to_string(len) +
                      " exceeds max_len " + std::to_string(cfg_.max_len));

  const std::size_t d = static_cast<std::size_t>(cfg_.d_tok);
  const std::size_t heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t dh = d / heads;

  // positions enter as a constant slice; nothing propagates back to them
  std::vector<double> pos(pos_emb_.values().begin(),
                          pos_emb_.values().begin() + len * d);
  Tensor x = add(g, tokens, Tensor::from_data({len, d}, std::move(pos)));

  for (const auto& blk : blocks_) {
    Tensor h = layer_norm(g, x, blk.ln1_gain, blk.ln1_bias, kLayerNormEps);
    Tensor q = add_rowwise(g, matmul(g, h, blk.wq), blk.bq);
    Tensor k = add_rowwise(g, matmul(g, h, blk.wk), blk.bk);
    Tensor v = add_rowwise(g, matmul(g, h, blk.wv), blk.bv);
    Tensor heads_out;
    for (std::size_t i = 0; i < heads; ++i) {
      Tensor qh = slice_cols(g, q, i * dh, (i + 1) * dh);
      Tensor kh = slice_cols(g, k, i * dh, (i + 1) * dh);
      Tensor vh = slice_cols(g, v, i * dh, (i + 1) * dh);
      Tensor scores =
          affine(g, matmul_nt(g, qh, kh), 1.0 / std::sqrt(double(dh)), 0.0);
      Tensor oh = matmul(g, softmax_rows(g, scores), vh);
      heads_out = heads_out.defined() ? concat_cols(g, heads_out, oh) : oh;
    }
    x = add(g, x, add_rowwise(g, matmul(g, heads_out, blk.wo), blk.bo));
    Tensor h2 = layer_norm(g, x, blk.ln2_gain, blk.ln2_bias, kLayerNormEps);
    Tensor f = gelu(g, add_rowwise(g, matmul(g, h2, blk.w1), blk.b1));
    x = add(g, x, add_rowwise(g, matmul(g, f, blk.w2), blk.b2));
  }

  Tensor pooled = reshape(g, take_row(g, x, len - 1), {1, d});
  return reshape(g, matmul(g, pooled, proj_),
                 {static_cast<std::size_t>(cfg_.d_joint)});
}

std::vector<std::pair<std::string, Tensor>> FrozenTextEncoder::parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("pos_emb", pos_emb_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& blk = blocks_[b];
    const std::string p = "block" + std::to_string(b) + ".";
    out.emplace_back(p + "ln1_gain", blk.ln1_gain);
    out.emplace_back(p + "ln1_bias", blk.ln1_bias);
    out.emplace_back(p + "wq", blk.wq);
    out.emplace_back(p + "bq", blk.bq);
    out.emplace_back(p + "wk", blk.wk);
    out.emplace_back(p + "bk", blk.bk);
    out.emplace_back(p + "wv", blk.wv);
    out.emplace_back(p + "bv", blk.bv);
    out.emplace_back(p + "wo", blk.wo);
    out.emplace_back(p + "bo", blk.bo);
    out.emplace_back(p + "ln2_gain", blk.ln2_gain);
    out.emplace_back(p + "ln2_bias", blk.ln2_bias);
    out.emplace_back(p + "w1", blk.w1);
    out.emplace_back(p + "b1", blk.b1);
    out.emplace_back(p + "w2", blk.w2);
    out.emplace_back(p + "b2", blk.b2);
  }
  out.emplace_back("proj", proj_);
  return out;
}

ClassEmbeddings ClassEmbeddings::select(const std::vector<int>& ids) const {
  const std::size_t d = rows.cols();
  std::vector<double> data;
  data.reserve(ids.size() * d);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows.rows())
      throw ContractError("select: class id " + std::to_string(id) +
                          " outside [0, " + std::to_string(rows.rows()) + ")");
    for (std::size_t j = 0; j < d; ++j)
      data.push_back(rows.at(static_cast<std::size_t>(id), j));
  }
  return {Tensor::from_data({ids.size(), d}, std::move(data)), normalized};
}

ClassEmbeddings embed_classes(Graph& g, const FrozenTextEncoder& enc,
                              const PromptAssembly& pa,
                              const std::vector<int>& ids, bool normalize) {
  if (ids.empty()) throw ContractError("embed_classes: no class ids given");
  std::vector<Tensor> rows;
  rows.reserve(ids.size());
  for (int id : ids) rows.push_back(enc.encode(g, assemble(g, pa, id)));
  Tensor w = stack_rows(g, rows);
  if (normalize) w = normalize_rows(g, w);
  return {w, normalize};
}

ClassEmbeddings embed_all_classes(Graph& g, const FrozenTextEncoder& enc,
                                  const PromptAssembly& pa, bool normalize) {
  std::vector<int> ids(pa.n_classes());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return embed_classes(g, enc, pa, ids, normalize);
}

ClassEmbeddings embed_anchor_classes(const FrozenTextEncoder& enc,
                                     const PromptTemplate& tmpl,
                                     const ClassSet& classes,
                                     const Vocabulary& vocab, bool normalize) {
  if (classes.names.empty())
    throw ContractError("embed_anchor_classes: no classes given");
  Graph g;  // throwaway: anchors never need gradients
  std::vector<Tensor> rows;
  rows.reserve(classes.names.size());
  for (std::size_t i = 0; i < classes.names.size(); ++i)
    rows.push_back(enc.encode(
        g, clip_prompt_tokens(tmpl, static_cast<int>(i), classes, vocab)));
  Tensor w = stack_rows(g, rows);
  if (normalize) w = normalize_rows(g, w);
  return {w, normalize};
}

}  // namespace kgcoop
