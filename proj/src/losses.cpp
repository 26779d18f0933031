#include "kgcoop/losses.hpp"

#include <cmath>

#include "kgcoop/errors.hpp"

namespace kgcoop {

Regularizer regularizer_from_string(const std::string& s) {
  if (s == "kg") return Regularizer::kg;
  if (s == "pt") return Regularizer::pt;
  if (s == "kl") return Regularizer::kl;
  if (s == "none") return Regularizer::none;
  throw ConfigError("unknown regularizer '" + s +
                    "' (expected kg, pt, kl or none)");
}

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::kg: return "kg";
    case Regularizer::pt: return "pt";
    case Regularizer::kl: return "kl";
    case Regularizer::none: return "none";
  }
  return "?";
}

static void check_tau(double tau) {
  if (!(tau > 0.0))
    throw ConfigError("temperature must be > 0, got " + std::to_string(tau));
}

static Tensor unit_rows(Graph& g, const ClassEmbeddings& w) {
  return w.normalized ? w.rows : normalize_rows(g, w.rows);
}

// cosine similarities of every row of xs against every class, over tau
static Tensor logits_for(Graph& g, const Tensor& xs, const ClassEmbeddings& w,
                         double tau) {
  Tensor xn = normalize_rows(g, xs);
  return affine(g, matmul_nt(g, xn, unit_rows(g, w)), 1.0 / tau, 0.0);
}

Tensor predict(Graph& g, const Tensor& x, const ClassEmbeddings& w,
               double tau) {
  check_tau(tau);
  Tensor row = x.ndim() == 1 ? reshape(g, x, {1, x.size()}) : x;
  if (row.rows() != 1 || row.cols() != w.rows.cols())
    throw ShapeError("predict: embedding " + shape_str(x.shape()) +
                     " does not match class rows " +
                     shape_str(w.rows.shape()));
  Tensor probs = softmax_rows(g, logits_for(g, row, w, tau));
  return take_row(g, probs, 0);
}

Tensor ce_loss(Graph& g, const Tensor& xs, const std::vector<int>& labels,
               const ClassEmbeddings& w, double tau) {
  check_tau(tau);
  if (xs.ndim() != 2 || xs.cols() != w.rows.cols())
    throw ShapeError("ce_loss: batch " + shape_str(xs.shape()) +
                     " does not match class rows " +
                     shape_str(w.rows.shape()));
  if (labels.size() != xs.rows())
    throw ShapeError("ce_loss: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(xs.rows()) + " samples");
  if (labels.empty()) throw ContractError("ce_loss: empty batch");
  Tensor log_probs = log_softmax_rows(g, logits_for(g, xs, w, tau));
  return affine(g, mean_all(g, pick(g, log_probs, labels)), -1.0, 0.0);
}

Tensor kg_loss(Graph& g, const ClassEmbeddings& w,
               const ClassEmbeddings& anchors) {
  if (w.normalized != anchors.normalized)
    throw ContractError(
        "kg_loss: operands live in different spaces (normalized flags "
        "disagree)");
  Tensor wr = unit_rows(g, w);
  Tensor ar = anchors.normalized ? anchors.rows : normalize_rows(g, anchors.rows);
  if (wr.shape() != ar.shape())
    throw ShapeError("kg_loss: class rows " + shape_str(wr.shape()) +
                     " and anchors " + shape_str(ar.shape()) + " differ");
  const double inv_n = 1.0 / static_cast<double>(wr.rows());
  return affine(g, squared_l2(g, wr, ar), inv_n, 0.0);
}

Tensor pt_loss(Graph& g, const Tensor& context, const Tensor& reference) {
  if (context.shape() != reference.shape())
    throw ShapeError("pt_loss: context " + shape_str(context.shape()) +
                     " and reference " + shape_str(reference.shape()) +
                     " differ");
  const double inv_m = 1.0 / static_cast<double>(context.rows());
  return affine(g, squared_l2(g, context, reference), inv_m, 0.0);
}

Tensor kl_loss(Graph& g, const Tensor& xs, const ClassEmbeddings& w,
               const ClassEmbeddings& anchors, double tau) {
  check_tau(tau);
  if (xs.ndim() != 2) throw ShapeError("kl_loss: batch must be rank-2");
  const std::size_t n = xs.rows(), c = anchors.rows.rows();
  if (w.rows.rows() != c)
    throw ShapeError("kl_loss: class rows " + shape_str(w.rows.shape()) +
                     " and anchors " + shape_str(anchors.rows.shape()) +
                     " differ");

  // Anchor predictions are constant with respect to everything trainable;
  // evaluate them off the tape.
  Tensor q;
  {
    Graph scratch;
    q = softmax_rows(scratch, logits_for(scratch, xs, anchors, tau)).clone();
  }
  double entropy_sum = 0.0;  // sum of q log q, the constant part of the KL
  for (double v : q.values())
    if (v > 0.0) entropy_sum += v * std::log(v);

  Tensor log_probs = log_softmax_rows(g, logits_for(g, xs, w, tau));
  Tensor cross = sum_all(g, mul(g, log_probs, q));
  const double inv_n = 1.0 / static_cast<double>(n);
  return affine(g, cross, -inv_n, entropy_sum * inv_n);
}

LossParts total_loss(Graph& g, const LossInputs& in, const LossConfig& cfg) {
  if (in.enc == nullptr || in.assembly == nullptr)
    throw ContractError("total_loss: encoder and assembly are required");
  if (cfg.lambda < 0.0)
    throw ConfigError("lambda must be >= 0, got " +
                      std::to_string(cfg.lambda));
  if (in.seen_ids.empty())
    throw ContractError("total_loss: no seen class ids");

  LossParts parts;
  ClassEmbeddings w =
      embed_classes(g, *in.enc, *in.assembly, in.seen_ids, /*normalize=*/true);
  parts.seen_embeddings = w.rows;
  parts.ce = ce_loss(g, in.xs, in.labels, w, cfg.temperature);

  if (cfg.regularizer == Regularizer::none || cfg.lambda == 0.0) {
    parts.total = parts.ce;
    return parts;
  }
  switch (cfg.regularizer) {
    case Regularizer::kg:
      parts.reg = kg_loss(g, w, in.anchors_seen);
      break;
    case Regularizer::pt:
      if (!in.pt_reference.defined())
        throw ContractError("total_loss: pt regularizer needs a reference");
      parts.reg = pt_loss(g, in.assembly->context, in.pt_reference);
      break;
    case Regularizer::kl:
      parts.reg = kl_loss(g, in.xs, w, in.anchors_seen, cfg.temperature);
      break;
    case Regularizer::none:
      break;  // unreachable
  }
  parts.total = add(g, parts.ce, affine(g, parts.reg, cfg.lambda, 0.0));
  return parts;
}

}  // namespace kgcoop
