#include "kgcoop/trainer.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "kgcoop/errors.hpp"

namespace kgcoop {

Method method_from_string(const std::string& s) {
  if (s == "coop") return Method::coop;
  if (s == "kgcoop") return Method::kgcoop;
  if (s == "kgcoop_pt") return Method::kgcoop_pt;
  if (s == "kgcoop_kl") return Method::kgcoop_kl;
  if (s == "prograd") return Method::prograd;
  throw ConfigError("unknown method '" + s +
                    "' (expected coop, kgcoop, kgcoop_pt, kgcoop_kl or "
                    "prograd)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::coop: return "coop";
    case Method::kgcoop: return "kgcoop";
    case Method::kgcoop_pt: return "kgcoop_pt";
    case Method::kgcoop_kl: return "kgcoop_kl";
    case Method::prograd: return "prograd";
  }
  return "?";
}

static void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1)
    throw ConfigError("epochs must be >= 1, got " +
                      std::to_string(cfg.epochs));
  if (cfg.lr < 0.0) throw ConfigError("lr must be >= 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("momentum must be in [0, 1), got " +
                      std::to_string(cfg.momentum));
}

static double mean_row_sq_dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double c = a.values()[i] - b.values()[i];
    s += c * c;
  }
  return s / static_cast<double>(a.rows());
}

// Training batch with labels remapped to positions in the seen-id list.
static LossInputs make_loss_inputs(const SyntheticTask& task,
                                   const PromptAssembly& assembly,
                                   const FrozenTextEncoder& enc,
                                   const ClassEmbeddings& anchors_all,
                                   const Tensor& pt_reference) {
  if (task.train.empty())
    throw ContractError("train: the task has no training samples");
  const auto& seen = task.base_ids;
  std::unordered_map<int, int> pos;
  for (std::size_t i = 0; i < seen.size(); ++i)
    pos[seen[i]] = static_cast<int>(i);

  const std::size_t n = task.train.size();
  const std::size_t d = static_cast<std::size_t>(task.d_joint);
  std::vector<double> xs;
  xs.reserve(n * d);
  std::vector<int> labels;
  labels.reserve(n);
  for (const auto& s : task.train) {
    if (s.x.size() != d)
      throw ShapeError("train: sample width " + std::to_string(s.x.size()) +
                       " does not match d_joint " + std::to_string(d));
    auto it = pos.find(s.label);
    if (it == pos.end())
      throw ContractError("train: sample of class " +
                          std::to_string(s.label) +
                          " is not in the seen split");
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    labels.push_back(it->second);
  }

  LossInputs in;
  in.xs = Tensor::from_data({n, d}, std::move(xs));
  in.labels = std::move(labels);
  in.enc = &enc;
  in.assembly = &assembly;
  in.seen_ids = seen;
  in.anchors_seen = anchors_all.select(seen);
  in.pt_reference = pt_reference;
  return in;
}

Tensor prograd_project(const Tensor& g_task, const Tensor& g_general) {
  if (g_task.shape() != g_general.shape())
    throw ShapeError("prograd_project: shapes " + shape_str(g_task.shape()) +
                     " and " + shape_str(g_general.shape()) + " differ");
  double dot = 0.0;
  for (std::size_t i = 0; i < g_task.size(); ++i)
    dot += g_task.values()[i] * g_general.values()[i];
  if (dot >= 0.0) return g_task.clone();
  double gg = 0.0;
  for (double v : g_general.values()) gg += v * v;
  const double coef = dot / gg;  // dot < 0 implies g_general is nonzero
  Tensor out = g_task.clone();
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values()[i] -= coef * g_general.values()[i];
  return out;
}

RunHistory train(const SyntheticTask& task, PromptAssembly& assembly,
                 const FrozenTextEncoder& enc,
                 const ClassEmbeddings& anchors_all, const TrainConfig& cfg,
                 const Tensor& pt_reference) {
  validate_train_config(cfg);
  if (!anchors_all.normalized)
    throw ContractError("train: anchors must be normalized");
  if (!assembly.context.trainable())
    throw ContractError("train: the context block is not trainable");

  const LossInputs in =
      make_loss_inputs(task, assembly, enc, anchors_all, pt_reference);
  Tensor v = assembly.context;
  const Tensor v_init = v.clone();
  std::vector<double> velocity(v.size(), 0.0);

  const bool prograd = cfg.method == Method::prograd;
  LossConfig ce_only = cfg.loss;
  ce_only.regularizer = Regularizer::none;
  LossConfig kl_cfg = cfg.loss;
  kl_cfg.regularizer = Regularizer::kl;
  kl_cfg.lambda = 1.0;

  RunHistory history;
  history.steps.reserve(cfg.epochs);
  for (int step = 0; step < cfg.epochs; ++step) {
    StepStats st;
    std::vector<double> grad;
    if (!prograd) {
      Graph g;
      LossParts parts = total_loss(g, in, cfg.loss);
      g.backward(parts.total);
      grad = v.grad();
      st.total = parts.total.item();
      st.ce = parts.ce.item();
      st.reg = parts.reg.defined() ? parts.reg.item() : 0.0;
      st.kg_dist =
          mean_row_sq_dist(parts.seen_embeddings, in.anchors_seen.rows);
    } else {
      // Projected updates: the task gradient, stripped of any component
      // that conflicts with the general-knowledge (kl) gradient.
      Graph g1;
      LossParts ce_parts = total_loss(g1, in, ce_only);
      g1.backward(ce_parts.total);
      Tensor g_task = Tensor::from_data(v.shape(), v.grad());
      Graph g2;
      LossParts kl_parts = total_loss(g2, in, kl_cfg);
      g2.backward(kl_parts.reg);
      Tensor g_general = Tensor::from_data(v.shape(), v.grad());
      grad = prograd_project(g_task, g_general).values();
      st.total = ce_parts.total.item();
      st.ce = ce_parts.ce.item();
      st.reg = kl_parts.reg.item();
      st.kg_dist =
          mean_row_sq_dist(ce_parts.seen_embeddings, in.anchors_seen.rows);
    }

    bool finite = std::isfinite(st.total) && std::isfinite(st.ce) &&
                  std::isfinite(st.reg);
    for (double gv : grad) finite = finite && std::isfinite(gv);
    if (!finite)
      throw TrainingDivergedError(
          "training diverged at step " + std::to_string(step) +
          ": non-finite loss or gradient",
        step);

    double drift = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double c = v.values()[i] - v_init.values()[i];
      drift += c * c;
    }
    st.v_drift = std::sqrt(drift);
    history.steps.push_back(st);

    const double lr_t =
        cfg.schedule == LrSchedule::cosine
            ? cfg.lr * 0.5 *
                  (1.0 + std::cos(std::numbers::pi * double(step) /
                                  double(cfg.epochs)))
            : cfg.lr;
    for (std::size_t i = 0; i < v.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] + grad[i];
      v.values()[i] -= lr_t * velocity[i];
    }
  }
  return history;
}

RunHistory run_method(Method m, const SyntheticTask& task,
                      PromptAssembly& assembly, const FrozenTextEncoder& enc,
                      const ClassEmbeddings& anchors_all, TrainConfig cfg,
                      const Tensor& pt_reference) {
  cfg.method = m;
  switch (m) {
    case Method::coop: cfg.loss.regularizer = Regularizer::none; break;
    case Method::kgcoop: cfg.loss.regularizer = Regularizer::kg; break;
    case Method::kgcoop_pt: cfg.loss.regularizer = Regularizer::pt; break;
    case Method::kgcoop_kl: cfg.loss.regularizer = Regularizer::kl; break;
    case Method::prograd: break;  // projected updates, no penalty term
  }
  return train(task, assembly, enc, anchors_all, cfg, pt_reference);
}

}  // namespace kgcoop
