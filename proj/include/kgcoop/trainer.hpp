#pragma once

#include <string>
#include <vector>

#include "kgcoop/data.hpp"
#include "kgcoop/losses.hpp"

namespace kgcoop {

enum class Method { coop, kgcoop, kgcoop_pt, kgcoop_kl, prograd };

Method method_from_string(const std::string& s);  // ConfigError
std::string to_string(Method m);

enum class LrSchedule { cosine, constant };

struct TrainConfig {
  int epochs = 200;  // full-batch steps
  double lr = 0.002;
  double momentum = 0.9;
  LrSchedule schedule = LrSchedule::cosine;
  Method method = Method::kgcoop;
  LossConfig loss;
};

struct StepStats {
  double total = 0.0;
  double ce = 0.0;
  double reg = 0.0;      // 0 when the anchor term is off
  double v_drift = 0.0;  // |V - V_init|, Frobenius
  double kg_dist = 0.0;  // diagnostic, recorded for every method
};

struct RunHistory {
  std::vector<StepStats> steps;
};

// Full-batch gradient descent on the context block; everything else stays
// frozen. The task's base split is the training set (a few-shot task lists
// every class there). Throws TrainingDivergedError with the step index when
// loss or gradient turn non-finite.
RunHistory train(const SyntheticTask& task, PromptAssembly& assembly,
                 const FrozenTextEncoder& enc,
                 const ClassEmbeddings& anchors_all, const TrainConfig& cfg,
                 const Tensor& pt_reference = {});

// Gradient surgery: keep g_task unless it points against g_general, in which
// case remove the conflicting component. The result is a fresh tensor.
Tensor prograd_project(const Tensor& g_task, const Tensor& g_general);

// Method dispatch: fixes the regularizer per method (coop none, kgcoop kg,
// kgcoop_pt pt, kgcoop_kl kl) and routes prograd through its projected
// update. The caller's lambda applies to the kgcoop variants.
RunHistory run_method(Method m, const SyntheticTask& task,
                      PromptAssembly& assembly, const FrozenTextEncoder& enc,
                      const ClassEmbeddings& anchors_all, TrainConfig cfg,
                      const Tensor& pt_reference = {});

}  // namespace kgcoop
