#include "kgcoop/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "kgcoop/errors.hpp"

namespace kgcoop {

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("unknown report format '" + s +
                    "' (expected csv or json)");
}

double accuracy(const ClassEmbeddings& w, const std::vector<Sample>& samples,
                const std::vector<int>& class_ids, double tau) {
  if (!(tau > 0.0))
    throw ConfigError("temperature must be > 0, got " + std::to_string(tau));
  if (samples.empty())
    throw MetricError("accuracy is undefined on an empty split");
  if (w.rows.rows() != class_ids.size())
    throw ShapeError("accuracy: " + std::to_string(w.rows.rows()) +
                     " class rows for " + std::to_string(class_ids.size()) +
                     " class ids");
  std::unordered_map<int, std::size_t> pos;
  for (std::size_t i = 0; i < class_ids.size(); ++i) pos[class_ids[i]] = i;

  const std::size_t c = w.rows.rows(), d = w.rows.cols();
  std::vector<double> row_norm(c, 1.0);
  if (!w.normalized)
    for (std::size_t j = 0; j < c; ++j) {
      double n2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double v = w.rows.at(j, k);
        n2 += v * v;
      }
      row_norm[j] = std::sqrt(n2);
      if (row_norm[j] == 0.0)
        throw DegenerateInputError("accuracy: class row " + std::to_string(j) +
                                   " has zero norm");
    }

  std::size_t correct = 0;
  for (const auto& s : samples) {
    if (s.x.size() != d)
      throw ShapeError("accuracy: sample width " + std::to_string(s.x.size()) +
                       " does not match class rows of width " +
                       std::to_string(d));
    auto it = pos.find(s.label);
    if (it == pos.end())
      throw ContractError("accuracy: sample label " + std::to_string(s.label) +
                          " is not in this split's label set");
    double xn2 = 0.0;
    for (double v : s.x) xn2 += v * v;
    const double xn = std::sqrt(xn2);
    if (xn == 0.0)
      throw DegenerateInputError("accuracy: zero-norm sample embedding");
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t j = 0; j < c; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += s.x[k] * w.rows.at(j, k);
      const double cs = dot / (xn * row_norm[j]);
      if (cs > best_cos) {
        best_cos = cs;
        best = j;
      }
    }
    if (best == it->second) ++correct;
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(samples.size());
}

double harmonic_mean(double base, double novel) {
  if (base < 0.0 || base > 100.0 || novel < 0.0 || novel > 100.0)
    throw MetricError("harmonic mean expects percentages in [0, 100]");
  if (base == 0.0 && novel == 0.0)
    throw MetricError("harmonic mean of 0 and 0 is undefined");
  return 2.0 * base * novel / (base + novel);
}

double drop_ratio(double zero_shot_new, double method_new) {
  if (!(zero_shot_new > 0.0))
    throw MetricError("drop ratio needs zero-shot accuracy > 0, got " +
                      std::to_string(zero_shot_new));
  return (zero_shot_new - method_new) / zero_shot_new;
}

double embedding_distance(const ClassEmbeddings& a, const ClassEmbeddings& b) {
  if (a.normalized != b.normalized)
    throw ContractError(
        "embedding_distance: operands live in different spaces");
  if (a.rows.shape() != b.rows.shape())
    throw ShapeError("embedding_distance: shapes " +
                     shape_str(a.rows.shape()) + " and " +
                     shape_str(b.rows.shape()) + " differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const double c = a.rows.values()[i] - b.rows.values()[i];
    s += c * c;
  }
  return s / static_cast<double>(a.rows.rows());
}

// --- experiment drivers -----------------------------------------------------

namespace {

struct ExperimentSetup {
  Vocabulary vocab;
  FrozenTextEncoder enc;
  PromptTemplate tmpl;
  ClassEmbeddings anchors;  // all classes, unit rows, computed once
};

ExperimentSetup make_setup(const SyntheticTask& task, const RunConfig& cfg) {
  validate_config(cfg);
  PromptTemplate tmpl = PromptTemplate::builtin(cfg.template_id);
  Vocabulary vocab =
      make_vocabulary(task.classes, cfg.encoder.d_tok, cfg.encoder.seed);
  FrozenTextEncoder enc(cfg.encoder);
  ClassEmbeddings anchors =
      embed_anchor_classes(enc, tmpl, task.classes, vocab, /*normalize=*/true);
  return {std::move(vocab), std::move(enc), std::move(tmpl),
          std::move(anchors)};
}

struct MethodRun {
  RunReport report;
  ClassEmbeddings all_embeddings;  // unit rows, detached
};

MethodRun run_one(Method m, const SyntheticTask& task,
                  const ExperimentSetup& setup, const RunConfig& cfg) {
  PromptAssembly pa = make_assembly(setup.vocab, task.classes,
                                    cfg.context_length, cfg.init, setup.tmpl,
                                    cfg.seed);
  Tensor pt_ref;
  if (m == Method::kgcoop_pt) {
    pt_ref = init_context(ContextInit::from_template, cfg.context_length,
                          setup.vocab, setup.tmpl, cfg.seed);
    pt_ref.set_trainable(false);
  }
  auto history = std::make_shared<RunHistory>(run_method(
      m, task, pa, setup.enc, setup.anchors, cfg.train, pt_ref));

  Graph g;  // evaluation pass; the tape is dropped
  ClassEmbeddings all = embed_all_classes(g, setup.enc, pa, true);
  ClassEmbeddings detached{all.rows.clone(), all.normalized};

  MethodRun run;
  run.all_embeddings = detached;
  run.report.method = to_string(m);
  const bool weighted = m == Method::kgcoop || m == Method::kgcoop_pt ||
                        m == Method::kgcoop_kl;
  run.report.lambda = weighted ? cfg.train.loss.lambda : 0.0;
  run.report.seed = cfg.seed;
  run.report.history = std::move(history);
  run.report.kg_dist = embedding_distance(
      detached.select(task.base_ids), setup.anchors.select(task.base_ids));
  return run;
}

}  // namespace

std::vector<RunReport> base_to_new_experiment(
    const SyntheticTask& task, const std::vector<Method>& methods,
    const RunConfig& cfg) {
  if (task.new_ids.empty())
    throw ContractError(
        "base_to_new_experiment needs a task with held-out classes");
  ExperimentSetup setup = make_setup(task, cfg);
  const double tau = cfg.train.loss.temperature;

  const double zs_base = accuracy(setup.anchors.select(task.base_ids),
                                  task.test_base, task.base_ids, tau);
  const double zs_new = accuracy(setup.anchors.select(task.new_ids),
                                 task.test_new, task.new_ids, tau);
  std::vector<RunReport> reports;
  RunReport zs;
  zs.method = "zero_shot";
  zs.base_acc = zs_base;
  zs.new_acc = zs_new;
  zs.h = harmonic_mean(zs_base, zs_new);
  zs.drop = 0.0;
  zs.zero_shot_base = zs_base;
  zs.zero_shot_new = zs_new;
  zs.kg_dist = 0.0;
  zs.seed = cfg.seed;
  reports.push_back(zs);

  for (Method m : methods) {
    MethodRun run = run_one(m, task, setup, cfg);
    RunReport& r = run.report;
    r.base_acc = accuracy(run.all_embeddings.select(task.base_ids),
                          task.test_base, task.base_ids, tau);
    r.new_acc = accuracy(run.all_embeddings.select(task.new_ids),
                         task.test_new, task.new_ids, tau);
    r.h = harmonic_mean(r.base_acc, *r.new_acc);
    r.drop = 100.0 * drop_ratio(zs_new, *r.new_acc);
    r.zero_shot_base = zs_base;
    r.zero_shot_new = zs_new;
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<LambdaPoint> lambda_ablation(const SyntheticTask& task,
                                         const std::vector<double>& lambdas,
                                         const RunConfig& cfg) {
  if (lambdas.empty()) throw ConfigError("lambda ablation needs values");
  if (task.new_ids.empty())
    throw ContractError("lambda_ablation needs a task with held-out classes");
  ExperimentSetup setup = make_setup(task, cfg);
  const double tau = cfg.train.loss.temperature;

  std::vector<LambdaPoint> points;
  for (double lambda : lambdas) {
    RunConfig run_cfg = cfg;
    run_cfg.train.loss.lambda = lambda;
    MethodRun run = run_one(Method::kgcoop, task, setup, run_cfg);
    const double base = accuracy(run.all_embeddings.select(task.base_ids),
                                 task.test_base, task.base_ids, tau);
    const double novel = accuracy(run.all_embeddings.select(task.new_ids),
                                  task.test_new, task.new_ids, tau);
    points.push_back({lambda, run.report.kg_dist,
                      harmonic_mean(base, novel)});
  }
  return points;
}

std::vector<RunReport> few_shot_experiment(const SyntheticTask& task,
                                           const std::vector<Method>& methods,
                                           const RunConfig& cfg) {
  if (!task.new_ids.empty() ||
      task.base_ids.size() != task.classes.names.size())
    throw ContractError(
        "few_shot_experiment needs a task with every class seen");
  ExperimentSetup setup = make_setup(task, cfg);
  const double tau = cfg.train.loss.temperature;

  std::vector<RunReport> reports;
  RunReport zs;
  zs.method = "zero_shot";
  zs.base_acc =
      accuracy(setup.anchors, task.test_base, task.base_ids, tau);
  zs.zero_shot_base = zs.base_acc;
  zs.kg_dist = 0.0;
  zs.seed = cfg.seed;
  reports.push_back(zs);

  for (Method m : methods) {
    MethodRun run = run_one(m, task, setup, cfg);
    RunReport& r = run.report;
    r.base_acc =
        accuracy(run.all_embeddings, task.test_base, task.base_ids, tau);
    r.zero_shot_base = reports[0].base_acc;
    reports.push_back(std::move(r));
  }
  return reports;
}

// --- output -----------------------------------------------------------------

namespace {

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmtg(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f << content;
    if (!f.flush()) throw IoError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move '" + tmp + "' to '" + path + "'");
}

bool has_new_fields(const std::vector<RunReport>& reports) {
  for (const auto& r : reports)
    if (r.new_acc) return true;
  return false;
}

}  // namespace

void emit_report(const std::vector<RunReport>& reports, ReportFormat format,
                 const std::string& path) {
  const bool full = has_new_fields(reports);
  std::string out;
  if (format == ReportFormat::csv) {
    out = full ? "method,lambda,base,new,h,drop_ratio,kg_dist,seed\n"
               : "method,lambda,base,kg_dist,seed\n";
    for (const auto& r : reports) {
      out += r.method + "," + fmtg(r.lambda) + "," + fmt2(r.base_acc) + ",";
      if (full)
        out += fmt2(r.new_acc.value()) + "," + fmt2(r.h.value()) + "," +
               fmt2(r.drop.value()) + ",";
      out += fmt6(r.kg_dist) + "," + std::to_string(r.seed) + "\n";
    }
  } else {
    out = "[\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      out += "  {\"method\": \"" + r.method + "\", \"lambda\": " +
             fmtg(r.lambda) + ", \"base\": " + fmt2(r.base_acc);
      if (full)
        out += ", \"new\": " + fmt2(r.new_acc.value()) +
               ", \"h\": " + fmt2(r.h.value()) +
               ", \"drop_ratio\": " + fmt2(r.drop.value());
      out += ", \"kg_dist\": " + fmt6(r.kg_dist) +
             ", \"seed\": " + std::to_string(r.seed) + "}";
      out += i + 1 < reports.size() ? ",\n" : "\n";
    }
    out += "]\n";
  }
  atomic_write(path, out);
}

void emit_lambda_table(const std::vector<LambdaPoint>& points,
                       ReportFormat format, const std::string& path) {
  std::string out;
  if (format == ReportFormat::csv) {
    out = "lambda,kg_dist,h\n";
    for (const auto& p : points)
      out += fmtg(p.lambda) + "," + fmt6(p.kg_dist) + "," + fmt2(p.h) + "\n";
  } else {
    out = "[\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
      out += "  {\"lambda\": " + fmtg(points[i].lambda) +
             ", \"kg_dist\": " + fmt6(points[i].kg_dist) +
             ", \"h\": " + fmt2(points[i].h) + "}";
      out += i + 1 < points.size() ? ",\n" : "\n";
    }
    out += "]\n";
  }
  atomic_write(path, out);
}

void emit_history(const RunHistory& history, const std::string& path) {
  std::string out = "step,total,ce,reg,v_drift,kg_dist\n";
  for (std::size_t i = 0; i < history.steps.size(); ++i) {
    const auto& s = history.steps[i];
    out += std::to_string(i) + "," + fmt17(s.total) + "," + fmt17(s.ce) +
           "," + fmt17(s.reg) + "," + fmt17(s.v_drift) + "," +
           fmt17(s.kg_dist) + "\n";
  }
  atomic_write(path, out);
}

std::string format_report_table(const std::vector<RunReport>& reports) {
  const bool full = has_new_fields(reports);
  char buf[256];
  std::string out;
  if (full) {
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s %8s %10s %10s\n",
                  "method", "lambda", "base", "new", "h", "drop", "kg_dist");
    out = buf;
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof buf,
                    "%-12s %8s %8.2f %8.2f %8.2f %10.2f %10.6f\n",
                    r.method.c_str(), fmtg(r.lambda).c_str(), r.base_acc,
                    r.new_acc.value(), r.h.value(), r.drop.value(),
                    r.kg_dist);
      out += buf;
    }
  } else {
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s %10s\n", "method", "lambda",
                  "acc", "kg_dist");
    out = buf;
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof buf, "%-12s %8s %8.2f %10.6f\n",
                    r.method.c_str(), fmtg(r.lambda).c_str(), r.base_acc,
                    r.kg_dist);
      out += buf;
    }
  }
  return out;
}

std::string format_lambda_table(const std::vector<LambdaPoint>& points) {
  char buf[128];
  std::string out = "  lambda    kg_dist        h\n";
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%8s %10.6f %8.2f\n",
                  fmtg(p.lambda).c_str(), p.kg_dist, p.h);
    out += buf;
  }
  return out;
}

}  // namespace kgcoop
