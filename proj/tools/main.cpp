// Command line front end: generate task data, train prompt contexts, and
// run the benchmark protocols against the frozen encoder.
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgcoop/config.hpp"
#include "kgcoop/data.hpp"
#include "kgcoop/encoder.hpp"
#include "kgcoop/errors.hpp"
#include "kgcoop/harness.hpp"
#include "kgcoop/prompt.hpp"
#include "kgcoop/trainer.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string data;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* sub, CommonArgs& a, bool with_format) {
  sub->add_option("--config", a.config, "config file (key = value lines)");
  auto* s = sub->add_option("--seed", a.seed, "override the run seed");
  sub->final_callback([&a, s] { a.seed_set = s->count() > 0; });
  sub->add_option("--out", a.out, "output path");
  if (with_format)
    sub->add_option("--format", a.format, "report format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
}

kgcoop::RunConfig resolve_config(const CommonArgs& a) {
  kgcoop::RunConfig cfg = a.config.empty() ? kgcoop::default_config()
                                           : kgcoop::load_config(a.config);
  if (a.seed_set) {
    cfg.seed = a.seed;
    cfg.gen.seed = a.seed;
  }
  kgcoop::validate_config(cfg);
  return cfg;
}

kgcoop::SyntheticTask obtain_task(const kgcoop::RunConfig& cfg,
                                  const CommonArgs& a, bool all_seen) {
  if (!a.data.empty()) {
    kgcoop::SyntheticTask task = kgcoop::load_manifest(a.data);
    if (task.d_joint != cfg.encoder.d_joint)
      throw kgcoop::ConfigError(
          "manifest embeddings have width " + std::to_string(task.d_joint) +
          " but the configured encoder projects to " +
          std::to_string(cfg.encoder.d_joint));
    return task;
  }
  kgcoop::GenParams p = cfg.gen;
  p.all_seen = all_seen;
  kgcoop::ClassSet classes = kgcoop::default_class_set(p.n_classes);
  kgcoop::Vocabulary vocab =
      kgcoop::make_vocabulary(classes, cfg.encoder.d_tok, cfg.encoder.seed);
  kgcoop::FrozenTextEncoder enc(cfg.encoder);
  kgcoop::PromptTemplate tmpl =
      kgcoop::PromptTemplate::builtin(cfg.template_id);
  return kgcoop::generate(p, enc, vocab, tmpl);
}

std::string default_out(const std::string& base, const std::string& format) {
  return base + (format == "json" ? ".json" : ".csv");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt context tuning against a frozen text encoder"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  bool gen_few_shot = false;
  auto* gen = app.add_subcommand("gen-data",
                                 "generate a task and write its manifest");
  add_common(gen, gen_args, false);
  gen->add_flag("--few-shot", gen_few_shot,
                "mark every class as seen (no held-out split)");

  CommonArgs train_args;
  std::string train_method;
  double train_lambda = -1.0;
  int train_epochs = 0;
  auto* train = app.add_subcommand(
      "train", "train one method and write its per-step history");
  add_common(train, train_args, false);
  train->add_option("--data", train_args.data, "read the task manifest");
  train->add_option("--method", train_method,
                    "coop, kgcoop, kgcoop_pt, kgcoop_kl or prograd");
  train->add_option("--lambda", train_lambda, "regularizer weight");
  train->add_option("--epochs", train_epochs, "training steps");

  CommonArgs bench_args;
  auto* bench = app.add_subcommand(
      "bench", "base-to-new comparison across the configured methods");
  add_common(bench, bench_args, true);
  bench->add_option("--data", bench_args.data, "read the task manifest");

  CommonArgs ablate_args;
  auto* ablate = app.add_subcommand(
      "ablate-lambda", "sweep the anchor weight and report distance and H");
  add_common(ablate, ablate_args, true);
  ablate->add_option("--data", ablate_args.data, "read the task manifest");

  CommonArgs few_args;
  auto* few = app.add_subcommand(
      "few-shot", "all classes seen, accuracy on held-out samples");
  add_common(few, few_args, true);
  few->add_option("--data", few_args.data, "read the task manifest");

  try {
    app.parse(argc, argv);

    if (app.got_subcommand(gen)) {
      kgcoop::RunConfig cfg = resolve_config(gen_args);
      kgcoop::SyntheticTask task = obtain_task(cfg, gen_args, gen_few_shot);
      const std::string out =
          gen_args.out.empty() ? "data.manifest" : gen_args.out;
      kgcoop::save_manifest(task, out);
      std::cout << "wrote " << out << ": " << task.classes.names.size()
                << " classes (" << task.base_ids.size() << " seen, "
                << task.new_ids.size() << " held out), " << task.train.size()
                << " train / " << task.test_base.size() << " + "
                << task.test_new.size() << " test samples\n";
    } else if (app.got_subcommand(train)) {
      kgcoop::RunConfig cfg = resolve_config(train_args);
      if (!train_method.empty())
        cfg.train.method = kgcoop::method_from_string(train_method);
      if (train_lambda >= 0.0) cfg.train.loss.lambda = train_lambda;
      if (train_epochs > 0) cfg.train.epochs = train_epochs;
      kgcoop::SyntheticTask task = obtain_task(cfg, train_args, false);
      auto reports = kgcoop::base_to_new_experiment(
          task, {cfg.train.method}, cfg);
      const std::string out =
          train_args.out.empty() ? "history.csv" : train_args.out;
      kgcoop::emit_history(*reports[1].history, out);
      std::cout << kgcoop::format_report_table(reports);
      std::cout << "history written to " << out << "\n";
    } else if (app.got_subcommand(bench)) {
      kgcoop::RunConfig cfg = resolve_config(bench_args);
      kgcoop::SyntheticTask task = obtain_task(cfg, bench_args, false);
      auto reports =
          kgcoop::base_to_new_experiment(task, cfg.methods, cfg);
      const std::string out = bench_args.out.empty()
                                  ? default_out("bench", bench_args.format)
                                  : bench_args.out;
      kgcoop::emit_report(
          reports, kgcoop::report_format_from_string(bench_args.format), out);
      std::cout << kgcoop::format_report_table(reports);
      std::cout << "report written to " << out << "\n";
    } else if (app.got_subcommand(ablate)) {
      kgcoop::RunConfig cfg = resolve_config(ablate_args);
      kgcoop::SyntheticTask task = obtain_task(cfg, ablate_args, false);
      auto points = kgcoop::lambda_ablation(task, cfg.lambdas, cfg);
      const std::string out = ablate_args.out.empty()
                                  ? default_out("lambda", ablate_args.format)
                                  : ablate_args.out;
      kgcoop::emit_lambda_table(
          points, kgcoop::report_format_from_string(ablate_args.format), out);
      std::cout << kgcoop::format_lambda_table(points);
      std::cout << "table written to " << out << "\n";
    } else if (app.got_subcommand(few)) {
      kgcoop::RunConfig cfg = resolve_config(few_args);
      kgcoop::SyntheticTask task = obtain_task(cfg, few_args, true);
      auto reports = kgcoop::few_shot_experiment(task, cfg.methods, cfg);
      const std::string out = few_args.out.empty()
                                  ? default_out("fewshot", few_args.format)
                                  : few_args.out;
      kgcoop::emit_report(
          reports, kgcoop::report_format_from_string(few_args.format), out);
      std::cout << kgcoop::format_report_table(reports);
      std::cout << "report written to " << out << "\n";
    }
  } catch (const CLI::ParseError& e) {
    // collapse the parser's per-error codes: 0 stays 0 (--help), the rest
    // are usage problems like any other
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const kgcoop::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const kgcoop::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const kgcoop::IoError& e) {
    // bad paths are user input, same as bad settings
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
