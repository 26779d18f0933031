#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgcoop/data.hpp"
#include "kgcoop/trainer.hpp"

namespace kgcoop {

// One flat run configuration covering data generation, the frozen encoder,
// the prompt learner and training. Config files are key=value lines with #
// comments; keys mirror the field names below 1:1.
struct RunConfig {
  std::uint64_t seed = 42;  // data sampling and context init derive from it
  GenParams gen;            // gen.seed follows the seed key when assigned
  EncoderConfig encoder;    // encoder.seed comes from the encoder_seed key
  int context_length = 4;
  ContextInit init = ContextInit::from_template;
  std::string template_id = "T2";
  TrainConfig train;
  std::vector<Method> methods = {Method::coop, Method::kgcoop};
  std::vector<double> lambdas = {0.0, 1.0, 2.0, 4.0, 8.0};
  std::string manifest_path;  // when set, load data instead of generating
};

RunConfig default_config();

// ParseError on malformed lines, ConfigError on unknown keys or bad values.
RunConfig load_config(const std::string& path);

// One key=value assignment; shared by the file loader and CLI overrides.
void apply_setting(RunConfig& cfg, const std::string& key,
                   const std::string& value);

// Range checks shared by every entry point.
void validate_config(const RunConfig& cfg);

}  // namespace kgcoop
