#include "kgcoop/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "kgcoop/errors.hpp"
#include "kgcoop/prompt.hpp"

namespace kgcoop {

RunConfig default_config() { return RunConfig{}; }

static std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

static double parse_double(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ConfigError("key '" + key + "': bad float '" + s + "'");
  return v;
}

static long long parse_int(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size())
    throw ConfigError("key '" + key + "': bad integer '" + s + "'");
  return v;
}

static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || s[0] == '-')
    throw ConfigError("key '" + key + "': bad seed '" + s + "'");
  return v;
}

static std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(',', start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key,
                   const std::string& value) {
  if (key == "seed") {
    // One knob for the run: data draws and context init consume distinct
    // streams derived from it, so sharing the base value is safe.
    cfg.seed = parse_u64(key, value);
    cfg.gen.seed = cfg.seed;
  }
  else if (key == "n_classes")
    cfg.gen.n_classes = static_cast<int>(parse_int(key, value));
  else if (key == "base_fraction")
    cfg.gen.base_fraction = parse_double(key, value);
  else if (key == "k_shot")
    cfg.gen.k_shot = static_cast<int>(parse_int(key, value));
  else if (key == "test_per_class")
    cfg.gen.test_per_class = static_cast<int>(parse_int(key, value));
  else if (key == "noise_sigma") cfg.gen.noise_sigma = parse_double(key, value);
  else if (key == "drift_alpha") cfg.gen.drift_alpha = parse_double(key, value);
  else if (key == "shift_beta") cfg.gen.shift_beta = parse_double(key, value);
  else if (key == "encoder_seed") cfg.encoder.seed = parse_u64(key, value);
  else if (key == "d_tok")
    cfg.encoder.d_tok = static_cast<int>(parse_int(key, value));
  else if (key == "d_joint")
    cfg.encoder.d_joint = static_cast<int>(parse_int(key, value));
  else if (key == "n_blocks")
    cfg.encoder.n_blocks = static_cast<int>(parse_int(key, value));
  else if (key == "n_heads")
    cfg.encoder.n_heads = static_cast<int>(parse_int(key, value));
  else if (key == "max_len")
    cfg.encoder.max_len = static_cast<int>(parse_int(key, value));
  else if (key == "context_length")
    cfg.context_length = static_cast<int>(parse_int(key, value));
  else if (key == "init") {
    if (value == "from_template") cfg.init = ContextInit::from_template;
    else if (value == "gaussian") cfg.init = ContextInit::gaussian;
    else
      throw ConfigError("key 'init': expected from_template or gaussian, "
                        "got '" + value + "'");
  } else if (key == "template") {
    const auto& ids = PromptTemplate::builtin_ids();
    if (std::find(ids.begin(), ids.end(), value) == ids.end())
      throw ConfigError("key 'template': unknown template '" + value + "'");
    cfg.template_id = value;
  } else if (key == "lambda") {
    cfg.train.loss.lambda = parse_double(key, value);
  } else if (key == "temperature") {
    cfg.train.loss.temperature = parse_double(key, value);
  } else if (key == "regularizer") {
    cfg.train.loss.regularizer = regularizer_from_string(value);
  } else if (key == "epochs") {
    cfg.train.epochs = static_cast<int>(parse_int(key, value));
  } else if (key == "lr") {
    cfg.train.lr = parse_double(key, value);
  } else if (key == "momentum") {
    cfg.train.momentum = parse_double(key, value);
  } else if (key == "schedule") {
    if (value == "cosine") cfg.train.schedule = LrSchedule::cosine;
    else if (value == "constant") cfg.train.schedule = LrSchedule::constant;
    else
      throw ConfigError("key 'schedule': expected cosine or constant, got '" +
                        value + "'");
  } else if (key == "method") {
    cfg.train.method = method_from_string(value);
  } else if (key == "methods") {
    cfg.methods.clear();
    for (const auto& m : split_list(value))
      cfg.methods.push_back(method_from_string(m));
    if (cfg.methods.empty()) throw ConfigError("key 'methods': empty list");
  } else if (key == "lambdas") {
    cfg.lambdas.clear();
    for (const auto& l : split_list(value))
      cfg.lambdas.push_back(parse_double(key, l));
    if (cfg.lambdas.empty()) throw ConfigError("key 'lambdas': empty list");
  } else if (key == "manifest") {
    cfg.manifest_path = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  RunConfig cfg = default_config();
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected key=value, got '" + line + "'");
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  // generation and encoder ranges are rechecked where they are consumed;
  // this catches cross-field problems early, with config wording.
  if (cfg.context_length < 1)
    throw ConfigError("context_length must be >= 1");
  if (cfg.context_length + 1 > cfg.encoder.max_len)
    throw ConfigError("context_length " + std::to_string(cfg.context_length) +
                      " plus the class token exceeds max_len " +
                      std::to_string(cfg.encoder.max_len));
  if (cfg.encoder.d_tok < 1 || cfg.encoder.d_joint < 1 ||
      cfg.encoder.n_blocks < 1 || cfg.encoder.n_heads < 1)
    throw ConfigError("encoder sizes must all be >= 1");
  if (cfg.encoder.d_tok % cfg.encoder.n_heads != 0)
    throw ConfigError("d_tok must be divisible by n_heads");
  if (!(cfg.train.loss.temperature > 0.0))
    throw ConfigError("temperature must be > 0");
  if (cfg.train.loss.lambda < 0.0) throw ConfigError("lambda must be >= 0");
  for (double l : cfg.lambdas)
    if (l < 0.0) throw ConfigError("lambdas must all be >= 0");
}

}  // namespace kgcoop
