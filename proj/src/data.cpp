#include "kgcoop/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "kgcoop/errors.hpp"
#include "kgcoop/rng.hpp"

namespace kgcoop {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

static void validate_params(const GenParams& p) {
  if (p.n_classes < 2)
    throw ConfigError("n_classes must be >= 2, got " +
                      std::to_string(p.n_classes));
  if (!p.all_seen && !(p.base_fraction > 0.0 && p.base_fraction < 1.0))
    throw ConfigError("base_fraction must be in (0, 1), got " +
                      std::to_string(p.base_fraction));
  if (p.k_shot < 1)
    throw ConfigError("k_shot must be >= 1, got " + std::to_string(p.k_shot));
  if (p.test_per_class < 1)
    throw ConfigError("test_per_class must be >= 1, got " +
                      std::to_string(p.test_per_class));
  if (p.noise_sigma < 0.0)
    throw ConfigError("noise_sigma must be >= 0");
  if (p.drift_alpha < 0.0 || p.drift_alpha > 1.0)
    throw ConfigError("drift_alpha must be in [0, 1], got " +
                      std::to_string(p.drift_alpha));
  if (p.shift_beta < 0.0) throw ConfigError("shift_beta must be >= 0");
}

static std::vector<double> gaussian_vec(SeededRng& rng, std::size_t d,
                                        double sigma) {
  std::vector<double> v(d);
  for (auto& e : v) e = rng.gaussian(0.0, sigma);
  return v;
}

static void normalize_in_place(std::vector<double>& v, const char* what) {
  double n2 = 0.0;
  for (double e : v) n2 += e * e;
  const double n = std::sqrt(n2);
  if (n == 0.0)
    throw DegenerateInputError(std::string(what) + " came out zero-norm");
  for (auto& e : v) e /= n;
}

SyntheticTask generate(const GenParams& params, const FrozenTextEncoder& enc,
                       const Vocabulary& vocab, const PromptTemplate& tmpl) {
  validate_params(params);
  SyntheticTask task;
  task.params = params;
  task.d_joint = enc.config().d_joint;
  task.classes = default_class_set(params.n_classes);

  const int n_base =
      params.all_seen
          ? params.n_classes
          : static_cast<int>(std::lround(params.n_classes *
                                         params.base_fraction));
  if (!params.all_seen && (n_base < 1 || n_base >= params.n_classes))
    throw ConfigError("base_fraction " + std::to_string(params.base_fraction) +
                      " leaves no base or no new classes for n_classes " +
                      std::to_string(params.n_classes));
  for (int i = 0; i < params.n_classes; ++i)
    (i < n_base ? task.base_ids : task.new_ids).push_back(i);

  const ClassEmbeddings anchors =
      embed_anchor_classes(enc, tmpl, task.classes, vocab, /*normalize=*/true);
  const std::size_t d = static_cast<std::size_t>(task.d_joint);

  // Draw order is part of the format: class directions, then the test-time
  // shift, then train / test_base / test_new samples. Reordering would
  // change every checksum.
  SeededRng rng(derive_seed(params.seed, SeedStream::data));

  std::vector<std::vector<double>> proto(params.n_classes),
      test_proto(params.n_classes);
  for (int i = 0; i < params.n_classes; ++i) {
    auto dir = gaussian_vec(rng, d, 1.0);
    normalize_in_place(dir, "class direction");
    auto& mu = proto[i];
    mu.resize(d);
    for (std::size_t j = 0; j < d; ++j)
      mu[j] = (1.0 - params.drift_alpha) *
                  anchors.rows.at(static_cast<std::size_t>(i), j) +
              params.drift_alpha * dir[j];
    normalize_in_place(mu, "class prototype");
  }
  auto shift = gaussian_vec(rng, d, 1.0);
  normalize_in_place(shift, "test shift direction");
  for (int i = 0; i < params.n_classes; ++i) {
    if (params.shift_beta == 0.0) {
      test_proto[i] = proto[i];
    } else {
      test_proto[i].resize(d);
      for (std::size_t j = 0; j < d; ++j)
        test_proto[i][j] = proto[i][j] + params.shift_beta * shift[j];
      normalize_in_place(test_proto[i], "shifted test prototype");
    }
  }

  auto draw = [&](const std::vector<double>& center, int label) {
    Sample s;
    s.label = label;
    s.x = gaussian_vec(rng, d, params.noise_sigma);
    for (std::size_t j = 0; j < d; ++j) s.x[j] += center[j];
    normalize_in_place(s.x, "sample");
    return s;
  };
  for (int id : task.base_ids)
    for (int k = 0; k < params.k_shot; ++k)
      task.train.push_back(draw(proto[id], id));
  for (int id : task.base_ids)
    for (int k = 0; k < params.test_per_class; ++k)
      task.test_base.push_back(draw(test_proto[id], id));
  for (int id : task.new_ids)
    for (int k = 0; k < params.test_per_class; ++k)
      task.test_new.push_back(draw(test_proto[id], id));
  return task;
}

// --- manifest I/O -----------------------------------------------------------

static std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

static std::string format_hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

static std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

static std::string join_ints(const std::vector<int>& v) {
  std::vector<std::string> parts;
  parts.reserve(v.size());
  for (int e : v) parts.push_back(std::to_string(e));
  return join(parts, ',');
}

static std::string sample_line(const char* split, const Sample& s) {
  std::string line = split;
  line += ' ';
  line += std::to_string(s.label);
  for (double v : s.x) {
    line += ' ';
    line += format_double(v);
  }
  return line;
}

static std::uint64_t split_checksum(const char* split,
                                    const std::vector<Sample>& samples) {
  std::string all;
  for (const auto& s : samples) {
    all += sample_line(split, s);
    all += '\n';
  }
  return fnv1a64(all);
}

void save_manifest(const SyntheticTask& task, const std::string& path) {
  std::ostringstream out;
  const auto& p = task.params;
  out << "format_version=1\n";
  out << "mode=" << (p.all_seen ? "few_shot" : "base_to_new") << "\n";
  out << "seed=" << p.seed << "\n";
  out << "n_classes=" << p.n_classes << "\n";
  out << "base_fraction=" << format_double(p.base_fraction) << "\n";
  out << "k_shot=" << p.k_shot << "\n";
  out << "test_per_class=" << p.test_per_class << "\n";
  out << "noise_sigma=" << format_double(p.noise_sigma) << "\n";
  out << "drift_alpha=" << format_double(p.drift_alpha) << "\n";
  out << "shift_beta=" << format_double(p.shift_beta) << "\n";
  out << "d_joint=" << task.d_joint << "\n";
  out << "class_names=" << join(task.classes.names, ',') << "\n";
  out << "class_descriptors=" << join(task.classes.descriptors, ',') << "\n";
  out << "base_ids=" << join_ints(task.base_ids) << "\n";
  out << "new_ids=" << join_ints(task.new_ids) << "\n";
  out << "n_train=" << task.train.size() << "\n";
  out << "n_test_base=" << task.test_base.size() << "\n";
  out << "n_test_new=" << task.test_new.size() << "\n";
  out << "checksum_train=" << format_hex64(split_checksum("train", task.train))
      << "\n";
  out << "checksum_test_base="
      << format_hex64(split_checksum("test_base", task.test_base)) << "\n";
  out << "checksum_test_new="
      << format_hex64(split_checksum("test_new", task.test_new)) << "\n";
  for (const auto& s : task.train) out << sample_line("train", s) << "\n";
  for (const auto& s : task.test_base)
    out << sample_line("test_base", s) << "\n";
  for (const auto& s : task.test_new) out << sample_line("test_new", s) << "\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f << out.str();
    if (!f.flush()) throw IoError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move '" + tmp + "' to '" + path + "'");
}

namespace {

struct ManifestParser {
  std::string path;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + msg);
  }

  double to_double(const std::string& field, const std::string& s) const {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
      fail("bad float '" + s + "' in " + field);
    return v;
  }

  long long to_int(const std::string& field, const std::string& s) const {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || s.empty())
      fail("bad integer '" + s + "' in " + field);
    return v;
  }

  std::uint64_t to_u64(const std::string& field, const std::string& s) const {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size() || s.empty())
      fail("bad integer '" + s + "' in " + field);
    return v;
  }
};

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

}  // namespace

SyntheticTask load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open manifest '" + path + "'");

  ManifestParser p{path, 0};
  std::map<std::string, std::string> header;
  std::map<std::string, std::string> split_bytes;  // accumulating checksums
  SyntheticTask task;
  std::string line;
  bool in_samples = false;

  while (std::getline(f, line)) {
    ++p.line_no;
    if (line.empty()) p.fail("unexpected empty line");
    const auto space = line.find(' ');
    const std::string head = line.substr(0, space);
    if (head == "train" || head == "test_base" || head == "test_new") {
      in_samples = true;
      const auto fields = split_on(line, ' ');
      if (fields.size() < 3) p.fail("sample line needs label and embedding");
      Sample s;
      s.label = static_cast<int>(p.to_int("class index", fields[1]));
      for (std::size_t i = 2; i < fields.size(); ++i)
        s.x.push_back(p.to_double("embedding entry " + std::to_string(i - 1),
                                  fields[i]));
      split_bytes[head] += line;
      split_bytes[head] += '\n';
      (head == "train"
           ? task.train
           : head == "test_base" ? task.test_base : task.test_new)
          .push_back(std::move(s));
    } else {
      if (in_samples) p.fail("header line after sample lines");
      const auto eq = line.find('=');
      if (eq == std::string::npos) p.fail("expected key=value, got '" + line +
                                          "'");
      header[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) {
      p.line_no = 0;
      p.fail("missing header key '" + key + "'");
    }
    return it->second;
  };
  p.line_no = 0;  // header-level complaints point at the file, not a line

  if (need("format_version") != "1")
    p.fail("unsupported format_version '" + header["format_version"] + "'");
  const std::string mode = need("mode");
  if (mode != "base_to_new" && mode != "few_shot")
    p.fail("unknown mode '" + mode + "'");
  auto& g = task.params;
  g.all_seen = mode == "few_shot";
  g.seed = p.to_u64("seed", need("seed"));
  g.n_classes = static_cast<int>(p.to_int("n_classes", need("n_classes")));
  g.base_fraction = p.to_double("base_fraction", need("base_fraction"));
  g.k_shot = static_cast<int>(p.to_int("k_shot", need("k_shot")));
  g.test_per_class =
      static_cast<int>(p.to_int("test_per_class", need("test_per_class")));
  g.noise_sigma = p.to_double("noise_sigma", need("noise_sigma"));
  g.drift_alpha = p.to_double("drift_alpha", need("drift_alpha"));
  g.shift_beta = p.to_double("shift_beta", need("shift_beta"));
  task.d_joint = static_cast<int>(p.to_int("d_joint", need("d_joint")));
  task.classes.names = split_on(need("class_names"), ',');
  task.classes.descriptors = split_on(need("class_descriptors"), ',');
  for (const auto& s : split_on(need("base_ids"), ','))
    task.base_ids.push_back(static_cast<int>(p.to_int("base_ids", s)));
  for (const auto& s : split_on(need("new_ids"), ','))
    task.new_ids.push_back(static_cast<int>(p.to_int("new_ids", s)));

  if (task.classes.names.size() !=
      static_cast<std::size_t>(g.n_classes))
    p.fail("class_names lists " + std::to_string(task.classes.names.size()) +
           " names for n_classes=" + std::to_string(g.n_classes));
  if (task.classes.descriptors.size() != task.classes.names.size())
    p.fail("class_descriptors does not match class_names");
  if (task.base_ids.size() + task.new_ids.size() !=
      static_cast<std::size_t>(g.n_classes))
    p.fail("base_ids and new_ids do not cover every class exactly once");

  struct SplitSpec {
    const char* name;
    const std::vector<Sample>* samples;
    const char* count_key;
    const char* checksum_key;
  };
  const SplitSpec specs[] = {
      {"train", &task.train, "n_train", "checksum_train"},
      {"test_base", &task.test_base, "n_test_base", "checksum_test_base"},
      {"test_new", &task.test_new, "n_test_new", "checksum_test_new"},
  };
  for (const auto& spec : specs) {
    const auto expect_n = p.to_int(spec.count_key, need(spec.count_key));
    if (static_cast<long long>(spec.samples->size()) != expect_n)
      p.fail(std::string("split ") + spec.name + " holds " +
             std::to_string(spec.samples->size()) + " samples, header says " +
             std::to_string(expect_n));
    const std::string want = need(spec.checksum_key);
    const std::string got = format_hex64(fnv1a64(split_bytes[spec.name]));
    if (want != got)
      p.fail(std::string("checksum mismatch for split ") + spec.name +
             " (header " + want + ", content " + got + ")");
  }

  // split hygiene and shape checks
  std::vector<bool> is_base(g.n_classes, false);
  for (int id : task.base_ids) {
    if (id < 0 || id >= g.n_classes) p.fail("base id out of range");
    is_base[id] = true;
  }
  auto check_split = [&](const std::vector<Sample>& samples, const char* name,
                         bool want_base) {
    for (const auto& s : samples) {
      if (s.label < 0 || s.label >= g.n_classes)
        p.fail(std::string("label out of range in split ") + name);
      if (is_base[s.label] != want_base)
        p.fail(std::string("split ") + name + " holds a sample of class " +
               std::to_string(s.label) + " from the wrong side of the split");
      if (s.x.size() != static_cast<std::size_t>(task.d_joint))
        p.fail(std::string("embedding width mismatch in split ") + name);
    }
  };
  check_split(task.train, "train", true);
  check_split(task.test_base, "test_base", true);
  check_split(task.test_new, "test_new", false);
  return task;
}

}  // namespace kgcoop
