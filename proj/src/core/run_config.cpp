#include "core/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace must {

namespace {

constexpr ConfigKeyInfo kKeys[] = {
    {"out_dir", "", "output directory; empty uses $MUSTLAB_OUT or ./mustlab_out"},
    {"manifest", "", "path to a domain manifest file"},
    {"seed", "1", "run seed"},
    {"seeds", "", "comma list of seeds; train fans out one run per seed"},
    // synthetic data
    {"scenario", "clusters2d", "clusters2d | spurious-feature"},
    {"n_per_class", "200", "samples per class per domain"},
    {"num_sources", "3", "number of source domains"},
    {"shift", "1.5", "per-domain shift magnitude"},
    {"separation", "4.0", "distance between class centers"},
    {"noise_std", "0.5", "cluster noise standard deviation"},
    // trainer
    {"variant", "must", "must | only-bn | source-only"},
    {"lambda", "0.5", "teacher-regularizer weight"},
    {"c_th", "0.6", "confidence threshold for student training"},
    {"lr", "0.001", "learning rate"},
    {"momentum", "0.9", "SGD momentum"},
    {"steps", "3000", "training steps"},
    {"batch_size", "32", "batch size (>= 2)"},
    {"record_every", "10", "telemetry cadence in steps"},
    {"teacher_arch", "auto", "layer list, e.g. bn,affine:16,relu,affine:out,sigmoid"},
    {"student_arch", "auto", "layer list for the student"},
    {"snapshot_every", "10", "teacher target-probability snapshot cadence; 0 = off"},
    // analysis
    {"window", "50", "sliding-window length (consistency analysis)"},
    {"eps_grid", "0:0.05:2", "perturbation radii, start:step:stop or comma list"},
    {"teacher_ckpt", "", "teacher checkpoint path (analyze)"},
    {"student_ckpt", "", "student checkpoint path (analyze bound)"},
    {"snapshots", "", "snapshots.csv path (analyze consistency)"},
    {"domain_id", "-1", "batch-norm entry for analysis; -1 = the target entry"},
    // sweep
    {"grid_lambda", "0.25,0.5,1.0", "lambda grid for sweep"},
    {"grid_c_th", "0.6,0.9", "confidence-threshold grid for sweep"},
    {"grid_steps", "", "steps grid for sweep; empty uses steps"},
    {"criterion", "rv", "rv | student-src-acc"},
    {"split_frac", "0.8", "train fraction of the reverse-validation splits"},
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::span<const ConfigKeyInfo> config_keys() { return kKeys; }

RunConfig::RunConfig() {
  for (const ConfigKeyInfo& k : kKeys) values_[k.name] = k.def;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    fail(ErrorCode::invalid_argument, "unknown config key '", key, "'");
  }
  it->second = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open config file: ", path);
  std::string line;
  size_t lineno = 0;
  std::set<std::string> seen;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::parse, path, ":", lineno, ": expected 'key = value'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (!seen.insert(key).second) {
      fail(ErrorCode::parse, path, ":", lineno, ": duplicate key '", key, "'");
    }
    if (values_.find(key) == values_.end()) {
      fail(ErrorCode::parse, path, ":", lineno, ": unknown key '", key, "'");
    }
    values_[key] = value;
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    fail(ErrorCode::invalid_argument, "unknown config key '", key, "'");
  }
  return it->second;
}

bool RunConfig::has(const std::string& key) const {
  return !get(key).empty();
}

int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  long long parsed = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    fail(ErrorCode::parse, "config key '", key, "': '", v, "' is not an integer");
  }
  return parsed;
}

uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  unsigned long long parsed = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    fail(ErrorCode::parse, "config key '", key, "': '", v,
         "' is not an unsigned integer");
  }
  return parsed;
}

double RunConfig::get_real(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  double parsed = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    fail(ErrorCode::parse, "config key '", key, "': '", v, "' is not a number");
  }
  return parsed;
}

namespace {

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  std::string last = trim(cur);
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

}  // namespace

std::vector<double> RunConfig::get_real_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& tok : split_list(get(key))) {
    char* end = nullptr;
    double parsed = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end == tok.c_str() || *end != '\0') {
      fail(ErrorCode::parse, "config key '", key, "': bad list entry '", tok, "'");
    }
    out.push_back(parsed);
  }
  return out;
}

std::vector<uint64_t> RunConfig::get_u64_list(const std::string& key) const {
  std::vector<uint64_t> out;
  for (const std::string& tok : split_list(get(key))) {
    char* end = nullptr;
    unsigned long long parsed = std::strtoull(tok.c_str(), &end, 10);
    if (tok.empty() || end == tok.c_str() || *end != '\0') {
      fail(ErrorCode::parse, "config key '", key, "': bad list entry '", tok, "'");
    }
    out.push_back(parsed);
  }
  return out;
}

std::vector<int64_t> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int64_t> out;
  for (const std::string& tok : split_list(get(key))) {
    char* end = nullptr;
    long long parsed = std::strtoll(tok.c_str(), &end, 10);
    if (tok.empty() || end == tok.c_str() || *end != '\0') {
      fail(ErrorCode::parse, "config key '", key, "': bad list entry '", tok, "'");
    }
    out.push_back(parsed);
  }
  return out;
}

}  // namespace must
