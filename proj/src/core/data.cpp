#include "core/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "core/rng.hpp"

namespace fs = std::filesystem;

namespace must {

bool Dataset::fully_unlabeled() const {
  for (int32_t y : labels) {
    if (y != -1) return false;
  }
  return true;
}

bool Dataset::fully_labeled() const {
  for (int32_t y : labels) {
    if (y < 0) return false;
  }
  return true;
}

void validate_dataset(const Dataset& ds, int32_t num_classes) {
  if (static_cast<int64_t>(ds.labels.size()) != ds.features.rows()) {
    fail(ErrorCode::invalid_argument, "dataset '", ds.domain_name, "': ",
         ds.labels.size(), " labels for ", ds.features.rows(), " rows");
  }
  for (size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] < -1 || ds.labels[i] >= num_classes) {
      fail(ErrorCode::invalid_argument, "dataset '", ds.domain_name,
           "': label ", ds.labels[i], " at row ", i, " not in {-1} u [0,",
           num_classes, ")");
    }
  }
  ds.features.ensure_finite("dataset features");
}

// ----------------------------- synthetic generators -----------------------------

void SyntheticSpec::validate() const {
  if (n_per_class < 1) {
    fail(ErrorCode::invalid_argument, "n_per_class must be >= 1, got ",
         n_per_class);
  }
  if (num_sources < 1) {
    fail(ErrorCode::invalid_argument, "num_sources must be >= 1, got ",
         num_sources);
  }
  if (noise_std < 0.0 || shift < 0.0 || separation < 0.0) {
    fail(ErrorCode::invalid_argument,
         "noise_std, shift and separation must be >= 0");
  }
}

namespace {

struct DomainTransform {
  double cos_a = 1.0, sin_a = 0.0;
  double tx = 0.0, ty = 0.0;
};

// One rotation + translation per domain; consumes a fixed number of draws.
DomainTransform draw_transform(Rng& rng, double shift) {
  DomainTransform t;
  const double angle = (2.0 * rng.uniform() - 1.0) * 0.2 * shift;
  const double dir = rng.uniform() * 2.0 * std::numbers::pi;
  const double radius = shift * std::sqrt(rng.uniform());
  t.cos_a = std::cos(angle);
  t.sin_a = std::sin(angle);
  t.tx = radius * std::cos(dir);
  t.ty = radius * std::sin(dir);
  return t;
}

// Two labeled blobs, class 0 block then class 1 block, transform applied to
// every point.
Dataset draw_domain(Rng& rng, const SyntheticSpec& spec,
                    const DomainTransform& t, const std::string& name) {
  const int64_t n = 2 * spec.n_per_class;
  Dataset ds;
  ds.domain_name = name;
  ds.features = Matrix(n, 2);
  ds.labels.resize(static_cast<size_t>(n));
  const double half = spec.separation / 2.0;
  for (int32_t cls = 0; cls < 2; ++cls) {
    const double cx = cls == 0 ? -half : half;
    for (int64_t i = 0; i < spec.n_per_class; ++i) {
      const int64_t row = cls * spec.n_per_class + i;
      const double px = cx + rng.normal(0.0, spec.noise_std);
      const double py = rng.normal(0.0, spec.noise_std);
      ds.features(row, 0) = t.cos_a * px - t.sin_a * py + t.tx;
      ds.features(row, 1) = t.sin_a * px + t.cos_a * py + t.ty;
      ds.labels[static_cast<size_t>(row)] = cls;
    }
  }
  return ds;
}

GeneratedDomains gen_base(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(Rng::derive_stream(spec.seed, 0x6D617073ull));  // data stream
  GeneratedDomains out;
  for (int32_t k = 0; k < spec.num_sources; ++k) {
    DomainTransform t = draw_transform(rng, spec.shift);
    out.sources.push_back(
        draw_domain(rng, spec, t, "source" + std::to_string(k)));
  }
  DomainTransform tt = draw_transform(rng, spec.shift);
  out.target_eval = draw_domain(rng, spec, tt, "target_eval");
  out.target = out.target_eval;
  out.target.domain_name = "target";
  for (auto& y : out.target.labels) y = -1;
  return out;
}

}  // namespace

GeneratedDomains gen_clusters2d(const SyntheticSpec& spec) {
  if (spec.scenario != Scenario::clusters2d) {
    fail(ErrorCode::invalid_argument, "gen_clusters2d: wrong scenario");
  }
  return gen_base(spec);
}

GeneratedDomains gen_spurious_feature(const SyntheticSpec& spec) {
  if (spec.scenario != Scenario::spurious_feature) {
    fail(ErrorCode::invalid_argument, "gen_spurious_feature: wrong scenario");
  }
  SyntheticSpec base = spec;
  base.scenario = Scenario::clusters2d;
  GeneratedDomains out = gen_base(base);

  // Extra coordinate drawn from its own stream: per-sample label + noise in
  // the sources, Bernoulli(1/2) + noise in the target. The shortcut's noise
  // is a tenth of the cluster noise: it has to read cleaner than the
  // geometry, or nothing falls into the trap.
  const double sp_noise = 0.1 * spec.noise_std;
  Rng rng(Rng::derive_stream(spec.seed, 0x73707572ull));
  auto widen = [](Dataset& ds, const std::vector<double>& extra) {
    Matrix wide(ds.features.rows(), 3);
    for (int64_t i = 0; i < ds.features.rows(); ++i) {
      wide(i, 0) = ds.features(i, 0);
      wide(i, 1) = ds.features(i, 1);
      wide(i, 2) = extra[static_cast<size_t>(i)];
    }
    ds.features = std::move(wide);
  };
  for (Dataset& src : out.sources) {
    std::vector<double> extra(static_cast<size_t>(src.size()));
    for (int64_t i = 0; i < src.size(); ++i) {
      extra[static_cast<size_t>(i)] =
          static_cast<double>(src.labels[static_cast<size_t>(i)]) +
          rng.normal(0.0, sp_noise);
    }
    widen(src, extra);
  }
  std::vector<double> tgt_extra(static_cast<size_t>(out.target.size()));
  for (double& v : tgt_extra) {
    const double coin = rng.uniform() < 0.5 ? 0.0 : 1.0;
    v = coin + rng.normal(0.0, sp_noise);
  }
  widen(out.target, tgt_extra);
  widen(out.target_eval, tgt_extra);
  return out;
}

GeneratedDomains generate(const SyntheticSpec& spec) {
  return spec.scenario == Scenario::clusters2d ? gen_clusters2d(spec)
                                               : gen_spurious_feature(spec);
}

// ----------------------------- csv -----------------------------

void save_csv(const Dataset& ds, const std::string& path) {
  if (static_cast<int64_t>(ds.labels.size()) != ds.features.rows()) {
    fail(ErrorCode::invalid_argument, "save_csv: ", ds.labels.size(),
         " labels for ", ds.features.rows(), " rows");
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::io, "cannot open for writing: ", path);
  os << "label";
  for (int64_t c = 0; c < ds.features.cols(); ++c) os << ",f" << c;
  os << "\n";
  char buf[40];
  for (int64_t i = 0; i < ds.features.rows(); ++i) {
    os << ds.labels[static_cast<size_t>(i)];
    for (int64_t c = 0; c < ds.features.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, c));
      os << ',' << buf;
    }
    os << "\n";
  }
  os.flush();
  if (!os) fail(ErrorCode::io, "write failed: ", path);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& domain_name) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open: ", path);
  std::string line;
  if (!std::getline(is, line)) {
    fail(ErrorCode::parse, path, ":1: missing header");
  }
  auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "label") {
    fail(ErrorCode::parse, path, ":1: header must be label,f0,...");
  }
  const size_t width = header.size();

  std::vector<int32_t> labels;
  std::vector<double> values;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != width) {
      fail(ErrorCode::parse, path, ":", lineno, ": expected ", width,
           " fields, got ", fields.size());
    }
    char* end = nullptr;
    long lab = std::strtol(fields[0].c_str(), &end, 10);
    if (end == fields[0].c_str() || *end != '\0') {
      fail(ErrorCode::parse, path, ":", lineno, ": bad label '", fields[0], "'");
    }
    labels.push_back(static_cast<int32_t>(lab));
    for (size_t f = 1; f < width; ++f) {
      double v = std::strtod(fields[f].c_str(), &end);
      if (end == fields[f].c_str() || *end != '\0' || !std::isfinite(v)) {
        fail(ErrorCode::parse, path, ":", lineno, ": bad value '", fields[f],
             "'");
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) {
    fail(ErrorCode::parse, path, ": no data rows");
  }
  Dataset ds;
  ds.domain_name = domain_name;
  ds.labels = std::move(labels);
  ds.features = Matrix(static_cast<int64_t>(ds.labels.size()),
                       static_cast<int64_t>(width - 1));
  std::copy(values.begin(), values.end(), ds.features.data().begin());
  return ds;
}

// ----------------------------- manifest -----------------------------

const char* domain_role_name(DomainRole role) {
  switch (role) {
    case DomainRole::source: return "source";
    case DomainRole::target: return "target";
    case DomainRole::target_eval: return "target-eval";
  }
  return "unknown";
}

void save_manifest(const DomainManifest& manifest, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::io, "cannot open for writing: ", path);
  os << "feature_dim = " << manifest.feature_dim << "\n";
  os << "num_classes = " << manifest.num_classes << "\n";
  for (const ManifestEntry& e : manifest.entries) {
    os << domain_role_name(e.role) << ' ' << e.name << ' ' << e.path << "\n";
  }
  os.flush();
  if (!os) fail(ErrorCode::io, "write failed: ", path);
}

LoadedDomains load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open manifest: ", path);
  const fs::path base = fs::path(path).parent_path();

  DomainManifest manifest;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    if (first == "feature_dim" || first == "num_classes") {
      std::string eq;
      long long value = 0;
      ls >> eq >> value;
      if (eq != "=" || ls.fail()) {
        fail(ErrorCode::parse, path, ":", lineno, ": expected '", first,
             " = <int>'");
      }
      if (first == "feature_dim") {
        manifest.feature_dim = value;
      } else {
        manifest.num_classes = static_cast<int32_t>(value);
      }
      continue;
    }
    ManifestEntry entry;
    if (first == "source") {
      entry.role = DomainRole::source;
    } else if (first == "target") {
      entry.role = DomainRole::target;
    } else if (first == "target-eval") {
      entry.role = DomainRole::target_eval;
    } else {
      fail(ErrorCode::parse, path, ":", lineno, ": unknown role '", first, "'");
    }
    ls >> entry.name >> entry.path;
    if (ls.fail() || entry.name.empty() || entry.path.empty()) {
      fail(ErrorCode::parse, path, ":", lineno,
           ": expected '<role> <name> <file>'");
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (manifest.feature_dim <= 0 || manifest.num_classes < 2) {
    fail(ErrorCode::parse, path,
         ": manifest needs feature_dim >= 1 and num_classes >= 2");
  }

  LoadedDomains out;
  out.manifest = manifest;
  size_t targets = 0, evals = 0;
  for (const ManifestEntry& e : manifest.entries) {
    const std::string file = (base / e.path).string();
    Dataset ds = load_csv(file, e.name);
    validate_dataset(ds, manifest.num_classes);
    if (ds.dim() != manifest.feature_dim) {
      fail(ErrorCode::invalid_argument, "domain '", e.name, "' has ", ds.dim(),
           " features, manifest says ", manifest.feature_dim);
    }
    switch (e.role) {
      case DomainRole::source:
        if (!ds.fully_labeled()) {
          fail(ErrorCode::invalid_argument, "source '", e.name,
               "' must be fully labeled");
        }
        out.sources.push_back(std::move(ds));
        break;
      case DomainRole::target:
        if (++targets > 1) {
          fail(ErrorCode::invalid_argument, "manifest has more than one target");
        }
        if (!ds.fully_unlabeled()) {
          fail(ErrorCode::invalid_argument, "target must be unlabeled (all labels -1)");
        }
        out.target = std::move(ds);
        break;
      case DomainRole::target_eval:
        if (++evals > 1) {
          fail(ErrorCode::invalid_argument,
               "manifest has more than one target-eval");
        }
        if (!ds.fully_labeled()) {
          fail(ErrorCode::invalid_argument, "target-eval '", e.name,
               "' must be fully labeled");
        }
        out.target_eval = std::move(ds);
        break;
    }
  }
  if (out.sources.empty()) {
    fail(ErrorCode::invalid_argument, "manifest has no source domains");
  }
  if (targets == 0) {
    fail(ErrorCode::invalid_argument, "manifest has no target domain");
  }
  return out;
}

}  // namespace must
