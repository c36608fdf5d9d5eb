#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/matrix.hpp"

namespace must {

/// Per-domain feature matrix with optional labels. Label -1 marks an
/// unlabeled sample; an unlabeled dataset has every label -1.
struct Dataset {
  Matrix features;              // N x D
  std::vector<int32_t> labels;  // length N, -1 or [0, num_classes)
  std::string domain_name;

  int64_t size() const { return features.rows(); }
  int64_t dim() const { return features.cols(); }
  bool fully_unlabeled() const;
  bool fully_labeled() const;
};

void validate_dataset(const Dataset& ds, int32_t num_classes);

// ----------------------------- synthetic generators -----------------------------

enum class Scenario { clusters2d, spurious_feature };

struct SyntheticSpec {
  Scenario scenario = Scenario::clusters2d;
  int64_t n_per_class = 200;
  int32_t num_sources = 3;
  double shift = 1.5;       // max translation radius / rotation scale per domain
  double separation = 4.0;  // distance between the two class centers
  double noise_std = 0.5;
  uint64_t seed = 1;

  void validate() const;
};

struct GeneratedDomains {
  std::vector<Dataset> sources;
  Dataset target;       // labels stripped
  Dataset target_eval;  // same samples, true labels
};

/// Two Gaussian blobs per domain (one per class) around centers
/// (-separation/2, 0) and (+separation/2, 0). Every domain gets its own
/// rotation (angle <= 0.2*shift rad) and translation (radius <= shift); the
/// target uses a held-out draw. Pure function of the spec, seed included.
GeneratedDomains gen_clusters2d(const SyntheticSpec& spec);

/// clusters2d plus one extra coordinate: label + noise in every source,
/// label-independent Bernoulli(1/2) + noise in the target. The marginal of
/// the extra coordinate matches across domains, but only in the sources does
/// it carry the class: a controlled negative-transfer trap.
GeneratedDomains gen_spurious_feature(const SyntheticSpec& spec);

GeneratedDomains generate(const SyntheticSpec& spec);

// ----------------------------- csv -----------------------------

/// Header "label,f0,...,f{D-1}"; features at 17 significant digits so the
/// round trip is value-exact; label -1 = unlabeled.
void save_csv(const Dataset& ds, const std::string& path);
Dataset load_csv(const std::string& path, const std::string& domain_name);

// ----------------------------- manifest -----------------------------

enum class DomainRole { source, target, target_eval };

const char* domain_role_name(DomainRole role);

struct ManifestEntry {
  DomainRole role;
  std::string name;
  std::string path;  // relative to the manifest file
};

struct DomainManifest {
  int64_t feature_dim = 0;
  int32_t num_classes = 0;
  std::vector<ManifestEntry> entries;
};

/// Datasets grouped by role. target_eval never reaches a trainer; it is
/// carried separately so the training API cannot see its labels.
struct LoadedDomains {
  DomainManifest manifest;
  std::vector<Dataset> sources;
  Dataset target;
  std::optional<Dataset> target_eval;
};

void save_manifest(const DomainManifest& manifest, const std::string& path);

/// Parses and loads all referenced files, then enforces the role contract:
/// exactly one target (all labels -1), >= 1 fully labeled sources, at most
/// one fully labeled target-eval, consistent feature dims.
LoadedDomains load_manifest(const std::string& path);

}  // namespace must
