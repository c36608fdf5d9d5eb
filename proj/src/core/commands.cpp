#include "core/commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include "core/analysis.hpp"
#include "core/data.hpp"
#include "core/rv.hpp"
#include "core/trainer.hpp"

namespace fs = std::filesystem;

namespace must {
namespace commands {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path resolve_out_dir(const RunConfig& cfg) {
  std::string dir = cfg.get("out_dir");
  if (dir.empty()) {
    const char* env = std::getenv("MUSTLAB_OUT");
    dir = env && *env ? env : "./mustlab_out";
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    fail(ErrorCode::io, "cannot create output directory '", dir, "': ",
         ec.message());
  }
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) fail(ErrorCode::io, "cannot open for writing: ", path.string());
  return os;
}

SyntheticSpec synthetic_spec(const RunConfig& cfg, uint64_t seed) {
  SyntheticSpec spec;
  const std::string scenario = cfg.get("scenario");
  if (scenario == "clusters2d") {
    spec.scenario = Scenario::clusters2d;
  } else if (scenario == "spurious-feature") {
    spec.scenario = Scenario::spurious_feature;
  } else {
    fail(ErrorCode::invalid_argument, "unknown scenario '", scenario,
         "' (clusters2d | spurious-feature)");
  }
  spec.n_per_class = cfg.get_int("n_per_class");
  spec.num_sources = static_cast<int32_t>(cfg.get_int("num_sources"));
  spec.shift = cfg.get_real("shift");
  spec.separation = cfg.get_real("separation");
  spec.noise_std = cfg.get_real("noise_std");
  spec.seed = seed;
  spec.validate();
  return spec;
}

TrainerConfig trainer_config(const RunConfig& cfg, int64_t feature_dim,
                             int32_t num_classes, uint64_t seed) {
  TrainerConfig tc;
  tc.lambda = cfg.get_real("lambda");
  tc.confidence_threshold = cfg.get_real("c_th");
  tc.lr = cfg.get_real("lr");
  tc.momentum = cfg.get_real("momentum");
  tc.steps = cfg.get_int("steps");
  tc.batch_size = cfg.get_int("batch_size");
  tc.record_every = cfg.get_int("record_every");
  tc.seed = seed;
  tc.variant = variant_from_string(cfg.get("variant"));
  tc.teacher_arch = parse_arch(cfg.get("teacher_arch"), feature_dim, num_classes);
  tc.student_arch = parse_arch(cfg.get("student_arch"), feature_dim, num_classes);
  tc.validate();
  return tc;
}

LoadedDomains load_domains(const RunConfig& cfg) {
  if (!cfg.has("manifest")) {
    fail(ErrorCode::invalid_argument, "config key 'manifest' is required");
  }
  return load_manifest(cfg.get("manifest"));
}

// Tracked per-sample scalar matching the consistency analysis: class-0
// probability for binary heads, max-class probability otherwise.
double tracked_scalar(const Matrix& probs, int64_t row) {
  if (probs.cols() == 1) return 1.0 - probs(row, 0);
  if (probs.cols() == 2) return probs(row, 0);
  double mx = probs(row, 0);
  for (int64_t c = 1; c < probs.cols(); ++c) mx = std::max(mx, probs(row, c));
  return mx;
}

void write_log_csv(const fs::path& path, const std::vector<StepRecord>& log) {
  std::ofstream os = open_out(path);
  os << "step,loss_teacher_clf,loss_student,loss_teacher_total,pct_confident,"
        "teacher_src_acc,teacher_tgt_acc,student_tgt_acc\n";
  for (const StepRecord& r : log) {
    os << r.step << ',' << g17(r.loss_teacher_clf) << ',' << g17(r.loss_student)
       << ',' << g17(r.loss_teacher_total) << ',' << g17(r.pct_confident) << ','
       << g17(r.teacher_src_acc) << ',' << g17(r.teacher_tgt_acc) << ','
       << g17(r.student_tgt_acc) << "\n";
  }
}

void write_snapshots_csv(const fs::path& path, const ProbSnapshots& snaps) {
  std::ofstream os = open_out(path);
  const int64_t samples = snaps.probs.empty() ? 0 : snaps.probs.front().rows();
  os << "step";
  for (int64_t j = 0; j < samples; ++j) os << ",s" << j;
  os << "\n";
  for (size_t t = 0; t < snaps.steps.size(); ++t) {
    os << snaps.steps[t];
    for (int64_t j = 0; j < samples; ++j) {
      os << ',' << g17(tracked_scalar(snaps.probs[t], j));
    }
    os << "\n";
  }
}

struct SeriesFile {
  std::vector<int64_t> steps;
  Matrix series;  // snapshots x samples
};

SeriesFile read_snapshots_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::io, "cannot open snapshots file: ", path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("step", 0) != 0) {
    fail(ErrorCode::parse, path, ":1: expected snapshots header 'step,s0,...'");
  }
  size_t width = 1;
  for (char ch : line) width += ch == ',' ? 1 : 0;
  std::vector<int64_t> steps;
  std::vector<double> values;
  size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t fields = 0;
    const char* p = line.c_str();
    char* end = nullptr;
    steps.push_back(std::strtoll(p, &end, 10));
    if (end == p) fail(ErrorCode::parse, path, ":", lineno, ": bad step");
    p = end;
    ++fields;
    while (*p == ',') {
      ++p;
      double v = std::strtod(p, &end);
      if (end == p) fail(ErrorCode::parse, path, ":", lineno, ": bad value");
      values.push_back(v);
      p = end;
      ++fields;
    }
    if (fields != width) {
      fail(ErrorCode::parse, path, ":", lineno, ": expected ", width,
           " fields, got ", fields);
    }
  }
  if (steps.empty()) fail(ErrorCode::parse, path, ": no snapshots");
  SeriesFile out;
  out.steps = std::move(steps);
  out.series = Matrix(static_cast<int64_t>(out.steps.size()),
                      static_cast<int64_t>(width - 1));
  std::copy(values.begin(), values.end(), out.series.data().begin());
  return out;
}

}  // namespace

void gen_data(const RunConfig& cfg) {
  const fs::path out = resolve_out_dir(cfg);
  SyntheticSpec spec = synthetic_spec(cfg, cfg.get_u64("seed"));
  GeneratedDomains g = generate(spec);

  DomainManifest manifest;
  manifest.feature_dim = g.target.dim();
  manifest.num_classes = 2;
  std::vector<std::string> written;
  for (size_t k = 0; k < g.sources.size(); ++k) {
    std::string file = "source" + std::to_string(k) + ".csv";
    save_csv(g.sources[k], (out / file).string());
    manifest.entries.push_back({DomainRole::source, g.sources[k].domain_name, file});
    written.push_back(file);
  }
  save_csv(g.target, (out / "target.csv").string());
  manifest.entries.push_back({DomainRole::target, "target", "target.csv"});
  written.push_back("target.csv");
  save_csv(g.target_eval, (out / "target_eval.csv").string());
  manifest.entries.push_back(
      {DomainRole::target_eval, "target_eval", "target_eval.csv"});
  written.push_back("target_eval.csv");
  save_manifest(manifest, (out / "manifest.txt").string());
  written.push_back("manifest.txt");

  for (const std::string& f : written) {
    std::cout << (out / f).string() << "\n";
  }
}

namespace {

void run_one_training(const RunConfig& cfg, const LoadedDomains& domains,
                      uint64_t seed, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create '", dir.string(), "'");
  TrainerConfig tc = trainer_config(cfg, domains.manifest.feature_dim,
                                    domains.manifest.num_classes, seed);
  const Dataset* eval =
      domains.target_eval ? &*domains.target_eval : nullptr;
  const int64_t snapshot_every = cfg.get_int("snapshot_every");
  ProbSnapshots snaps;
  TrainedPair pair =
      train(tc, domains.sources, domains.target, eval, snapshot_every,
            snapshot_every > 0 ? &snaps : nullptr);

  write_log_csv(dir / "log.csv", pair.log);
  pair.teacher.save((dir / "teacher.ckpt").string());
  if (tc.variant == Variant::must) {
    pair.student.save((dir / "student.ckpt").string());
  }
  if (snapshot_every > 0) {
    write_snapshots_csv(dir / "snapshots.csv", snaps);
  }
  std::cout << "seed " << seed << ": " << pair.log.size()
            << " records -> " << dir.string() << "\n";
}

}  // namespace

void train_run(const RunConfig& cfg) {
  LoadedDomains domains = load_domains(cfg);
  const fs::path out = resolve_out_dir(cfg);
  std::vector<uint64_t> seeds;
  if (cfg.has("seeds")) {
    seeds = cfg.get_u64_list("seeds");
  } else {
    seeds.push_back(cfg.get_u64("seed"));
  }
  if (seeds.empty()) {
    fail(ErrorCode::invalid_argument, "empty seed list");
  }
  for (size_t i = 0; i < seeds.size(); ++i) {
    for (size_t j = i + 1; j < seeds.size(); ++j) {
      if (seeds[i] == seeds[j]) {
        fail(ErrorCode::invalid_argument, "duplicate seed ", seeds[i],
             " in seed list (runs would share an output directory)");
      }
    }
  }
  if (seeds.size() == 1) {
    run_one_training(cfg, domains, seeds[0], out);
    return;
  }
  // Independent runs, one output directory each.
  std::vector<std::future<void>> jobs;
  for (uint64_t seed : seeds) {
    jobs.push_back(std::async(std::launch::async, [&, seed] {
      run_one_training(cfg, domains, seed,
                       out / ("seed_" + std::to_string(seed)));
    }));
  }
  for (auto& j : jobs) j.get();
}

void sweep(const RunConfig& cfg) {
  LoadedDomains domains = load_domains(cfg);
  const fs::path out = resolve_out_dir(cfg);
  const uint64_t seed = cfg.get_u64("seed");
  rv::SelectCriterion criterion = rv::criterion_from_string(cfg.get("criterion"));
  const double split_frac = cfg.get_real("split_frac");

  std::vector<int64_t> steps_grid;
  if (cfg.has("grid_steps")) {
    steps_grid = cfg.get_int_list("grid_steps");
  } else {
    steps_grid.push_back(cfg.get_int("steps"));
  }
  std::vector<TrainerConfig> grid;
  for (int64_t steps : steps_grid) {
    for (double lambda : cfg.get_real_list("grid_lambda")) {
      for (double c_th : cfg.get_real_list("grid_c_th")) {
        TrainerConfig tc = trainer_config(cfg, domains.manifest.feature_dim,
                                          domains.manifest.num_classes, seed);
        tc.lambda = lambda;
        tc.confidence_threshold = c_th;
        tc.steps = steps;
        tc.validate();
        grid.push_back(std::move(tc));
      }
    }
  }

  rv::SelectOutcome outcome =
      rv::select(grid, domains.sources, domains.target, seed, criterion,
                 split_frac);

  {
    std::ofstream os = open_out(out / "sweep_results.csv");
    os << "index,lambda,c_th,lr,momentum,steps,batch_size,seed,record_every,"
          "variant,rv_loss,student_src_acc,fwd_loss_teacher_clf,"
          "fwd_loss_student,fwd_loss_teacher_total,fwd_pct_confident,"
          "rev_loss_teacher_clf,rev_loss_student,rev_loss_teacher_total,"
          "rev_pct_confident\n";
    for (size_t i = 0; i < outcome.results.size(); ++i) {
      const rv::CandidateResult& r = outcome.results[i];
      const TrainerConfig& c = r.candidate;
      os << i << ',' << g17(c.lambda) << ',' << g17(c.confidence_threshold)
         << ',' << g17(c.lr) << ',' << g17(c.momentum) << ',' << c.steps << ','
         << c.batch_size << ',' << c.seed << ',' << c.record_every << ','
         << variant_name(c.variant) << ','
         << g17(r.rv_loss) << ',' << g17(r.student_src_acc) << ','
         << g17(r.forward_final.loss_teacher_clf) << ','
         << g17(r.forward_final.loss_student) << ','
         << g17(r.forward_final.loss_teacher_total) << ','
         << g17(r.forward_final.pct_confident) << ','
         << g17(r.reverse_final.loss_teacher_clf) << ','
         << g17(r.reverse_final.loss_student) << ','
         << g17(r.reverse_final.loss_teacher_total) << ','
         << g17(r.reverse_final.pct_confident) << "\n";
    }
  }
  {
    const TrainerConfig& best = outcome.results[outcome.best_index].candidate;
    std::ofstream os = open_out(out / "best_config.txt");
    os << "# winner: candidate " << outcome.best_index << " by "
       << rv::criterion_name(criterion) << "\n";
    os << "lambda = " << g17(best.lambda) << "\n";
    os << "c_th = " << g17(best.confidence_threshold) << "\n";
    os << "lr = " << g17(best.lr) << "\n";
    os << "momentum = " << g17(best.momentum) << "\n";
    os << "steps = " << best.steps << "\n";
    os << "batch_size = " << best.batch_size << "\n";
    os << "seed = " << best.seed << "\n";
    os << "record_every = " << best.record_every << "\n";
    os << "variant = " << variant_name(best.variant) << "\n";
    os << "teacher_arch = " << arch_to_string(best.teacher_arch) << "\n";
    os << "student_arch = " << arch_to_string(best.student_arch) << "\n";
  }
  std::cout << "best candidate: " << outcome.best_index << " ("
            << rv::criterion_name(criterion) << ")\n";
}

namespace {

void analyze_bound(const RunConfig& cfg, const fs::path& out) {
  if (!cfg.has("teacher_ckpt") || !cfg.has("student_ckpt")) {
    fail(ErrorCode::invalid_argument,
         "analyze bound needs teacher_ckpt and student_ckpt");
  }
  LoadedDomains domains = load_domains(cfg);
  Network teacher = Network::load(cfg.get("teacher_ckpt"));
  Network student = Network::load(cfg.get("student_ckpt"));
  analysis::BoundReport r = analysis::lemma_bound_report(
      teacher, student, domains.target, cfg.get_real("lambda"));

  {
    std::ofstream os = open_out(out / "bound_report.csv");
    os << "param,A,lhs,rhs_signed,rhs_abs,slack\n";
    for (size_t j = 0; j < r.param_names.size(); ++j) {
      os << r.param_names[j] << ',' << g17(r.A[j]) << ',' << g17(r.lhs[j])
         << ',' << g17(r.rhs_signed[j]) << ',' << g17(r.rhs_abs[j]) << ','
         << g17(r.slack[j]) << "\n";
    }
  }
  {
    std::ofstream os = open_out(out / "bound_summary.txt");
    os << "pass = " << (r.pass ? "true" : "false") << "\n";
    os << "num_samples = " << r.num_samples << "\n";
    os << "num_params = " << r.param_names.size() << "\n";
    os << "rho = " << g17(r.rho) << "\n";
    os << "mean_abs_residual = " << g17(r.mean_abs_residual) << "\n";
    os << "mean_signed_residual = " << g17(r.mean_signed_residual) << "\n";
    os << "min_slack = " << g17(r.min_slack) << "\n";
    os << "max_per_sample_violation = " << g17(r.max_per_sample_violation)
       << "\n";
  }
  std::cout << "bound: " << (r.pass ? "pass" : "FAIL") << " (min slack "
            << g17(r.min_slack) << ")\n";
}

void analyze_consistency(const RunConfig& cfg, const fs::path& out) {
  if (!cfg.has("snapshots")) {
    fail(ErrorCode::invalid_argument,
         "analyze consistency needs a snapshots file (key 'snapshots')");
  }
  SeriesFile file = read_snapshots_csv(cfg.get("snapshots"));
  analysis::ConsistencyReport r = analysis::consistency_from_series(
      file.series, file.steps, cfg.get_int("window"));
  {
    std::ofstream os = open_out(out / "consistency.csv");
    os << "window_end_step,mean_std\n";
    for (size_t i = 0; i < r.mean_std.size(); ++i) {
      os << r.window_end_steps[i] << ',' << g17(r.mean_std[i]) << "\n";
    }
  }
  {
    std::ofstream os = open_out(out / "consistency_summary.txt");
    os << "snapshots = " << r.snapshot_steps.size() << "\n";
    os << "window = " << r.window << "\n";
    os << "positions = " << r.mean_std.size() << "\n";
    os << "time_averaged_mean_std = " << g17(r.time_averaged_mean_std) << "\n";
  }
  std::cout << "consistency: time-averaged mean std "
            << g17(r.time_averaged_mean_std) << "\n";
}

void analyze_margin(const RunConfig& cfg, const fs::path& out) {
  if (!cfg.has("teacher_ckpt")) {
    fail(ErrorCode::invalid_argument, "analyze margin needs teacher_ckpt");
  }
  LoadedDomains domains = load_domains(cfg);
  Network net = Network::load(cfg.get("teacher_ckpt"));
  int64_t domain = cfg.get_int("domain_id");
  const int32_t entry =
      domain < 0 ? target_domain_of(net) : static_cast<int32_t>(domain);
  auto grid = analysis::parse_eps_grid(cfg.get("eps_grid"));
  analysis::MarginCurve curve =
      analysis::margin_probe(net, domains.target.features, entry, grid);
  {
    std::ofstream os = open_out(out / "margin.csv");
    os << "epsilon,flips,frac_flipped\n";
    for (size_t i = 0; i < curve.epsilons.size(); ++i) {
      os << g17(curve.epsilons[i]) << ',' << curve.flip_counts[i] << ','
         << g17(static_cast<double>(curve.flip_counts[i]) /
                static_cast<double>(curve.num_samples))
         << "\n";
    }
  }
  {
    const size_t median = curve.epsilons.size() / 2;
    std::ofstream os = open_out(out / "margin_summary.txt");
    os << "num_samples = " << curve.num_samples << "\n";
    os << "zero_grad_samples = " << curve.zero_grad_samples << "\n";
    os << "never_flipped = " << curve.never_flipped << "\n";
    os << "median_eps = " << g17(curve.epsilons[median]) << "\n";
    os << "flips_at_median = " << curve.flip_counts[median] << "\n";
  }
  std::cout << "margin: " << curve.flip_counts.back() << "/"
            << curve.num_samples << " flipped within the grid\n";
}

}  // namespace

void analyze(const RunConfig& cfg, const std::string& which) {
  if (which != "bound" && which != "consistency" && which != "margin") {
    fail(ErrorCode::invalid_argument, "unknown analysis '", which,
         "' (bound | consistency | margin)");
  }
  const fs::path out = resolve_out_dir(cfg);
  if (which == "bound") {
    analyze_bound(cfg, out);
  } else if (which == "consistency") {
    analyze_consistency(cfg, out);
  } else {
    analyze_margin(cfg, out);
  }
}

}  // namespace commands
}  // namespace must
