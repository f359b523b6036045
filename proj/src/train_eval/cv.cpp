#include "s3t/csp.hpp"
#include "s3t/error.hpp"
#include "s3t/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <thread>

namespace s3t::train {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<prep::Trial> pick(std::span<const prep::Trial> trials, std::span<const std::size_t> idx) {
  std::vector<prep::Trial> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(trials[i]);
  return out;
}

std::vector<prep::Trial> filtered(std::span<const prep::Trial> trials, const csp::SpatialFilter& filter) {
  std::vector<prep::Trial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    prep::Trial z = t;
    z.data = csp::apply_filter(filter, t);
    out.push_back(std::move(z));
  }
  return out;
}

FoldResult run_fold(std::span<const prep::Trial> trials, std::vector<std::size_t> train_idx,
                    std::vector<std::size_t> test_idx, std::size_t fold, const CvConfig& cv, const TrainConfig& tc,
                    const CvHooks& hooks) {
  if (hooks.on_fit) hooks.on_fit(fold, train_idx, test_idx);
  const auto train_raw = pick(trials, train_idx);
  const auto test_raw = pick(trials, test_idx);

  const auto stats = prep::fit_standardization(train_raw, "fold" + std::to_string(fold));
  const auto train_std = prep::standardize(train_raw, stats);
  const auto test_std = prep::standardize(test_raw, stats);
  const auto filter = csp::fit_ovr_filter(train_std, cv.n_classes, cv.csp_rows);

  model::ModelConfig mc = cv.model;
  mc.n_classes = static_cast<std::size_t>(cv.n_classes);
  mc.n_feature_channels = static_cast<std::size_t>(filter.feature_channels());
  mc.samples = static_cast<std::size_t>(trials.front().samples());

  TrainConfig fold_tc = tc;
  fold_tc.seed = mix_seed(tc.seed, fold);
  EpochCallback on_epoch;
  if (hooks.on_epoch) on_epoch = [&](std::size_t e, double l) { hooks.on_epoch(fold, e, l); };
  const auto trained = train(filtered(train_std, filter), mc, fold_tc, on_epoch);

  FoldResult r;
  r.report = evaluate(trained.params, mc, filtered(test_std, filter));
  r.train_indices = std::move(train_idx);
  r.test_indices = std::move(test_idx);
  return r;
}

}  // namespace

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t folds,
                                                       std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, idx] : by_class) {
    if (idx.size() < folds) {
      throw DataError("class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                      " trials, fewer than the " + std::to_string(folds) + " folds");
    }
  }

  num::Rng rng(mix_seed(seed, 0xf01d));
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t next = 0;
  for (auto& [label, idx] : by_class) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
    }
    for (auto i : idx) {
      out[next].push_back(i);
      next = (next + 1) % folds;
    }
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

std::size_t feature_channels(int n_classes, int csp_rows) {
  return static_cast<std::size_t>(n_classes == 2 ? csp_rows : n_classes * csp_rows);
}

CvResult run_cv(std::span<const prep::Trial> trials, const CvConfig& cv, const TrainConfig& tc, const CvHooks& hooks) {
  tc.validate();
  if (trials.empty()) throw DataError("cross-validation needs trials");
  std::vector<int> labels;
  for (const auto& t : trials) {
    if (t.samples() != trials.front().samples() || t.channels() != trials.front().channels()) {
      throw DimensionError("all trials must share one channel count and length");
    }
    labels.push_back(t.label);
  }
  const auto test_sets = stratified_folds(labels, tc.folds, tc.seed);

  std::vector<std::vector<std::size_t>> train_sets(tc.folds);
  for (std::size_t f = 0; f < tc.folds; ++f) {
    std::vector<bool> held(trials.size(), false);
    for (auto i : test_sets[f]) held[i] = true;
    for (std::size_t i = 0; i < trials.size(); ++i) {
      if (!held[i]) train_sets[f].push_back(i);
    }
  }

  CvResult result;
  result.folds.resize(tc.folds);
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cv.jobs, tc.folds));
  if (jobs == 1) {
    for (std::size_t f = 0; f < tc.folds; ++f) {
      result.folds[f] = run_fold(trials, train_sets[f], test_sets[f], f, cv, tc, hooks);
    }
  } else {
    // Each worker takes folds f, f + jobs, ...; results land in fold order.
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t f = w; f < tc.folds; f += jobs) {
            result.folds[f] = run_fold(trials, train_sets[f], test_sets[f], f, cv, tc, hooks);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const auto n = static_cast<std::size_t>(cv.n_classes);
  Confusion pooled(n, std::vector<std::size_t>(n, 0));
  std::vector<double> accs;
  for (const auto& f : result.folds) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) pooled[i][j] += f.report.confusion[i][j];
    }
    accs.push_back(f.report.overall_accuracy);
  }
  result.aggregate = report_from_confusion(pooled);
  result.aggregate.fold_accuracies = accs;
  double mean = 0.0;
  for (double a : accs) mean += a;
  mean /= static_cast<double>(accs.size());
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  var /= static_cast<double>(accs.size() - 1);
  result.aggregate.mean_accuracy = mean;
  result.aggregate.std_accuracy = std::sqrt(var);
  return result;
}

model::Modules without(model::Modules modules, const std::string& drop) {
  if (drop == "spatial") {
    modules.spatial = false;
  } else if (drop == "temporal") {
    modules.temporal = false;
  } else if (drop == "posenc") {
    modules.posenc = false;
  } else if (drop == "ff") {
    modules.ff = false;
  } else {
    throw ConfigError("unknown module '" + drop + "' (expected spatial, temporal, posenc or ff)");
  }
  return modules;
}

CvResult run_ablation(std::span<const prep::Trial> trials, CvConfig cv, const TrainConfig& tc,
                      const std::string& drop) {
  cv.model.modules = without(cv.model.modules, drop);
  return run_cv(trials, cv, tc);
}

std::vector<SweepRow> run_sweep(std::span<const prep::Trial> trials, const CvConfig& cv, const TrainConfig& tc,
                                const std::string& param, std::span<const double> values) {
  if (param != "slice_d" && param != "k_c") {
    throw ConfigError("unknown sweep parameter '" + param + "' (expected slice_d or k_c)");
  }
  std::vector<SweepRow> rows;
  for (double v : values) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("sweep values must be positive integers");
    CvConfig c = cv;
    if (param == "slice_d") {
      c.model.slice_d = static_cast<std::size_t>(v);
    } else {
      c.model.kernel_size = static_cast<std::size_t>(v);
    }
    const CvResult r = run_cv(trials, c, tc);
    rows.push_back({param, v, *r.aggregate.mean_accuracy, *r.aggregate.std_accuracy});
  }
  return rows;
}

}  // namespace s3t::train
