#pragma once

#include "s3t/model.hpp"
#include "s3t/numcore.hpp"
#include "s3t/preprocess.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace s3t::train {

struct TrainConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
  std::size_t batch_size = 50;
  std::size_t epochs = 500;
  std::uint64_t seed = 1;
  std::size_t folds = 10;
  bool dropout = true;  // false disables dropout during training

  void validate() const;
};

// Mean negative log-likelihood of the true labels; log clamped at 1e-12.
// probabilities [M x N], labels in [0, N).
num::Var cross_entropy(num::Var probabilities, std::span<const int> labels);

struct TrainResult {
  model::ModelParams params;
  std::vector<double> loss_curve;  // mean training loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

// Mini-batch Adam on already filtered trials (data = Z, C_f x T).
TrainResult train(std::span<const prep::Trial> trials, const model::ModelConfig& config, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});
TrainResult train(std::span<const prep::Trial> trials, const model::ModelConfig& config, const TrainConfig& tc,
                  model::ModelParams initial, const EpochCallback& on_epoch = {});

// ---- evaluation ------------------------------------------------------------

// One-versus-rest scores for one class, in percent. Unset when the
// denominator is zero (class absent from both truth and predictions).
struct ClassMetrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> specificity;
  std::optional<double> f_score;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

using Confusion = std::vector<std::vector<std::size_t>>;  // [true][predicted]

struct EvalReport {
  std::size_t n_classes = 0;
  Confusion confusion;
  std::vector<ClassMetrics> per_class;
  double overall_accuracy = 0.0;       // percent
  std::vector<double> fold_accuracies;  // percent, empty outside CV
  std::optional<double> mean_accuracy;
  std::optional<double> std_accuracy;

  std::size_t total() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Harmonic mean 2PR/(P+R); unset when P + R == 0.
std::optional<double> f_score(double precision, double recall);

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes);
EvalReport report_from_confusion(const Confusion& confusion);

std::vector<int> predict(const model::ModelParams& params, const model::ModelConfig& config,
                         std::span<const prep::Trial> trials);
EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& config,
                    std::span<const prep::Trial> trials);

// ---- cross-validation ------------------------------------------------------

// Test-index sets of a stratified k-fold split.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t folds,
                                                       std::uint64_t seed);

struct CvConfig {
  model::ModelConfig model;  // n_feature_channels and samples are derived from the data
  int n_classes = 4;
  int csp_rows = 4;
  std::size_t jobs = 1;  // folds trained concurrently
};

// Called once per fold with the trial indices used to fit standardization
// statistics and the spatial filter, and the held-out indices.
struct CvHooks {
  std::function<void(std::size_t fold, std::span<const std::size_t> fit, std::span<const std::size_t> test)> on_fit;
  std::function<void(std::size_t fold, std::size_t epoch, double loss)> on_epoch;
};

struct FoldResult {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  EvalReport report;
};

struct CvResult {
  std::vector<FoldResult> folds;
  EvalReport aggregate;  // pooled confusion plus fold statistics
};

// Feature channels produced by the OVR filter: N*S, or S for two classes.
std::size_t feature_channels(int n_classes, int csp_rows);

// Per fold: fit z-score stats and the OVR filter on the training part only,
// train, evaluate on the held-out part. Trials are band-passed but not yet
// standardized.
CvResult run_cv(std::span<const prep::Trial> trials, const CvConfig& cv, const TrainConfig& tc,
                const CvHooks& hooks = {});

struct SweepRow {
  std::string param;
  double value = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

// Reruns cross-validation once per value of "slice_d" or "k_c".
std::vector<SweepRow> run_sweep(std::span<const prep::Trial> trials, const CvConfig& cv, const TrainConfig& tc,
                                const std::string& param, std::span<const double> values);

// Cross-validation with one sub-network removed: "spatial", "temporal",
// "posenc" or "ff".
CvResult run_ablation(std::span<const prep::Trial> trials, CvConfig cv, const TrainConfig& tc,
                      const std::string& drop);
model::Modules without(model::Modules modules, const std::string& drop);

// ---- statistics ------------------------------------------------------------

struct WilcoxonResult {
  double p_value = 1.0;
  double statistic = 0.0;  // sum of ranks of positive differences
  std::size_t n = 0;       // non-zero differences
  bool exact = false;
  bool degenerate = false;  // every difference was zero
};

// Two-sided signed-rank test on paired samples. Zero differences are
// dropped and tied magnitudes get mid-ranks. Exact null distribution for
// n <= 20, normal approximation with tie correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

}  // namespace s3t::train
