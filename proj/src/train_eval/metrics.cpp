#include "s3t/error.hpp"
#include "s3t/train_eval.hpp"

#include <algorithm>

namespace s3t::train {

namespace {

std::optional<double> percent(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return 100.0 * num / den;
}

}  // namespace

std::size_t EvalReport::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion) {
    for (auto c : row) n += c;
  }
  return n;
}

std::optional<double> f_score(double precision, double recall) {
  if (precision + recall <= 0.0) return std::nullopt;
  return 2.0 * precision * recall / (precision + recall);
}

Confusion confusion_matrix(std::span<const int> truth, std::span<const int> predicted, std::size_t n_classes) {
  if (truth.size() != predicted.size()) throw DimensionError("truth and prediction counts differ");
  Confusion m(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes || static_cast<std::size_t>(p) >= n_classes) {
      throw DataError("label outside [0, " + std::to_string(n_classes) + ") in confusion matrix");
    }
    ++m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return m;
}

EvalReport report_from_confusion(const Confusion& confusion) {
  EvalReport r;
  r.n_classes = confusion.size();
  r.confusion = confusion;
  const auto total = static_cast<double>(r.total());
  double trace = 0.0;
  for (std::size_t k = 0; k < r.n_classes; ++k) {
    double tp = static_cast<double>(confusion[k][k]);
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < r.n_classes; ++j) {
      row += static_cast<double>(confusion[k][j]);
      col += static_cast<double>(confusion[j][k]);
    }
    const double fn = row - tp, fp = col - tp;
    const double tn = total - tp - fn - fp;
    trace += tp;

    ClassMetrics m;
    if (row + col > 0.0) m.accuracy = percent(tp + tn, total);
    m.precision = percent(tp, tp + fp);
    m.recall = percent(tp, tp + fn);
    m.specificity = percent(tn, tn + fp);
    if (m.precision && m.recall) m.f_score = f_score(*m.precision, *m.recall);
    r.per_class.push_back(m);
  }
  r.overall_accuracy = total > 0.0 ? 100.0 * trace / total : 0.0;
  return r;
}

std::vector<int> predict(const model::ModelParams& params, const model::ModelConfig& config,
                         std::span<const prep::Trial> trials) {
  std::vector<int> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    const auto probs = model::predict_proba(params, config, t.data);
    out.push_back(static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin()));
  }
  return out;
}

EvalReport evaluate(const model::ModelParams& params, const model::ModelConfig& config,
                    std::span<const prep::Trial> trials) {
  std::vector<int> truth;
  truth.reserve(trials.size());
  for (const auto& t : trials) truth.push_back(t.label);
  const auto predicted = predict(params, config, trials);
  return report_from_confusion(confusion_matrix(truth, predicted, config.n_classes));
}

}  // namespace s3t::train
