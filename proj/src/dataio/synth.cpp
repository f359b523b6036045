#include "s3t/dataio.hpp"
#include "s3t/error.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace s3t::io {

namespace {

constexpr int kComponents = 3;

Eigen::MatrixXd random_mixing(std::size_t channels, std::uint64_t seed) {
  num::Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto c = static_cast<Eigen::Index>(channels);
  Eigen::MatrixXd a(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = normal(rng) / std::sqrt(static_cast<double>(channels));
  }
  // Keep the mixing well conditioned.
  a += Eigen::MatrixXd::Identity(c, c);
  return a;
}

}  // namespace

TrialSet generate_synthetic(const SynthSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (spec.channels < 1 || spec.samples < 2) throw ConfigError("synthetic trials need channels and samples");
  if (!(spec.fs > 0.0)) throw ConfigError("sampling rate must be positive");
  const auto n = static_cast<std::size_t>(spec.n_classes);

  std::vector<double> freqs = spec.frequencies;
  if (freqs.empty()) {
    for (std::size_t k = 0; k < n; ++k) freqs.push_back(6.0 + 30.0 * static_cast<double>(k) / static_cast<double>(n));
  }
  if (freqs.size() != n) throw ConfigError("need one rhythm frequency per class");
  const std::vector<double> drift = spec.drift.empty() ? std::vector<double>(n, 0.0) : spec.drift;
  if (drift.size() != n) throw ConfigError("need one drift rate per class");
  const double half_duration = 0.5 * static_cast<double>(spec.samples) / spec.fs;
  for (std::size_t k = 0; k < n; ++k) {
    const double spread = spec.bandwidth + std::abs(drift[k]) * half_duration;
    const double f = freqs[k];
    if (!(f - spread > 4.0) || !(f + spread < 40.0) || !(f + spread < spec.fs / 2.0)) {
      throw ConfigError("rhythm frequency " + std::to_string(f) + " Hz (+-" + std::to_string(spread) +
                        ") must stay inside (4, 40) Hz and below Nyquist");
    }
  }

  std::vector<std::vector<double>> variances = spec.source_variances;
  if (variances.empty()) {
    for (std::size_t k = 0; k < n; ++k) {
      const double amp = spec.amplitudes.empty() ? 2.0 : spec.amplitudes.at(k);
      std::vector<double> v(spec.channels, 1.0);
      v[k % spec.channels] = amp * amp;
      variances.push_back(std::move(v));
    }
  }
  if (variances.size() != n) throw ConfigError("need one source-variance vector per class");
  for (const auto& v : variances) {
    if (v.size() != spec.channels) throw ConfigError("source-variance vectors must have one entry per channel");
    for (double x : v) {
      if (x < 0.0) throw ConfigError("source variances must be non-negative");
    }
  }

  std::vector<Eigen::MatrixXd> mixing(n);
  const auto c = static_cast<Eigen::Index>(spec.channels);
  for (std::size_t k = 0; k < n; ++k) {
    if (spec.identity_mixing) {
      mixing[k] = Eigen::MatrixXd::Identity(c, c);
    } else {
      mixing[k] = random_mixing(spec.channels, spec.mixing_seed + (spec.per_class_mixing ? k : 0));
    }
  }

  TrialSet set;
  set.fs = spec.fs;
  set.channels = spec.channels;
  set.samples = spec.samples;
  set.n_classes = spec.n_classes;

  num::Rng rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto t_len = static_cast<Eigen::Index>(spec.samples);
  // Unit-variance sum of kComponents random-phase sinusoids.
  const double comp_amp = std::sqrt(2.0 / kComponents);

  for (std::size_t trial = 0; trial < spec.trials_per_class; ++trial) {
    for (std::size_t k = 0; k < n; ++k) {
      Eigen::MatrixXd sources = Eigen::MatrixXd::Zero(c, t_len);
      for (Eigen::Index j = 0; j < c; ++j) {
        const double gain = std::sqrt(variances[k][static_cast<std::size_t>(j)]) * comp_amp;
        for (int m = 0; m < kComponents; ++m) {
          const double f = freqs[k] + spec.bandwidth * (2.0 * unit(rng) - 1.0);
          const double phase = 2.0 * std::numbers::pi * unit(rng);
          for (Eigen::Index t = 0; t < t_len; ++t) {
            // Phase integral of the instantaneous frequency f + drift * (s - half_duration).
            const double sec = static_cast<double>(t) / spec.fs - half_duration;
            const double cycles = f * sec + 0.5 * drift[k] * sec * sec;
            sources(j, t) += gain * std::sin(2.0 * std::numbers::pi * cycles + phase);
          }
        }
      }
      prep::Trial tr;
      tr.data = mixing[k] * sources;
      if (spec.noise_sigma > 0.0) {
        for (Eigen::Index i = 0; i < tr.data.size(); ++i) tr.data.data()[i] += spec.noise_sigma * normal(rng);
      }
      tr.label = static_cast<int>(k);
      tr.fs = spec.fs;
      tr.subject_id = "synthetic";
      set.trials.push_back(std::move(tr));
    }
  }
  return set;
}

}  // namespace s3t::io
