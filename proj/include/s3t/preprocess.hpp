#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace s3t::prep {

// One segmented recording window.
struct Trial {
  Eigen::MatrixXd data;  // channels x samples
  int label = 0;
  std::string subject_id;
  double fs = 250.0;

  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index samples() const { return data.cols(); }
};

// Continuous multi-channel recording prior to segmentation.
struct Recording {
  Eigen::MatrixXd data;  // channels x samples
  double fs = 250.0;
  std::string subject_id;
};

struct Event {
  std::size_t onset_sample = 0;
  int label = 0;
};

// Trial window relative to each event onset, in seconds.
struct Window {
  double start = 2.0;
  double end = 6.0;
};

// Number of samples covered by a window: round((end - start) * fs).
std::size_t window_samples(const Window& window, double fs);

// Cuts one Trial per event: data = raw[:, onset + start*fs, onset + end*fs).
std::vector<Trial> segment(const Recording& raw, std::span<const Event> events, const Window& window);

// ---- band-pass -------------------------------------------------------------

// Second-order section, a[0] == 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{};
};

struct Band {
  double low = 4.0;
  double high = 40.0;
};

// Digital Butterworth band-pass from an analog prototype of the given order
// via the bilinear transform. Returns `order` sections (filter order 2*order).
std::vector<Biquad> butterworth_bandpass(int order, const Band& band, double fs);

// Complex frequency response magnitude of a cascade at `freq` Hz.
double magnitude_response(std::span<const Biquad> sections, double freq, double fs);

// Single causal pass (direct form II transposed) with zero initial state.
std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x);

// Zero-phase forward-backward filtering with odd-extension padding and
// steady-state initial conditions.
std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x);

// Filters every channel (row) of `data` with a zero-phase 4th-order
// Butterworth band-pass.
Eigen::MatrixXd bandpass(const Eigen::MatrixXd& data, const Band& band, double fs);
Trial bandpass(const Trial& trial, const Band& band = {});
Recording bandpass(const Recording& raw, const Band& band = {});

// ---- z-score ---------------------------------------------------------------

struct StandardizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  std::string source;
};

// Per-channel mean and (population) variance pooled over every sample of the
// training trials.
StandardizationStats fit_standardization(std::span<const Trial> trials, std::string source = "train");

// (x - mean) / sqrt(variance), per channel.
Trial standardize(const Trial& trial, const StandardizationStats& stats);
std::vector<Trial> standardize(std::span<const Trial> trials, const StandardizationStats& stats);

// Inverse of standardize.
Trial destandardize(const Trial& trial, const StandardizationStats& stats);

}  // namespace s3t::prep
