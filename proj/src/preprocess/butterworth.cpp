#include "s3t/error.hpp"
#include "s3t/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace s3t::prep {

namespace {

using cplx = std::complex<double>;

constexpr int kOrder = 4;

void validate_band(const Band& band, double fs) {
  if (!(fs > 0.0)) throw ConfigError("sampling rate must be positive");
  if (!(band.low > 0.0) || !(band.low < band.high)) {
    throw ConfigError("band-pass edges must satisfy 0 < low < high, got [" + std::to_string(band.low) + ", " +
                      std::to_string(band.high) + "]");
  }
  if (band.high >= fs / 2.0) {
    throw ConfigError("band-pass upper edge " + std::to_string(band.high) + " Hz violates Nyquist (fs/2 = " +
                      std::to_string(fs / 2.0) + " Hz)");
  }
}

// Initial DF2T state giving the steady-state response to a unit step.
std::array<double, 2> step_state(const Biquad& s) {
  const double gain = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
  const double z2 = s.b[2] - s.a[2] * gain;
  const double z1 = s.b[1] - s.a[1] * gain + z2;
  return {z1, z2};
}

std::vector<double> run_cascade(std::span<const Biquad> sections, std::span<const double> x,
                                std::span<const std::array<double, 2>> initial, double init_scale) {
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const Biquad& s = sections[k];
    double z1 = initial.empty() ? 0.0 : initial[k][0] * init_scale;
    double z2 = initial.empty() ? 0.0 : initial[k][1] * init_scale;
    for (double& v : y) {
      const double in = v;
      const double out = s.b[0] * in + z1;
      z1 = s.b[1] * in - s.a[1] * out + z2;
      z2 = s.b[2] * in - s.a[2] * out;
      v = out;
    }
  }
  return y;
}

}  // namespace

std::vector<Biquad> butterworth_bandpass(int order, const Band& band, double fs) {
  validate_band(band, fs);
  if (order < 1) throw ConfigError("filter order must be at least 1");

  // Pre-warped analog edges.
  const double fs2 = 2.0 * fs;
  const double w_low = fs2 * std::tan(std::numbers::pi * band.low / fs);
  const double w_high = fs2 * std::tan(std::numbers::pi * band.high / fs);
  const double bw = w_high - w_low;
  const double w0_sq = w_low * w_high;

  // Low-pass prototype poles on the unit circle, shifted to band-pass.
  std::vector<cplx> poles;
  for (int m = -order + 1; m < order; m += 2) {
    const cplx p = -std::exp(cplx(0.0, std::numbers::pi * m / (2.0 * order)));
    const cplx p_lp = p * bw / 2.0;
    const cplx root = std::sqrt(p_lp * p_lp - w0_sq);
    poles.push_back(p_lp + root);
    poles.push_back(p_lp - root);
  }

  // Bilinear transform. The `order` zeros at s = 0 land on z = 1 and the
  // `order` zeros at infinity on z = -1.
  cplx gain_num = std::pow(cplx(fs2, 0.0), order);
  cplx gain_den = 1.0;
  std::vector<cplx> zpoles;
  for (const cplx& p : poles) {
    gain_den *= (fs2 - p);
    zpoles.push_back((fs2 + p) / (fs2 - p));
  }
  const double gain = std::pow(bw, order) * (gain_num / gain_den).real();

  std::vector<cplx> upper;
  for (const cplx& p : zpoles) {
    if (p.imag() > 0.0) upper.push_back(p);
  }
  if (upper.size() != static_cast<std::size_t>(order)) {
    throw NumericError("band-pass design produced real poles; band too wide for this sampling rate");
  }
  // Poles closest to the unit circle last, as in the usual SOS ordering.
  std::sort(upper.begin(), upper.end(), [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });

  std::vector<Biquad> sections;
  for (const cplx& p : upper) {
    Biquad s;
    s.b = {1.0, 0.0, -1.0};
    s.a = {1.0, -2.0 * p.real(), std::norm(p)};
    sections.push_back(s);
  }
  for (double& c : sections.front().b) c *= gain;
  return sections;
}

double magnitude_response(std::span<const Biquad> sections, double freq, double fs) {
  const cplx z1 = std::exp(cplx(0.0, -2.0 * std::numbers::pi * freq / fs));
  const cplx z2 = z1 * z1;
  cplx h = 1.0;
  for (const Biquad& s : sections) {
    h *= (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (s.a[0] + s.a[1] * z1 + s.a[2] * z2);
  }
  return std::abs(h);
}

std::vector<double> sosfilt(std::span<const Biquad> sections, std::span<const double> x) {
  return run_cascade(sections, x, {}, 0.0);
}

std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x) {
  const std::size_t pad = 3 * (2 * sections.size() + 1);
  if (x.size() <= pad) {
    throw ConfigError("signal of " + std::to_string(x.size()) + " samples is too short for zero-phase filtering (needs > " +
                      std::to_string(pad) + ")");
  }

  // Steady-state step response state per section, scaled by the DC gain of
  // the sections before it.
  std::vector<std::array<double, 2>> zi(sections.size());
  double dc = 1.0;
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto st = step_state(sections[k]);
    zi[k] = {st[0] * dc, st[1] * dc};
    const Biquad& s = sections[k];
    dc *= (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
  }

  // Odd extension on both ends.
  const std::size_t n = x.size();
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  std::vector<double> fwd = run_cascade(sections, ext, zi, ext.front());
  std::reverse(fwd.begin(), fwd.end());
  std::vector<double> bwd = run_cascade(sections, fwd, zi, fwd.front());
  std::reverse(bwd.begin(), bwd.end());
  return std::vector<double>(bwd.begin() + static_cast<std::ptrdiff_t>(pad),
                             bwd.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

Eigen::MatrixXd bandpass(const Eigen::MatrixXd& data, const Band& band, double fs) {
  const auto sections = butterworth_bandpass(kOrder, band, fs);
  Eigen::MatrixXd out(data.rows(), data.cols());
  std::vector<double> row(static_cast<std::size_t>(data.cols()));
  for (Eigen::Index c = 0; c < data.rows(); ++c) {
    for (Eigen::Index t = 0; t < data.cols(); ++t) row[static_cast<std::size_t>(t)] = data(c, t);
    const auto filtered = filtfilt(sections, row);
    for (Eigen::Index t = 0; t < data.cols(); ++t) out(c, t) = filtered[static_cast<std::size_t>(t)];
  }
  return out;
}

Trial bandpass(const Trial& trial, const Band& band) {
  Trial out = trial;
  out.data = bandpass(trial.data, band, trial.fs);
  return out;
}

Recording bandpass(const Recording& raw, const Band& band) {
  Recording out = raw;
  out.data = bandpass(raw.data, band, raw.fs);
  return out;
}

}  // namespace s3t::prep
