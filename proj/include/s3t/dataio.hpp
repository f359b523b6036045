#pragma once

#include "s3t/csp.hpp"
#include "s3t/model.hpp"
#include "s3t/preprocess.hpp"
#include "s3t/train_eval.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace s3t::io {

struct TrialSet {
  double fs = 250.0;
  std::size_t channels = 0;
  std::size_t samples = 0;
  int n_classes = 0;
  std::vector<prep::Trial> trials;
};

// Synthetic motor-imagery-like data: x = A_k s + noise. Each source carries
// a narrow-band rhythm around the class frequency; per-source variances
// differ by class so class covariances differ.
struct SynthSpec {
  int n_classes = 4;
  std::size_t trials_per_class = 40;
  std::size_t channels = 8;
  std::size_t samples = 200;
  double fs = 100.0;
  std::uint64_t mixing_seed = 7;
  bool identity_mixing = false;
  bool per_class_mixing = false;       // separate A_k per class instead of one shared A
  std::vector<double> frequencies;     // Hz per class; empty -> spread over (4, 40)
  std::vector<double> amplitudes;      // std of each class's dominant source; empty -> 2
  // Optional explicit [class][source] variances; overrides amplitudes.
  std::vector<std::vector<double>> source_variances;
  double bandwidth = 1.0;  // +- Hz spread of the rhythm components
  // Linear frequency drift per class in Hz/s, centred on the trial midpoint
  // (positive rises). Empty -> stationary rhythms.
  std::vector<double> drift;
  double noise_sigma = 0.5;
  std::uint64_t seed = 1;
};

TrialSet generate_synthetic(const SynthSpec& spec);

// ---- binary codecs (little-endian, magic-tagged) ---------------------------

inline constexpr std::string_view kTrialMagic = "S3T-TRIALS v1";
inline constexpr std::string_view kFilterMagic = "S3T-FILTER v1";
inline constexpr std::string_view kCheckpointMagic = "S3T-CKPT v1";
inline constexpr std::string_view kStatsMagic = "S3T-STATS v1";
inline constexpr std::string_view kReportMagic = "S3T-REPORT v1";

std::string encode_trialset(const TrialSet& set);
TrialSet decode_trialset(const std::string& bytes);

std::string encode_filter(const csp::SpatialFilter& filter);
csp::SpatialFilter decode_filter(const std::string& bytes);

std::string encode_stats(const prep::StandardizationStats& stats);
prep::StandardizationStats decode_stats(const std::string& bytes);

struct Checkpoint {
  model::ModelConfig config;
  model::ModelParams params;
};
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

// UTF-8 key/value lines plus matrix blocks; metrics with two decimals.
std::string format_report(const train::EvalReport& report);
train::EvalReport parse_report(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// ---- command line ----------------------------------------------------------

// Exit codes: 0 ok, 2 usage, 3 data/format, 4 numeric.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace s3t::io
