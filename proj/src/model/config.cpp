#include "s3t/error.hpp"
#include "s3t/model.hpp"

namespace s3t::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (n_classes < 2) fail("need at least 2 classes");
  if (modules.spatial && n_feature_channels < 2) {
    fail("feature-channel attention needs at least 2 feature channels, got " + std::to_string(n_feature_channels));
  }
  if (n_feature_channels < 1) fail("need at least one feature channel");
  if (slice_d < 2) fail("slice width must be at least 2 (layer norm over a slice), got " + std::to_string(slice_d));
  if (samples % slice_d != 0) {
    fail("T = " + std::to_string(samples) + " is not divisible by slice width " + std::to_string(slice_d) +
         "; adjust the trial window or the slice size");
  }
  if (n_heads < 1) fail("need at least one attention head");
  if (key_width() % n_heads != 0 || value_width() % n_heads != 0) {
    fail("d_k = " + std::to_string(key_width()) + " and d_v = " + std::to_string(value_width()) +
         " must be divisible by h = " + std::to_string(n_heads));
  }
  if (key_width() == 0 || value_width() == 0) fail("projection widths must be positive");
  if (modules.posenc) {
    if (kernel_size % 2 == 0) fail("position kernel k_c must be odd, got " + std::to_string(kernel_size));
    if (kernel_size > samples) {
      fail("position kernel k_c = " + std::to_string(kernel_size) + " exceeds T = " + std::to_string(samples));
    }
  }
  if (ff_expansion < 1) fail("feed-forward expansion must be at least 1");
  for (double rate : {dropout_spatial, dropout_temporal}) {
    if (rate < 0.0 || rate >= 1.0) fail("dropout rates must lie in [0, 1)");
  }
}

ModelConfig ModelConfig::dataset_2a() {
  ModelConfig c;
  c.n_feature_channels = 16;  // 4 classes x 4 rows
  c.samples = 1000;
  c.n_classes = 4;
  return c;
}

ModelConfig ModelConfig::dataset_2b() {
  ModelConfig c;
  c.n_feature_channels = 3;  // single sub-filter, 3 rows
  c.samples = 1000;
  c.n_classes = 2;
  return c;
}

}  // namespace s3t::model
