#include "binary.hpp"

#include "s3t/dataio.hpp"
#include "s3t/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace s3t::io {

namespace {

void put_matrix(bin::Writer& w, const Eigen::MatrixXd& m) {
  w.u64(static_cast<std::uint64_t>(m.rows()));
  w.u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  }
}

Eigen::MatrixXd get_matrix(bin::Reader& r, std::string_view what) {
  const auto rows = r.u64();
  const auto cols = r.u64();
  if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) {
    throw CorruptionError("matrix header before byte offset " + std::to_string(r.offset()) + " declares absurd dimensions");
  }
  r.require(rows * cols, 8, what);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
  }
  return m;
}

void put_vector(bin::Writer& w, const Eigen::VectorXd& v) {
  w.u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

Eigen::VectorXd get_vector(bin::Reader& r, std::string_view what) {
  const auto n = r.u64();
  r.require(n, 8, what);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
  return v;
}

void check_finite(double v, std::size_t offset, std::string_view what) {
  if (!std::isfinite(v)) {
    throw CorruptionError("non-finite " + std::string(what) + " at byte offset " + std::to_string(offset));
  }
}

}  // namespace

// ---- trial sets -------------------------------------------------------------

std::string encode_trialset(const TrialSet& set) {
  if (set.n_classes < 1 || set.n_classes > 255) throw DataError("trial sets hold between 1 and 255 classes");
  bin::Writer w;
  w.magic(kTrialMagic);
  w.f64(set.fs);
  w.u64(set.channels);
  w.u64(set.samples);
  w.u32(static_cast<std::uint32_t>(set.n_classes));
  w.u64(set.trials.size());
  for (const auto& t : set.trials) {
    if (static_cast<std::size_t>(t.channels()) != set.channels || static_cast<std::size_t>(t.samples()) != set.samples) {
      throw DimensionError("trial of shape " + std::to_string(t.channels()) + "x" + std::to_string(t.samples()) +
                           " does not match the set header " + std::to_string(set.channels) + "x" +
                           std::to_string(set.samples));
    }
    if (t.label < 0 || t.label >= set.n_classes) {
      throw DataError("label " + std::to_string(t.label) + " outside [0, " + std::to_string(set.n_classes) + ")");
    }
    w.u8(static_cast<std::uint8_t>(t.label));
    for (Eigen::Index r = 0; r < t.data.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.data.cols(); ++c) w.f64(t.data(r, c));
    }
  }
  return w.bytes();
}

TrialSet decode_trialset(const std::string& bytes) {
  bin::Reader r(bytes);
  r.magic(kTrialMagic);
  TrialSet set;
  set.fs = r.f64();
  if (!(set.fs > 0.0) || !std::isfinite(set.fs)) throw FormatError("trial set declares an invalid sampling rate");
  set.channels = r.u64();
  set.samples = r.u64();
  set.n_classes = static_cast<int>(r.u32());
  if (set.n_classes < 1 || set.n_classes > 255) throw FormatError("trial set declares an invalid class count");
  const auto count = r.u64();
  const std::uint64_t per_trial = 1 + 8 * static_cast<std::uint64_t>(set.channels) * set.samples;
  if (set.channels != 0 && set.samples > (std::uint64_t{1} << 40) / set.channels) {
    throw CorruptionError("trial set header at byte offset " + std::to_string(r.offset()) + " declares absurd dimensions");
  }
  if (count * per_trial != r.remaining()) {
    throw CorruptionError("payload length mismatch at byte offset " + std::to_string(r.offset()) + ": header declares " +
                          std::to_string(count) + " trials of " + std::to_string(per_trial) + " bytes, " +
                          std::to_string(r.remaining()) + " bytes present");
  }
  const auto c = static_cast<Eigen::Index>(set.channels);
  const auto t_len = static_cast<Eigen::Index>(set.samples);
  set.trials.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    prep::Trial t;
    const auto label_offset = r.offset();
    t.label = r.u8();
    if (t.label >= set.n_classes) {
      throw CorruptionError("label " + std::to_string(t.label) + " at byte offset " + std::to_string(label_offset) +
                            " is not below the class count " + std::to_string(set.n_classes));
    }
    t.fs = set.fs;
    t.data.resize(c, t_len);
    for (Eigen::Index row = 0; row < c; ++row) {
      for (Eigen::Index col = 0; col < t_len; ++col) {
        const auto at = r.offset();
        t.data(row, col) = r.f64();
        check_finite(t.data(row, col), at, "sample");
      }
    }
    set.trials.push_back(std::move(t));
  }
  r.finish();
  return set;
}

// ---- spatial filters ----------------------------------------------------------

std::string encode_filter(const csp::SpatialFilter& filter) {
  bin::Writer w;
  w.magic(kFilterMagic);
  put_matrix(w, filter.W);
  w.u32(static_cast<std::uint32_t>(filter.class_order.size()));
  for (int k : filter.class_order) w.u32(static_cast<std::uint32_t>(k));
  w.u32(static_cast<std::uint32_t>(filter.subfilters.size()));
  for (const auto& s : filter.subfilters) {
    w.u32(static_cast<std::uint32_t>(s.one_class));
    put_matrix(w, s.projection);
    put_vector(w, s.eigvals_one);
  }
  return w.bytes();
}

csp::SpatialFilter decode_filter(const std::string& bytes) {
  bin::Reader r(bytes);
  r.magic(kFilterMagic);
  csp::SpatialFilter f;
  f.W = get_matrix(r, "filter coefficients");
  const auto n_order = r.u32();
  r.require(n_order, 4, "class indices");
  for (std::uint32_t i = 0; i < n_order; ++i) f.class_order.push_back(static_cast<int>(r.u32()));
  const auto n_sub = r.u32();
  r.require(n_sub, 4 + 16 + 8, "subfilters");
  Eigen::Index rows = 0;
  for (std::uint32_t i = 0; i < n_sub; ++i) {
    csp::OvrSubfilter s;
    s.one_class = static_cast<int>(r.u32());
    s.projection = get_matrix(r, "subfilter projection");
    s.eigvals_one = get_vector(r, "subfilter eigenvalues");
    if (s.projection.cols() != f.W.cols() || s.eigvals_one.size() != s.projection.rows()) {
      throw CorruptionError("subfilter " + std::to_string(i) + " ending at byte offset " + std::to_string(r.offset()) +
                            " does not match the filter shape");
    }
    rows += s.projection.rows();
    f.subfilters.push_back(std::move(s));
  }
  if (rows != f.W.rows()) {
    throw CorruptionError("subfilter rows (" + std::to_string(rows) + ") disagree with W (" +
                          std::to_string(f.W.rows()) + ") at byte offset " + std::to_string(r.offset()));
  }
  r.finish();
  return f;
}

// ---- standardization statistics ------------------------------------------------

std::string encode_stats(const prep::StandardizationStats& stats) {
  bin::Writer w;
  w.magic(kStatsMagic);
  w.str(stats.source);
  put_vector(w, stats.mean);
  put_vector(w, stats.variance);
  return w.bytes();
}

prep::StandardizationStats decode_stats(const std::string& bytes) {
  bin::Reader r(bytes);
  r.magic(kStatsMagic);
  prep::StandardizationStats s;
  s.source = r.str();
  s.mean = get_vector(r, "channel means");
  s.variance = get_vector(r, "channel variances");
  if (s.mean.size() != s.variance.size()) {
    throw CorruptionError("mean and variance lengths differ at byte offset " + std::to_string(r.offset()));
  }
  r.finish();
  return s;
}

// ---- checkpoints -----------------------------------------------------------------

namespace {

void put_config(bin::Writer& w, const model::ModelConfig& c) {
  for (std::size_t v : {c.n_feature_channels, c.samples, c.slice_d, c.n_heads, c.kernel_size, c.ff_expansion,
                        c.n_blocks, c.n_classes}) {
    w.u64(v);
  }
  w.u8(c.d_k.has_value());
  w.u64(c.d_k.value_or(0));
  w.u8(c.d_v.has_value());
  w.u64(c.d_v.value_or(0));
  w.f64(c.dropout_spatial);
  w.f64(c.dropout_temporal);
  w.f64(c.norm_eps);
  w.u8(c.modules.spatial);
  w.u8(c.modules.temporal);
  w.u8(c.modules.posenc);
  w.u8(c.modules.ff);
}

model::ModelConfig get_config(bin::Reader& r) {
  model::ModelConfig c;
  for (std::size_t* v : {&c.n_feature_channels, &c.samples, &c.slice_d, &c.n_heads, &c.kernel_size, &c.ff_expansion,
                         &c.n_blocks, &c.n_classes}) {
    *v = r.u64();
  }
  const bool has_dk = r.u8() != 0;
  const auto dk = r.u64();
  if (has_dk) c.d_k = dk;
  const bool has_dv = r.u8() != 0;
  const auto dv = r.u64();
  if (has_dv) c.d_v = dv;
  c.dropout_spatial = r.f64();
  c.dropout_temporal = r.f64();
  c.norm_eps = r.f64();
  c.modules.spatial = r.u8() != 0;
  c.modules.temporal = r.u8() != 0;
  c.modules.posenc = r.u8() != 0;
  c.modules.ff = r.u8() != 0;
  return c;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  bin::Writer w;
  w.magic(kCheckpointMagic);
  put_config(w, ckpt.config);
  std::uint64_t count = 0;
  model::visit_params(ckpt.params, [&](const std::string&, const num::Tensor&) { ++count; });
  w.u64(count);
  model::visit_params(ckpt.params, [&](const std::string& name, const num::Tensor& t) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
  });
  return w.bytes();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  bin::Reader r(bytes);
  r.magic(kCheckpointMagic);
  Checkpoint ckpt;
  ckpt.config = get_config(r);
  try {
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint holds an invalid model configuration: ") + e.what());
  }
  ckpt.params = model::zero_params(ckpt.config);
  std::uint64_t expected = 0;
  model::visit_params(ckpt.params, [&](const std::string&, const num::Tensor&) { ++expected; });
  const auto count = r.u64();
  if (count != expected) {
    throw CorruptionError("checkpoint declares " + std::to_string(count) + " tensors but its configuration needs " +
                          std::to_string(expected) + " (byte offset " + std::to_string(r.offset()) + ")");
  }
  model::visit_params(ckpt.params, [&](const std::string& name, num::Tensor& t) {
    const auto at = r.offset();
    const std::string stored = r.str();
    if (stored != name) {
      throw CorruptionError("expected tensor '" + name + "' at byte offset " + std::to_string(at) + ", found '" +
                            stored + "'");
    }
    const auto rank = r.u32();
    r.require(rank, 8, "tensor dimensions");
    num::Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != t.shape()) {
      throw CorruptionError("tensor '" + name + "' has shape " + num::to_string(shape) + ", expected " +
                            num::to_string(t.shape()) + " (byte offset " + std::to_string(at) + ")");
    }
    r.require(t.size(), 8, "tensor values");
    for (double& v : t.values()) {
      const auto vat = r.offset();
      v = r.f64();
      check_finite(v, vat, "parameter");
    }
  });
  r.finish();
  return ckpt;
}

// ---- text reports -------------------------------------------------------------------

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string opt2(const std::optional<double>& v) { return v ? fixed2(*v) : "undefined"; }

double parse_number(const std::string& token, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size() || !std::isfinite(v)) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw FormatError("report line " + std::to_string(line) + ": '" + token + "' is not a number");
  }
}

std::optional<double> parse_optional(const std::string& token, std::size_t line) {
  if (token == "undefined") return std::nullopt;
  return parse_number(token, line);
}

}  // namespace

std::string format_report(const train::EvalReport& report) {
  std::ostringstream out;
  out << kReportMagic << "\n";
  out << "n_classes " << report.n_classes << "\n";
  out << "trials " << report.total() << "\n";
  out << "overall_accuracy " << fixed2(report.overall_accuracy) << "\n";
  out << "mean_accuracy " << opt2(report.mean_accuracy) << "\n";
  out << "std_accuracy " << opt2(report.std_accuracy) << "\n";
  out << "fold_accuracies " << report.fold_accuracies.size();
  for (double a : report.fold_accuracies) out << " " << fixed2(a);
  out << "\n";
  out << "confusion " << report.n_classes << "\n";
  for (const auto& row : report.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << row[j];
    out << "\n";
  }
  out << "per_class accuracy precision recall specificity f_score\n";
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const auto& m = report.per_class[k];
    out << "class " << k << " " << opt2(m.accuracy) << " " << opt2(m.precision) << " " << opt2(m.recall) << " "
        << opt2(m.specificity) << " " << opt2(m.f_score) << "\n";
  }
  return out.str();
}

train::EvalReport parse_report(const std::string& text) {
  if (text.rfind(std::string(kReportMagic) + "\n", 0) != 0) {
    throw FormatError("bad magic header: expected '" + std::string(kReportMagic) + "'");
  }
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::getline(in, line);
  ++line_no;

  auto next = [&](const std::string& key) {
    if (!std::getline(in, line)) throw CorruptionError("report ends before '" + key + "' (line " + std::to_string(line_no + 1) + ")");
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tokens{std::istream_iterator<std::string>(ls), std::istream_iterator<std::string>()};
    if (tokens.empty() || tokens.front() != key) {
      throw FormatError("report line " + std::to_string(line_no) + ": expected '" + key + "'");
    }
    return std::vector<std::string>(tokens.begin() + 1, tokens.end());
  };
  auto single = [&](const std::string& key) {
    auto t = next(key);
    if (t.size() != 1) throw FormatError("report line " + std::to_string(line_no) + ": '" + key + "' takes one value");
    return t.front();
  };
  auto count = [&](const std::string& token) {
    const double v = parse_number(token, line_no);
    if (v < 0 || v != std::floor(v)) throw FormatError("report line " + std::to_string(line_no) + ": bad count");
    return static_cast<std::size_t>(v);
  };

  train::EvalReport rep;
  rep.n_classes = count(single("n_classes"));
  const std::size_t trials = count(single("trials"));
  rep.overall_accuracy = parse_number(single("overall_accuracy"), line_no);
  rep.mean_accuracy = parse_optional(single("mean_accuracy"), line_no);
  rep.std_accuracy = parse_optional(single("std_accuracy"), line_no);
  auto folds = next("fold_accuracies");
  if (folds.empty() || count(folds.front()) != folds.size() - 1) {
    throw CorruptionError("report line " + std::to_string(line_no) + ": fold count does not match the values");
  }
  for (std::size_t i = 1; i < folds.size(); ++i) rep.fold_accuracies.push_back(parse_number(folds[i], line_no));
  if (count(single("confusion")) != rep.n_classes) {
    throw CorruptionError("report line " + std::to_string(line_no) + ": confusion size disagrees with n_classes");
  }
  for (std::size_t i = 0; i < rep.n_classes; ++i) {
    if (!std::getline(in, line)) throw CorruptionError("report ends inside the confusion matrix");
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> tokens{std::istream_iterator<std::string>(ls), std::istream_iterator<std::string>()};
    if (tokens.size() != rep.n_classes) {
      throw CorruptionError("report line " + std::to_string(line_no) + ": confusion row has " +
                            std::to_string(tokens.size()) + " entries");
    }
    auto& row = rep.confusion.emplace_back();
    for (const auto& t : tokens) row.push_back(count(t));
  }
  if (rep.total() != trials) {
    throw CorruptionError("confusion matrix sums to " + std::to_string(rep.total()) + " but the report declares " +
                          std::to_string(trials) + " trials");
  }
  next("per_class");
  for (std::size_t k = 0; k < rep.n_classes; ++k) {
    auto t = next("class");
    if (t.size() != 6 || count(t[0]) != k) {
      throw CorruptionError("report line " + std::to_string(line_no) + ": malformed metrics for class " +
                            std::to_string(k));
    }
    train::ClassMetrics m;
    m.accuracy = parse_optional(t[1], line_no);
    m.precision = parse_optional(t[2], line_no);
    m.recall = parse_optional(t[3], line_no);
    m.specificity = parse_optional(t[4], line_no);
    m.f_score = parse_optional(t[5], line_no);
    rep.per_class.push_back(m);
  }
  if (std::getline(in, line)) throw CorruptionError("unexpected text after line " + std::to_string(line_no));
  return rep;
}

// ---- files ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  // Write to a sibling temp file, then rename, so readers never see a partial file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace s3t::io
