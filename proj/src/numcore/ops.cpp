#include "s3t/error.hpp"
#include "s3t/numcore.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace s3t::num {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Var& v, const char* op) {
  if (v.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " + to_string(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gelu_value(double x) { return x * normal_cdf(x); }

Var matmul(Var a, Var b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(av.shape()) + " x " +
                         to_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (a.requires_grad()) {
      as_matrix(tape.grad_buffer(a)).noalias() += as_matrix(g) * as_matrix(b.value()).transpose();
    }
    if (b.requires_grad()) {
      as_matrix(tape.grad_buffer(b)).noalias() += as_matrix(a.value()).transpose() * as_matrix(g);
    }
  });
}

Var transpose(Var a) {
  require_matrix(a, "transpose");
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  as_matrix(out) = as_matrix(av).transpose();
  return a.tape()->record(std::move(out), {a}, [a](Tape& tape, const Tensor& g) {
    as_matrix(tape.grad_buffer(a)) += as_matrix(g).transpose();
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!v.requires_grad()) continue;
      Tensor& dst = tape.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

Var add_row(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.size() != av.cols()) {
    throw DimensionError("add_row: bias " + to_string(bv.shape()) + " does not match rows of " +
                         to_string(av.shape()));
  }
  Tensor out = av;
  const std::size_t n = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  return a.tape()->record(std::move(out), {a, bias}, [a, bias, n](Tape& tape, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& da = tape.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (bias.requires_grad()) {
      Tensor& db = tape.grad_buffer(bias);
      for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  return a.tape()->record(std::move(out), {a}, [a, factor](Tape& tape, const Tensor& g) {
    Tensor& da = tape.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += factor * g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& da = tape.grad_buffer(a);
      const Tensor& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      Tensor& db = tape.grad_buffer(b);
      const Tensor& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return a.tape()->record(Tensor::scalar(total), {a}, [a](Tape& tape, const Tensor& g) {
    Tensor& da = tape.grad_buffer(a);
    for (auto& v : da.values()) v += g[0];
  });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({1, n});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[c] += av[r * n + c];
  }
  for (auto& v : out.values()) v /= static_cast<double>(m);
  return a.tape()->record(std::move(out), {a}, [a, m, n](Tape& tape, const Tensor& g) {
    Tensor& da = tape.grad_buffer(a);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) da[r * n + c] += g[c] * inv;
    }
  });
}

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    double peak = in[0];
    for (std::size_t c = 0; c < n; ++c) {
      if (std::isnan(in[c])) throw NumericError("softmax_rows: NaN input in row " + std::to_string(r));
      peak = std::max(peak, in[c]);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (std::size_t c = 0; c < n; ++c) o[c] /= total;
  }
  Tensor probs = out;
  return x.tape()->record(std::move(out), {x}, [x, m, n, s = std::move(probs)](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(x);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * s[r * n + c];
      for (std::size_t c = 0; c < n; ++c) dx[r * n + c] += s[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  if (d < 2) throw ConfigError("layer_norm needs a normalized dimension of at least 2, got " + std::to_string(d));
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias size must equal " + std::to_string(d));
  }
  const std::size_t m = xv.size() / d;
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(m);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += in[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      normalized[r * d + c] = (in[c] - mean) * inv_std[r];
      out[r * d + c] = gv[c] * normalized[r * d + c] + bv[c];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, m, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape& tape, const Tensor& g) {
        if (gain.requires_grad()) {
          Tensor& dg = tape.grad_buffer(gain);
          for (std::size_t i = 0; i < g.size(); ++i) dg[i % d] += g[i] * normalized[i];
        }
        if (bias.requires_grad()) {
          Tensor& db = tape.grad_buffer(bias);
          for (std::size_t i = 0; i < g.size(); ++i) db[i % d] += g[i];
        }
        if (!x.requires_grad()) return;
        Tensor& dx = tape.grad_buffer(x);
        const Tensor& gv = gain.value();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < m; ++r) {
          double mean_g = 0.0, mean_gn = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double gn = g[r * d + c] * gv[c];
            mean_g += gn;
            mean_gn += gn * normalized[r * d + c];
          }
          mean_g *= inv_d;
          mean_gn *= inv_d;
          for (std::size_t c = 0; c < d; ++c) {
            const double gn = g[r * d + c] * gv[c];
            dx[r * d + c] += inv_std[r] * (gn - mean_g - normalized[r * d + c] * mean_gn);
          }
        }
      });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = gelu_value(v);
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor& dx = tape.grad_buffer(x);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] += g[i] * (normal_cdf(v) + v * pdf);
    }
  });
}

Var conv1d_time(Var x, Var kernel, Var bias) {
  require_matrix(x, "conv1d_time");
  require_matrix(kernel, "conv1d_time kernel");
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const std::size_t channels = xv.rows(), T = xv.cols(), k = kv.cols();
  if (k % 2 == 0) throw ConfigError("conv1d_time: kernel size must be odd, got " + std::to_string(k));
  if (k > T) {
    throw ConfigError("conv1d_time: kernel size " + std::to_string(k) + " exceeds signal length " +
                      std::to_string(T));
  }
  if (kv.rows() != channels || bias.value().size() != channels) {
    throw DimensionError("conv1d_time: kernel " + to_string(kv.shape()) + " / bias " +
                         to_string(bias.shape()) + " do not match input " + to_string(xv.shape()));
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(T);
  Tensor out(xv.shape());
  const Tensor& bv = bias.value();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* in = xv.data() + c * T;
    const double* w = kv.data() + c * k;
    double* o = out.data() + c * T;
    for (std::ptrdiff_t t = 0; t < len; ++t) {
      const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, pad - t);
      const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k), len + pad - t);
      double acc = bv[c];
      for (std::ptrdiff_t j = j0; j < j1; ++j) acc += w[j] * in[t + j - pad];
      o[t] = acc;
    }
  }
  return x.tape()->record(
      std::move(out), {x, kernel, bias}, [x, kernel, bias, channels, T, k, pad](Tape& tape, const Tensor& g) {
        const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(T);
        const Tensor& xv = x.value();
        const Tensor& kv = kernel.value();
        Tensor* dx = x.requires_grad() ? &tape.grad_buffer(x) : nullptr;
        Tensor* dk = kernel.requires_grad() ? &tape.grad_buffer(kernel) : nullptr;
        Tensor* db = bias.requires_grad() ? &tape.grad_buffer(bias) : nullptr;
        for (std::size_t c = 0; c < channels; ++c) {
          const double* gy = g.data() + c * T;
          const double* in = xv.data() + c * T;
          const double* w = kv.data() + c * k;
          for (std::ptrdiff_t t = 0; t < len; ++t) {
            const double gt = gy[t];
            if (db) (*db)[c] += gt;
            const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, pad - t);
            const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k), len + pad - t);
            for (std::ptrdiff_t j = j0; j < j1; ++j) {
              if (dx) (*dx)[c * T + static_cast<std::size_t>(t + j - pad)] += w[j] * gt;
              if (dk) (*dk)[c * k + static_cast<std::size_t>(j)] += in[t + j - pad] * gt;
            }
          }
        }
      });
}

Var dropout(Var x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (auto& m : mask.values()) {
    // 53 random bits -> uniform double in [0, 1).
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < rate ? 0.0 : keep_scale;
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape()->record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

Var columns(Var x, std::size_t begin, std::size_t count) {
  require_matrix(x, "columns");
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (begin + count > n) {
    throw DimensionError("columns: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") exceeds " + to_string(xv.shape()));
  }
  Tensor out({m, count});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(xv.data() + r * n + begin, count, out.data() + r * count);
  }
  return x.tape()->record(std::move(out), {x}, [x, begin, count, m, n](Tape& tape, const Tensor& g) {
    Tensor& dx = tape.grad_buffer(x);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < count; ++c) dx[r * n + begin + c] += g[r * count + c];
    }
  });
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_columns needs at least one input");
  const std::size_t m = parts.front().value().rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    require_matrix(p, "concat_columns");
    if (p.value().rows() != m) throw DimensionError("concat_columns: row counts differ");
    n += p.value().cols();
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(pv.data() + r * pv.cols(), pv.cols(), out.data() + r * n + offset);
    }
    offset += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), parts, [inputs, m, n](Tape& tape, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t w = p.value().cols();
      if (p.requires_grad()) {
        Tensor& dp = tape.grad_buffer(p);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < w; ++c) dp[r * w + c] += g[r * n + offset + c];
        }
      }
      offset += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_rows needs at least one input");
  const std::size_t n = parts.front().value().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != n) throw DimensionError("concat_rows: column counts differ");
    m += p.value().rows();
  }
  Tensor out({m, n});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape()->record(std::move(out), parts, [inputs](Tape& tape, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t len = p.value().size();
      if (p.requires_grad()) {
        Tensor& dp = tape.grad_buffer(p);
        for (std::size_t i = 0; i < len; ++i) dp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var attention_heads(Var q, Var k, Var v, std::size_t heads, double scale, std::vector<Tensor>* probabilities) {
  for (const Var* x : {&q, &k, &v}) require_matrix(*x, "attention_heads");
  const std::size_t n = q.value().rows();
  const std::size_t dk = q.value().cols(), dv = v.value().cols();
  if (k.value().rows() != n || v.value().rows() != n || k.value().cols() != dk) {
    throw DimensionError("attention_heads: incompatible shapes " + to_string(q.shape()) + ", " + to_string(k.shape()) +
                         ", " + to_string(v.shape()));
  }
  if (heads == 0 || dk % heads != 0 || dv % heads != 0) {
    throw DimensionError("attention_heads: widths " + std::to_string(dk) + " and " + std::to_string(dv) +
                         " are not divisible by " + std::to_string(heads) + " heads");
  }
  const auto kw = static_cast<Eigen::Index>(dk / heads), vw = static_cast<Eigen::Index>(dv / heads);
  const auto rows = static_cast<Eigen::Index>(n);
  std::vector<RowMatrix> probs(heads);
  Tensor out({n, dv});
  for (std::size_t h = 0; h < heads; ++h) {
    const auto i = static_cast<Eigen::Index>(h);
    RowMatrix& s = probs[h];
    s.noalias() = as_matrix(q.value()).middleCols(i * kw, kw) * as_matrix(k.value()).middleCols(i * kw, kw).transpose();
    s *= scale;
    if (s.hasNaN()) throw NumericError("attention_heads: NaN scores in head " + std::to_string(h));
    s.colwise() -= s.rowwise().maxCoeff();
    s = s.array().exp();
    s.array().colwise() /= s.rowwise().sum().array();
    as_matrix(out).middleCols(i * vw, vw).noalias() = s * as_matrix(v.value()).middleCols(i * vw, vw);
    if (probabilities) {
      Tensor& t = probabilities->emplace_back(Shape{n, n});
      as_matrix(t) = s;
    }
  }
  return q.tape()->record(std::move(out), {q, k, v},
                          [q, k, v, kw, vw, rows, scale, probs = std::move(probs)](Tape& tape, const Tensor& g) {
    RowMatrix ds(rows, rows);
    for (std::size_t h = 0; h < probs.size(); ++h) {
      const auto i = static_cast<Eigen::Index>(h);
      const RowMatrix& s = probs[h];
      const auto gh = as_matrix(g).middleCols(i * vw, vw);
      if (v.requires_grad()) as_matrix(tape.grad_buffer(v)).middleCols(i * vw, vw).noalias() += s.transpose() * gh;
      if (!q.requires_grad() && !k.requires_grad()) continue;
      ds.noalias() = gh * as_matrix(v.value()).middleCols(i * vw, vw).transpose();
      // Softmax backward, folded with the score scale.
      const Eigen::VectorXd dot = (ds.array() * s.array()).rowwise().sum();
      ds = scale * (s.array() * (ds.array().colwise() - dot.array()));
      if (q.requires_grad()) {
        as_matrix(tape.grad_buffer(q)).middleCols(i * kw, kw).noalias() +=
            ds * as_matrix(k.value()).middleCols(i * kw, kw);
      }
      if (k.requires_grad()) {
        as_matrix(tape.grad_buffer(k)).middleCols(i * kw, kw).noalias() +=
            ds.transpose() * as_matrix(q.value()).middleCols(i * kw, kw);
      }
    }
  });
}

}  // namespace s3t::num
