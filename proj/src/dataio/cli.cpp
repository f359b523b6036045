#include "s3t/dataio.hpp"
#include "s3t/error.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

namespace s3t::io {

namespace {

struct ModelFlags {
  std::size_t slice = 10;
  std::size_t heads = 5;
  std::size_t kc = 51;
  std::size_t nf = 4;
  std::size_t na = 3;
  double dropout_temporal = 0.5;
  double dropout_spatial = 0.3;
  std::size_t d_k = 0;  // 0 -> heads * slice
  std::size_t d_v = 0;

  model::ModelConfig config() const {
    model::ModelConfig c;
    c.slice_d = slice;
    c.n_heads = heads;
    c.kernel_size = kc;
    c.ff_expansion = nf;
    c.n_blocks = na;
    c.dropout_temporal = dropout_temporal;
    c.dropout_spatial = dropout_spatial;
    if (d_k) c.d_k = d_k;
    if (d_v) c.d_v = d_v;
    return c;
  }
};

struct TrainFlags {
  train::TrainConfig tc;
  int classes = 4;
  int rows = 4;
  std::size_t jobs = 1;
};

void add_model_flags(CLI::App* app, ModelFlags& m) {
  app->add_option("--slice", m.slice, "slice width d")->capture_default_str();
  app->add_option("--heads", m.heads, "attention heads h")->capture_default_str();
  app->add_option("--kc", m.kc, "position-encoding kernel size (odd)")->capture_default_str();
  app->add_option("--nf", m.nf, "feed-forward expansion")->capture_default_str();
  app->add_option("--na", m.na, "temporal blocks")->capture_default_str();
  app->add_option("--dropout-temporal", m.dropout_temporal)->capture_default_str();
  app->add_option("--dropout-spatial", m.dropout_spatial)->capture_default_str();
  app->add_option("--dk", m.d_k, "packed key width (default heads * slice)");
  app->add_option("--dv", m.d_v, "packed value width (default heads * slice)");
}

void add_train_flags(CLI::App* app, TrainFlags& t) {
  app->add_option("--lr", t.tc.learning_rate)->capture_default_str();
  app->add_option("--beta1", t.tc.beta1)->capture_default_str();
  app->add_option("--beta2", t.tc.beta2)->capture_default_str();
  app->add_option("--batch", t.tc.batch_size)->capture_default_str();
  app->add_option("--epochs", t.tc.epochs)->capture_default_str();
  app->add_option("--seed", t.tc.seed)->capture_default_str();
  app->add_flag_callback("--no-dropout", [&t] { t.tc.dropout = false; }, "disable dropout during training");
}

void add_cv_flags(CLI::App* app, TrainFlags& t) {
  app->add_option("--folds", t.tc.folds)->capture_default_str();
  app->add_option("--classes", t.classes, "number of classes N")->capture_default_str();
  app->add_option("--rows", t.rows, "CSP rows S per sub-filter")->capture_default_str();
  app->add_option("--jobs", t.jobs, "folds trained concurrently")->capture_default_str();
}

std::pair<double, double> parse_pair(const std::string& text, const std::string& flag) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    std::size_t a = 0;
    std::size_t b = 0;
    const std::string lo = text.substr(0, colon);
    const std::string hi = text.substr(colon + 1);
    const double x = std::stod(lo, &a);
    const double y = std::stod(hi, &b);
    if (a != lo.size() || b != hi.size()) throw std::invalid_argument(text);
    return {x, y};
  } catch (const std::exception&) {
    throw UsageError(flag + " expects LOW:HIGH, got '" + text + "'");
  }
}

void check_classes(const TrialSet& set, int classes) {
  if (set.n_classes != classes) {
    throw DataError("trial set has " + std::to_string(set.n_classes) + " classes but --classes is " +
                    std::to_string(classes));
  }
}

std::vector<prep::Trial> filtered(const std::vector<prep::Trial>& trials, const csp::SpatialFilter& filter) {
  std::vector<prep::Trial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    prep::Trial z = t;
    z.data = csp::apply_filter(filter, t);
    out.push_back(std::move(z));
  }
  return out;
}

void print_summary(const train::EvalReport& rep, std::ostream& out) {
  char buf[160];
  if (!rep.fold_accuracies.empty()) {
    out << "fold accuracies:";
    for (double a : rep.fold_accuracies) {
      std::snprintf(buf, sizeof buf, " %.2f", a);
      out << buf;
    }
    out << "\n";
  }
  if (rep.mean_accuracy) {
    std::snprintf(buf, sizeof buf, "mean accuracy %.2f +- %.2f\n", *rep.mean_accuracy, rep.std_accuracy.value_or(0.0));
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "overall accuracy %.2f over %zu trials\n", rep.overall_accuracy, rep.total());
  out << buf;
  out << "class  accuracy  precision  recall  specificity  f-score\n";
  auto cell = [](const std::optional<double>& v) {
    char c[32];
    if (v) {
      std::snprintf(c, sizeof c, "%10.2f", *v);
    } else {
      std::snprintf(c, sizeof c, "%10s", "-");
    }
    return std::string(c);
  };
  for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
    const auto& m = rep.per_class[k];
    std::snprintf(buf, sizeof buf, "%5zu", k);
    out << buf << cell(m.accuracy) << cell(m.precision) << cell(m.recall) << cell(m.specificity) << cell(m.f_score)
        << "\n";
  }
}

train::CvConfig cv_config(const ModelFlags& m, const TrainFlags& t) {
  train::CvConfig cv;
  cv.model = m.config();
  cv.n_classes = t.classes;
  cv.csp_rows = t.rows;
  cv.jobs = t.jobs;
  return cv;
}

int dispatch(CLI::App& app, int argc, const char* const* argv) {
  app.require_subcommand(1);

  // synth
  SynthSpec synth;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "generate a synthetic trial set");
  s->add_option("--out", synth_out, "output trial-set file")->required();
  s->add_option("--classes", synth.n_classes)->capture_default_str();
  s->add_option("--trials-per-class", synth.trials_per_class)->capture_default_str();
  s->add_option("--channels", synth.channels)->capture_default_str();
  s->add_option("--samples", synth.samples)->capture_default_str();
  s->add_option("--fs", synth.fs)->capture_default_str();
  s->add_option("--freqs", synth.frequencies, "rhythm frequency per class (Hz)")->delimiter(',');
  s->add_option("--amps", synth.amplitudes, "std of each class's dominant source")->delimiter(',');
  s->add_option("--bandwidth", synth.bandwidth)->capture_default_str();
  s->add_option("--drift", synth.drift, "frequency drift per class (Hz/s)")->delimiter(',');
  s->add_option("--noise", synth.noise_sigma)->capture_default_str();
  s->add_option("--mixing-seed", synth.mixing_seed)->capture_default_str();
  s->add_flag("--identity-mixing", synth.identity_mixing);
  s->add_flag("--per-class-mixing", synth.per_class_mixing);
  s->add_option("--seed", synth.seed)->capture_default_str();

  // preprocess
  std::string pre_in, pre_out, pre_stats_out, pre_stats_in, band_text = "4:40", window_text;
  bool no_standardize = false;
  auto* p = app.add_subcommand("preprocess", "band-pass, crop and z-score a trial set");
  p->add_option("--in", pre_in)->required();
  p->add_option("--out", pre_out)->required();
  p->add_option("--band", band_text, "pass band LOW:HIGH in Hz")->capture_default_str();
  p->add_option("--window", window_text, "crop START:END seconds from each trial's first sample (2a 2:6, 2b 3:7)");
  p->add_option("--stats-out", pre_stats_out, "write the fitted z-score statistics");
  p->add_option("--stats", pre_stats_in, "apply existing statistics instead of fitting");
  p->add_flag("--no-standardize", no_standardize, "band-pass and crop only (input for cv)");

  // fit-csp
  std::string csp_in, csp_out;
  int csp_classes = 4, csp_rows = 4;
  auto* f = app.add_subcommand("fit-csp", "fit the one-versus-rest spatial filter");
  f->add_option("--in", csp_in)->required();
  f->add_option("--out", csp_out)->required();
  f->add_option("--classes", csp_classes)->capture_default_str();
  f->add_option("--rows", csp_rows)->capture_default_str();

  // train
  ModelFlags train_model;
  TrainFlags train_flags;
  std::string train_in, train_filter, train_out;
  auto* t = app.add_subcommand("train", "train a model on standardized trials");
  t->add_option("--in", train_in)->required();
  t->add_option("--filter", train_filter)->required();
  t->add_option("--out", train_out, "checkpoint")->required();
  add_model_flags(t, train_model);
  add_train_flags(t, train_flags);

  // eval
  std::string eval_ckpt, eval_in, eval_filter, eval_report;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--ckpt", eval_ckpt)->required();
  e->add_option("--in", eval_in)->required();
  e->add_option("--filter", eval_filter)->required();
  e->add_option("--report", eval_report);

  // cv, ablate
  ModelFlags cv_model;
  TrainFlags cv_flags;
  std::string cv_in, cv_report;
  auto* c = app.add_subcommand("cv", "stratified k-fold cross-validation");
  c->add_option("--in", cv_in, "band-passed, not standardized trials")->required();
  c->add_option("--report", cv_report);
  add_model_flags(c, cv_model);
  add_train_flags(c, cv_flags);
  add_cv_flags(c, cv_flags);

  ModelFlags ab_model;
  TrainFlags ab_flags;
  std::string ab_in, ab_report, ab_drop;
  auto* a = app.add_subcommand("ablate", "cross-validation with one sub-network removed");
  a->add_option("--in", ab_in)->required();
  a->add_option("--drop", ab_drop)->required()->check(CLI::IsMember({"spatial", "temporal", "posenc", "ff"}));
  a->add_option("--report", ab_report);
  add_model_flags(a, ab_model);
  add_train_flags(a, ab_flags);
  add_cv_flags(a, ab_flags);

  ModelFlags sw_model;
  TrainFlags sw_flags;
  std::string sw_in, sw_param;
  std::vector<double> sw_values;
  auto* w = app.add_subcommand("sweep", "cross-validation over slice_d or k_c values");
  w->add_option("--in", sw_in)->required();
  w->add_option("--param", sw_param)->required()->check(CLI::IsMember({"slice_d", "k_c"}));
  w->add_option("--values", sw_values)->required()->delimiter(',');
  add_model_flags(w, sw_model);
  add_train_flags(w, sw_flags);
  add_cv_flags(w, sw_flags);

  // params
  ModelFlags pm_model;
  std::size_t pm_channels = 16, pm_samples = 1000, pm_classes = 4;
  std::vector<std::string> pm_drop;
  auto* m = app.add_subcommand("params", "print the trainable parameter count");
  m->add_option("--feature-channels", pm_channels, "C_f")->capture_default_str();
  m->add_option("--samples", pm_samples, "T")->capture_default_str();
  m->add_option("--classes", pm_classes)->capture_default_str();
  m->add_option("--drop", pm_drop, "modules to remove")->delimiter(',');
  add_model_flags(m, pm_model);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  auto& out = std::cout;
  if (*s) {
    write_file(synth_out, encode_trialset(generate_synthetic(synth)));
    out << "wrote " << synth.trials_per_class * static_cast<std::size_t>(synth.n_classes) << " trials to " << synth_out
        << "\n";
  } else if (*p) {
    TrialSet set = decode_trialset(read_file(pre_in));
    const auto [lo, hi] = parse_pair(band_text, "--band");
    for (auto& tr : set.trials) tr = prep::bandpass(tr, prep::Band{lo, hi});
    if (!window_text.empty()) {
      const auto [ws, we] = parse_pair(window_text, "--window");
      prep::Window win{ws, we};
      const auto len = prep::window_samples(win, set.fs);
      const auto start = static_cast<Eigen::Index>(std::llround(ws * set.fs));
      if (we <= ws || ws < 0 || start + static_cast<Eigen::Index>(len) > static_cast<Eigen::Index>(set.samples)) {
        throw SegmentationError("window " + window_text + " s does not fit trials of " + std::to_string(set.samples) +
                                " samples at " + std::to_string(set.fs) + " Hz");
      }
      for (auto& tr : set.trials) tr.data = tr.data.middleCols(start, static_cast<Eigen::Index>(len)).eval();
      set.samples = len;
    }
    if (!no_standardize) {
      const auto stats = pre_stats_in.empty() ? prep::fit_standardization(set.trials, pre_in)
                                              : decode_stats(read_file(pre_stats_in));
      set.trials = prep::standardize(set.trials, stats);
      if (!pre_stats_out.empty()) write_file(pre_stats_out, encode_stats(stats));
    }
    write_file(pre_out, encode_trialset(set));
    out << "wrote " << set.trials.size() << " trials (" << set.channels << "x" << set.samples << ") to " << pre_out
        << "\n";
  } else if (*f) {
    const TrialSet set = decode_trialset(read_file(csp_in));
    check_classes(set, csp_classes);
    const auto filter = csp::fit_ovr_filter(set.trials, csp_classes, csp_rows);
    write_file(csp_out, encode_filter(filter));
    out << "spatial filter " << filter.feature_channels() << "x" << filter.input_channels() << " written to "
        << csp_out << "\n";
  } else if (*t) {
    const TrialSet set = decode_trialset(read_file(train_in));
    const auto filter = decode_filter(read_file(train_filter));
    model::ModelConfig mc = train_model.config();
    mc.n_classes = static_cast<std::size_t>(set.n_classes);
    mc.n_feature_channels = static_cast<std::size_t>(filter.feature_channels());
    mc.samples = set.samples;
    const auto result = train::train(filtered(set.trials, filter), mc, train_flags.tc, [&](std::size_t ep, double l) {
      if ((ep + 1) % 50 == 0) std::cerr << "epoch " << ep + 1 << " loss " << l << "\n";
    });
    write_file(train_out, encode_checkpoint({mc, result.params}));
    out << "trained " << model::count_params(result.params) << " parameters for " << train_flags.tc.epochs
        << " epochs; final loss " << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n";
  } else if (*e) {
    const auto ckpt = decode_checkpoint(read_file(eval_ckpt));
    const TrialSet set = decode_trialset(read_file(eval_in));
    const auto filter = decode_filter(read_file(eval_filter));
    const auto rep = train::evaluate(ckpt.params, ckpt.config, filtered(set.trials, filter));
    if (!eval_report.empty()) write_file(eval_report, format_report(rep));
    print_summary(rep, out);
  } else if (*c || *a) {
    const bool ablate = a->parsed();
    const TrialSet set = decode_trialset(read_file(ablate ? ab_in : cv_in));
    const TrainFlags& tf = ablate ? ab_flags : cv_flags;
    check_classes(set, tf.classes);
    const auto cfg = cv_config(ablate ? ab_model : cv_model, tf);
    const auto result = ablate ? train::run_ablation(set.trials, cfg, tf.tc, ab_drop)
                               : train::run_cv(set.trials, cfg, tf.tc);
    const std::string& report = ablate ? ab_report : cv_report;
    if (!report.empty()) write_file(report, format_report(result.aggregate));
    if (ablate) out << "without " << ab_drop << "\n";
    print_summary(result.aggregate, out);
  } else if (*w) {
    const TrialSet set = decode_trialset(read_file(sw_in));
    check_classes(set, sw_flags.classes);
    const auto rows = train::run_sweep(set.trials, cv_config(sw_model, sw_flags), sw_flags.tc, sw_param, sw_values);
    out << sw_param << ",mean_accuracy,std_accuracy\n";
    char buf[96];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%g,%.2f,%.2f\n", r.value, r.mean_accuracy, r.std_accuracy);
      out << buf;
    }
  } else if (*m) {
    model::ModelConfig mc = pm_model.config();
    mc.n_feature_channels = pm_channels;
    mc.samples = pm_samples;
    mc.n_classes = pm_classes;
    for (const auto& d : pm_drop) mc.modules = train::without(mc.modules, d);
    out << model::count_params(mc) << "\n";
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"S3T EEG decoding pipeline"};
  try {
    return dispatch(app, argc, argv);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const ConfigError& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return 2;
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return 4;
  } catch (const Error& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return 3;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"s3t"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace s3t::io
