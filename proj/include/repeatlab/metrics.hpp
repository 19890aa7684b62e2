#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "repeatlab/common.hpp"
#include "repeatlab/model.hpp"
#include "repeatlab/tasks.hpp"

namespace repeatlab {

struct MetricsRow {
  std::string run_id;
  uint64_t seed = 0;
  int phase = 0;
  long step = 0;
  long long compute = 0;
  std::optional<double> train_acc;
  std::optional<double> test_acc;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double norm_ratio = 0.0;
  std::vector<double> layer_norms;
};

struct EvalResult {
  std::optional<double> acc;
  double loss = 0.0;
};

// Full-pass evaluation. Accuracy only makes sense for ±1 labels (parity).
inline EvalResult evaluate(const MlpParams& p, const LabeledDataset& ds, LossKind kind) {
  if (ds.n() == 0) throw ConfigError("evaluate: empty dataset");
  Eigen::VectorXd preds = forward(p, ds.X);
  const double b = static_cast<double>(ds.n());
  EvalResult out;
  if (kind == LossKind::Mse) {
    out.loss = (preds - ds.y).squaredNorm() / b;
  } else {
    out.loss = -ds.y.dot(preds) / b;
  }
  if (ds.task.kind == TaskKind::Parity) {
    long hits = 0;
    for (long i = 0; i < ds.n(); ++i) {
      double s = preds(i) >= 0.0 ? 1.0 : -1.0;
      if (s == ds.y(i)) ++hits;
    }
    out.acc = static_cast<double>(hits) / b;
  }
  return out;
}

// ---- order statistics -----------------------------------------------------

// Linear-interpolation quantile on a copy; q in [0,1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("quantile of empty sample");
  std::sort(v.begin(), v.end());
  if (q <= 0.0) return v.front();
  if (q >= 1.0) return v.back();
  double pos = q * static_cast<double>(v.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

inline double interquartile_range(std::vector<double> v) {
  double q1 = quantile(v, 0.25);
  double q3 = quantile(std::move(v), 0.75);
  return q3 - q1;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(long successes, long trials, double z = 1.959963984540054) {
  if (trials <= 0) throw ConfigError("wilson interval needs trials >= 1");
  if (successes < 0 || successes > trials)
    throw ConfigError("wilson interval needs 0 <= successes <= trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = (z / denom) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// ---- aggregation ----------------------------------------------------------

struct AggregateRow {
  std::string group;
  double bucket = 0.0;  // step value, or geometric compute-bucket representative
  double mean = 0.0;
  double median_v = 0.0;
  double iqr = 0.0;
  double success_prob = 0.0;
  long n_seeds = 0;
  long n_failed = 0;
};

enum class MetricField { TrainAcc, TestAcc, TrainLoss, TestLoss, NormRatio };

inline double metric_value(const MetricsRow& r, MetricField f) {
  switch (f) {
    case MetricField::TrainAcc:
      return r.train_acc ? *r.train_acc : std::numeric_limits<double>::quiet_NaN();
    case MetricField::TestAcc:
      return r.test_acc ? *r.test_acc : std::numeric_limits<double>::quiet_NaN();
    case MetricField::TrainLoss:
      return r.train_loss;
    case MetricField::TestLoss:
      return r.test_loss;
    case MetricField::NormRatio:
      return r.norm_ratio;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Geometric bucket index for cross-regime compute comparison.
inline long geometric_bucket(double value, double ratio = 1.1) {
  if (value <= 0.0) throw ConfigError("geometric bucket needs a positive value");
  if (ratio <= 1.0) throw ConfigError("bucket ratio must exceed 1");
  return static_cast<long>(std::floor(std::log(value) / std::log(ratio) + 1e-12));
}

inline double bucket_representative(long idx, double ratio = 1.1) {
  return std::pow(ratio, static_cast<double>(idx));
}

struct AggregateOptions {
  MetricField field = MetricField::TestAcc;
  bool bucket_by_compute = false;
  double bucket_ratio = 1.1;
  double threshold = 0.99;
  bool success_at_or_above = true;  // accuracies: >= threshold; losses want <=
};

// Group rows by (key, step-or-compute-bucket) and reduce over seeds. Rows whose
// selected value is non-finite count as failures; n_seeds = contributing + failed.
// Values are sorted before folding so the result is independent of row order.
inline std::vector<AggregateRow> aggregate(
    const std::vector<MetricsRow>& rows,
    const std::function<std::string(const MetricsRow&)>& key_fn, const AggregateOptions& opt) {
  std::map<std::pair<std::string, long>, std::vector<double>> groups;
  std::map<std::pair<std::string, long>, long> failed;
  for (const MetricsRow& r : rows) {
    long b = opt.bucket_by_compute
                 ? geometric_bucket(static_cast<double>(std::max<long long>(1, r.compute)),
                                    opt.bucket_ratio)
                 : r.step;
    auto key = std::make_pair(key_fn(r), b);
    double v = metric_value(r, opt.field);
    if (std::isfinite(v)) {
      groups[key].push_back(v);
    } else {
      failed[key] += 1;
      groups.try_emplace(key);
    }
  }
  std::vector<AggregateRow> out;
  out.reserve(groups.size());
  for (auto& [key, vals] : groups) {
    std::sort(vals.begin(), vals.end());
    AggregateRow a;
    a.group = key.first;
    a.bucket = opt.bucket_by_compute ? bucket_representative(key.second, opt.bucket_ratio)
                                     : static_cast<double>(key.second);
    long nf = 0;
    if (auto it = failed.find(key); it != failed.end()) nf = it->second;
    a.n_failed = nf;
    a.n_seeds = static_cast<long>(vals.size()) + nf;
    long succ = 0;
    if (!vals.empty()) {
      double sum = 0.0;
      for (double v : vals) {
        sum += v;
        bool ok = opt.success_at_or_above ? (v >= opt.threshold) : (v <= opt.threshold);
        if (ok) ++succ;
      }
      a.mean = sum / static_cast<double>(vals.size());
      a.median_v = median(vals);
      a.iqr = interquartile_range(vals);
    } else {
      a.mean = a.median_v = a.iqr = std::numeric_limits<double>::quiet_NaN();
    }
    a.success_prob = a.n_seeds > 0 ? static_cast<double>(succ) / static_cast<double>(a.n_seeds)
                                   : 0.0;
    out.push_back(std::move(a));
  }
  return out;
}

// Median steps-to-threshold over successful seeds; NaN entries mean the seed
// never crossed.
struct ThresholdSummary {
  bool defined = false;
  double median_steps = std::numeric_limits<double>::quiet_NaN();
  long n_success = 0;
  long n_failed = 0;
};

inline ThresholdSummary steps_to_threshold_summary(const std::vector<double>& per_seed) {
  ThresholdSummary s;
  std::vector<double> ok;
  for (double v : per_seed) {
    if (std::isfinite(v))
      ok.push_back(v);
    else
      s.n_failed += 1;
  }
  s.n_success = static_cast<long>(ok.size());
  if (!ok.empty()) {
    s.defined = true;
    s.median_steps = median(std::move(ok));
  }
  return s;
}

// ---- serialization --------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing: " + std::strerror(errno));
  return f;
}

}  // namespace detail

inline std::string metrics_csv_header(int n_layers) {
  std::string h =
      "run_id,seed,phase,step,compute,train_acc,test_acc,train_loss,test_loss,norm_ratio";
  for (int l = 0; l < n_layers; ++l) h += ",layer_norm_" + std::to_string(l);
  return h;
}

// Fixed column order; optional accuracies serialize as empty cells.
inline void write_csv(const std::vector<MetricsRow>& rows, const std::string& path,
                      int n_layers = -1) {
  if (n_layers < 0) n_layers = rows.empty() ? 0 : static_cast<int>(rows.front().layer_norms.size());
  std::ofstream f = detail::open_for_write(path);
  f << metrics_csv_header(n_layers) << "\n";
  for (const MetricsRow& r : rows) {
    if (static_cast<int>(r.layer_norms.size()) != n_layers)
      throw IoError("metrics row layer count mismatch in '" + path + "'");
    f << r.run_id << ',' << r.seed << ',' << r.phase << ',' << r.step << ',' << r.compute << ',';
    if (r.train_acc) f << format_g17(*r.train_acc);
    f << ',';
    if (r.test_acc) f << format_g17(*r.test_acc);
    f << ',' << format_g17(r.train_loss) << ',' << format_g17(r.test_loss) << ','
      << format_g17(r.norm_ratio);
    for (double ln : r.layer_norms) f << ',' << format_g17(ln);
    f << "\n";
  }
  if (!f) throw IoError("write failed for '" + path + "': " + std::strerror(errno));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for reading: " + std::strerror(errno));
  std::string line;
  if (!std::getline(f, line)) throw IoError("empty metrics file '" + path + "'");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 10) throw IoError("bad metrics header in '" + path + "'");
  std::vector<MetricsRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c = split_csv_line(line);
    if (c.size() != header.size()) throw IoError("ragged metrics row in '" + path + "'");
    MetricsRow r;
    r.run_id = c[0];
    r.seed = std::strtoull(c[1].c_str(), nullptr, 10);
    r.phase = std::stoi(c[2]);
    r.step = std::stol(c[3]);
    r.compute = std::stoll(c[4]);
    if (!c[5].empty()) r.train_acc = std::strtod(c[5].c_str(), nullptr);
    if (!c[6].empty()) r.test_acc = std::strtod(c[6].c_str(), nullptr);
    r.train_loss = std::strtod(c[7].c_str(), nullptr);
    r.test_loss = std::strtod(c[8].c_str(), nullptr);
    r.norm_ratio = std::strtod(c[9].c_str(), nullptr);
    for (size_t i = 10; i < c.size(); ++i) r.layer_norms.push_back(std::strtod(c[i].c_str(), nullptr));
    rows.push_back(std::move(r));
  }
  return rows;
}

// Every JSON report carries schema_version; inject if the caller left it out.
inline void write_json(nlohmann::json j, const std::string& path) {
  if (!j.contains("schema_version")) j["schema_version"] = kSchemaVersion;
  std::ofstream f = detail::open_for_write(path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed for '" + path + "': " + std::strerror(errno));
}

// ---- SVG line plots -------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct AxesSpec {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool logx = false;
  bool logy = false;
};

namespace detail {

inline std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace detail

// Standalone SVG with one polyline per series, optional log axes, legend in
// input order. Rendering only; no statistics are computed here.
inline void plot_series(const std::vector<Series>& series, const AxesSpec& axes,
                        const std::string& path) {
  if (series.empty()) throw PlotError("plot_series: no series given");
  for (const Series& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size())
      throw PlotError("plot_series: series '" + s.label + "' is empty or ragged");
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        throw PlotError("plot_series: series '" + s.label + "' has non-finite data");
      if (axes.logx && s.x[i] <= 0.0)
        throw PlotError("plot_series: series '" + s.label + "' has x <= 0 on a log axis");
      if (axes.logy && s.y[i] <= 0.0)
        throw PlotError("plot_series: series '" + s.label + "' has y <= 0 on a log axis");
      if (i > 0 && !(s.x[i] > s.x[i - 1]))
        throw PlotError("plot_series: series '" + s.label + "' x not strictly increasing");
    }
  }

  auto tx = [&](double v) { return axes.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return axes.logy ? std::log10(v) : v; };
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Series& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }

  const double W = 800, H = 520;
  const double ml = 70, mr = 170, mt = 40, mb = 55;
  auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double v) { return H - mb - (ty(v) - ymin) / (ymax - ymin) * (H - mt - mb); };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  const int n_colors = 8;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  // ticks: 5 per axis in transformed space
  for (int i = 0; i <= 4; ++i) {
    double fx = xmin + (xmax - xmin) * i / 4.0;
    double vx = axes.logx ? std::pow(10.0, fx) : fx;
    double X = ml + (fx - xmin) / (xmax - xmin) * (W - ml - mr);
    svg << "<line x1=\"" << detail::fmt_coord(X) << "\" y1=\"" << H - mb << "\" x2=\""
        << detail::fmt_coord(X) << "\" y2=\"" << H - mb + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << detail::fmt_coord(X) << "\" y=\"" << H - mb + 20
        << "\" font-size=\"12\" text-anchor=\"middle\">" << detail::fmt_tick(vx) << "</text>\n";
    double fy = ymin + (ymax - ymin) * i / 4.0;
    double vy = axes.logy ? std::pow(10.0, fy) : fy;
    double Y = H - mb - (fy - ymin) / (ymax - ymin) * (H - mt - mb);
    svg << "<line x1=\"" << ml - 5 << "\" y1=\"" << detail::fmt_coord(Y) << "\" x2=\"" << ml
        << "\" y2=\"" << detail::fmt_coord(Y) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << detail::fmt_coord(Y + 4)
        << "\" font-size=\"12\" text-anchor=\"end\">" << detail::fmt_tick(vy) << "</text>\n";
  }
  svg << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
      << "\" font-size=\"14\" text-anchor=\"middle\">" << axes.xlabel << "</text>\n";
  svg << "<text x=\"18\" y=\"" << (mt + H - mb) / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (mt + H - mb) / 2 << ")\">" << axes.ylabel << "</text>\n";
  svg << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"24\" font-size=\"16\" "
      << "text-anchor=\"middle\">" << axes.title << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % n_colors];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (i) svg << ' ';
      svg << detail::fmt_coord(px(s.x[i])) << ',' << detail::fmt_coord(py(s.y[i]));
    }
    svg << "\"/>\n";
    // legend entry
    double ly = mt + 18.0 * static_cast<double>(si);
    svg << "<line x1=\"" << W - mr + 12 << "\" y1=\"" << detail::fmt_coord(ly + 8) << "\" x2=\""
        << W - mr + 34 << "\" y2=\"" << detail::fmt_coord(ly + 8) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << W - mr + 40 << "\" y=\"" << detail::fmt_coord(ly + 12)
        << "\" font-size=\"12\">" << s.label << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream f = detail::open_for_write(path);
  f << svg.str();
  if (!f) throw IoError("write failed for '" + path + "': " + std::strerror(errno));
}

}  // namespace repeatlab
