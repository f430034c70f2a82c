#include "core/analysis.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <tuple>

#include "core/errors.hpp"
#include "core/util.hpp"

namespace hazgraph::analysis {

using json = nlohmann::json;

const char* metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::clip_style: return "clip_style";
    case MetricKind::blip_style: return "blip_style";
    case MetricKind::vqa_graph: return "vqa_graph";
  }
  return "vqa_graph";
}

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::matched: return "matched";
    case Condition::shuffled_out_of_domain: return "shuffled_out_of_domain";
    case Condition::shuffled_in_domain: return "shuffled_in_domain";
  }
  return "matched";
}

std::optional<MetricKind> metric_from_name(std::string_view name) {
  if (name == "clip_style") return MetricKind::clip_style;
  if (name == "blip_style") return MetricKind::blip_style;
  if (name == "vqa_graph") return MetricKind::vqa_graph;
  return std::nullopt;
}

std::optional<Condition> condition_from_name(std::string_view name) {
  if (name == "matched") return Condition::matched;
  if (name == "shuffled_out_of_domain") return Condition::shuffled_out_of_domain;
  if (name == "shuffled_in_domain") return Condition::shuffled_in_domain;
  return std::nullopt;
}

std::pair<double, double> metric_range(MetricKind m) {
  return m == MetricKind::clip_style ? std::pair{-1.0, 1.0} : std::pair{0.0, 1.0};
}

double shannon_entropy(const std::vector<double>& values, double lo, double hi, std::size_t bins) {
  if (values.empty()) fail(ErrorCode::empty_input, "entropy of an empty sample");
  if (bins < 2) fail(ErrorCode::invalid_argument, "need at least 2 bins");
  if (!(hi > lo)) fail(ErrorCode::invalid_argument, "entropy range must have hi > lo");

  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) {
      fail(ErrorCode::value_out_of_range,
           "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
               std::to_string(hi) + "]");
    }
    auto bin = static_cast<std::size_t>((v - lo) / width);
    if (bin >= bins) bin = bins - 1;  // right edge of the last bin is inclusive
    ++counts[bin];
  }

  const double n = static_cast<double>(values.size());
  double entropy = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log2(p);
  }
  return entropy;
}

std::vector<std::pair<std::string, std::string>> negative_control_shuffle(
    const std::vector<std::pair<std::string, std::string>>& pairs, ShuffleMode mode,
    std::uint64_t seed, const std::vector<std::string>& image_pool) {
  std::uint64_t state = seed ^ 0x9d2c5680f0a5c3ULL;

  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(pairs.size());

  if (mode == ShuffleMode::out_of_domain) {
    if (image_pool.empty()) fail(ErrorCode::pool_empty, "out-of-domain shuffle needs an image pool");
    for (const auto& [prompt, image] : pairs) {
      (void)image;
      out.push_back({prompt, image_pool[util::splitmix64(state) % image_pool.size()]});
    }
    return out;
  }

  if (pairs.size() < 2) fail(ErrorCode::too_few_pairs, "in-domain shuffle needs at least 2 pairs");
  // Seeded Fisher-Yates, rejection-sampled until no prompt keeps its image.
  std::vector<std::size_t> perm(pairs.size());
  while (true) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size() - 1; i > 0; --i) {
      const std::size_t j = util::splitmix64(state) % (i + 1);
      std::swap(perm[i], perm[j]);
    }
    bool has_fixed_point = false;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      if (perm[i] == i) {
        has_fixed_point = true;
        break;
      }
    }
    if (!has_fixed_point) break;
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.push_back({pairs[i].first, pairs[perm[i]].second});
  }
  return out;
}

std::vector<ComparisonRow> summarize_scores(const std::vector<ScoredPair>& pairs) {
  if (pairs.empty()) fail(ErrorCode::empty_input, "no scored pairs to summarize");

  std::vector<std::string> order;
  std::map<std::string, std::map<MetricKind, std::vector<double>>> grouped;
  for (const auto& pair : pairs) {
    if (!std::isfinite(pair.value)) fail(ErrorCode::invalid_argument, "non-finite score value");
    if (!grouped.count(pair.model_tag)) order.push_back(pair.model_tag);
    grouped[pair.model_tag][pair.metric].push_back(pair.value);
  }

  std::vector<ComparisonRow> rows;
  for (const auto& tag : order) {
    ComparisonRow row;
    row.model_tag = tag;
    for (const auto& [metric, values] : grouped[tag]) {
      MetricStat stat;
      stat.count = values.size();
      stat.mean = std::accumulate(values.begin(), values.end(), 0.0) /
                  static_cast<double>(values.size());
      if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - stat.mean) * (v - stat.mean);
        stat.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
      }
      row.per_metric[metric] = stat;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_mean_std(const MetricStat& stat) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", stat.mean, stat.stddev);
  return buf;
}

std::vector<EntropyReport> entropy_table(const std::vector<ScoredPair>& pairs,
                                         const EntropyBinning& binning) {
  std::vector<std::pair<MetricKind, std::string>> order;
  std::map<std::pair<int, std::string>, std::vector<double>> grouped;
  for (const auto& pair : pairs) {
    const std::string group = pair.condition == Condition::matched
                                  ? pair.model_tag
                                  : std::string("shuffle:") +
                                        (pair.condition == Condition::shuffled_in_domain
                                             ? "in_domain"
                                             : "out_of_domain");
    const auto key = std::pair{static_cast<int>(pair.metric), group};
    if (!grouped.count(key)) order.push_back({pair.metric, group});
    grouped[key].push_back(pair.value);
  }

  std::vector<EntropyReport> reports;
  for (const auto& [metric, group] : order) {
    const auto& values = grouped[{static_cast<int>(metric), group}];
    EntropyReport report;
    report.metric = metric;
    report.group = group;
    report.bin_count = binning.bins;
    std::tie(report.lo, report.hi) = metric_range(metric);
    report.bin_width = (report.hi - report.lo) / static_cast<double>(binning.bins);
    report.entropy_bits = shannon_entropy(values, report.lo, report.hi, binning.bins);
    reports.push_back(std::move(report));
  }
  return reports;
}

std::string comparison_to_json(const std::vector<ComparisonRow>& rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json entry;
    entry["model"] = row.model_tag;
    for (const auto& [metric, stat] : row.per_metric) {
      entry[metric_name(metric)] = {{"mean", stat.mean},
                                    {"std", stat.stddev},
                                    {"count", stat.count},
                                    {"display", format_mean_std(stat)}};
    }
    out.push_back(std::move(entry));
  }
  return out.dump(2) + "\n";
}

std::string entropy_to_json(const std::vector<EntropyReport>& reports) {
  json out = json::array();
  for (const auto& report : reports) {
    out.push_back({{"metric", metric_name(report.metric)},
                   {"group", report.group},
                   {"bins", report.bin_count},
                   {"bin_width", report.bin_width},
                   {"range", {report.lo, report.hi}},
                   {"entropy_bits", report.entropy_bits}});
  }
  return out.dump(2) + "\n";
}

namespace {

std::string sanitize_filename(std::string_view name) {
  std::string out;
  for (char c : name) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  }
  return out;
}

std::vector<std::size_t> histogram_counts(const std::vector<double>& values, double lo, double hi,
                                          std::size_t bins) {
  std::vector<std::size_t> counts(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    auto bin = static_cast<std::size_t>((std::clamp(v, lo, hi) - lo) / width);
    if (bin >= bins) bin = bins - 1;
    ++counts[bin];
  }
  return counts;
}

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<std::filesystem::path> export_distributions(const std::vector<ScoredPair>& pairs,
                                                        const EntropyBinning& binning,
                                                        const std::filesystem::path& out_dir) {
  if (pairs.empty()) fail(ErrorCode::empty_input, "no scored pairs to export");

  // Group values per (condition, metric); panels for the SVG, one CSV each.
  std::vector<std::tuple<Condition, MetricKind, std::string>> order;
  std::map<std::pair<int, int>, std::vector<double>> grouped;
  for (const auto& pair : pairs) {
    const auto key = std::pair{static_cast<int>(pair.condition), static_cast<int>(pair.metric)};
    if (!grouped.count(key)) {
      order.push_back({pair.condition, pair.metric,
                       std::string(condition_name(pair.condition)) + "_" + metric_name(pair.metric)});
    }
    grouped[key].push_back(pair.value);
  }

  std::vector<std::filesystem::path> written;
  for (const auto& [condition, metric, name] : order) {
    const auto [lo, hi] = metric_range(metric);
    const auto counts = histogram_counts(grouped[{static_cast<int>(condition), static_cast<int>(metric)}],
                                         lo, hi, binning.bins);
    const double width = (hi - lo) / static_cast<double>(binning.bins);
    std::string csv = "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < counts.size(); ++b) {
      csv += format_double(lo + width * static_cast<double>(b)) + "," +
             format_double(lo + width * static_cast<double>(b + 1)) + "," +
             std::to_string(counts[b]) + "\n";
    }
    const auto path = out_dir / (sanitize_filename(name) + ".csv");
    util::write_file_atomic(path, csv);
    written.push_back(path);
  }

  // Small-multiples SVG: one row per condition, one column per metric.
  std::vector<Condition> conditions;
  std::vector<MetricKind> metrics;
  for (const auto& [condition, metric, name] : order) {
    (void)name;
    if (std::find(conditions.begin(), conditions.end(), condition) == conditions.end()) {
      conditions.push_back(condition);
    }
    if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end()) {
      metrics.push_back(metric);
    }
  }

  const int panel_w = 220, panel_h = 130, margin = 42;
  const int svg_w = margin + static_cast<int>(metrics.size()) * (panel_w + margin);
  const int svg_h = margin + static_cast<int>(conditions.size()) * (panel_h + margin);
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(svg_w) +
                    "\" height=\"" + std::to_string(svg_h) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t r = 0; r < conditions.size(); ++r) {
    for (std::size_t c = 0; c < metrics.size(); ++c) {
      const auto key = std::pair{static_cast<int>(conditions[r]), static_cast<int>(metrics[c])};
      const int x0 = margin + static_cast<int>(c) * (panel_w + margin);
      const int y0 = margin + static_cast<int>(r) * (panel_h + margin);
      svg += "<text x=\"" + std::to_string(x0) + "\" y=\"" + std::to_string(y0 - 8) +
             "\" font-size=\"11\" font-family=\"monospace\">" +
             std::string(condition_name(conditions[r])) + " / " + metric_name(metrics[c]) +
             "</text>\n";
      svg += "<rect x=\"" + std::to_string(x0) + "\" y=\"" + std::to_string(y0) + "\" width=\"" +
             std::to_string(panel_w) + "\" height=\"" + std::to_string(panel_h) +
             "\" fill=\"none\" stroke=\"#888\"/>\n";
      if (!grouped.count(key)) continue;
      const auto [lo, hi] = metric_range(metrics[c]);
      const auto counts = histogram_counts(grouped[key], lo, hi, binning.bins);
      const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
      const double bar_w = static_cast<double>(panel_w) / static_cast<double>(counts.size());
      for (std::size_t b = 0; b < counts.size(); ++b) {
        if (counts[b] == 0) continue;
        const double h = static_cast<double>(panel_h - 4) * static_cast<double>(counts[b]) /
                         static_cast<double>(peak);
        svg += "<rect x=\"" + format_double(x0 + bar_w * static_cast<double>(b)) + "\" y=\"" +
               format_double(y0 + panel_h - h) + "\" width=\"" + format_double(bar_w) +
               "\" height=\"" + format_double(h) + "\" fill=\"#4477aa\"/>\n";
      }
    }
  }
  svg += "</svg>\n";
  const auto svg_path = out_dir / "overview.svg";
  util::write_file_atomic(svg_path, svg);
  written.push_back(svg_path);
  return written;
}

}  // namespace hazgraph::analysis
