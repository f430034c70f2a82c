#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace hazgraph::analysis {

enum class MetricKind : int { clip_style = 0, blip_style = 1, vqa_graph = 2 };
enum class Condition : int { matched = 0, shuffled_out_of_domain = 1, shuffled_in_domain = 2 };

const char* metric_name(MetricKind m);
const char* condition_name(Condition c);
std::optional<MetricKind> metric_from_name(std::string_view name);
std::optional<Condition> condition_from_name(std::string_view name);

struct ScoredPair {
  std::string prompt_ref;
  std::string image_ref;
  std::string model_tag;
  MetricKind metric = MetricKind::vqa_graph;
  double value = 0.0;
  Condition condition = Condition::matched;
};

// Natural score range of each metric; cosine lives in [-1,1], the rest in [0,1].
std::pair<double, double> metric_range(MetricKind m);

// Shannon entropy in bits of the equal-width histogram of `values` over
// [lo, hi]; the last bin includes its right edge. Throws ValueOutOfRange for
// values outside the range and EmptyInput for an empty list.
double shannon_entropy(const std::vector<double>& values, double lo, double hi, std::size_t bins);

enum class ShuffleMode { out_of_domain, in_domain };

// Intentional prompt-image mismatching. out_of_domain pairs every prompt with
// a seeded-uniform draw from the external pool; in_domain applies a seeded
// derangement of the image list (no prompt keeps its own image).
std::vector<std::pair<std::string, std::string>> negative_control_shuffle(
    const std::vector<std::pair<std::string, std::string>>& pairs, ShuffleMode mode,
    std::uint64_t seed, const std::vector<std::string>& image_pool = {});

struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;  // sample (N-1); 0 for a single value
  std::size_t count = 0;
};

struct ComparisonRow {
  std::string model_tag;
  std::map<MetricKind, MetricStat> per_metric;
};

// Mean +/- sample standard deviation per (model_tag, metric); rows ordered by
// first appearance of the model tag.
std::vector<ComparisonRow> summarize_scores(const std::vector<ScoredPair>& pairs);

// "0.52 ± 0.01" fixed two-decimal formatting.
std::string format_mean_std(const MetricStat& stat);

struct EntropyBinning {
  std::size_t bins = 32;
};

struct EntropyReport {
  MetricKind metric = MetricKind::vqa_graph;
  std::string group;  // model tag for matched scores, shuffle source otherwise
  std::size_t bin_count = 0;
  double bin_width = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double entropy_bits = 0.0;
};

// One report per (metric, model-or-shuffle-source) group.
std::vector<EntropyReport> entropy_table(const std::vector<ScoredPair>& pairs,
                                         const EntropyBinning& binning);

std::string comparison_to_json(const std::vector<ComparisonRow>& rows);
std::string entropy_to_json(const std::vector<EntropyReport>& reports);

// Histogram CSV per group plus an SVG small-multiples overview
// (matched vs shuffled rows). Deterministic bytes for fixed inputs.
std::vector<std::filesystem::path> export_distributions(const std::vector<ScoredPair>& pairs,
                                                        const EntropyBinning& binning,
                                                        const std::filesystem::path& out_dir);

}  // namespace hazgraph::analysis
