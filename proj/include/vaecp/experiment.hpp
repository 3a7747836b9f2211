#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vaecp/tensor.hpp"
#include "vaecp/training.hpp"

namespace vaecp {

enum class Method { Vaecp, Cp };

std::string_view method_name(Method method) noexcept;
Method parse_method(std::string_view name);

struct SyntheticSpec {
  Dims dims = {20, 20, 20};
  std::size_t rank = 10;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
};

/// Either a generated CP tensor (fully observed) or a COO file.
using DatasetSpec = std::variant<SyntheticSpec, std::filesystem::path>;

/// Accepts "synthetic" with optional comma-separated settings, e.g.
/// "synthetic:dims=20x20x20,rank=10,noise=1,seed=0", or "coo:<path>", or a bare path.
DatasetSpec parse_dataset_spec(std::string_view text);
std::string describe(const DatasetSpec& spec);
ObservedEntrySet load_dataset(const DatasetSpec& spec);

struct ExperimentConfig {
  std::vector<Method> methods = {Method::Vaecp, Method::Cp};
  std::vector<std::size_t> ranks = {9, 10, 11, 12};
  std::size_t repeats = 10;
  std::size_t folds = 5;
  double train_fraction = 0.8;
  /// VAECP settings; `rank` is overridden per run and `max_epochs` bounds the
  /// stopping epochs that cross-validation may choose.
  TrainConfig vaecp;
  /// Upper bound on ALS sweeps that cross-validation may choose.
  std::size_t als_max_iters = 100;
  std::uint64_t seed = 0;
  /// Wall times are reported as 0 unless enabled, keeping output reproducible.
  bool record_wall_time = false;

  void validate() const;
};

/// One CSV row. phase is "cv" (validation fold), "train" or "test" (final model);
/// fold is -1 for the final model.
struct RunRecord {
  std::string method;
  std::size_t rank = 0;
  std::size_t repeat = 0;
  int fold = -1;
  std::string phase;
  double rmse = 0.0;
  double wall_time_s = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct SelectedStop {
  std::string method;
  std::size_t rank = 0;
  std::size_t repeat = 0;
  std::size_t epochs = 0;  // epochs for VAECP, sweeps for ALS
};

struct Quartiles {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Five-number summary with linear interpolation between order statistics.
Quartiles quartiles(std::vector<double> values);

struct GroupSummary {
  std::string method;
  std::size_t rank = 0;
  std::string phase;
  std::size_t count = 0;
  Quartiles stats;
};

struct ExperimentReport {
  std::vector<RunRecord> records;
  std::vector<SelectedStop> stops;

  std::vector<GroupSummary> summarize() const;
};

/// Observation points for callers that audit the protocol.
struct ExperimentHooks {
  /// After each repeat's split and normalization (raw train/test, train-only stats).
  std::function<void(std::size_t repeat, const ObservedEntrySet& train, const ObservedEntrySet& test,
                     const NormalizationStats& stats)>
      on_split;
  /// Every index a final model is scored on.
  std::function<void(std::size_t repeat, std::span<const std::size_t> index)> on_test_prediction;
  std::function<void(const RunRecord&)> on_record;
};

/// Per repeat: fresh random split, training-only normalization, k-fold CV
/// inside the training part to pick the stopping epoch (lowest fold-mean
/// validation RMSE), then a final fit on the whole training part scored on
/// the held-out part.
ExperimentReport run_experiment(const ObservedEntrySet& data, const ExperimentConfig& config,
                                const ExperimentHooks& hooks = {});

inline constexpr std::string_view kCsvHeader = "method,rank,repeat,fold,phase,rmse,wall_time_s";

void write_csv(std::ostream& out, std::span<const RunRecord> records);
std::vector<RunRecord> read_csv(std::istream& in);

/// JSON summary; schema documented in docs/formats.md.
void write_summary_json(std::ostream& out, const ExperimentReport& report, const ExperimentConfig& config,
                        const std::string& dataset);

}  // namespace vaecp
