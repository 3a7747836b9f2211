#include "vaecp/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "vaecp/cp.hpp"
#include "vaecp/error.hpp"
#include "vaecp/io.hpp"
#include "vaecp/rng.hpp"
#include "vaecp/synthetic.hpp"

namespace vaecp {

namespace {

// derive_seed stream tags
constexpr std::uint64_t kSplitStream = 11;
constexpr std::uint64_t kFoldStream = 12;
constexpr std::uint64_t kFitStream = 13;

using Clock = std::chrono::steady_clock;

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::string_view what) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(ErrorCategory::InvalidArgument, "bad " + std::string(what) + " '" + std::string(s) + "'");
  return value;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::uint64_t fit_seed(std::uint64_t seed, Method method, std::size_t rank, std::size_t repeat, int fold) {
  const auto method_tag = static_cast<std::uint64_t>(method);
  return derive_seed(derive_seed(seed, kFitStream + method_tag, rank), repeat, static_cast<std::uint64_t>(fold + 1));
}

// Fits one model for `stop_limit` epochs/sweeps, calling `on_stop(n, predictor)` after each.
void fit_with_curve(Method method, const ObservedEntrySet& train_norm, const ExperimentConfig& config,
                    std::size_t rank, std::size_t stop_limit, std::uint64_t seed,
                    const std::function<void(std::size_t, const EntryPredictor&)>& on_stop) {
  if (method == Method::Vaecp) {
    TrainConfig tc = config.vaecp;
    tc.rank = rank;
    tc.max_epochs = stop_limit;
    tc.convergence = 0.0;
    tc.seed = seed;
    train_vaecp(train_norm, tc, [&](std::size_t epoch, const VaecpModel& model) {
      on_stop(epoch, [&](std::span<const std::size_t> index) { return predict_entry(model, index); });
    });
  } else {
    AlsOptions options;
    options.rank = rank;
    options.max_iters = stop_limit;
    options.tol = -std::numeric_limits<double>::infinity();
    options.seed = seed;
    als_fit(train_norm, options, [&](std::size_t sweep, const FactorMatrices& factors) {
      on_stop(sweep, [&](std::span<const std::size_t> index) { return reconstruct_entry(factors, index); });
    });
  }
}

}  // namespace

std::string_view method_name(Method method) noexcept {
  return method == Method::Vaecp ? "vaecp" : "cp";
}

Method parse_method(std::string_view name) {
  if (name == "vaecp") return Method::Vaecp;
  if (name == "cp" || name == "als") return Method::Cp;
  fail(ErrorCategory::InvalidArgument, "unknown method '" + std::string(name) + "' (expected vaecp or cp)");
}

namespace {

SyntheticSpec parse_synthetic_spec(std::string_view text) {
  SyntheticSpec spec;
  std::string_view rest = text.substr(std::string_view("synthetic").size());
  if (rest.empty()) return spec;
  if (rest.front() != ':') fail(ErrorCategory::InvalidArgument, "expected ':' after 'synthetic'");
  rest.remove_prefix(1);
  for (std::string_view item : split(rest, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCategory::InvalidArgument, "synthetic option '" + std::string(item) + "' needs key=value");
    const std::string_view key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "dims") {
      spec.dims.clear();
      for (std::string_view n : split(value, 'x')) spec.dims.push_back(parse_number<std::size_t>(n, "dimension"));
      check_dims(spec.dims);
    } else if (key == "rank") {
      spec.rank = parse_number<std::size_t>(value, "rank");
    } else if (key == "noise") {
      spec.noise_std = parse_number<double>(value, "noise");
    } else if (key == "seed") {
      spec.seed = parse_number<std::uint64_t>(value, "seed");
    } else {
      fail(ErrorCategory::InvalidArgument, "unknown synthetic option '" + std::string(key) + "'");
    }
  }
  return spec;
}

}  // namespace

DatasetSpec parse_dataset_spec(std::string_view text) {
  if (text.starts_with("coo:")) text.remove_prefix(4);
  else if (text.starts_with("synthetic")) return parse_synthetic_spec(text);
  if (text.empty()) fail(ErrorCategory::InvalidArgument, "empty dataset path");
  return std::filesystem::path(std::string(text));
}

std::string describe(const DatasetSpec& spec) {
  if (const auto* path = std::get_if<std::filesystem::path>(&spec)) return "coo:" + path->string();
  const auto& s = std::get<SyntheticSpec>(spec);
  std::string dims;
  for (std::size_t d = 0; d < s.dims.size(); ++d) dims += (d ? "x" : "") + std::to_string(s.dims[d]);
  return "synthetic:dims=" + dims + ",rank=" + std::to_string(s.rank) + ",noise=" + format_real(s.noise_std) +
         ",seed=" + std::to_string(s.seed);
}

ObservedEntrySet load_dataset(const DatasetSpec& spec) {
  if (const auto* path = std::get_if<std::filesystem::path>(&spec)) return load_coo(*path);
  const auto& s = std::get<SyntheticSpec>(spec);
  return ObservedEntrySet::from_dense(generate_synthetic(s.dims, s.rank, s.noise_std, s.seed).tensor);
}

void ExperimentConfig::validate() const {
  require(!methods.empty(), "no methods selected");
  require(!ranks.empty(), "no ranks selected");
  for (std::size_t r : ranks) require(r >= 1, "ranks must be positive");
  require(repeats >= 1, "need at least one repeat");
  require(folds >= 2, "need at least 2 folds");
  require(train_fraction > 0.0 && train_fraction < 1.0, "train fraction must lie in (0, 1)");
  require(vaecp.max_epochs >= 1 && als_max_iters >= 1, "stopping limits must be positive");
}

Quartiles quartiles(std::vector<double> values) {
  require(!values.empty(), "quartiles of an empty list");
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

std::vector<GroupSummary> ExperimentReport::summarize() const {
  std::vector<GroupSummary> out;
  std::vector<std::vector<double>> values;
  for (const RunRecord& r : records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const GroupSummary& g) {
      return g.method == r.method && g.rank == r.rank && g.phase == r.phase;
    });
    if (it == out.end()) {
      out.push_back({r.method, r.rank, r.phase, 0, {}});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(r.rmse);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    out[g].count = values[g].size();
    out[g].stats = quartiles(values[g]);
  }
  return out;
}

ExperimentReport run_experiment(const ObservedEntrySet& data, const ExperimentConfig& config,
                                const ExperimentHooks& hooks) {
  config.validate();
  ExperimentReport report;
  auto emit = [&](RunRecord record) {
    if (!config.record_wall_time) record.wall_time_s = 0.0;
    if (hooks.on_record) hooks.on_record(record);
    report.records.push_back(std::move(record));
  };
  auto seconds_since = [](Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
  };

  for (std::size_t repeat = 0; repeat < config.repeats; ++repeat) {
    const TrainTestSplit parts = split_observed(data, config.train_fraction, derive_seed(config.seed, kSplitStream, repeat));
    require(!parts.test.empty(), "train fraction leaves no test entries");
    const NormalizationStats stats = compute_stats(parts.train);
    if (hooks.on_split) hooks.on_split(repeat, parts.train, parts.test, stats);
    const ObservedEntrySet train_norm = apply_stats(parts.train, stats);

    const auto folds = kfold_positions(parts.train.size(), config.folds, derive_seed(config.seed, kFoldStream, repeat));
    std::vector<ObservedEntrySet> fold_train, fold_valid;
    for (std::size_t f = 0; f < config.folds; ++f) {
      std::vector<std::size_t> rest;
      for (std::size_t g = 0; g < config.folds; ++g)
        if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
      std::sort(rest.begin(), rest.end());
      fold_train.push_back(train_norm.subset(rest));
      fold_valid.push_back(parts.train.subset(folds[f]));
    }

    for (Method method : config.methods) {
      const std::string name(method_name(method));
      const std::size_t limit = method == Method::Vaecp ? config.vaecp.max_epochs : config.als_max_iters;
      for (std::size_t rank : config.ranks) {
        // curves[f][n-1]: validation RMSE of fold f after n epochs/sweeps
        std::vector<std::vector<double>> curves(config.folds);
        std::vector<double> fold_time(config.folds);
        for (std::size_t f = 0; f < config.folds; ++f) {
          const auto start = Clock::now();
          fit_with_curve(method, fold_train[f], config, rank, limit, fit_seed(config.seed, method, rank, repeat, static_cast<int>(f)),
                         [&](std::size_t, const EntryPredictor& predict) {
                           curves[f].push_back(evaluate(predict, fold_valid[f], stats));
                         });
          fold_time[f] = seconds_since(start);
        }

        // ALS may stop early only on non-finite values, which throw; all curves share a length.
        const std::size_t length = std::min_element(curves.begin(), curves.end(), [](auto& a, auto& b) {
                                     return a.size() < b.size();
                                   })->size();
        std::size_t best = 0;
        double best_mean = std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < length; ++n) {
          double mean = 0.0;
          for (const auto& curve : curves) mean += curve[n];
          mean /= static_cast<double>(config.folds);
          if (mean < best_mean) {
            best_mean = mean;
            best = n;
          }
        }
        const std::size_t stop = best + 1;
        report.stops.push_back({name, rank, repeat, stop});
        for (std::size_t f = 0; f < config.folds; ++f)
          emit({name, rank, repeat, static_cast<int>(f), "cv", curves[f][best], fold_time[f]});

        const auto start = Clock::now();
        double train_rmse = 0.0, test_rmse = 0.0;
        fit_with_curve(method, train_norm, config, rank, stop, fit_seed(config.seed, method, rank, repeat, -1),
                       [&](std::size_t n, const EntryPredictor& predict) {
                         if (n != stop) return;
                         train_rmse = evaluate(predict, parts.train, stats);
                         test_rmse = evaluate(
                             [&](std::span<const std::size_t> index) {
                               if (hooks.on_test_prediction) hooks.on_test_prediction(repeat, index);
                               return predict(index);
                             },
                             parts.test, stats);
                       });
        const double elapsed = seconds_since(start);
        emit({name, rank, repeat, -1, "train", train_rmse, elapsed});
        emit({name, rank, repeat, -1, "test", test_rmse, elapsed});
      }
    }
  }
  return report;
}

void write_csv(std::ostream& out, std::span<const RunRecord> records) {
  out << kCsvHeader << '\n';
  char wall[32];
  for (const RunRecord& r : records) {
    std::snprintf(wall, sizeof(wall), "%.6f", r.wall_time_s);
    out << r.method << ',' << r.rank << ',' << r.repeat << ',' << r.fold << ',' << r.phase << ','
        << format_real(r.rmse) << ',' << wall << '\n';
  }
}

std::vector<RunRecord> read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kCsvHeader)
    fail(ErrorCategory::Parse, "line 1: expected CSV header '" + std::string(kCsvHeader) + "'");
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 7) fail(ErrorCategory::Parse, "line " + std::to_string(line_no) + ": expected 7 fields");
    try {
      RunRecord r;
      r.method = std::string(method_name(parse_method(fields[0])));
      r.rank = parse_number<std::size_t>(fields[1], "rank");
      r.repeat = parse_number<std::size_t>(fields[2], "repeat");
      r.fold = parse_number<int>(fields[3], "fold");
      r.phase = std::string(fields[4]);
      if (r.phase != "cv" && r.phase != "train" && r.phase != "test")
        fail(ErrorCategory::InvalidArgument, "unknown phase '" + r.phase + "'");
      r.rmse = parse_number<double>(fields[5], "rmse");
      r.wall_time_s = parse_number<double>(fields[6], "wall time");
      out.push_back(std::move(r));
    } catch (const Error& e) {
      fail(ErrorCategory::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_summary_json(std::ostream& out, const ExperimentReport& report, const ExperimentConfig& config,
                        const std::string& dataset) {
  nlohmann::json j;
  j["schema"] = "vaecp-experiment-summary";
  j["version"] = 1;
  j["dataset"] = dataset;
  std::vector<std::string> methods;
  for (Method m : config.methods) methods.emplace_back(method_name(m));
  j["config"] = {{"methods", methods},
                 {"ranks", config.ranks},
                 {"repeats", config.repeats},
                 {"folds", config.folds},
                 {"train_fraction", config.train_fraction},
                 {"seed", config.seed},
                 {"hidden", config.vaecp.hidden},
                 {"alpha", config.vaecp.alpha},
                 {"batch_size", config.vaecp.batch_size},
                 {"samples", config.vaecp.samples},
                 {"max_epochs", config.vaecp.max_epochs},
                 {"als_max_iters", config.als_max_iters}};
  nlohmann::json groups = nlohmann::json::array();
  for (const GroupSummary& g : report.summarize()) {
    groups.push_back({{"method", g.method},
                      {"rank", g.rank},
                      {"phase", g.phase},
                      {"count", g.count},
                      {"min", g.stats.min},
                      {"q1", g.stats.q1},
                      {"median", g.stats.median},
                      {"q3", g.stats.q3},
                      {"max", g.stats.max}});
  }
  j["groups"] = std::move(groups);
  nlohmann::json stops = nlohmann::json::array();
  for (const SelectedStop& s : report.stops)
    stops.push_back({{"method", s.method}, {"rank", s.rank}, {"repeat", s.repeat}, {"stop", s.epochs}});
  j["selected_stops"] = std::move(stops);
  out << j.dump(2) << '\n';
}

}  // namespace vaecp
