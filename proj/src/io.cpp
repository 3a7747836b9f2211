#include "vaecp/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vaecp/error.hpp"

namespace vaecp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'V', 'A', 'E', 'C', 'P', 'C', 'K', 'P'};
constexpr std::uint8_t kCheckpointVersion = 1;

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  fail(ErrorCategory::Parse, "line " + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_size(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) fail(ErrorCategory::Io, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) fail(ErrorCategory::Io, "cannot open '" + path.string() + "' for writing");
  return out;
}

template <typename T>
void put(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* field) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) fail(ErrorCategory::Parse, std::string("checkpoint truncated in ") + field);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

ObservedEntrySet read_coo(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<ObservedEntrySet> entries;
  std::vector<std::size_t> index;

  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty() || fields.front().front() == '#') continue;

    if (!entries) {
      std::size_t order = 0;
      if (!parse_size(fields[0], order) || order < 2)
        parse_fail(line_no, "malformed header: mode count must be an integer >= 2");
      if (fields.size() != order + 1)
        parse_fail(line_no, "malformed header: expected " + std::to_string(order) + " extents");
      Dims dims(order);
      for (std::size_t d = 0; d < order; ++d)
        if (!parse_size(fields[d + 1], dims[d]) || dims[d] == 0)
          parse_fail(line_no, "malformed header: extent " + std::to_string(d + 1) + " is not a positive integer");
      entries.emplace(std::move(dims));
      index.resize(order);
      continue;
    }

    const std::size_t order = entries->order();
    if (fields.size() != order + 1)
      parse_fail(line_no, "expected " + std::to_string(order) + " indices and a value, got " +
                              std::to_string(fields.size()) + " fields");
    for (std::size_t d = 0; d < order; ++d) {
      std::size_t one_based = 0;
      if (!parse_size(fields[d], one_based)) parse_fail(line_no, "index " + std::to_string(d + 1) + " is not an integer");
      if (one_based < 1 || one_based > entries->dims()[d])
        parse_fail(line_no, "index " + std::to_string(d + 1) + " out of range [1, " +
                                std::to_string(entries->dims()[d]) + "]");
      index[d] = one_based - 1;
    }
    double value = 0.0;
    if (!parse_real(fields[order], value) || !std::isfinite(value))
      parse_fail(line_no, "value '" + std::string(fields[order]) + "' is not a finite number");
    if (entries->contains(index)) parse_fail(line_no, "duplicate index");
    entries->add(index, value);
  }
  if (!entries) fail(ErrorCategory::Parse, "missing header line");
  return std::move(*entries);
}

void write_coo(std::ostream& out, const ObservedEntrySet& entries) {
  out << entries.order();
  for (std::size_t n : entries.dims()) out << ' ' << n;
  out << '\n';
  char buf[64];
  for (std::size_t e = 0; e < entries.size(); ++e) {
    for (std::size_t i : entries.index(e)) out << i + 1 << ' ';
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), entries.value(e));
    out.write(buf, ptr - buf);
    out << '\n';
  }
}

ObservedEntrySet load_coo(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_coo(in);
  } catch (const Error& e) {
    throw Error(e.category(), path.string() + ": " + e.what());
  }
}

void save_coo(const std::filesystem::path& path, const ObservedEntrySet& entries) {
  auto out = open_out(path);
  write_coo(out, entries);
  if (!out) fail(ErrorCategory::Io, "failed writing '" + path.string() + "'");
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const VaecpModel& model = checkpoint.model;
  model.validate();
  out.write(kMagic.data(), kMagic.size());
  put<std::uint8_t>(out, kCheckpointVersion);
  const Dims dims = model.dims();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (std::size_t n : dims) put<std::uint64_t>(out, n);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.rank()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden()));
  put<double>(out, checkpoint.stats.mean);
  put<double>(out, checkpoint.stats.std);
  const std::vector<double> flat = flatten(model);
  put<std::uint64_t>(out, flat.size());
  for (double v : flat) put<double>(out, v);
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    fail(ErrorCategory::Parse, "not a VAECP checkpoint (bad magic)");
  const auto version = get<std::uint8_t>(in, "version");
  if (version != kCheckpointVersion)
    fail(ErrorCategory::Parse, "unsupported checkpoint version " + std::to_string(version));
  const auto order = get<std::uint32_t>(in, "mode count");
  if (order < 2 || order > 64) fail(ErrorCategory::Parse, "checkpoint mode count out of range");
  Dims dims(order);
  for (auto& n : dims) n = static_cast<std::size_t>(get<std::uint64_t>(in, "dims"));
  const auto rank = get<std::uint32_t>(in, "rank");
  const auto hidden = get<std::uint32_t>(in, "hidden width");
  Checkpoint ck;
  ck.stats.mean = get<double>(in, "normalization mean");
  ck.stats.std = get<double>(in, "normalization std");
  try {
    ck.model = VaecpModel::zeros(dims, rank, hidden);
  } catch (const Error& e) {
    fail(ErrorCategory::Parse, std::string("invalid checkpoint shape: ") + e.what());
  }
  const auto count = get<std::uint64_t>(in, "parameter count");
  if (count != parameter_count(ck.model)) fail(ErrorCategory::Parse, "checkpoint parameter count mismatch");
  std::vector<double> flat(count);
  for (double& v : flat) v = get<double>(in, "parameters");
  unflatten(flat, ck.model);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  write_checkpoint(out, checkpoint);
  if (!out) fail(ErrorCategory::Io, "failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_checkpoint(in);
}

bool is_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<char, 8> magic{};
  return in.read(magic.data(), magic.size()) && magic == kMagic;
}

void save_cp_model(const std::filesystem::path& path, const CpModelFile& model) {
  nlohmann::json j;
  j["format"] = "vaecp-cp";
  j["version"] = 1;
  j["rank"] = model.factors.rank();
  j["dims"] = model.factors.dims();
  j["normalization"] = {{"mean", model.stats.mean}, {"std", model.stats.std}};
  nlohmann::json factors = nlohmann::json::array();
  for (std::size_t d = 0; d < model.factors.order(); ++d) {
    nlohmann::json rows = nlohmann::json::array();
    const auto& f = model.factors[d];
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      std::vector<double> row(f.cols());
      for (Eigen::Index r = 0; r < f.cols(); ++r) row[r] = f(i, r);
      rows.push_back(row);
    }
    factors.push_back(std::move(rows));
  }
  j["factors"] = std::move(factors);
  auto out = open_out(path);
  out << j.dump(1) << '\n';
  if (!out) fail(ErrorCategory::Io, "failed writing '" + path.string() + "'");
}

CpModelFile load_cp_model(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != "vaecp-cp") fail(ErrorCategory::Parse, "not a CP model file");
    const auto rank = j.at("rank").get<std::size_t>();
    const auto dims = j.at("dims").get<Dims>();
    std::vector<Eigen::MatrixXd> factors;
    const auto& jf = j.at("factors");
    if (jf.size() != dims.size()) fail(ErrorCategory::Parse, "factor count does not match dims");
    for (std::size_t d = 0; d < dims.size(); ++d) {
      Eigen::MatrixXd f(static_cast<Eigen::Index>(dims[d]), static_cast<Eigen::Index>(rank));
      const auto& rows = jf[d];
      if (rows.size() != dims[d]) fail(ErrorCategory::Parse, "factor row count does not match dims");
      for (std::size_t i = 0; i < dims[d]; ++i) {
        const auto row = rows[i].get<std::vector<double>>();
        if (row.size() != rank) fail(ErrorCategory::Parse, "factor row length does not match rank");
        for (std::size_t r = 0; r < rank; ++r) f(i, r) = row[r];
      }
      factors.push_back(std::move(f));
    }
    CpModelFile out{FactorMatrices(std::move(factors)), {}};
    out.stats.mean = j.at("normalization").at("mean").get<double>();
    out.stats.std = j.at("normalization").at("std").get<double>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::Parse, path.string() + ": " + e.what());
  }
}

}  // namespace vaecp
