#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "vaecp/cp.hpp"
#include "vaecp/model.hpp"
#include "vaecp/tensor.hpp"

namespace vaecp {

/// COO text format:
///   D N_1 ... N_D
///   i_1 ... i_D value     (1-based indices, one line per entry)
/// Blank lines and lines whose first non-blank character is '#' are ignored.
/// Each malformed line raises a Parse error naming its line number.
ObservedEntrySet read_coo(std::istream& in);
void write_coo(std::ostream& out, const ObservedEntrySet& entries);

ObservedEntrySet load_coo(const std::filesystem::path& path);
void save_coo(const std::filesystem::path& path, const ObservedEntrySet& entries);

/// Trained VAECP model together with the normalization applied to its data.
struct Checkpoint {
  VaecpModel model;
  NormalizationStats stats;
};

/// Binary checkpoint, all integers and reals little-endian:
///   bytes 0-7   magic "VAECPCKP"
///   byte  8     format version (1)
///   u32         D
///   u64 x D     N_1 .. N_D
///   u32         R
///   u32         K
///   f64         normalization mean
///   f64         normalization std
///   u64         parameter count P
///   f64 x P     parameters in the flatten() order
void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Fitted CP model with the normalization applied to its data.
struct CpModelFile {
  FactorMatrices factors;
  NormalizationStats stats;
};

/// JSON: {"format": "vaecp-cp", "version": 1, "rank": R, "dims": [...],
///        "normalization": {"mean": m, "std": s}, "factors": [[[row]...]...]}
void save_cp_model(const std::filesystem::path& path, const CpModelFile& model);
CpModelFile load_cp_model(const std::filesystem::path& path);

/// True when the file starts with the checkpoint magic.
bool is_checkpoint_file(const std::filesystem::path& path);

}  // namespace vaecp
