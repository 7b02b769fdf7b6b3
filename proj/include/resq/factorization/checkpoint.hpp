#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "resq/autodiff/tensor.hpp"
#include "resq/factorization/model.hpp"

namespace resq {

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;
};

/// Flat archive of named float64 arrays.
///
/// `<stem>.bin` holds the 8-byte magic "RESQARR1", a little-endian uint64
/// element count, then every array's elements as little-endian IEEE-754
/// doubles, concatenated in manifest order. `<stem>.json` is the manifest:
///   {"format": "resq-array-archive", "version": 1, "dtype": "float64",
///    "byte_order": "little", "arrays": [{"name", "shape", "offset"}...],
///    "extra": {...}}
/// where `offset` counts elements from the start of the payload.
void save_archive(const std::filesystem::path& stem, const std::vector<NamedArray>& arrays,
                  const nlohmann::json& extra = nlohmann::json::object());
std::vector<NamedArray> load_archive(const std::filesystem::path& stem, nlohmann::json* extra = nullptr);

std::vector<NamedArray> model_arrays(FactorizedQModel& model);
/// Restores online and target parameters by name; shapes must match.
void restore_model(FactorizedQModel& model, const std::vector<NamedArray>& arrays);

void save_model(FactorizedQModel& model, const std::filesystem::path& stem);
void load_model(FactorizedQModel& model, const std::filesystem::path& stem);

}  // namespace resq
