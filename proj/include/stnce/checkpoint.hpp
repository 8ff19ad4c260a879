#pragma once

#include "stnce/network.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace stnce {

struct NamedTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major
};

/// File layout: u64 header length, JSON header bytes, u64 tensor count, then
/// per tensor: u64 name length, name bytes, u64 rows, u64 cols, rows*cols
/// little-endian f64 values.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      const std::vector<NamedTensor>& tensors);
void read_checkpoint(const std::filesystem::path& path, nlohmann::json& header, std::vector<NamedTensor>& tensors);

nlohmann::json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

/// Splits a network's flat parameter buffer into its named tensors.
std::vector<NamedTensor> network_tensors(const EnergyNetwork& net, std::span<const double> params);

void save_network(const std::filesystem::path& path, const EnergyNetwork& net, long step);
EnergyNetwork load_network(const std::filesystem::path& path, long* step = nullptr);

}  // namespace stnce
