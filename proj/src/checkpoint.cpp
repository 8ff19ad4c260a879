#include "stnce/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace stnce {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

std::string get_bytes(std::istream& is, std::uint64_t n) {
  if (n > (1ULL << 32)) throw std::runtime_error("checkpoint: implausible length");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      const std::vector<NamedTensor>& tensors) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
    const std::string h = header.dump();
    put_u64(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    put_u64(os, tensors.size());
    for (const auto& t : tensors) {
      if (t.data.size() != static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols))
        throw ContractError("checkpoint: tensor " + t.name + " has inconsistent shape");
      put_u64(os, t.name.size());
      os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put_u64(os, static_cast<std::uint64_t>(t.rows));
      put_u64(os, static_cast<std::uint64_t>(t.cols));
      os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed");
  }
  std::filesystem::rename(tmp, path);
}

void read_checkpoint(const std::filesystem::path& path, nlohmann::json& header, std::vector<NamedTensor>& tensors) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  header = nlohmann::json::parse(get_bytes(is, get_u64(is)));
  const std::uint64_t count = get_u64(is);
  tensors.clear();
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = get_bytes(is, get_u64(is));
    t.rows = static_cast<int>(get_u64(is));
    t.cols = static_cast<int>(get_u64(is));
    const std::string raw = get_bytes(is, static_cast<std::uint64_t>(t.rows) * t.cols * sizeof(double));
    t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
    std::memcpy(t.data.data(), raw.data(), raw.size());
    tensors.push_back(std::move(t));
  }
}

nlohmann::json architecture_to_json(const Architecture& a) {
  return {{"input_dim", a.input_dim},       {"time_embed_dim", a.time_embed_dim}, {"hidden_dim", a.hidden_dim},
          {"expansion_dim", a.expansion_dim}, {"n_blocks", a.n_blocks},           {"time_max_freq", a.time_max_freq},
          {"logz_head", a.logz_head},       {"logz_width", a.logz_width}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  a.input_dim = j.value("input_dim", a.input_dim);
  a.time_embed_dim = j.value("time_embed_dim", a.time_embed_dim);
  a.hidden_dim = j.value("hidden_dim", a.hidden_dim);
  a.expansion_dim = j.value("expansion_dim", a.expansion_dim);
  a.n_blocks = j.value("n_blocks", a.n_blocks);
  a.time_max_freq = j.value("time_max_freq", a.time_max_freq);
  a.logz_head = j.value("logz_head", a.logz_head);
  a.logz_width = j.value("logz_width", a.logz_width);
  a.validate();
  return a;
}

std::vector<NamedTensor> network_tensors(const EnergyNetwork& net, std::span<const double> params) {
  if (params.size() != net.num_parameters()) throw ContractError("network_tensors: parameter size mismatch");
  std::vector<NamedTensor> out;
  for (const auto& s : net.layout()) {
    NamedTensor t{s.name, s.rows, s.cols, {}};
    const auto begin = params.begin() + static_cast<std::ptrdiff_t>(s.offset);
    t.data.assign(begin, begin + static_cast<std::ptrdiff_t>(s.rows) * s.cols);
    out.push_back(std::move(t));
  }
  return out;
}

void save_network(const std::filesystem::path& path, const EnergyNetwork& net, long step) {
  nlohmann::json header = {{"model", "energy_network"}, {"architecture", architecture_to_json(net.architecture())},
                           {"step", step}};
  write_checkpoint(path, header, network_tensors(net, net.parameters()));
}

EnergyNetwork load_network(const std::filesystem::path& path, long* step) {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;
  read_checkpoint(path, header, tensors);
  if (header.value("model", "") != "energy_network") throw ConfigError("checkpoint does not hold an energy network");
  EnergyNetwork net(architecture_from_json(header.at("architecture")));
  if (tensors.size() != net.layout().size()) throw ConfigError("checkpoint: tensor count mismatch");
  for (const auto& t : tensors) {
    const TensorSlot& s = net.slot(t.name);
    if (s.rows != t.rows || s.cols != t.cols) throw ConfigError("checkpoint: shape mismatch for " + t.name);
    std::copy(t.data.begin(), t.data.end(), net.parameters().begin() + static_cast<std::ptrdiff_t>(s.offset));
  }
  if (step) *step = header.value("step", 0L);
  return net;
}

}  // namespace stnce
