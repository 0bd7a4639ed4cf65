// Versioned binary container of named arrays. Layout (all integers
// little-endian): 8-byte magic "TOKCKPT\0", u32 version, u64 array count;
// then per array: u32 name length, UTF-8 name bytes, u32 rank, u64 dims[rank],
// IEEE-754 binary64 payload.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/djscc.hpp"
#include "tokcom/tensor.hpp"

namespace tokcom {

inline constexpr char kCheckpointMagic[8] = {'T', 'O', 'K', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_pod(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void save_arrays(const std::string& path,
                        const std::vector<std::pair<std::string, const Tensor*>>& arrays) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  detail::write_pod<std::uint64_t>(os, arrays.size());
  for (const auto& [name, t] : arrays) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint32_t>(os, 2);
    detail::write_pod<std::uint64_t>(os, t->rows());
    detail::write_pod<std::uint64_t>(os, t->cols());
    for (std::size_t k = 0; k < t->size(); ++k) detail::write_pod<double>(os, (*t)[k]);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline std::map<std::string, Tensor> load_arrays(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[sizeof(kCheckpointMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  std::uint64_t count = detail::read_pod<std::uint64_t>(is);
  std::map<std::string, Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = detail::read_pod<std::uint32_t>(is);
    std::vector<std::uint64_t> dims(rank);
    std::uint64_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      dims[r] = detail::read_pod<std::uint64_t>(is);
      total *= dims[r];
    }
    std::size_t rows = rank >= 1 ? dims[0] : 1;
    std::size_t cols = rank >= 2 ? static_cast<std::size_t>(total / std::max<std::uint64_t>(
                                                                        1, dims[0]))
                                 : 1;
    Tensor t(rows, cols);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = detail::read_pod<double>(is);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

// Model checkpoints carry the configuration as reserved arrays so a model can
// be rebuilt from the file alone.
inline void save_model(const std::string& path, DjsccModel& model) {
  std::vector<std::pair<std::string, const Tensor*>> arrays;
  const ModelConfig& c = model.cfg;
  Tensor cfg_t(1, 12);
  double vals[12] = {
      static_cast<double>(c.channels), static_cast<double>(c.height),
      static_cast<double>(c.width),    static_cast<double>(c.patch),
      static_cast<double>(c.embed_dim), static_cast<double>(c.heads),
      static_cast<double>(c.dim_k),    static_cast<double>(c.dim_v),
      static_cast<double>(c.blocks),   static_cast<double>(c.split),
      static_cast<double>(c.classes),  static_cast<double>(c.ffn_hidden)};
  for (int i = 0; i < 12; ++i) cfg_t[i] = vals[i];
  std::vector<double> ratios = model.bank.ratios();
  Tensor grid_t(1, ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i) grid_t[i] = ratios[i];
  arrays.emplace_back("__config__", &cfg_t);
  arrays.emplace_back("__r_grid__", &grid_t);
  model.for_each_param(
      [&](ad::Parameter& p) { arrays.emplace_back(p.name, &p.value); });
  save_arrays(path, arrays);
}

inline DjsccModel load_model(const std::string& path) {
  std::map<std::string, Tensor> arrays = load_arrays(path);
  auto cfg_it = arrays.find("__config__");
  auto grid_it = arrays.find("__r_grid__");
  if (cfg_it == arrays.end() || grid_it == arrays.end())
    throw std::runtime_error("checkpoint: " + path + " lacks model configuration arrays");
  const Tensor& ct = cfg_it->second;
  ModelConfig cfg;
  cfg.channels = static_cast<std::size_t>(ct[0]);
  cfg.height = static_cast<std::size_t>(ct[1]);
  cfg.width = static_cast<std::size_t>(ct[2]);
  cfg.patch = static_cast<std::size_t>(ct[3]);
  cfg.embed_dim = static_cast<std::size_t>(ct[4]);
  cfg.heads = static_cast<std::size_t>(ct[5]);
  cfg.dim_k = static_cast<std::size_t>(ct[6]);
  cfg.dim_v = static_cast<std::size_t>(ct[7]);
  cfg.blocks = static_cast<std::size_t>(ct[8]);
  cfg.split = static_cast<std::size_t>(ct[9]);
  cfg.classes = static_cast<std::size_t>(ct[10]);
  cfg.ffn_hidden = static_cast<std::size_t>(ct[11]);
  std::vector<double> r_grid(grid_it->second.flat());

  DjsccModel model;
  model.init_params(cfg, r_grid, RngStream(0, "init"));
  model.for_each_param([&](ad::Parameter& p) {
    auto it = arrays.find(p.name);
    if (it == arrays.end())
      throw std::runtime_error("checkpoint: missing array " + p.name + " in " + path);
    if (!it->second.same_shape(p.value))
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    p.value = it->second;
    p.zero_grad();
  });
  return model;
}

}  // namespace tokcom
