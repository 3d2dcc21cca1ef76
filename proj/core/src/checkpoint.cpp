#include "repdiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace repdiff {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts are unsupported");

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json header;
  header["format_version"] = ckpt.format_version;
  header["config_hash"] = ckpt.config_hash;
  header["meta"] = json::parse(ckpt.meta_json);
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.params) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    offset += t.size();
    tensors.push_back(entry);
  }
  header["tensors"] = tensors;
  header["payload_elems"] = offset;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << header.dump() << "\n";
  for (const auto& [name, t] : ckpt.params)
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_checkpoint: missing header");
  json header = json::parse(line);
  Checkpoint ckpt;
  ckpt.format_version = header.at("format_version").get<int>();
  if (ckpt.format_version != 1)
    throw std::runtime_error("load_checkpoint: unsupported format version " +
                             std::to_string(ckpt.format_version));
  ckpt.config_hash = header.at("config_hash").get<std::string>();
  ckpt.meta_json = header.at("meta").dump();
  const std::size_t payload = header.at("payload_elems").get<std::size_t>();
  std::vector<double> data(payload);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(payload * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != payload * sizeof(double))
    throw std::runtime_error("load_checkpoint: truncated payload in " + path);

  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    if (shape.empty()) n = 1;
    if (offset + n > payload) throw std::runtime_error("load_checkpoint: bad tensor directory");
    std::vector<double> vals(data.begin() + offset, data.begin() + offset + n);
    if (shape.size() == 2)
      ckpt.params[name] = Tensor::matrix(shape[0], shape[1], std::move(vals));
    else if (shape.size() == 1)
      ckpt.params[name] = Tensor::vector(std::move(vals));
    else
      ckpt.params[name] = Tensor::scalar(vals[0]);
  }
  return ckpt;
}

}  // namespace repdiff
