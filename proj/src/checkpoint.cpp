#include "brepmae/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

#include "brepmae/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace brepmae {

using nlohmann::json;

int64_t Checkpoint::count_params(const std::string& prefix) const {
  int64_t n = 0;
  for (const auto& e : params)
    if (prefix.empty() || e.name.rfind(prefix, 0) == 0)
      n += static_cast<int64_t>(e.data.size());
  return n;
}

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& e : params)
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

void save_checkpoint(const Registry& reg, const std::string& path,
                     const std::string& config_hash) {
  json header;
  header["version"] = "ckpt-v1";
  header["config_hash"] = config_hash;
  json params = json::array();
  for (const auto& e : reg.params())
    params.push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
  json buffers = json::array();
  for (const auto& e : reg.buffers())
    buffers.push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
  header["params"] = params;
  header["buffers"] = buffers;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << header.dump() << "\n";
  auto write_payload = [&out](const Tensor& t) {
    auto d = t.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(double)));
  };
  for (const auto& e : reg.params()) write_payload(e.tensor);
  for (const auto& e : reg.buffers()) write_payload(e.tensor);
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  std::string header_line;
  std::getline(in, header_line);
  json header = json::parse(header_line, nullptr, false);
  if (header.is_discarded()) throw IoError("corrupt checkpoint header: " + path);
  Checkpoint ckpt;
  ckpt.version = header.value("version", "");
  if (ckpt.version != "ckpt-v1")
    throw IoError("unsupported checkpoint version: " + ckpt.version);
  ckpt.config_hash = header.value("config_hash", "");

  auto read_entries = [&in, &path](const json& list) {
    std::vector<CheckpointEntry> entries;
    for (const auto& item : list) {
      CheckpointEntry e;
      e.name = item.at("name").get<std::string>();
      e.shape = item.at("shape").get<Shape>();
      e.data.resize(shape_numel(e.shape));
      in.read(reinterpret_cast<char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(double)));
      if (!in) throw IoError("truncated checkpoint payload: " + path);
      entries.push_back(std::move(e));
    }
    return entries;
  };
  ckpt.params = read_entries(header.at("params"));
  ckpt.buffers = read_entries(header.at("buffers"));
  return ckpt;
}

void load_namespace(const Checkpoint& ckpt, Registry& reg, const std::string& prefix) {
  if (!ckpt.has_prefix(prefix))
    throw MissingNamespace("checkpoint has no parameters under \"" + prefix + "\"");
  auto copy_into = [&](const std::vector<CheckpointEntry>& src,
                       std::vector<Registry::Entry>& dst) {
    for (const auto& e : src) {
      if (e.name.rfind(prefix, 0) != 0) continue;
      for (auto& r : dst) {
        if (r.name != e.name) continue;
        if (r.tensor.shape() != e.shape)
          throw ShapeError("checkpoint shape mismatch for " + e.name + ": " +
                           shape_str(e.shape) + " vs " + shape_str(r.tensor.shape()));
        auto raw = r.tensor.raw();
        std::copy(e.data.begin(), e.data.end(), raw.begin());
      }
    }
  };
  copy_into(ckpt.params, reg.params());
  copy_into(ckpt.buffers, reg.buffers());
}

}  // namespace brepmae
