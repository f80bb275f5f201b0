#include "cade/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "cade/error.hpp"

namespace cade {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'A', 'D', 'E', 'C', 'K', 'P', 'T'};

std::vector<nn::Param<float>*> tensors_of(RetinaNet3d<float>& net) {
  std::vector<nn::Param<float>*> all = net.refs().params;
  all.insert(all.end(), net.refs().buffers.begin(), net.refs().buffers.end());
  return all;
}

}  // namespace

void save_checkpoint(const fs::path& path, RetinaNet3d<float>& net, const json& metadata) {
  json network;
  to_json(network, net.config());
  json tensors = json::array();
  const auto all = tensors_of(net);
  for (const auto* p : all) tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  const std::string header = json{{"network", network}, {"tensors", tensors}, {"metadata", metadata}}.dump();

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = header.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), std::streamsize(header.size()));
    for (const auto* p : all) {
      out.write(reinterpret_cast<const char*>(p->value.data()), std::streamsize(p->value.size() * sizeof(float)));
    }
    if (!out) fail(ErrorKind::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::MissingFile, "missing checkpoint " + path.string());
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) fail(ErrorKind::Io, path.string() + ": not a checkpoint");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::Io, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  if (len > (1u << 26)) fail(ErrorKind::Io, path.string() + ": implausible header length");
  std::string header(len, '\0');
  in.read(header.data(), std::streamsize(len));
  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, path.string() + ": bad checkpoint header: " + e.what());
  }
  LoadedCheckpoint ck{std::make_unique<RetinaNet3d<float>>(network_config_from_json(h.at("network")), 0),
                      h.value("metadata", json::object())};
  const auto all = tensors_of(*ck.net);
  const auto& tensors = h.at("tensors");
  if (tensors.size() != all.size()) fail(ErrorKind::Io, path.string() + ": tensor count does not match the network");
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (tensors[i].at("name") != all[i]->name || tensors[i].at("shape").get<std::vector<int>>() != all[i]->value.shape()) {
      fail(ErrorKind::Io, path.string() + ": tensor " + std::to_string(i) + " does not match the network");
    }
    in.read(reinterpret_cast<char*>(all[i]->value.data()), std::streamsize(all[i]->value.size() * sizeof(float)));
  }
  if (!in) fail(ErrorKind::Io, path.string() + ": truncated checkpoint");
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Io, path.string() + ": trailing bytes");
  return ck;
}

}  // namespace cade
