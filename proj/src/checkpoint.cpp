#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "config.hpp"

namespace smr {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian f64; add byte swapping for "
              "big-endian hosts");

std::string manifestPath(const std::string& base) { return base + ".json"; }
std::string blobPath(const std::string& base) { return base + ".bin"; }

}  // namespace

void saveCheckpoint(const std::string& base, const Model& model) {
  ordered_json params = ordered_json::array();
  std::ofstream blob(blobPath(base), std::ios::binary);
  if (!blob)
    throw std::runtime_error("cannot write checkpoint blob: " + blobPath(base));
  std::size_t offset = 0;
  for (const auto& p : model.params()) {
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"offset", offset}});
    const auto& v = p.tensor.data();
    blob.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
    offset += v.size() * sizeof(double);
  }
  if (!blob)
    throw std::runtime_error("failed writing checkpoint blob: " + blobPath(base));
  ordered_json manifest{{"format", "selfmotr-checkpoint-v1"},
                        {"model", toJson(model.config())},
                        {"blob_bytes", offset},
                        {"params", params}};
  std::ofstream mf(manifestPath(base));
  if (!mf)
    throw std::runtime_error("cannot write checkpoint manifest: " +
                             manifestPath(base));
  mf << manifest.dump(2) << "\n";
}

namespace {

json readManifest(const std::string& base) {
  std::ifstream mf(manifestPath(base));
  if (!mf)
    throw std::runtime_error("cannot open checkpoint manifest: " +
                             manifestPath(base));
  json manifest;
  mf >> manifest;
  if (manifest.value("format", "") != "selfmotr-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format in " +
                             manifestPath(base));
  return manifest;
}

}  // namespace

void loadCheckpointInto(const std::string& base, Model& model) {
  json manifest = readManifest(base);
  std::ifstream blob(blobPath(base), std::ios::binary);
  if (!blob)
    throw std::runtime_error("cannot open checkpoint blob: " + blobPath(base));

  struct Entry {
    Shape shape;
    std::size_t offset;
  };
  std::unordered_map<std::string, Entry> entries;
  for (const auto& p : manifest.at("params"))
    entries[p.at("name").get<std::string>()] =
        Entry{p.at("shape").get<Shape>(), p.at("offset").get<std::size_t>()};

  for (auto& p : model.params()) {
    auto it = entries.find(p.name);
    if (it == entries.end())
      throw std::runtime_error("checkpoint " + base + " lacks parameter " +
                               p.name);
    if (it->second.shape != p.tensor.shape())
      throw std::runtime_error("checkpoint " + base + ": shape mismatch for " +
                               p.name + " (" + shapeStr(it->second.shape) +
                               " vs " + shapeStr(p.tensor.shape()) + ")");
    auto& v = p.tensor.data();
    blob.seekg(static_cast<std::streamoff>(it->second.offset));
    blob.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!blob)
      throw std::runtime_error("truncated checkpoint blob: " + blobPath(base));
  }
}

Model loadCheckpoint(const std::string& base) {
  json manifest = readManifest(base);
  Model model(modelConfigFromJson(manifest.at("model")), /*seed=*/0);
  loadCheckpointInto(base, model);
  return model;
}

}  // namespace smr
