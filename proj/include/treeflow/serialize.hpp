#pragma once
// Binary container for numeric payloads: a JSON shape manifest followed by a
// little-endian float64 payload whose SHA-256 lives in the manifest.  Used
// for network parameters and trajectory bundles.
//
// Layout: [8-byte magic "TFBLOB01"][u64 LE manifest length][manifest JSON]
//         [payload: float64 LE].

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeflow/io.hpp"
#include "treeflow/nn.hpp"
#include "treeflow/sha256.hpp"

namespace treeflow {

static_assert(std::endian::native == std::endian::little,
              "payloads are little-endian; this build targets LE hosts");

namespace detail {

inline constexpr char kBlobMagic[8] = {'T', 'F', 'B', 'L', 'O', 'B', '0', '1'};

struct NamedTensor {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  const double* data = nullptr;
};

inline void write_blob(const std::string& path, nlohmann::json manifest,
                       const std::vector<NamedTensor>& tensors) {
  std::string payload;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& t : tensors) {
    shapes.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
    const std::size_t bytes = static_cast<std::size_t>(t.rows * t.cols) * sizeof(double);
    const std::size_t off = payload.size();
    payload.resize(off + bytes);
    std::memcpy(payload.data() + off, t.data, bytes);
  }
  manifest["tensors"] = std::move(shapes);
  manifest["dtype"] = "float64le";
  manifest["checksum"] = Sha256::hex(payload);
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kBlobMagic, 8);
  const std::uint64_t mlen = mtext.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

struct Blob {
  nlohmann::json manifest;
  std::string payload;
};

inline Blob read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kBlobMagic, 8) != 0) {
    throw std::runtime_error("not a parameter/trajectory container: " + path);
  }
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  Blob b;
  b.manifest = nlohmann::json::parse(mtext);
  b.payload.assign((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const std::string expect = b.manifest.at("checksum").get<std::string>();
  if (Sha256::hex(b.payload) != expect) {
    throw std::runtime_error("payload checksum mismatch (corrupt file): " + path);
  }
  return b;
}

}  // namespace detail

inline nlohmann::json mlp_spec_to_json(const MlpSpec& spec) {
  nlohmann::json j;
  j["input_dim"] = spec.input_dim;
  j["hidden"] = spec.hidden;
  j["activation"] = spec.activation == Activation::ReLU ? "relu" : "silu";
  j["norm"] = spec.norm == NormKind::None
                  ? "none"
                  : (spec.norm == NormKind::LayerNorm ? "layernorm" : "batchnorm");
  j["output_dim"] = spec.output_dim;
  nlohmann::json embs = nlohmann::json::array();
  for (const auto& e : spec.embeddings) {
    embs.push_back({{"cardinality", e.cardinality}, {"dim", e.dim}});
  }
  j["embeddings"] = std::move(embs);
  return j;
}

inline MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.hidden = j.at("hidden").get<std::vector<int>>();
  const std::string act = j.at("activation").get<std::string>();
  spec.activation = act == "relu" ? Activation::ReLU : Activation::SiLU;
  const std::string norm = j.at("norm").get<std::string>();
  spec.norm = norm == "none" ? NormKind::None
                             : (norm == "layernorm" ? NormKind::LayerNorm
                                                    : NormKind::BatchNorm);
  spec.output_dim = j.at("output_dim").get<int>();
  for (const auto& je : j.at("embeddings")) {
    spec.embeddings.push_back(
        {je.at("cardinality").get<int>(), je.at("dim").get<int>()});
  }
  return spec;
}

// Saves trainable tensors plus BatchNorm running statistics.
inline void save_params(const std::string& path, const MlpParams& params) {
  std::vector<detail::NamedTensor> tensors;
  auto& p = const_cast<MlpParams&>(params);
  detail::for_each_tensor(p, [&](const std::string& name, detail::TensorKind,
                                 double* data, Eigen::Index size) {
    tensors.push_back({name, size, 1, data});
  });
  for (std::size_t l = 0; l < params.running_mean.size(); ++l) {
    tensors.push_back({"running_mean" + std::to_string(l),
                       params.running_mean[l].size(), 1,
                       params.running_mean[l].data()});
    tensors.push_back({"running_var" + std::to_string(l),
                       params.running_var[l].size(), 1,
                       params.running_var[l].data()});
  }
  nlohmann::json manifest;
  manifest["kind"] = "mlp_params";
  manifest["spec"] = mlp_spec_to_json(params.spec);
  detail::write_blob(path, std::move(manifest), tensors);
}

inline MlpParams load_params(const std::string& path) {
  detail::Blob blob = detail::read_blob(path);
  if (blob.manifest.at("kind").get<std::string>() != "mlp_params") {
    throw std::runtime_error("container does not hold parameters: " + path);
  }
  MlpSpec spec = mlp_spec_from_json(blob.manifest.at("spec"));
  MlpParams params = mlp_init(spec, 0);  // correct shapes, values overwritten

  std::map<std::string, std::pair<double*, Eigen::Index>> slots;
  detail::for_each_tensor(params, [&](const std::string& name, detail::TensorKind,
                                      double* data, Eigen::Index size) {
    slots[name] = {data, size};
  });
  for (std::size_t l = 0; l < params.running_mean.size(); ++l) {
    slots["running_mean" + std::to_string(l)] = {params.running_mean[l].data(),
                                                 params.running_mean[l].size()};
    slots["running_var" + std::to_string(l)] = {params.running_var[l].data(),
                                                params.running_var[l].size()};
  }

  std::size_t offset = 0;
  for (const auto& jt : blob.manifest.at("tensors")) {
    const std::string name = jt.at("name").get<std::string>();
    const Eigen::Index size =
        jt.at("rows").get<Eigen::Index>() * jt.at("cols").get<Eigen::Index>();
    auto it = slots.find(name);
    if (it == slots.end() || it->second.second != size) {
      throw std::runtime_error("tensor mismatch while loading " + name);
    }
    std::memcpy(it->second.first, blob.payload.data() + offset,
                static_cast<std::size_t>(size) * sizeof(double));
    offset += static_cast<std::size_t>(size) * sizeof(double);
  }
  return params;
}

}  // namespace treeflow
