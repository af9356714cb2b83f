#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "netbooster/graph.hpp"
#include "netbooster/tensor.hpp"

namespace netbooster {

// Model container (.nbm), little-endian:
//   line 1: "netbooster-model 1"
//   line 2: decimal byte count of the JSON header
//   header: one JSON object (dtype, name, provenance, input_shape, nodes,
//           params with {shape, offset, bytes}), followed by one '\n'
//   blob:   raw parameter data at the stated offsets
// Optimizer/trainer state uses the same container with magic
// "netbooster-state 1" and free-form "extra" metadata. docs/model-format.md
// has the byte-level layout.

template <class S>
constexpr const char* dtype_name();
template <>
constexpr const char* dtype_name<float>() { return "f32"; }
template <>
constexpr const char* dtype_name<double>() { return "f64"; }

namespace detail {

using nlohmann::json;

inline json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = to_string(l.kind);
  switch (l.kind) {
    case LayerKind::conv:
      j["in"] = l.in_ch;
      j["out"] = l.out_ch;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["padding"] = l.padding;
      j["groups"] = l.groups;
      j["bias"] = l.has_bias;
      break;
    case LayerKind::dense:
      j["in"] = l.in_features;
      j["out"] = l.out_features;
      j["bias"] = l.has_bias;
      break;
    case LayerKind::act:
      j["act"] = to_string(l.act);
      j["alpha"] = l.alpha;
      break;
    case LayerKind::affine:
      j["channels"] = l.channels;
      break;
    case LayerKind::avgpool:
      j["window"] = l.window;
      j["stride"] = l.pool_stride;
      break;
    case LayerKind::flatten:
      break;
  }
  return j;
}

inline LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  LayerSpec l;
  if (kind == "conv") {
    l = make_conv(j.at("in").get<std::int64_t>(), j.at("out").get<std::int64_t>(),
                  j.at("kernel").get<std::int64_t>(), j.at("stride").get<std::int64_t>(),
                  j.at("padding").get<std::int64_t>(), j.at("groups").get<std::int64_t>(),
                  j.at("bias").get<bool>());
  } else if (kind == "dense") {
    l = make_dense(j.at("in").get<std::int64_t>(), j.at("out").get<std::int64_t>(),
                   j.at("bias").get<bool>());
  } else if (kind == "act") {
    const std::string a = j.at("act").get<std::string>();
    ActKind ak;
    if (a == "prelu")
      ak = ActKind::prelu;
    else if (a == "relu6_decay")
      ak = ActKind::relu6_decay;
    else
      throw Error("model header: unknown activation kind '" + a + "'");
    l = make_act(ak, j.at("alpha").get<double>());
  } else if (kind == "affine") {
    l = make_affine(j.at("channels").get<std::int64_t>());
  } else if (kind == "avgpool") {
    l = make_avgpool(j.at("window").get<std::int64_t>(), j.at("stride").get<std::int64_t>());
  } else if (kind == "flatten") {
    l = make_flatten();
  } else {
    throw Error("model header: unknown layer kind '" + kind + "'");
  }
  return l;
}

inline json node_to_json(const NodeSpec& n) {
  if (const auto* l = std::get_if<LayerSpec>(&n)) return layer_to_json(*l);
  const auto& b = std::get<BlockSpec>(n);
  json j;
  j["kind"] = "block";
  j["skip"] = b.skip;
  j["replaced"] = layer_to_json(b.replaced);
  json layers = json::array();
  for (const auto& l : b.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  return j;
}

inline NodeSpec node_from_json(const json& j) {
  if (j.at("kind").get<std::string>() != "block") return layer_from_json(j);
  BlockSpec b;
  b.skip = j.at("skip").get<bool>();
  b.replaced = layer_from_json(j.at("replaced"));
  for (const auto& lj : j.at("layers")) b.layers.push_back(layer_from_json(lj));
  return b;
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "vanilla") return Provenance::vanilla;
  if (s == "expanded") return Provenance::expanded;
  if (s == "contracted") return Provenance::contracted;
  throw Error("model header: unknown provenance '" + s + "'");
}

template <class S>
void write_container(const std::string& path, const std::string& magic, json header,
                     const std::map<std::string, Tensor<S>>& tensors) {
  json params = json::object();
  std::int64_t offset = 0;
  for (const auto& [key, t] : tensors) {
    const std::int64_t bytes = t.numel() * static_cast<std::int64_t>(sizeof(S));
    params[key] = {{"shape", t.shape}, {"offset", offset}, {"bytes", bytes}};
    offset += bytes;
  }
  header["dtype"] = dtype_name<S>();
  header["params"] = std::move(params);
  const std::string head = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << magic << "\n" << head.size() << "\n" << head << "\n";
  for (const auto& [key, t] : tensors)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(S)));
  f.flush();
  if (!f) throw Error("write to '" + path + "' failed");
}

struct RawContainer {
  json header;
  std::vector<char> blob;
  std::size_t blob_file_offset = 0;
};

inline RawContainer read_container(const std::string& path, const std::string& magic) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw Error("'" + path + "': empty file");
  if (line != magic) {
    const std::string tag = magic.substr(0, magic.rfind(' '));
    if (line.rfind(tag, 0) == 0)
      throw Error("'" + path + "': unsupported format version '" + line + "', expected '" + magic +
                  "'");
    throw Error("'" + path + "': bad magic line '" + line + "', expected '" + magic + "'");
  }
  if (!std::getline(f, line)) throw Error("'" + path + "': missing header length line");
  std::size_t head_len = 0;
  try {
    head_len = static_cast<std::size_t>(std::stoull(line));
  } catch (const std::exception&) {
    throw Error("'" + path + "': header length line is not a number: '" + line + "'");
  }
  const std::size_t head_start = static_cast<std::size_t>(f.tellg());
  std::string head(head_len, '\0');
  f.read(head.data(), static_cast<std::streamsize>(head_len));
  if (static_cast<std::size_t>(f.gcount()) != head_len)
    throw Error("'" + path + "': truncated header, wanted " + std::to_string(head_len) +
                " bytes at offset " + std::to_string(head_start));
  char nl = 0;
  f.get(nl);
  if (nl != '\n')
    throw Error("'" + path + "': header not followed by newline at byte offset " +
                std::to_string(head_start + head_len));
  RawContainer out;
  try {
    out.header = json::parse(head);
  } catch (const json::parse_error& e) {
    throw Error("'" + path + "': header parse error at byte offset " +
                std::to_string(head_start + e.byte - 1) + ": " + e.what());
  }
  out.blob_file_offset = head_start + head_len + 1;
  out.blob.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  return out;
}

template <class S>
std::map<std::string, Tensor<S>> unpack_params(const RawContainer& c, const std::string& path) {
  const std::string dtype = c.header.at("dtype").get<std::string>();
  if (dtype != dtype_name<S>())
    throw Error("'" + path + "': dtype is " + dtype + ", loader expects " + dtype_name<S>());
  std::map<std::string, Tensor<S>> out;
  const json& pobj = c.header.at("params");
  for (auto it = pobj.begin(); it != pobj.end(); ++it) {
    const std::string& key = it.key();
    const json& pj = it.value();
    Shape shape = pj.at("shape").get<Shape>();
    const std::int64_t offset = pj.at("offset").get<std::int64_t>();
    const std::int64_t bytes = pj.at("bytes").get<std::int64_t>();
    Tensor<S> t(shape);
    if (bytes != t.numel() * static_cast<std::int64_t>(sizeof(S)))
      throw Error("'" + path + "': parameter '" + key + "' byte count " + std::to_string(bytes) +
                  " does not match shape " + shape_str(shape));
    if (offset < 0 || offset + bytes > static_cast<std::int64_t>(c.blob.size()))
      throw Error("'" + path + "': blob truncated, parameter '" + key + "' wants bytes [" +
                  std::to_string(offset) + "," + std::to_string(offset + bytes) + ") of " +
                  std::to_string(c.blob.size()) + " (file offset " +
                  std::to_string(c.blob_file_offset + static_cast<std::size_t>(offset)) + ")");
    std::memcpy(t.data.data(), c.blob.data() + offset, static_cast<std::size_t>(bytes));
    out.emplace(key, std::move(t));
  }
  return out;
}

}  // namespace detail

inline constexpr const char* kModelMagic = "netbooster-model 1";
inline constexpr const char* kStateMagic = "netbooster-state 1";

template <class S>
void save_model(const ModelGraph<S>& g, const std::string& path) {
  detail::json header;
  header["name"] = g.name;
  header["provenance"] = to_string(g.provenance);
  header["input_shape"] = g.input_shape;
  detail::json nodes = detail::json::array();
  for (const auto& n : g.nodes) nodes.push_back(detail::node_to_json(n));
  header["nodes"] = std::move(nodes);
  detail::write_container(path, kModelMagic, std::move(header), g.params);
}

template <class S>
ModelGraph<S> load_model(const std::string& path) {
  detail::RawContainer c = detail::read_container(path, kModelMagic);
  ModelGraph<S> g;
  try {
    g.name = c.header.at("name").get<std::string>();
    g.provenance = detail::provenance_from_string(c.header.at("provenance").get<std::string>());
    g.input_shape = c.header.at("input_shape").get<Shape>();
    for (const auto& nj : c.header.at("nodes")) g.nodes.push_back(detail::node_from_json(nj));
  } catch (const detail::json::exception& e) {
    throw Error("'" + path + "': malformed header: " + e.what());
  }
  g.params = detail::unpack_params<S>(c, path);
  infer_shapes(g);  // validates every node
  check_params_complete(g);
  return g;
}

/// Dtype string ("f32"/"f64") without loading the blob, for loader dispatch.
inline std::string peek_model_dtype(const std::string& path) {
  detail::RawContainer c = detail::read_container(path, kModelMagic);
  return c.header.at("dtype").get<std::string>();
}

/// Generic named-tensor bundle with free-form metadata; the trainer keeps
/// optimizer velocity and RNG state in one of these next to each checkpoint.
template <class S>
void save_state_bundle(const std::string& path, const std::map<std::string, Tensor<S>>& tensors,
                       const nlohmann::json& extra) {
  detail::json header;
  header["extra"] = extra;
  detail::write_container(path, kStateMagic, std::move(header), tensors);
}

template <class S>
std::pair<std::map<std::string, Tensor<S>>, nlohmann::json> load_state_bundle(
    const std::string& path) {
  detail::RawContainer c = detail::read_container(path, kStateMagic);
  nlohmann::json extra;
  if (c.header.contains("extra")) extra = c.header.at("extra");
  return {detail::unpack_params<S>(c, path), std::move(extra)};
}

}  // namespace netbooster
