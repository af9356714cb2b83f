#include "netbooster/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace netbooster {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open config '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::size_t line_of_byte(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

// Best-effort: first occurrence of the quoted key in the raw text.
std::size_t line_of_key(const std::string& text, const std::string& key) {
  const std::size_t pos = text.find("\"" + key + "\"");
  return pos == std::string::npos ? 0 : line_of_byte(text, pos);
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where, const std::string& text) {
  for (const auto& [key, value] : obj.items()) {
    if (allowed.count(key)) continue;
    const std::size_t line = line_of_key(text, key);
    std::string msg = "config: unknown key '" + key + "' in " + where;
    if (line > 0) msg += " (line " + std::to_string(line) + ")";
    throw Error(msg);
  }
}

template <class T>
void read_into(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(std::string("config: key '") + key + "' has the wrong type");
  }
}

ActKind act_from_string(const std::string& s) {
  if (s == "prelu") return ActKind::prelu;
  if (s == "relu6_decay") return ActKind::relu6_decay;
  throw Error("config: activation must be 'prelu' or 'relu6_decay', got '" + s + "'");
}

BlockType block_from_string(const std::string& s) {
  if (s == "inverted_residual") return BlockType::inverted_residual;
  if (s == "basic") return BlockType::basic;
  if (s == "bottleneck") return BlockType::bottleneck;
  throw Error("config: block must be inverted_residual, basic or bottleneck, got '" + s + "'");
}

TargetLocation location_from_string(const std::string& s) {
  if (s == "uniform") return TargetLocation::uniform;
  if (s == "first") return TargetLocation::first;
  if (s == "middle") return TargetLocation::middle;
  if (s == "last") return TargetLocation::last;
  throw Error("config: location must be uniform, first, middle or last, got '" + s + "'");
}

}  // namespace

RunConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("config '" + path + "': parse error at line " +
                std::to_string(line_of_byte(text, e.byte ? e.byte - 1 : 0)) + ": " + e.what());
  }
  if (!root.is_object()) throw Error("config '" + path + "': top level must be an object");

  RunConfig cfg;
  reject_unknown(root,
                 {"dtype", "model", "model_file", "classes", "mlp_hidden", "data", "train",
                  "expansion", "linearize", "baseline", "eval_batch", "sweep"},
                 "top level", text);
  read_into(root, "dtype", cfg.dtype);
  if (cfg.dtype != "f32" && cfg.dtype != "f64")
    throw Error("config: dtype must be 'f32' or 'f64', got '" + cfg.dtype + "'");
  read_into(root, "model", cfg.model);
  if (cfg.model != "desk-tnn" && cfg.model != "mlp")
    throw Error("config: model must be 'desk-tnn' or 'mlp', got '" + cfg.model + "'");
  read_into(root, "model_file", cfg.model_file);
  read_into(root, "classes", cfg.classes);
  if (cfg.classes < 2) throw Error("config: classes must be >= 2");
  read_into(root, "mlp_hidden", cfg.mlp_hidden);
  read_into(root, "baseline", cfg.baseline);
  read_into(root, "eval_batch", cfg.eval_batch);
  if (cfg.eval_batch < 1) throw Error("config: eval_batch must be >= 1");

  if (root.contains("data")) {
    const json& d = root.at("data");
    reject_unknown(d,
                   {"source", "train_images", "train_labels", "test_images", "test_labels",
                    "train_samples", "test_samples", "height", "width", "normalize"},
                   "'data'", text);
    read_into(d, "source", cfg.data.source);
    if (cfg.data.source != "synthetic" && cfg.data.source != "idx")
      throw Error("config: data.source must be 'synthetic' or 'idx', got '" + cfg.data.source +
                  "'");
    read_into(d, "train_images", cfg.data.train_images);
    read_into(d, "train_labels", cfg.data.train_labels);
    read_into(d, "test_images", cfg.data.test_images);
    read_into(d, "test_labels", cfg.data.test_labels);
    read_into(d, "train_samples", cfg.data.train_samples);
    read_into(d, "test_samples", cfg.data.test_samples);
    read_into(d, "height", cfg.data.height);
    read_into(d, "width", cfg.data.width);
    read_into(d, "normalize", cfg.data.normalize);
    if (cfg.data.source == "idx" &&
        (cfg.data.train_images.empty() || cfg.data.train_labels.empty() ||
         cfg.data.test_images.empty() || cfg.data.test_labels.empty()))
      throw Error("config: data.source 'idx' needs all four file paths");
    if (cfg.data.train_samples < 1 || cfg.data.test_samples < 1)
      throw Error("config: sample counts must be >= 1");
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    reject_unknown(t,
                   {"epochs", "batch_size", "lr", "momentum", "weight_decay", "cosine", "shuffle",
                    "augment", "checkpoint_every_epochs"},
                   "'train'", text);
    read_into(t, "epochs", cfg.train.epochs);
    read_into(t, "batch_size", cfg.train.batch_size);
    read_into(t, "lr", cfg.train.lr);
    read_into(t, "momentum", cfg.train.momentum);
    read_into(t, "weight_decay", cfg.train.weight_decay);
    read_into(t, "cosine", cfg.train.cosine);
    read_into(t, "shuffle", cfg.train.shuffle);
    read_into(t, "augment", cfg.train.augment);
    read_into(t, "checkpoint_every_epochs", cfg.train.checkpoint_every_epochs);
    cfg.train.validate();
  }

  if (root.contains("expansion")) {
    const json& e = root.at("expansion");
    reject_unknown(
        e, {"block", "fraction", "ratio", "dw_kernel", "skip", "activation", "location", "targets"},
        "'expansion'", text);
    std::string s;
    read_into(e, "block", s);
    if (!s.empty()) cfg.plan.block_type = block_from_string(s);
    read_into(e, "fraction", cfg.plan.fraction);
    read_into(e, "ratio", cfg.plan.ratio);
    read_into(e, "dw_kernel", cfg.plan.dw_kernel);
    read_into(e, "skip", cfg.plan.include_skip);
    s.clear();
    read_into(e, "activation", s);
    if (!s.empty()) cfg.plan.activation = act_from_string(s);
    s.clear();
    read_into(e, "location", s);
    if (!s.empty()) cfg.plan.location = location_from_string(s);
    std::vector<std::size_t> targets;
    read_into(e, "targets", targets);
    cfg.plan.explicit_targets = targets;
    cfg.plan.validate();
  }

  if (root.contains("linearize")) {
    const json& l = root.at("linearize");
    reject_unknown(l, {"decay_epochs", "finetune_epochs", "tuning_epochs"}, "'linearize'", text);
    read_into(l, "decay_epochs", cfg.plt_decay_epochs);
    read_into(l, "finetune_epochs", cfg.plt_finetune_epochs);
    read_into(l, "tuning_epochs", cfg.plt_tuning_epochs);
    if (cfg.plt_decay_epochs < 0 || cfg.plt_finetune_epochs < 0 || cfg.plt_tuning_epochs < 0)
      throw Error("config: linearize epochs must be >= 0");
    if (cfg.plt_decay_epochs == 0 && cfg.plt_tuning_epochs == 0)
      throw Error("config: linearize needs decay_epochs or tuning_epochs");
  }

  if (root.contains("sweep")) {
    const json& s = root.at("sweep");
    reject_unknown(s, {"ratios", "fractions", "locations", "epochs", "plt_epochs"}, "'sweep'",
                   text);
    read_into(s, "ratios", cfg.sweep.ratios);
    read_into(s, "fractions", cfg.sweep.fractions);
    read_into(s, "locations", cfg.sweep.locations);
    read_into(s, "epochs", cfg.sweep.epochs);
    read_into(s, "plt_epochs", cfg.sweep.plt_epochs);
    if (cfg.sweep.ratios.empty() || cfg.sweep.fractions.empty() || cfg.sweep.locations.empty())
      throw Error("config: sweep grids must not be empty");
    for (const std::string& loc : cfg.sweep.locations) location_from_string(loc);
    if (cfg.sweep.epochs < 1 || cfg.sweep.plt_epochs < 1)
      throw Error("config: sweep budgets must be >= 1");
  }

  return cfg;
}

}  // namespace netbooster
