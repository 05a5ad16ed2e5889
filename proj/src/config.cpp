#include "hfnrv/config.hpp"

#include <fstream>
#include <map>
#include <set>

namespace hfnrv {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& msg) { throw InvalidArgument(msg); }

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) bad(where + ": expected an object");
}

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) bad(where + ": unknown key '" + k + "'");
}

template <typename V>
void read(const json& j, const std::string& where, const char* key, V& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<V, bool>) {
      if (!it->is_boolean()) throw std::runtime_error("expected a boolean");
    } else if constexpr (std::is_integral_v<V>) {
      if (!it->is_number_integer()) throw std::runtime_error("expected an integer");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!it->is_number()) throw std::runtime_error("expected a number");
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!it->is_string()) throw std::runtime_error("expected a string");
    } else {
      if (!it->is_array()) throw std::runtime_error("expected a list");
      for (const auto& e : *it)
        if (!e.is_number_integer()) throw std::runtime_error("expected a list of integers");
    }
    out = it->get<V>();
  } catch (const std::exception& e) {
    bad(where + "." + key + ": " + e.what());
  }
}

template <typename E, typename Parse>
void read_enum(const json& j, const std::string& where, const char* key, E& out, Parse parse) {
  std::string s;
  bool present = j.contains(key);
  read(j, where, key, s);
  if (!present) return;
  try {
    out = parse(s);
  } catch (const InvalidArgument& e) {
    bad(where + "." + key + ": " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"content_strides", c.content_strides},
              {"hf_strides", c.hf_strides},
              {"d_c", c.d_c},
              {"d_h", c.d_h},
              {"decoder_strides", c.decoder_strides},
              {"base_width", c.base_width},
              {"width_reduction", c.width_reduction},
              {"min_width", c.min_width},
              {"hfm_stage", c.hfm_stage},
              {"activation", to_string(c.activation)},
              {"fusion", to_string(c.fusion)},
              {"hf_branch_enabled", c.hf_branch_enabled},
              {"hf_encoder", to_string(c.hf_encoder)},
              {"enc_width", c.enc_width},
              {"wfd_channels", c.wfd_channels},
              {"convnext_kernel", c.convnext_kernel},
              {"fn_expansion", c.fn_expansion},
              {"decoder_kernel", c.decoder_kernel},
              {"head_kernel", c.head_kernel}};
}

json to_json(const LossConfig& c) {
  return json{{"alpha", c.alpha}, {"mu", c.mu}, {"variant", to_string(c.variant)}};
}

json to_json(const TrainConfig& c) {
  return json{{"base_lr", c.base_lr},
              {"epochs", c.epochs},
              {"warmup_fraction", c.warmup_fraction},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"optimizer", to_string(c.optimizer)},
              {"shuffle", c.shuffle},
              {"loss", to_json(c.loss)}};
}

json to_json(const RunConfig& c) {
  return json{{"version", kConfigVersion},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"compress", {{"prune_ratio", c.compress.prune_ratio}, {"finetune_epochs", c.compress.finetune_epochs}}},
              {"paths", {{"input", c.paths.input}, {"output", c.paths.output}, {"workdir", c.paths.workdir}}}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  const std::string w = "model";
  require_object(j, w);
  reject_unknown(j, w,
                 {"content_strides", "hf_strides", "d_c", "d_h", "decoder_strides", "base_width", "width_reduction",
                  "min_width", "hfm_stage", "activation", "fusion", "hf_branch_enabled", "hf_encoder", "enc_width",
                  "wfd_channels", "convnext_kernel", "fn_expansion", "decoder_kernel", "head_kernel"});
  read(j, w, "content_strides", c.content_strides);
  read(j, w, "hf_strides", c.hf_strides);
  read(j, w, "d_c", c.d_c);
  read(j, w, "d_h", c.d_h);
  read(j, w, "decoder_strides", c.decoder_strides);
  read(j, w, "base_width", c.base_width);
  read(j, w, "width_reduction", c.width_reduction);
  read(j, w, "min_width", c.min_width);
  read(j, w, "hfm_stage", c.hfm_stage);
  read_enum(j, w, "activation", c.activation, activation_from_string);
  read_enum(j, w, "fusion", c.fusion, fusion_from_string);
  read(j, w, "hf_branch_enabled", c.hf_branch_enabled);
  read_enum(j, w, "hf_encoder", c.hf_encoder, hf_encoder_from_string);
  read(j, w, "enc_width", c.enc_width);
  read(j, w, "wfd_channels", c.wfd_channels);
  read(j, w, "convnext_kernel", c.convnext_kernel);
  read(j, w, "fn_expansion", c.fn_expansion);
  read(j, w, "decoder_kernel", c.decoder_kernel);
  read(j, w, "head_kernel", c.head_kernel);
  return c;
}

LossConfig loss_config_from_json(const json& j, LossConfig c) {
  const std::string w = "train.loss";
  require_object(j, w);
  reject_unknown(j, w, {"alpha", "mu", "variant"});
  read(j, w, "alpha", c.alpha);
  read(j, w, "mu", c.mu);
  read_enum(j, w, "variant", c.variant, loss_variant_from_string);
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  const std::string w = "train";
  require_object(j, w);
  reject_unknown(j, w,
                 {"base_lr", "epochs", "warmup_fraction", "batch_size", "seed", "optimizer", "shuffle", "loss"});
  read(j, w, "base_lr", c.base_lr);
  read(j, w, "epochs", c.epochs);
  read(j, w, "warmup_fraction", c.warmup_fraction);
  read(j, w, "batch_size", c.batch_size);
  read(j, w, "seed", c.seed);
  read_enum(j, w, "optimizer", c.optimizer, optimizer_from_string);
  read(j, w, "shuffle", c.shuffle);
  if (j.contains("loss")) c.loss = loss_config_from_json(j["loss"], c.loss);
  return c;
}

RunConfig run_config_from_json(const json& j) {
  require_object(j, "config");
  reject_unknown(j, "config", {"version", "model", "train", "compress", "paths"});
  int version = kConfigVersion;
  read(j, "config", "version", version);
  if (version != kConfigVersion)
    bad("config.version: unsupported schema version " + std::to_string(version) + " (expected " +
        std::to_string(kConfigVersion) + ")");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j["model"], c.model);
  if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
  if (j.contains("compress")) {
    const json& cj = j["compress"];
    require_object(cj, "compress");
    reject_unknown(cj, "compress", {"prune_ratio", "finetune_epochs"});
    read(cj, "compress", "prune_ratio", c.compress.prune_ratio);
    read(cj, "compress", "finetune_epochs", c.compress.finetune_epochs);
  }
  if (j.contains("paths")) {
    const json& pj = j["paths"];
    require_object(pj, "paths");
    reject_unknown(pj, "paths", {"input", "output", "workdir"});
    read(pj, "paths", "input", c.paths.input);
    read(pj, "paths", "output", c.paths.output);
    read(pj, "paths", "workdir", c.paths.workdir);
  }
  validate(c.model);
  validate(c.train);
  if (!(c.compress.prune_ratio >= 0.0 && c.compress.prune_ratio < 1.0))
    bad("compress.prune_ratio must lie in [0, 1)");
  if (c.compress.finetune_epochs < 0) bad("compress.finetune_epochs must be >= 0");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    bad(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

const std::vector<std::string>& variant_ids() {
  static const std::vector<std::string> ids{"full", "V1", "V2", "V3", "V4", "V5",
                                            "V6",   "V7", "V8", "V9", "V10"};
  return ids;
}

RunConfig apply_variant(RunConfig cfg, const std::string& id) {
  ModelConfig& m = cfg.model;
  LossConfig& l = cfg.train.loss;
  if (id == "full") return cfg;
  if (id == "V1") m.hf_branch_enabled = false;
  else if (id == "V2") m.hf_encoder = HfEncoderKind::Content;
  else if (id == "V3") m.fusion = Fusion::Concat;
  else if (id == "V4") m.fusion = Fusion::Add;
  else if (id == "V5") m.fusion = Fusion::InterAttention;
  else if (id == "V6") m.activation = Activation::Gelu;
  else if (id == "V7") m.activation = Activation::Sine;
  else if (id == "V8") l.variant = LossVariant::SpaOnly;
  else if (id == "V9") l.variant = LossVariant::L2Only;
  else if (id == "V10") l.variant = LossVariant::NoLog;
  else bad("unknown ablation variant '" + id + "' (expected full or V1..V10)");
  return cfg;
}

std::string describe_variant(const std::string& id) {
  static const std::map<std::string, std::string> text{
      {"full", "full model"},
      {"V1", "no high-frequency branch"},
      {"V2", "content-encoder copy as hf encoder"},
      {"V3", "fusion: concat"},
      {"V4", "fusion: add"},
      {"V5", "fusion: inter attention"},
      {"V6", "activation: gelu"},
      {"V7", "activation: sine"},
      {"V8", "loss: spatial only"},
      {"V9", "loss: l2 only"},
      {"V10", "loss: frequency weight without log"}};
  auto it = text.find(id);
  if (it == text.end()) bad("unknown ablation variant '" + id + "'");
  return it->second;
}

}  // namespace hfnrv
