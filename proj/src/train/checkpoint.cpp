// SPDX-License-Identifier: Apache-2.0

#include "diffcom/train/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace diffcom::train {

using codec::CodecModel;
using codec::ModelConfig;
using codec::ModelKind;
using nlohmann::json;
using nn::Tensor;

namespace {

constexpr uint32_t kCheckpointVersion = 1;

json encoder_to_json(const ae::EncoderConfig& e) {
  return json{{"rates", e.rates},
              {"dims", e.dims},
              {"lift_dim", e.lift_dim},
              {"k_neighbors", e.k_neighbors}};
}

ae::EncoderConfig encoder_from_json(const json& j) {
  ae::EncoderConfig e;
  e.rates = j.at("rates").get<std::vector<double>>();
  e.dims = j.at("dims").get<std::vector<int>>();
  e.lift_dim = j.at("lift_dim").get<int>();
  e.k_neighbors = j.at("k_neighbors").get<int>();
  return e;
}

json config_to_json(const ModelConfig& c) {
  json j;
  j["kind"] = c.kind == ModelKind::kTwoStage ? "two_stage" : "one_stage";
  j["points_per_cloud"] = c.points_per_cloud;
  j["ae"] = {{"encoder", encoder_to_json(c.ae.encoder)},
             {"decoder",
              {{"factors", c.ae.decoder.factors},
               {"dims", c.ae.decoder.dims},
               {"k_candidates", c.ae.decoder.k_candidates},
               {"refine_candidates", c.ae.decoder.refine_candidates}}}};
  j["prior"] = {{"encoder", encoder_to_json(c.prior.encoder)},
                {"analysis_channels", c.prior.analysis_channels},
                {"hyper_channels", c.prior.hyper_channels},
                {"conv_width", c.prior.conv_width},
                {"preserved_size", c.prior.preserved_size},
                {"analyze_features", c.prior.analyze_features},
                {"use_hyperprior", c.prior.use_hyperprior}};
  j["denoiser"] = {{"levels", c.denoiser.levels},
                   {"level_rates", c.denoiser.level_rates},
                   {"widths", c.denoiser.widths},
                   {"k_neighbors", c.denoiser.k_neighbors},
                   {"time_dim", c.denoiser.time_dim},
                   {"fuse_sparse", c.denoiser.fuse_sparse},
                   {"cross_attention", c.denoiser.cross_attention}};
  j["diffusion"] = {{"T", c.diffusion_T},
                    {"beta_start", c.beta_start},
                    {"beta_end", c.beta_end}};
  j["entropy"] = {{"depth", c.entropy_depth}, {"width", c.entropy_width}};
  j["feature_scale"] = c.feature_scale;
  j["init_seed"] = c.init_seed;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.kind = j.at("kind").get<std::string>() == "one_stage" ? ModelKind::kOneStage
                                                          : ModelKind::kTwoStage;
  c.points_per_cloud = j.at("points_per_cloud").get<int>();
  c.ae.encoder = encoder_from_json(j.at("ae").at("encoder"));
  const json& d = j.at("ae").at("decoder");
  c.ae.decoder.factors = d.at("factors").get<std::vector<int>>();
  c.ae.decoder.dims = d.at("dims").get<std::vector<int>>();
  c.ae.decoder.k_candidates = d.at("k_candidates").get<int>();
  c.ae.decoder.refine_candidates = d.at("refine_candidates").get<int>();
  const json& p = j.at("prior");
  c.prior.encoder = encoder_from_json(p.at("encoder"));
  c.prior.analysis_channels = p.at("analysis_channels").get<int>();
  c.prior.hyper_channels = p.at("hyper_channels").get<int>();
  c.prior.conv_width = p.at("conv_width").get<int>();
  c.prior.preserved_size = p.at("preserved_size").get<bool>();
  c.prior.analyze_features = p.at("analyze_features").get<bool>();
  c.prior.use_hyperprior = p.at("use_hyperprior").get<bool>();
  const json& dn = j.at("denoiser");
  c.denoiser.levels = dn.at("levels").get<int>();
  c.denoiser.level_rates = dn.at("level_rates").get<std::vector<double>>();
  c.denoiser.widths = dn.at("widths").get<std::vector<int>>();
  c.denoiser.k_neighbors = dn.at("k_neighbors").get<int>();
  c.denoiser.time_dim = dn.at("time_dim").get<int>();
  c.denoiser.fuse_sparse = dn.at("fuse_sparse").get<bool>();
  c.denoiser.cross_attention = dn.at("cross_attention").get<bool>();
  c.diffusion_T = j.at("diffusion").at("T").get<int64_t>();
  c.beta_start = j.at("diffusion").at("beta_start").get<double>();
  c.beta_end = j.at("diffusion").at("beta_end").get<double>();
  c.entropy_depth = j.at("entropy").at("depth").get<int>();
  c.entropy_width = j.at("entropy").at("width").get<int>();
  c.feature_scale = j.at("feature_scale").get<double>();
  c.init_seed = j.at("init_seed").get<uint64_t>();
  return c;
}

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& s, uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_tensor(std::string& s, const std::string& name, const Tensor& t) {
  put_u32(s, static_cast<uint32_t>(name.size()));
  s.append(name);
  put_u32(s, static_cast<uint32_t>(t.rows()));
  put_u32(s, static_cast<uint32_t>(t.cols()));
  for (int64_t i = 0; i < t.size(); ++i) {
    uint64_t u;
    double d = t[i];
    std::memcpy(&u, &d, 8);
    put_u64(s, u);
  }
}

struct Reader {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  void need(size_t k) const {
    if (pos + k > n) throw CheckpointError("checkpoint: truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[pos + static_cast<size_t>(i)];
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[pos + static_cast<size_t>(i)];
    pos += 8;
    return v;
  }
  std::string str(size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + pos), k);
    pos += k;
    return s;
  }
};

Tensor read_tensor(Reader& r, std::string& name) {
  const uint32_t name_len = r.u32();
  name = r.str(name_len);
  const uint32_t rows = r.u32();
  const uint32_t cols = r.u32();
  Tensor t(rows, cols);
  for (int64_t i = 0; i < t.size(); ++i) {
    const uint64_t u = r.u64();
    double d;
    std::memcpy(&d, &u, 8);
    t[i] = d;
  }
  return t;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  return config_to_json(cfg).dump(2);
}

ModelConfig model_config_from_json(const std::string& json_text) {
  return config_from_json(json::parse(json_text));
}

ModelConfig model_config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError(path + ": cannot open");
  json j;
  in >> j;
  if (j.contains("model")) return config_from_json(j.at("model"));
  return config_from_json(j);
}

void model_config_to_json_file(const std::string& path, const ModelConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw CheckpointError(path + ": cannot open for write");
  out << model_config_to_json(cfg) << "\n";
}

void save_checkpoint(const std::string& path, const CodecModel& model) {
  json meta;
  meta["config"] = json::parse(model_config_to_json(model.config()));
  meta["train_step"] = model.train_step;
  meta["train_seed"] = model.train_seed;
  auto& ps = const_cast<CodecModel&>(model).params();
  meta["adam_t"] = ps.adam_t();

  std::string body;
  body.append("DCKP");
  put_u32(body, kCheckpointVersion);
  const std::string meta_str = meta.dump();
  put_u32(body, static_cast<uint32_t>(meta_str.size()));
  body.append(meta_str);

  uint32_t count = static_cast<uint32_t>(ps.values().size() + ps.adam_m().size() +
                                         ps.adam_v().size());
  put_u32(body, count);
  for (const auto& [name, t] : ps.values()) write_tensor(body, name, t);
  for (const auto& [name, t] : ps.adam_m()) write_tensor(body, "__m." + name, t);
  for (const auto& [name, t] : ps.adam_v()) write_tensor(body, "__v." + name, t);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError(tmp + ": cannot open for write");
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw CheckpointError(tmp + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<CodecModel> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(path + ": cannot open");
  std::string body((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const uint8_t*>(body.data()), body.size()};
  if (r.str(4) != "DCKP") throw CheckpointError(path + ": bad checkpoint magic");
  if (r.u32() != kCheckpointVersion)
    throw CheckpointError(path + ": unsupported checkpoint version");
  const uint32_t meta_len = r.u32();
  const json meta = json::parse(r.str(meta_len));
  ModelConfig cfg = config_from_json(meta.at("config"));
  auto model = std::make_unique<CodecModel>(cfg);
  model->train_step = meta.at("train_step").get<int64_t>();
  model->train_seed = meta.at("train_seed").get<uint64_t>();
  model->params().adam_t() = meta.at("adam_t").get<int64_t>();

  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name;
    Tensor t = read_tensor(r, name);
    if (name.rfind("__m.", 0) == 0) {
      model->params().adam_m()[name.substr(4)] = std::move(t);
    } else if (name.rfind("__v.", 0) == 0) {
      model->params().adam_v()[name.substr(4)] = std::move(t);
    } else {
      model->params().values()[name] = std::move(t);
    }
  }
  return model;
}

}  // namespace diffcom::train
