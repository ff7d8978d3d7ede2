// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: train-ae, train-diffusion, compress, decompress,
// eval, rd-sweep, bd-report. Exit codes: 0 success, 2 IO/parse failure,
// 3 configuration or model mismatch.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "diffcom/codec/pipeline.hpp"
#include "diffcom/geom/io.hpp"
#include "diffcom/geom/metrics.hpp"
#include "diffcom/train/checkpoint.hpp"
#include "diffcom/train/dataset.hpp"
#include "diffcom/train/trainer.hpp"

namespace dc = diffcom;
using nlohmann::json;

namespace {

constexpr int kExitIo = 2;
constexpr int kExitConfig = 3;

struct CliFailure {
  int code;
  std::string message;
};

dc::geom::Format parse_format(const std::string& fmt) {
  if (fmt == "ply-ascii") return dc::geom::Format::kPlyAscii;
  if (fmt == "ply-binary-le") return dc::geom::Format::kPlyBinaryLE;
  if (fmt == "xyz-text") return dc::geom::Format::kXyzText;
  if (fmt.empty() || fmt == "auto") return dc::geom::Format::kAuto;
  throw CliFailure{kExitConfig, "unknown format: " + fmt};
}

std::unique_ptr<dc::codec::CodecModel> load_model(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw CliFailure{kExitIo, "checkpoint not found: " + path};
  return dc::train::load_checkpoint(path);
}

dc::codec::ModelConfig config_from_args(const std::string& config_path, int points) {
  if (!config_path.empty()) {
    if (!std::filesystem::exists(config_path))
      throw CliFailure{kExitIo, "config not found: " + config_path};
    return dc::train::model_config_from_json_file(config_path);
  }
  return points >= 1024 ? dc::codec::default_model_config()
                        : dc::codec::smoke_model_config(points);
}

struct RdRow {
  std::string model_id;
  double bpp, d1, cd;
};

std::vector<RdRow> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliFailure{kExitIo, "cannot open " + path};
  std::vector<RdRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("model_id", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::stringstream ss(line);
    RdRow r;
    std::string tok;
    if (!std::getline(ss, r.model_id, ',')) throw CliFailure{kExitIo, path + ": bad row"};
    auto next = [&](double& v) {
      if (!std::getline(ss, tok, ',')) throw CliFailure{kExitIo, path + ": bad row"};
      v = std::stod(tok);
    };
    next(r.bpp);
    next(r.d1);
    next(r.cd);
    rows.push_back(r);
  }
  if (rows.empty()) throw CliFailure{kExitIo, path + ": empty curve"};
  return rows;
}

std::vector<dc::geom::RDPoint> to_curve(const std::vector<RdRow>& rows) {
  std::vector<dc::geom::RDPoint> c;
  for (const auto& r : rows) c.push_back({r.bpp, r.d1});
  return c;
}

int run(int argc, char** argv) {
  CLI::App app{"diffcom point cloud geometry codec"};
  app.require_subcommand(1);

  // --- train-ae ---
  auto* train_ae = app.add_subcommand("train-ae", "pretrain the autoencoder (CD loss)");
  std::string ta_config, ta_dataset = "synth:mixed:8", ta_out = "ae.ckpt", ta_log;
  int ta_steps = 2000, ta_points = 512, ta_batch = 1;
  double ta_lr = 1e-3;
  uint64_t ta_seed = 7;
  train_ae->add_option("--config", ta_config, "model config JSON");
  train_ae->add_option("--dataset", ta_dataset, "synth:<recipe>:<count> or directory");
  train_ae->add_option("--out", ta_out, "output checkpoint");
  train_ae->add_option("--steps", ta_steps);
  train_ae->add_option("--points", ta_points);
  train_ae->add_option("--batch", ta_batch);
  train_ae->add_option("--lr", ta_lr);
  train_ae->add_option("--seed", ta_seed);
  train_ae->add_option("--log", ta_log, "line-delimited JSON training log");

  // --- train-diffusion ---
  auto* train_diff = app.add_subcommand(
      "train-diffusion", "joint denoiser + sparse prior + entropy training");
  std::string td_ckpt, td_dataset = "synth:mixed:8", td_out = "model.ckpt", td_log;
  int td_steps = 2000, td_batch = 1;
  double td_lr = 1e-3, td_lambda = 1e-3;
  uint64_t td_seed = 7;
  train_diff->add_option("--checkpoint", td_ckpt, "pretrained AE checkpoint")->required();
  train_diff->add_option("--dataset", td_dataset);
  train_diff->add_option("--out", td_out);
  train_diff->add_option("--steps", td_steps);
  train_diff->add_option("--batch", td_batch);
  train_diff->add_option("--lr", td_lr);
  train_diff->add_option("--lambda", td_lambda, "compression loss weight");
  train_diff->add_option("--seed", td_seed);
  train_diff->add_option("--log", td_log);

  // --- compress ---
  auto* compress = app.add_subcommand("compress", "encode a point cloud to .dcp");
  std::string c_input, c_ckpt, c_output = "out.dcp", c_format;
  int c_steps = 20;
  uint64_t c_seed = 0x0dcb5eed;
  compress->add_option("input", c_input, "input cloud (.ply/.xyz)")->required();
  compress->add_option("--checkpoint", c_ckpt)->required();
  compress->add_option("--output", c_output);
  compress->add_option("--seed", c_seed, "sampler seed stored in the header");
  compress->add_option("--steps", c_steps, "DDIM steps stored in the header");
  compress->add_option("--format", c_format, "input format override");

  // --- decompress ---
  auto* decompress = app.add_subcommand("decompress", "decode a .dcp to a point cloud");
  std::string d_input, d_ckpt, d_output = "out.ply", d_format;
  int d_steps = 0;
  decompress->add_option("input", d_input, ".dcp file")->required();
  decompress->add_option("--checkpoint", d_ckpt)->required();
  decompress->add_option("--output", d_output);
  decompress->add_option("--steps", d_steps, "override DDIM steps (0 = header value)");
  decompress->add_option("--format", d_format, "output format (ply-ascii/ply-binary-le/xyz-text)");

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "geometry metrics between two clouds");
  std::string e_ref, e_rec;
  double e_bpp = -1.0, e_peak = 0.0;
  eval->add_option("--ref", e_ref)->required();
  eval->add_option("--rec", e_rec)->required();
  eval->add_option("--bpp", e_bpp, "echoed into the report");
  eval->add_option("--peak", e_peak, "PSNR peak (default: ref bbox diagonal)");

  // --- rd-sweep ---
  auto* sweep = app.add_subcommand("rd-sweep", "evaluate checkpoints into an RD curve");
  std::string s_dataset = "synth:mixed:8", s_out = "rd.csv";
  std::vector<std::string> s_ckpts;
  std::vector<double> s_lambdas;
  std::string s_base;
  int s_steps = 20, s_points = 512, s_train_steps = 600;
  uint64_t s_seed = 0x0dcb5eed;
  sweep->add_option("--dataset", s_dataset);
  sweep->add_option("--checkpoints", s_ckpts)->delimiter(',');
  sweep->add_option("--lambdas", s_lambdas, "train one model per lambda")->delimiter(',');
  sweep->add_option("--base-checkpoint", s_base, "AE checkpoint for --lambdas");
  sweep->add_option("--train-steps", s_train_steps);
  sweep->add_option("--out", s_out);
  sweep->add_option("--steps", s_steps);
  sweep->add_option("--points", s_points);
  sweep->add_option("--seed", s_seed);

  // --- bd-report ---
  auto* bd = app.add_subcommand("bd-report", "Bjontegaard deltas between two RD CSVs");
  std::string b_a, b_b;
  bd->add_option("curve_a", b_a)->required();
  bd->add_option("curve_b", b_b)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (train_ae->parsed()) {
    dc::codec::ModelConfig mc = config_from_args(ta_config, ta_points);
    mc.points_per_cloud = ta_points;
    dc::codec::CodecModel model(mc);
    model.build_params();
    auto data = dc::train::load_dataset(ta_dataset, ta_points, ta_seed);
    dc::train::TrainConfig tc;
    tc.points_per_cloud = ta_points;
    tc.steps = ta_steps;
    tc.batch_size = ta_batch;
    tc.learning_rate = ta_lr;
    tc.seed = ta_seed;
    tc.log_path = ta_log;
    auto hist = dc::train::pretrain_autoencoder(model, tc, data);
    dc::train::save_checkpoint(ta_out, model);
    json out{{"checkpoint", ta_out},
             {"steps", ta_steps},
             {"final_cd", hist.empty() ? -1.0 : hist.back()}};
    std::cout << out.dump() << "\n";
    return 0;
  }

  if (train_diff->parsed()) {
    auto model = load_model(td_ckpt);
    auto data = dc::train::load_dataset(td_dataset, model->config().points_per_cloud,
                                        td_seed);
    dc::train::TrainConfig tc;
    tc.points_per_cloud = model->config().points_per_cloud;
    tc.steps = td_steps;
    tc.batch_size = td_batch;
    tc.learning_rate = td_lr;
    tc.lambda_comp = td_lambda;
    tc.seed = td_seed;
    tc.log_path = td_log;
    auto logs = dc::train::train_diffusion(*model, tc, data);
    dc::train::save_checkpoint(td_out, *model);
    json out{{"checkpoint", td_out},
             {"steps", td_steps},
             {"final_loss_recon", logs.empty() ? -1.0 : logs.back().loss_recon},
             {"final_bpp_est", logs.empty() ? -1.0 : logs.back().bpp_est}};
    std::cout << out.dump() << "\n";
    return 0;
  }

  if (compress->parsed()) {
    if (!std::filesystem::exists(c_input))
      throw CliFailure{kExitIo, "input not found: " + c_input};
    auto model = load_model(c_ckpt);
    auto cloud = dc::geom::load_point_cloud(c_input, parse_format(c_format));
    dc::codec::CompressOptions opts;
    opts.seed = c_seed;
    opts.ddim_steps = c_steps;
    auto res = dc::codec::compress(*model, cloud, opts);
    dc::codec::write_bitstream_file(c_output, res.stream);
    json out{{"bpp", res.bpp},
             {"payload_bytes", res.payload_bytes},
             {"header_bytes", res.header_bytes},
             {"n_s", res.n_sparse},
             {"enc_time_s", res.enc_time_s},
             {"input", c_input},
             {"output", c_output}};
    std::cout << out.dump() << "\n";
    return 0;
  }

  if (decompress->parsed()) {
    if (!std::filesystem::exists(d_input))
      throw CliFailure{kExitIo, "input not found: " + d_input};
    auto model = load_model(d_ckpt);
    auto bs = dc::codec::read_bitstream_file(d_input);
    auto res = dc::codec::decompress(*model, bs, d_steps);
    const auto fmt = d_format.empty() ? dc::geom::Format::kPlyBinaryLE
                                      : parse_format(d_format);
    dc::geom::save_point_cloud(d_output, res.cloud, fmt);
    json out{{"output", d_output},
             {"n_points", res.cloud.size()},
             {"dec_time_s", res.dec_time_s},
             {"ddim_steps", res.ddim_steps}};
    std::cout << out.dump() << "\n";
    return 0;
  }

  if (eval->parsed()) {
    if (!std::filesystem::exists(e_ref)) throw CliFailure{kExitIo, "missing " + e_ref};
    if (!std::filesystem::exists(e_rec)) throw CliFailure{kExitIo, "missing " + e_rec};
    auto ref = dc::geom::load_point_cloud(e_ref);
    auto rec = dc::geom::load_point_cloud(e_rec);
    const double peak = e_peak > 0.0 ? e_peak : dc::geom::bbox_diagonal(ref);
    json out{{"cd", dc::geom::chamfer_distance(ref, rec)},
             {"d1_psnr", dc::geom::d1_psnr(ref, rec, peak)},
             {"peak", peak}};
    if (e_bpp >= 0.0) out["bpp"] = e_bpp;
    std::cout << out.dump() << "\n";
    return 0;
  }

  if (sweep->parsed()) {
    struct Entry {
      std::string id;
      dc::train::RdSample sample;
    };
    std::vector<Entry> entries;
    if (!s_ckpts.empty()) {
      for (const auto& ck : s_ckpts) {
        auto model = load_model(ck);
        auto data = dc::train::load_dataset(s_dataset,
                                            model->config().points_per_cloud, s_seed);
        entries.push_back(
            {std::filesystem::path(ck).stem().string(),
             dc::train::evaluate_model(*model, data, s_steps, s_seed)});
      }
    } else if (!s_lambdas.empty()) {
      if (s_base.empty())
        throw CliFailure{kExitConfig, "--lambdas needs --base-checkpoint"};
      for (double lam : s_lambdas) {
        auto model = load_model(s_base);
        auto data = dc::train::load_dataset(s_dataset,
                                            model->config().points_per_cloud, s_seed);
        dc::train::TrainConfig tc;
        tc.points_per_cloud = model->config().points_per_cloud;
        tc.steps = s_train_steps;
        tc.lambda_comp = lam;
        tc.seed = s_seed;
        dc::train::train_diffusion(*model, tc, data);
        entries.push_back({"lambda_" + std::to_string(lam),
                           dc::train::evaluate_model(*model, data, s_steps, s_seed)});
      }
    } else {
      throw CliFailure{kExitConfig, "rd-sweep needs --checkpoints or --lambdas"};
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.sample.bpp < b.sample.bpp; });
    std::ofstream out(s_out);
    if (!out) throw CliFailure{kExitIo, "cannot open " + s_out};
    out << "model_id,bpp,d1_psnr,cd\n";
    for (const auto& e : entries)
      out << e.id << "," << e.sample.bpp << "," << e.sample.d1 << "," << e.sample.cd
          << "\n";
    if (entries.size() < 4)
      std::cerr << "rd-sweep: fewer than 4 points; BD metrics will be unavailable\n";
    json rep{{"out", s_out}, {"points", entries.size()}};
    std::cout << rep.dump() << "\n";
    return 0;
  }

  if (bd->parsed()) {
    const auto a = to_curve(read_rd_csv(b_a));
    const auto b = to_curve(read_rd_csv(b_b));
    const auto r = dc::geom::bd_metrics(a, b);
    json out{{"bd_psnr", r.bd_psnr}, {"bd_rate", r.bd_rate}};
    std::cout << out.dump() << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CliFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const dc::geom::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const dc::geom::EmptyCloudError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const dc::codec::BadStreamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const dc::codec::CorruptStreamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const dc::codec::ModelMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dc::train::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dc::train::TrainingDivergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}
