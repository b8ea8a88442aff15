#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "stformer/core/error.hpp"
#include "stformer/pipeline/commands.hpp"

namespace {

using stf::pipeline::Path;

// Failure is reported as one JSON line on stderr plus a category exit code.
int fail(const std::string& type, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", type}, {"message", message}}.dump() << std::endl;
  return code;
}

stf::model::ModelConfig model_from(const std::string& preset, const std::string& config_path) {
  if (!config_path.empty()) return stf::pipeline::load_train_config(config_path).model();
  return stf::model::ModelConfig::preset(preset);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STFormer video snapshot compressive imaging toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string config_path, dtype_name = "f32", out;
  app.add_option("--seed", seed, "PRNG seed");
  app.add_option("--config", config_path, "JSON train config");
  app.add_option("--dtype", dtype_name, "compute dtype")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--out", out, "output file or directory");

  std::size_t nx = 256, ny = 256, frames = 8, channels = 1;
  auto* mask = app.add_subcommand("mask", "generate random binary masks");
  mask->add_option("--nx", nx)->required();
  mask->add_option("--ny", ny)->required();
  mask->add_option("--frames,-B", frames, "compression rate B");

  auto* synth = app.add_subcommand("synth", "write a synthetic ground-truth clip");
  synth->add_option("--nx", nx)->required();
  synth->add_option("--ny", ny)->required();
  synth->add_option("--frames", frames);
  synth->add_option("--channels", channels)->check(CLI::IsMember({1, 3}));

  std::string video, masks, measurement, checkpoint, recon, truth;
  stf::pipeline::EncodeOptions enc;
  auto* encode = app.add_subcommand("encode", "simulate measurements of a video");
  encode->add_option("--video", video, "STF1 cube or directory of PGM/PPM frames")->required();
  encode->add_option("--masks", masks)->required();
  encode->add_option("--sigma", enc.sigma, "Gaussian noise standard deviation")->check(CLI::NonNegativeNumber);
  encode->add_flag("--color", enc.color, "RGB input, Bayer-mosaicked before encoding");

  std::string preset = "S";
  auto* init = app.add_subcommand("init", "write freshly initialised weights");
  init->add_option("--preset", preset)->check(CLI::IsMember({"S", "B", "L"}));

  auto* train = app.add_subcommand("train", "train from a config");

  auto* reconstruct = app.add_subcommand("reconstruct", "reconstruct video from measurements");
  reconstruct->add_option("--measurement", measurement)->required();
  reconstruct->add_option("--masks", masks)->required();
  reconstruct->add_option("--checkpoint", checkpoint)->required();

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a reconstruction");
  eval->add_option("--recon", recon)->required();
  eval->add_option("--truth", truth)->required();

  std::vector<std::size_t> size, dims;
  std::size_t window = 7, heads = 1;
  auto* flops = app.add_subcommand("flops", "complexity audit");
  flops->add_option("--preset", preset)->check(CLI::IsMember({"S", "B", "L"}));
  flops->add_option("--size", size, "input nx ny")->expected(2);
  flops->add_option("--dims", dims, "attention H W D C")->expected(4);
  flops->add_option("--window", window, "attention window side");
  flops->add_option("--heads", heads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what(), 2);
  }

  try {
    const stf::DType dtype = stf::parse_dtype(dtype_name);
    nlohmann::json summary;
    if (*mask) {
      summary = stf::pipeline::cmd_mask(nx, ny, frames, seed.value_or(0), out);
    } else if (*synth) {
      summary = stf::pipeline::cmd_synth(nx, ny, channels, frames, seed.value_or(0), dtype, out);
    } else if (*encode) {
      enc.seed = seed.value_or(0);
      enc.dtype = dtype;
      summary = stf::pipeline::cmd_encode(video, masks, enc, out);
    } else if (*init) {
      stf::pipeline::TrainConfig cfg;
      if (!config_path.empty()) {
        cfg = stf::pipeline::load_train_config(config_path);
      } else {
        cfg.preset = preset;
      }
      summary = stf::pipeline::cmd_init(cfg, seed.value_or(cfg.seed), dtype, out);
    } else if (*train) {
      if (config_path.empty()) return fail("UsageError", "train needs --config", 2);
      auto cfg = stf::pipeline::load_train_config(config_path);
      if (seed) cfg.seed = *seed;
      summary = stf::pipeline::cmd_train(cfg, dtype, out, &std::cerr);
    } else if (*reconstruct) {
      summary = stf::pipeline::cmd_reconstruct(measurement, masks, checkpoint, dtype, out);
    } else if (*eval) {
      summary = stf::pipeline::cmd_eval(recon, truth, out);
    } else if (*flops) {
      stf::pipeline::FlopsRequest req;
      if (!config_path.empty() || flops->count("--preset") || dims.empty()) req.model = model_from(preset, config_path);
      if (size.size() == 2) {
        req.nx = size[0];
        req.ny = size[1];
      }
      if (dims.size() == 4) req.dims = stf::audit::AttentionDims{dims[0], dims[1], dims[2], dims[3], window, window, heads};
      summary = stf::pipeline::cmd_flops(req, out);
    }
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const stf::ConfigError& e) {
    return fail("ConfigError", e.what(), 3);
  } catch (const stf::IoError& e) {
    return fail("IoError", e.what(), 4);
  } catch (const stf::ShapeError& e) {
    return fail("ShapeError", e.what(), 5);
  } catch (const stf::NonFiniteError& e) {
    return fail("NonFiniteError", e.what(), 6);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("IoError", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("Error", e.what(), 1);
  }
}
