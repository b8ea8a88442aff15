#include "stformer/pipeline/commands.hpp"

#include <fstream>
#include <iterator>

#include "stformer/core/error.hpp"
#include "stformer/core/rng.hpp"
#include "stformer/metrics/quality.hpp"
#include "stformer/model/checkpoint.hpp"
#include "stformer/model/network.hpp"
#include "stformer/pipeline/dataset.hpp"
#include "stformer/pipeline/trainer.hpp"

namespace stf::pipeline {

namespace {

template <typename F>
auto with_dtype(DType dtype, F&& f) {
  switch (dtype) {
    case DType::f32:
      return f(float{});
    case DType::f64:
      return f(double{});
    default:
      throw ConfigError("compute dtype must be f32 or f64, got " + dtype_name(dtype));
  }
}

std::string file_hash(const Path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

void write_json(const Path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("cannot write " + path.string());
}

void require_out(const Path& out) {
  if (out.empty()) throw ConfigError("an output path (--out) is required");
}

sci::MaskCube load_masks(const Path& path) {
  AnyArray a = load_stf1(path);
  auto* m = std::get_if<NdArray<std::uint8_t>>(&a);
  if (!m) throw IoError(path.string() + ": masks must be u8, found " + dtype_name(any_dtype(a)));
  if (m->dims.size() != 3) throw ShapeError(path.string() + ": masks must be [nx, ny, B], got " + shape_str(m->dims));
  return sci::MaskCube(std::move(*m));
}

}  // namespace

nlohmann::json cmd_mask(std::size_t nx, std::size_t ny, std::size_t frames, std::uint64_t seed, const Path& out) {
  require_out(out);
  const sci::MaskCube m = sci::gen_masks(nx, ny, frames, seed);
  save_stf1(out, m.values);
  return {{"command", "mask"}, {"out", out.string()}, {"dims", m.values.dims}, {"seed", seed},
          {"fnv1a64", file_hash(out)}};
}

nlohmann::json cmd_synth(std::size_t nx, std::size_t ny, std::size_t channels, std::size_t frames,
                         std::uint64_t seed, DType dtype, const Path& out) {
  require_out(out);
  with_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    save_stf1(out, synthetic_video<T>(nx, ny, channels, frames, seed).frames);
    return 0;
  });
  return {{"command", "synth"}, {"out", out.string()}, {"dims", {nx, ny, channels, frames}}, {"seed", seed}};
}

nlohmann::json cmd_encode(const Path& video, const Path& masks, const EncodeOptions& opt, const Path& out) {
  require_out(out);
  const sci::MaskCube m = load_masks(masks);
  return with_dtype(opt.dtype, [&](auto tag) {
    using T = decltype(tag);
    const sci::VideoCube<T> x = load_video<T>(video);
    const std::size_t want = opt.color ? 3 : 1;
    if (x.channels() != want) {
      throw ShapeError(video.string() + ": expected " + std::to_string(want) + " channel(s) for " +
                       (opt.color ? "colour" : "grayscale") + " encoding, found " + std::to_string(x.channels()));
    }
    if (x.nx() != m.nx() || x.ny() != m.ny()) {
      throw ShapeError("video is " + std::to_string(x.nx()) + "x" + std::to_string(x.ny()) + " but masks are " +
                       std::to_string(m.nx()) + "x" + std::to_string(m.ny()));
    }
    const std::size_t B = m.frames();
    if (x.length() % B != 0) {
      throw ShapeError("video length " + std::to_string(x.length()) + " is not a multiple of B = " +
                       std::to_string(B));
    }
    const std::size_t K = x.length() / B, pixels = x.nx() * x.ny();
    NdArray<T> stack({x.nx(), x.ny(), K});
    for (std::size_t k = 0; k < K; ++k) {
      const auto y = simulate(frame_range(x, k * B, B), m, opt.sigma, mix_seed(opt.seed, k));
      for (std::size_t i = 0; i < pixels; ++i) stack.data[i * K + k] = y.values.data[i];
    }
    save_stf1(out, stack);
    return nlohmann::json{{"command", "encode"}, {"out", out.string()}, {"measurements", K},
                          {"dims", stack.dims},  {"color", opt.color},  {"sigma", opt.sigma}};
  });
}

nlohmann::json cmd_init(const TrainConfig& config, std::uint64_t seed, DType dtype, const Path& out) {
  require_out(out);
  const model::ModelConfig m = config.model();
  const std::size_t count = with_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    const auto p = model::build_model<T>(m, seed);
    model::save_checkpoint(out, p);
    return p.parameter_count();
  });
  return {{"command", "init"}, {"out", out.string()}, {"parameters", count}, {"model", m},
          {"dtype", dtype_name(dtype)}};
}

nlohmann::json cmd_train(const TrainConfig& config, DType dtype, const Path& out_dir, std::ostream* log) {
  require_out(out_dir);
  config.validate();
  if (config.dataset.empty()) throw ConfigError("train config: 'dataset' is required");
  return with_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    const auto clips = load_clips<T>(config.dataset);
    auto params = config.init_checkpoint.empty() ? model::build_model<T>(config.model(), config.seed)
                                                 : model::load_checkpoint<T>(config.init_checkpoint);
    const RunManifest manifest = train(config, clips, params, {out_dir, log});
    nlohmann::json j = manifest;
    j["command"] = "train";
    j["out"] = out_dir.string();
    return j;
  });
}

nlohmann::json cmd_reconstruct(const Path& measurement, const Path& masks, const Path& checkpoint, DType dtype,
                               const Path& out) {
  require_out(out);
  const sci::MaskCube m = load_masks(masks);
  return with_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    const auto params = model::load_checkpoint<T>(checkpoint);
    NdArray<T> ys = std::visit([](const auto& a) { return array_cast<T>(a); }, load_stf1(measurement));
    if (ys.dims.size() == 2) ys.dims.push_back(1);
    if (ys.dims.size() != 3) {
      throw ShapeError(measurement.string() + ": expected [nx, ny] or [nx, ny, K], got " + shape_str(ys.dims));
    }
    const std::size_t nx = ys.dims[0], ny = ys.dims[1], K = ys.dims[2], B = m.frames();
    if (nx != m.nx() || ny != m.ny()) {
      throw ShapeError("measurement is " + shape_str({nx, ny}) + " but masks are " + shape_str({m.nx(), m.ny()}));
    }
    const std::size_t OC = params.config.out_channels;
    NdArray<T> video({nx, ny, OC, B * K});
    for (std::size_t k = 0; k < K; ++k) {
      sci::Measurement<T> y;
      y.values = NdArray<T>({nx, ny});
      for (std::size_t i = 0; i < nx * ny; ++i) y.values.data[i] = ys.data[i * K + k];
      if (params.config.color()) y.bayer = sci::BayerPattern::rggb;
      const sci::VideoCube<T> x = model::stformer_forward(y, m, params);
      for (std::size_t i = 0; i < nx * ny * OC; ++i)
        for (std::size_t f = 0; f < B; ++f) video.data[i * B * K + k * B + f] = x.frames.data[i * B + f];
    }
    save_stf1(out, video);
    return nlohmann::json{{"command", "reconstruct"}, {"out", out.string()}, {"dims", video.dims}};
  });
}

nlohmann::json cmd_eval(const Path& recon, const Path& truth, const Path& out) {
  const auto r = load_video<double>(recon);
  const auto t = load_video<double>(truth);
  if (r.frames.dims != t.frames.dims) {
    throw ShapeError("reconstruction " + shape_str(r.frames.dims) + " and ground truth " + shape_str(t.frames.dims) +
                     " differ in shape");
  }
  const metrics::QualityReport report = metrics::eval_dataset(r, t);
  if (!out.empty()) write_json(out, report);
  return {{"command", "eval"}, {"report", report}};
}

nlohmann::json cmd_flops(const FlopsRequest& request, const Path& out) {
  if (!request.model && !request.dims) throw ConfigError("flops: give a preset/config or attention dims");
  nlohmann::json j{{"command", "flops"}};
  if (request.model) {
    const model::ModelConfig& c = *request.model;
    j["model"] = c;
    j["input"] = {request.nx, request.ny, c.frames};
    j["network"] = audit::network_cost(c, request.nx, request.ny);
    nlohmann::json scaling = nlohmann::json::array();
    for (std::size_t f : {1, 2, 4}) {
      const std::size_t nx = request.nx * f / 2, ny = request.ny * f / 2;
      scaling.push_back({{"nx", nx}, {"ny", ny}, {"total", audit::network_cost(c, nx, ny).total}});
    }
    j["scaling"] = scaling;
  }
  if (request.dims) j["attention"] = audit::audit_attention(*request.dims);
  if (!out.empty()) write_json(out, j);
  return j;
}

}  // namespace stf::pipeline
