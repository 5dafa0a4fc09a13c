#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <future>
#include <string>
#include <vector>

#include "vfi/flow_io.hpp"
#include "vfi/image_io.hpp"
#include "vfi/loss.hpp"
#include "vfi/metrics.hpp"
#include "vfi/model.hpp"
#include "vfi/selftest.hpp"
#include "vfi/synthesis.hpp"
#include "vfi/weights_io.hpp"

namespace fs = std::filesystem;
using namespace vfi;

namespace {

constexpr int kExitMissingFile = 2;
constexpr int kExitSizeMismatch = 3;
constexpr int kExitBadTimestep = 4;

int require_file(const std::string& path) {
  if (!fs::exists(path)) {
    std::fprintf(stderr, "missing file: %s\n", path.c_str());
    return kExitMissingFile;
  }
  return 0;
}

Model build_model(std::string config, const std::string& weights, std::uint64_t seed) {
  if (!weights.empty()) {
    ModelConfig cfg = config.empty() ? peek_weights_config(weights) : ModelConfig::preset(config);
    Model m(cfg, seed);
    load_weights(m, weights);
    return m;
  }
  if (config.empty()) config = "small";
  return Model(ModelConfig::preset(config), seed);
}

std::string format_t(float t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", double(t));
  return buf;
}

std::string substitute_t(const std::string& pattern, float t) {
  const std::string key = "{t}";
  const auto pos = pattern.find(key);
  if (pos == std::string::npos) return pattern;
  return pattern.substr(0, pos) + format_t(t) + pattern.substr(pos + key.size());
}

int worker_count(std::size_t jobs) {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("IFA_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = unsigned(v);
  }
  return int(std::min<std::size_t>(n, jobs == 0 ? 1 : jobs));
}

struct InterpolateArgs {
  std::string frame0, frame1, out, config, weights;
  std::vector<float> ts;
  std::uint64_t seed = 1;
};

int cmd_interpolate(const InterpolateArgs& a) {
  for (const auto& p : {a.frame0, a.frame1}) {
    if (int rc = require_file(p)) return rc;
  }
  if (!a.weights.empty()) {
    if (int rc = require_file(a.weights)) return rc;
  }
  for (float t : a.ts) {
    if (!(t > 0.0f && t < 1.0f)) {
      std::fprintf(stderr, "timestep %g outside (0, 1)\n", double(t));
      return kExitBadTimestep;
    }
  }
  Tensor i0 = load_png(a.frame0);
  Tensor i1 = load_png(a.frame1);
  if (!(i0.shape == i1.shape)) {
    std::fprintf(stderr, "frame sizes differ: %s vs %s\n", i0.shape.str().c_str(),
                 i1.shape.str().c_str());
    return kExitSizeMismatch;
  }
  if (a.ts.size() > 1 && a.out.find("{t}") == std::string::npos) {
    std::fprintf(stderr, "multiple timesteps need a '{t}' placeholder in --out\n");
    return 1;
  }
  NoGradGuard inference;
  Model model = build_model(a.config, a.weights, a.seed);
  FeatureCache cache;  // extractor features shared across every t
  for (float t : a.ts) {
    InterpolateResult r = interpolate(model, i0, i1, t, &cache);
    const std::string path = substitute_t(a.out, t);
    save_png(r.image, path);
    std::printf("wrote %s\n", path.c_str());
  }
  return 0;
}

struct FlowArgs {
  std::string frame0, frame1, out, flo, which = "t0", config, weights;
  float t = 0.5f;
  std::uint64_t seed = 1;
};

int cmd_flow(const FlowArgs& a) {
  for (const auto& p : {a.frame0, a.frame1}) {
    if (int rc = require_file(p)) return rc;
  }
  if (!a.weights.empty()) {
    if (int rc = require_file(a.weights)) return rc;
  }
  if (!(a.t > 0.0f && a.t < 1.0f)) {
    std::fprintf(stderr, "timestep %g outside (0, 1)\n", double(a.t));
    return kExitBadTimestep;
  }
  Tensor i0 = load_png(a.frame0);
  Tensor i1 = load_png(a.frame1);
  if (!(i0.shape == i1.shape)) {
    std::fprintf(stderr, "frame sizes differ: %s vs %s\n", i0.shape.str().c_str(),
                 i1.shape.str().c_str());
    return kExitSizeMismatch;
  }
  NoGradGuard inference;
  Model model = build_model(a.config, a.weights, a.seed);
  InterpolateResult r = interpolate(model, i0, i1, a.t);
  const int c0 = a.which == "t1" ? 2 : 0;
  Tensor flow = slice_channels(r.flow, c0, c0 + 2);
  save_png(flow_to_color(flow), a.out);
  std::string flo = a.flo;
  if (flo.empty()) {
    flo = a.out;
    const auto dot = flo.rfind(".png");
    if (dot != std::string::npos) flo.replace(dot, 4, ".flo");
    else flo += ".flo";
  }
  save_flow_file(flow, flo);
  std::printf("wrote %s and %s\n", a.out.c_str(), flo.c_str());
  return 0;
}

struct EvalArgs {
  std::string dir, report, config, weights;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::is_directory(a.dir)) {
    std::fprintf(stderr, "missing file: %s\n", a.dir.c_str());
    return kExitMissingFile;
  }
  if (!a.weights.empty()) {
    if (int rc = require_file(a.weights)) return rc;
  }
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a.dir)) {
    if (e.is_directory()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());

  Model model = build_model(a.config, a.weights, a.seed);
  struct Row {
    bool ok = false;
    double psnr_db = 0, ssim_v = 0, ie = 0;
  };
  std::vector<Row> rows(names.size());
  std::atomic<int> skipped{0};

  auto process = [&](std::size_t i) {
    NoGradGuard inference;
    const fs::path base = fs::path(a.dir) / names[i];
    const std::string f1 = (base / "im1.png").string();
    const std::string f2 = (base / "im2.png").string();
    const std::string f3 = (base / "im3.png").string();
    if (!fs::exists(f1) || !fs::exists(f2) || !fs::exists(f3)) {
      std::fprintf(stderr, "warning: skipping %s (missing im1/im2/im3)\n", names[i].c_str());
      skipped += 1;
      return;
    }
    try {
      Tensor i0 = load_png(f1);
      Tensor gt = load_png(f2);
      Tensor i1 = load_png(f3);
      if (!(i0.shape == i1.shape) || !(i0.shape == gt.shape)) {
        std::fprintf(stderr, "warning: skipping %s (frame sizes differ)\n", names[i].c_str());
        skipped += 1;
        return;
      }
      InterpolateResult r = interpolate(model, i0, i1, 0.5f);
      rows[i].psnr_db = psnr(r.image, gt);
      rows[i].ssim_v = ssim(r.image, gt);
      rows[i].ie = interpolation_error(r.image, gt);
      rows[i].ok = true;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "warning: skipping %s (%s)\n", names[i].c_str(), e.what());
      skipped += 1;
    }
  };

  const int workers = worker_count(names.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < names.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> pool;
    for (int t = 0; t < workers; ++t) {
      pool.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < names.size(); i = next++) process(i);
      }));
    }
    for (auto& f : pool) f.get();
  }

  std::FILE* rep = std::fopen(a.report.c_str(), "wb");
  if (!rep) {
    std::fprintf(stderr, "cannot write report: %s\n", a.report.c_str());
    return 1;
  }
  std::fprintf(rep, "name,psnr,ssim,ie\n");
  double sp = 0, ss = 0, se = 0;
  int n = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!rows[i].ok) continue;
    std::fprintf(rep, "%s,%.6f,%.6f,%.6f\n", names[i].c_str(), rows[i].psnr_db, rows[i].ssim_v,
                 rows[i].ie);
    sp += rows[i].psnr_db;
    ss += rows[i].ssim_v;
    se += rows[i].ie;
    ++n;
  }
  if (n > 0) std::fprintf(rep, "mean,%.6f,%.6f,%.6f\n", sp / n, ss / n, se / n);
  std::fprintf(rep, "# triplets,%d\n# skipped,%d\n", n, skipped.load());
  std::fclose(rep);
  std::printf("evaluated %d triplets (%d skipped), report at %s\n", n, skipped.load(),
              a.report.c_str());
  return 0;
}

struct SelftestArgs {
  std::string level = "fast";
  std::string loss_curve;
  std::string inject;
};

int cmd_selftest(const SelftestArgs& a) {
  SelftestOptions opts;
  opts.level = a.level == "full" ? SelftestLevel::full : SelftestLevel::fast;
  opts.inject_softmax_fault = a.inject == "softmax";
  opts.loss_curve_path = a.loss_curve;
  auto results = run_selftest(opts);
  bool all = true;
  for (const auto& r : results) {
    std::printf("[%s] %-18s (%.2fs)%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                r.detail.empty() ? "" : ": ", r.detail.c_str());
    all = all && r.pass;
  }
  std::printf("%s\n", all ? "selftest: all groups passed" : "selftest: FAILURES");
  return all ? 0 : 1;
}

int cmd_weights_init(const std::string& config, std::uint64_t seed, const std::string& out) {
  Model m(ModelConfig::preset(config.empty() ? "small" : config), seed);
  save_weights(m, out);
  std::printf("wrote %s (%s, %zu parameters)\n", out.c_str(), m.cfg.name().c_str(),
              m.params.size());
  return 0;
}

int cmd_weights_info(const std::string& path) {
  if (int rc = require_file(path)) return rc;
  ModelConfig cfg = peek_weights_config(path);
  Model m(cfg, 0);
  load_weights(m, path);
  std::printf("variant: %s\nC: %d\nN1: %d\nN2: %d\nwindow: %d\nparameters: %zu\nscalars: %lld\n",
              cfg.name().c_str(), cfg.C, cfg.N1, cfg.N2, cfg.window_size, m.params.size(),
              (long long)m.params.scalar_count());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video frame interpolation via windowed cross-frame attention"};
  app.require_subcommand(1);

  InterpolateArgs ia;
  auto* interp = app.add_subcommand("interpolate", "synthesize frames at given timesteps");
  interp->add_option("--frame0", ia.frame0)->required();
  interp->add_option("--frame1", ia.frame1)->required();
  interp->add_option("--t", ia.ts, "timesteps in (0,1); repeatable")->required();
  interp->add_option("--out", ia.out, "output path; '{t}' expands per timestep")->required();
  interp->add_option("--config", ia.config, "tiny|small|large");
  interp->add_option("--weights", ia.weights, "EMAV weights file");
  interp->add_option("--seed", ia.seed, "init seed for weightless runs");

  FlowArgs fa;
  auto* flow = app.add_subcommand("flow", "estimate and visualize flow");
  flow->add_option("--frame0", fa.frame0)->required();
  flow->add_option("--frame1", fa.frame1)->required();
  flow->add_option("--t", fa.t)->required();
  flow->add_option("--out", fa.out, "visualization PNG")->required();
  flow->add_option("--flo", fa.flo, "raw FLO1 path (default: output with .flo)");
  flow->add_option("--which", fa.which, "t0|t1 flow direction")->check(CLI::IsMember({"t0", "t1"}));
  flow->add_option("--config", fa.config);
  flow->add_option("--weights", fa.weights);
  flow->add_option("--seed", fa.seed);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate PSNR/SSIM/IE on a triplet folder");
  eval->add_option("--dir", ea.dir)->required();
  eval->add_option("--report", ea.report)->required();
  eval->add_option("--config", ea.config);
  eval->add_option("--weights", ea.weights);
  eval->add_option("--seed", ea.seed);

  SelftestArgs sa;
  auto* self = app.add_subcommand("selftest", "run the module invariant suites");
  self->add_option("--level", sa.level)->check(CLI::IsMember({"fast", "full"}));
  self->add_option("--loss-curve", sa.loss_curve, "CSV path for the overfit loss curve");
  self->add_option("--inject-fault", sa.inject)->check(CLI::IsMember({"softmax"}));

  auto* weights = app.add_subcommand("weights", "weights file utilities");
  std::string wi_config, wi_out, wi_path;
  std::uint64_t wi_seed = 1;
  auto* winit = weights->add_subcommand("init", "write freshly initialized weights");
  winit->add_option("--config", wi_config);
  winit->add_option("--seed", wi_seed);
  winit->add_option("--out", wi_out)->required();
  auto* winfo = weights->add_subcommand("info", "describe a weights file");
  winfo->add_option("path", wi_path)->required();
  weights->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*interp) return cmd_interpolate(ia);
    if (*flow) return cmd_flow(fa);
    if (*eval) return cmd_eval(ea);
    if (*self) return cmd_selftest(sa);
    if (*winit) return cmd_weights_init(wi_config, wi_seed, wi_out);
    if (*winfo) return cmd_weights_info(wi_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
