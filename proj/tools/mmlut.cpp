// mmlut: fuse infrared/visible image pairs through a 4D lookup table,
// train or quantize the table from a teacher fuser, evaluate fused output,
// and benchmark the pipeline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mmlut/common.hpp"
#include "mmlut/image_io.hpp"
#include "mmlut/metrics.hpp"
#include "mmlut/model.hpp"
#include "mmlut/quantize.hpp"
#include "mmlut/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0 ok                   1 invalid argument      2 file missing\n"
    "  3 decode failure       4 dimension mismatch    5 unsupported bit depth\n"
    "  6 bad magic            7 unsupported version   8 truncated file\n"
    "  9 checksum mismatch   10 image too small      11 empty dataset\n"
    " 12 I/O failure         13 numeric failure\n";

std::string replace_extension(const std::string& path, const char* ext) {
  fs::path p(path);
  p.replace_extension(ext);
  return p.string();
}

// CLI11 applies config files only on the top-level app, so each subcommand
// takes a plain --config path that main() expands into injected arguments
// before parsing. Explicit flags win over file values; unknown keys are
// rejected.
void add_config(CLI::App* cmd) {
  static std::string sink;
  cmd->add_option("--config", sink, "Read options from a key=value file");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Rewrites args in place; returns nonzero after printing an error.
int expand_config_args(CLI::App& app, std::vector<std::string>& args) {
  size_t sub_at = args.size();
  CLI::App* sub = nullptr;
  for (size_t i = 0; i < args.size(); ++i) {
    if (!args[i].empty() && args[i][0] != '-') {
      sub = app.get_subcommand_no_throw(args[i]);
      sub_at = i;
      break;
    }
  }
  if (sub == nullptr) return 0;

  std::string path;
  for (size_t i = sub_at + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return 0;

  std::ifstream in(path);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config file %s\n", path.c_str());
    return static_cast<int>(mmlut::ErrorCode::invalid_argument);
  }

  auto given = [&](const std::string& flag) {
    for (size_t i = sub_at + 1; i < args.size(); ++i) {
      if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: %s:%d: expected key=value\n", path.c_str(),
                   line_no);
      return static_cast<int>(mmlut::ErrorCode::invalid_argument);
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                              (value.front() == '\'' && value.back() == '\''))) {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty() || key == "config" ||
        sub->get_option_no_throw("--" + key) == nullptr) {
      std::fprintf(stderr, "error: %s:%d: unknown option '%s' for %s\n",
                   path.c_str(), line_no, key.c_str(), sub->get_name().c_str());
      return static_cast<int>(mmlut::ErrorCode::invalid_argument);
    }
    std::string flag = "--" + key;
    if (given(flag)) continue;
    args.push_back(flag + "=" + value);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseArgs {
  std::string lut, ir, vis, out;
  int threads = 1;
};

int run_fuse(const FuseArgs& a) {
  mmlut::Model model = mmlut::load_model(a.lut);
  mmlut::ImagePair pair = mmlut::load_image_pair(a.ir, a.vis);
  mmlut::ColorImage fused = mmlut::fuse_image(model, pair, a.threads);
  mmlut::save_color(a.out, fused);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir, out, teacher = "avg";
  mmlut::TrainConfig cfg;
  std::string resume;
  bool quiet = false;
};

int run_train(TrainArgs& a) {
  a.cfg.teacher = mmlut::parse_teacher(a.teacher);
  a.cfg.verbose = !a.quiet;
  if (a.cfg.csv_path.empty()) {
    a.cfg.csv_path = replace_extension(a.out, ".loss.csv");
  }
  if (a.cfg.checkpoint_every > 0 && a.cfg.checkpoint_prefix.empty()) {
    a.cfg.checkpoint_prefix = replace_extension(a.out, "");
  }
  std::vector<mmlut::ImagePair> dataset = mmlut::load_dataset(a.data_dir);
  mmlut::TrainResult result = mmlut::train_loop(a.cfg, dataset, a.resume);
  mmlut::save_model(a.out, result.model);
  const mmlut::LossRow& last = result.history.back();
  std::printf("wrote %s (epoch %u, L_all=%.6f, violations=%llu)\n",
              a.out.c_str(), last.epoch, last.l_all,
              static_cast<unsigned long long>(last.violations));
  return 0;
}

// ---------------------------------------------------------------------------
// quantize
// ---------------------------------------------------------------------------

struct QuantArgs {
  std::string data_dir, out, teacher = "avg";
  std::string scene_feature = "box-mean";
  std::string encoder_from;
  int grid_points = mmlut::kDefaultGridPoints;
  float bin = mmlut::kDefaultBin;
  int downsample = mmlut::kDefaultDownsample;
  int pyramid_levels = mmlut::kDefaultPyramidLevels;
  int threads = 1;
};

int run_quantize(const QuantArgs& a) {
  mmlut::TeacherKind teacher = mmlut::parse_teacher(a.teacher);
  if (a.scene_feature != "box-mean" && a.scene_feature != "encoder") {
    mmlut::fail(mmlut::ErrorCode::invalid_argument,
                "--scene-feature must be box-mean or encoder");
  }
  const bool use_encoder = a.scene_feature == "encoder";
  mmlut::Model donor;
  if (use_encoder) {
    if (a.encoder_from.empty()) {
      mmlut::fail(mmlut::ErrorCode::invalid_argument,
                  "--scene-feature encoder requires --encoder-from MODEL");
    }
    donor = mmlut::load_model(a.encoder_from);
  }

  std::vector<mmlut::ImagePair> dataset = mmlut::load_dataset(a.data_dir);
  mmlut::QuantizeResult q = mmlut::build_quantized_lut(
      dataset, teacher, a.pyramid_levels, a.grid_points, a.bin,
      use_encoder ? &donor.encoder : nullptr,
      use_encoder ? donor.downsample : a.downsample, a.threads);

  mmlut::Model model;
  model.grid = std::move(q.grid);
  model.encoder = use_encoder ? donor.encoder
                              : mmlut::make_scene_encoder<float>();
  model.downsample = use_encoder ? donor.downsample : a.downsample;
  model.scene_source = use_encoder ? mmlut::SceneSource::encoder
                                   : mmlut::SceneSource::box_mean;
  json meta;
  meta["method"] = "quantized";
  meta["teacher"] = mmlut::teacher_name(teacher);
  meta["scene_feature"] = a.scene_feature;
  meta["coverage"] = q.coverage;
  model.metadata_json = meta.dump();
  mmlut::save_model(a.out, model);

  std::printf("coverage %.6f (%llu observed, %llu propagated)\n", q.coverage,
              static_cast<unsigned long long>(q.observed),
              static_cast<unsigned long long>(q.propagated));
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string fused_dir, ir_dir, vis_dir, report, csv;
};

std::map<std::string, std::string> stem_index(const std::string& dir) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(dir)) {
    mmlut::fail(mmlut::ErrorCode::file_missing, "not a directory: " + dir);
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm") {
      out[entry.path().stem().string()] = entry.path().string();
    }
  }
  return out;
}

struct Stats {
  double mean = 0.0, stddev = 0.0;
};

Stats mean_std(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

int run_eval(const EvalArgs& a) {
  auto fused_ix = stem_index(a.fused_dir);
  auto ir_ix = stem_index(a.ir_dir);
  auto vis_ix = stem_index(a.vis_dir);

  struct Row {
    std::string name;
    mmlut::MetricReport m;
  };
  std::vector<Row> rows;
  for (const auto& [stem, fused_path] : fused_ix) {
    auto ir_it = ir_ix.find(stem);
    auto vis_it = vis_ix.find(stem);
    if (ir_it == ir_ix.end() || vis_it == vis_ix.end()) {
      std::fprintf(stderr, "warning: no matching ir/vis for '%s', skipped\n",
                   stem.c_str());
      continue;
    }
    mmlut::ImagePlane fused = mmlut::load_gray(fused_path);
    mmlut::ImagePlane ir = mmlut::load_gray(ir_it->second);
    mmlut::ImagePlane vis = mmlut::load_gray(vis_it->second);
    rows.push_back({stem, mmlut::compute_metrics(fused, ir, vis)});
  }
  if (rows.empty()) {
    mmlut::fail(mmlut::ErrorCode::empty_dataset,
                "no filename-matched fused/ir/vis triples found");
  }

  if (!a.csv.empty()) {
    mmlut::atomic_write(a.csv, [&rows](const std::string& tmp) {
      std::ofstream out(tmp);
      if (!out) mmlut::fail(mmlut::ErrorCode::io_failure, "cannot create " + tmp);
      out << "name,mi,en,cc,ssim,qabf\n";
      char buf[160];
      for (const Row& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.8f,%.8f,%.8f,%.8f,%.8f\n",
                      r.name.c_str(), r.m.mi, r.m.en, r.m.cc, r.m.ssim,
                      r.m.qabf);
        out << buf;
      }
      out.flush();
      if (!out) mmlut::fail(mmlut::ErrorCode::io_failure, "write failed: " + tmp);
    });
  }

  std::vector<double> mi, en, cc, ssim, qabf;
  for (const Row& r : rows) {
    mi.push_back(r.m.mi);
    en.push_back(r.m.en);
    cc.push_back(r.m.cc);
    ssim.push_back(r.m.ssim);
    qabf.push_back(r.m.qabf);
  }
  json report;
  report["count"] = rows.size();
  auto put = [&report](const char* key, const std::vector<double>& xs) {
    Stats s = mean_std(xs);
    report[key] = {{"mean", s.mean}, {"std", s.stddev}};
  };
  put("mi", mi);
  put("en", en);
  put("cc", cc);
  put("ssim", ssim);
  put("qabf", qabf);

  std::string text = report.dump(2);
  if (!a.report.empty()) {
    mmlut::atomic_write(a.report, [&text](const std::string& tmp) {
      std::ofstream out(tmp);
      if (!out) mmlut::fail(mmlut::ErrorCode::io_failure, "cannot create " + tmp);
      out << text << '\n';
      out.flush();
      if (!out) mmlut::fail(mmlut::ErrorCode::io_failure, "write failed: " + tmp);
    });
  }
  std::printf("%s\n", text.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string lut;
  std::string size = "640x480";
  int iters = 10;
  int warmup = 3;
  int threads = 1;
  uint64_t seed = 0;
};

int run_bench(const BenchArgs& a) {
  int w = 0, h = 0;
  if (std::sscanf(a.size.c_str(), "%dx%d", &w, &h) != 2 || w < 16 || h < 16) {
    mmlut::fail(mmlut::ErrorCode::invalid_argument,
                "--size must look like 640x480 (min 16x16)");
  }
  if (a.iters < 10 || a.warmup < 3) {
    mmlut::fail(mmlut::ErrorCode::invalid_argument,
                "need at least 3 warmup runs and 10 iterations");
  }
  mmlut::Model model = mmlut::load_model(a.lut);

  mmlut::Rng rng(a.seed);
  mmlut::ImagePair pair;
  pair.name = "bench";
  pair.ir = mmlut::ImagePlane(w, h);
  pair.vis.r = mmlut::ImagePlane(w, h);
  pair.vis.g = mmlut::ImagePlane(w, h);
  pair.vis.b = mmlut::ImagePlane(w, h);
  for (size_t i = 0; i < pair.ir.size(); ++i) {
    pair.ir.data[i] = static_cast<float>(rng.uniform(0.0, 255.0));
    pair.vis.r.data[i] = static_cast<float>(rng.uniform(0.0, 255.0));
    pair.vis.g.data[i] = static_cast<float>(rng.uniform(0.0, 255.0));
    pair.vis.b.data[i] = static_cast<float>(rng.uniform(0.0, 255.0));
  }

  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  std::vector<double> t_encode, t_scene, t_lookup, t_total;
  volatile float sink = 0.0f;  // keep results observable
  for (int it = 0; it < a.warmup + a.iters; ++it) {
    auto t0 = clock::now();
    mmlut::Encodings enc = mmlut::make_encodings(pair.ir, pair.vis);
    double d_encode = ms_since(t0);

    t0 = clock::now();
    mmlut::ImagePlane s_j = mmlut::scene_code(model, enc.n_v, enc.n_i, a.threads);
    double d_scene = ms_since(t0);

    t0 = clock::now();
    mmlut::ImagePlane fused = mmlut::fuse_luminance(model.grid, enc.n_v,
                                                    enc.n_i, enc.g_v, s_j,
                                                    a.threads);
    double d_lookup = ms_since(t0);

    sink = sink + fused.data[0];
    if (it >= a.warmup) {
      t_encode.push_back(d_encode);
      t_scene.push_back(d_scene);
      t_lookup.push_back(d_lookup);
      t_total.push_back(d_encode + d_scene + d_lookup);
    }
  }
  (void)sink;

  const double mp = static_cast<double>(w) * h / 1e6;
  auto stage = [](const std::vector<double>& xs) {
    Stats s = mean_std(xs);
    return json{{"mean_ms", s.mean}, {"std_ms", s.stddev}};
  };
  json report;
  report["resolution"] = a.size;
  report["threads"] = a.threads;
  report["warmup"] = a.warmup;
  report["iters"] = a.iters;
  report["stages"] = {{"encode_lae", stage(t_encode)},
                      {"scene_encode", stage(t_scene)},
                      {"lookup", stage(t_lookup)},
                      {"total", stage(t_total)}};
  report["lookup_mpps"] = mp / (mean_std(t_lookup).mean / 1000.0);
  report["total_mpps"] = mp / (mean_std(t_total).mean / 1000.0);
  std::printf("%s\n", report.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmlut: infrared/visible image fusion via a 4D lookup table"};
  app.require_subcommand(1);
  app.footer(kExitCodeHelp);

  FuseArgs fuse;
  CLI::App* cmd_fuse = app.add_subcommand("fuse", "Fuse one ir/vis pair");
  add_config(cmd_fuse);
  cmd_fuse->add_option("--lut", fuse.lut, "Model file (.mmlut)")->required();
  cmd_fuse->add_option("--ir", fuse.ir, "Infrared image")->required();
  cmd_fuse->add_option("--vis", fuse.vis, "Visible image")->required();
  cmd_fuse->add_option("--out", fuse.out, "Output image path")->required();
  cmd_fuse->add_option("--threads", fuse.threads, "Worker threads")
      ->check(CLI::PositiveNumber);

  TrainArgs train;
  CLI::App* cmd_train =
      app.add_subcommand("train", "Distill a teacher fuser into a model");
  add_config(cmd_train);
  cmd_train->add_option("--data-dir", train.data_dir,
                        "Dataset directory with ir/ and vis/ subdirectories")
      ->required();
  cmd_train->add_option("--out", train.out, "Output model path")->required();
  cmd_train->add_option("--teacher", train.teacher,
                        "Teacher fuser: avg, maxlum or lappyr");
  cmd_train->add_option("--epochs", train.cfg.epochs, "Training epochs")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--batch", train.cfg.batch_size, "Patches per step")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--patch", train.cfg.patch_size, "Square crop size")
      ->check(CLI::Range(17, 4096));
  cmd_train->add_option("--lr", train.cfg.adam.lr, "AdamW learning rate")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--weight-decay", train.cfg.adam.weight_decay,
                        "Decoupled decay, encoder parameters only")
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--lambda-ssim", train.cfg.weights.lambda_ssim,
                        "Structural loss weight")
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--lambda-tv", train.cfg.weights.lambda_tv,
                        "Smoothness regularizer weight")
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--lambda-m", train.cfg.weights.lambda_m,
                        "Monotonicity regularizer weight")
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--seed", train.cfg.seed, "RNG seed");
  cmd_train->add_option("--grid-points", train.cfg.grid_points,
                        "Grid points per axis")
      ->check(CLI::Range(2, 256));
  cmd_train->add_option("--bin", train.cfg.bin, "Axis bin scale")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--downsample", train.cfg.downsample,
                        "Scene encoder downsample factor")
      ->check(CLI::IsMember({1, 2, 4}));
  cmd_train->add_option("--pyramid-levels", train.cfg.pyramid_levels,
                        "Levels for the lappyr teacher")
      ->check(CLI::PositiveNumber);
  cmd_train->add_flag("--frozen-scene-feature", train.cfg.frozen_box_feature,
                      "Use the fixed box-mean scene feature (no encoder)");
  cmd_train->add_flag("--deterministic", train.cfg.deterministic,
                      "Single-sequence mode: bitwise-reproducible runs");
  cmd_train->add_option("--threads", train.cfg.threads, "Worker threads")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--checkpoint-every", train.cfg.checkpoint_every,
                        "Checkpoint cadence in epochs (0 = off)")
      ->check(CLI::NonNegativeNumber);
  cmd_train->add_option("--checkpoint-prefix", train.cfg.checkpoint_prefix,
                        "Checkpoint path prefix (.mmlut/.mmos appended)");
  cmd_train->add_option("--loss-csv", train.cfg.csv_path,
                        "Loss history CSV path");
  cmd_train->add_option("--resume", train.resume,
                        "Resume from checkpoint prefix");
  cmd_train->add_flag("--quiet", train.quiet, "No per-epoch progress");

  QuantArgs quant;
  CLI::App* cmd_quant = app.add_subcommand(
      "quantize", "Build the training-free quantization baseline");
  add_config(cmd_quant);
  cmd_quant->add_option("--data-dir", quant.data_dir,
                        "Dataset directory with ir/ and vis/ subdirectories")
      ->required();
  cmd_quant->add_option("--out", quant.out, "Output model path")->required();
  cmd_quant->add_option("--teacher", quant.teacher,
                        "Teacher fuser: avg, maxlum or lappyr");
  cmd_quant->add_option("--scene-feature", quant.scene_feature,
                        "Fourth-axis source: box-mean or encoder");
  cmd_quant->add_option("--encoder-from", quant.encoder_from,
                        "Model supplying the frozen encoder");
  cmd_quant->add_option("--grid-points", quant.grid_points,
                        "Grid points per axis")
      ->check(CLI::Range(2, 256));
  cmd_quant->add_option("--bin", quant.bin, "Axis bin scale")
      ->check(CLI::PositiveNumber);
  cmd_quant->add_option("--downsample", quant.downsample,
                        "Scene encoder downsample factor")
      ->check(CLI::IsMember({1, 2, 4}));
  cmd_quant->add_option("--pyramid-levels", quant.pyramid_levels,
                        "Levels for the lappyr teacher")
      ->check(CLI::PositiveNumber);
  cmd_quant->add_option("--threads", quant.threads, "Worker threads")
      ->check(CLI::PositiveNumber);

  EvalArgs eval;
  CLI::App* cmd_eval = app.add_subcommand(
      "eval", "Score fused images against their ir/vis sources");
  add_config(cmd_eval);
  cmd_eval->add_option("--fused-dir", eval.fused_dir, "Fused images")
      ->required();
  cmd_eval->add_option("--ir-dir", eval.ir_dir, "Infrared images")->required();
  cmd_eval->add_option("--vis-dir", eval.vis_dir, "Visible images")->required();
  cmd_eval->add_option("--report", eval.report, "Aggregate JSON report path");
  cmd_eval->add_option("--csv", eval.csv, "Per-image CSV path");

  BenchArgs bench;
  CLI::App* cmd_bench =
      app.add_subcommand("bench", "Time the fusion pipeline stage by stage");
  add_config(cmd_bench);
  cmd_bench->add_option("--lut", bench.lut, "Model file (.mmlut)")->required();
  cmd_bench->add_option("--size", bench.size, "Synthetic pair size, e.g. 640x480");
  cmd_bench->add_option("--iters", bench.iters, "Timed iterations (>= 10)");
  cmd_bench->add_option("--warmup", bench.warmup, "Warmup runs (>= 3)");
  cmd_bench->add_option("--threads", bench.threads, "Worker threads")
      ->check(CLI::PositiveNumber);
  cmd_bench->add_option("--seed", bench.seed, "Seed for the synthetic pair");

  std::vector<std::string> args(argv + 1, argv + argc);
  if (int rc = expand_config_args(app, args); rc != 0) return rc;
  std::reverse(args.begin(), args.end());

  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0
                   : static_cast<int>(mmlut::ErrorCode::invalid_argument);
  }

  try {
    if (cmd_fuse->parsed()) return run_fuse(fuse);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_quant->parsed()) return run_quantize(quant);
    if (cmd_eval->parsed()) return run_eval(eval);
    if (cmd_bench->parsed()) return run_bench(bench);
  } catch (const mmlut::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(mmlut::ErrorCode::io_failure);
  }
  return 0;
}
