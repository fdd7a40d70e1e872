// svtas: dataset generation, training, evaluation, streaming inference and
// gradient checks behind one binary.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "svtas/error.hpp"
#include "svtas/gradcheck.hpp"
#include "svtas/kernels.hpp"
#include "svtas/synth.hpp"
#include "svtas/train.hpp"

namespace fs = std::filesystem;
using namespace svtas;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string dataset;
  std::string out;
};

Config resolve(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (!c.dataset.empty()) cfg.data.dataset = c.dataset;
  if (!c.out.empty()) cfg.data.output = c.out;
  return cfg;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "config file ([model], [reward], [train], [data])");
  app->add_option("-s,--set", c.overrides, "override, e.g. train.lr=1e-3 (repeatable)");
  app->add_option("-d,--dataset", c.dataset, "dataset directory (overrides data.dataset)");
  app->add_option("-o,--out", c.out, "output directory (overrides data.out)");
}

fs::path need_dir(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " given");
  return p;
}

Model build_model(const Config& cfg, const Dataset& data) {
  return Model(cfg.model, data.width(), data.classes(), cfg.train.seed);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

const std::vector<FeatureStream>& pick_split(const Dataset& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "test") return data.test;
  throw ConfigError("unknown split '" + split + "' (train|test)");
}

int cmd_synth(const SynthConfig& sc, const fs::path& out) {
  const Dataset data = gen_dataset(sc);
  write_dataset(data, need_dir(out, "output directory"));
  const double ceiling = nearest_center_accuracy(data.test, class_centers(sc), sc.classes);
  std::printf("wrote %zu train / %zu test videos to %s (nearest-centre acc %.2f)\n", data.train.size(),
              data.test.size(), out.string().c_str(), ceiling);
  return 0;
}

int cmd_train(const Config& cfg) {
  const Dataset data = load_dataset(need_dir(cfg.data.dataset, "dataset"));
  const fs::path out = need_dir(cfg.data.output, "output directory");
  fs::create_directories(out);
  Model model = build_model(cfg, data);
  std::printf("mode %s, %zu parameters, kernels %s\n", to_string(cfg.train.mode).c_str(),
              parameter_count(model.parameters()), std::string(kernels::active().name).c_str());
  TrainingOptions opts;
  opts.output_dir = out;
  opts.on_row = [](const MetricsRow& row) {
    std::printf("epoch %3zu %-5s acc %6.2f edit %6.2f f1 %6.2f %6.2f %6.2f\n", row.epoch, row.split.c_str(),
                row.report.acc, row.report.edit, row.report.f1[0], row.report.f1[1], row.report.f1[2]);
    std::fflush(stdout);
  };
  const TrainingResult res = run_training(model, data, cfg.train, opts);
  std::printf("best epoch %zu: test f1@50 %.2f\n", res.best_epoch, res.best_test.f1[2]);
  return 0;
}

int cmd_eval(const Config& cfg, const std::string& checkpoint, const std::string& split) {
  const Dataset data = load_dataset(need_dir(cfg.data.dataset, "dataset"));
  const fs::path out = need_dir(cfg.data.output, "output directory");
  Model model = build_model(cfg, data);
  load_checkpoint(checkpoint, model.parameters());
  const auto& streams = pick_split(data, split);

  std::vector<EpisodeLabels> labels;
  for (const auto& s : streams) labels.push_back({s.id, rollout(model, s, cfg.train).prediction, s.labels});
  const MetricsReport report = evaluate_dataset(labels);

  fs::create_directories(out / "segments");
  std::vector<std::pair<std::string, MetricsReport>> table;
  for (const auto& e : labels) {
    table.emplace_back(e.id, evaluate_video(e.pred, e.gt));
    write_text(out / "segments" / (e.id + ".pred.txt"), format_segments(labels_to_segments(e.pred)));
    write_text(out / "segments" / (e.id + ".gt.txt"), format_segments(labels_to_segments(e.gt)));
  }
  table.emplace_back("overall", report);
  write_text(out / "eval.csv", metrics_csv_header() + "\n" + metrics_csv_row({0, split, report}) + "\n");
  const std::string text = format_report_table(table);
  write_text(out / "eval.txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

// Clips are consumed strictly in order and each block is flushed before the
// next clip is read.
int cmd_infer(const Config& cfg, const std::string& checkpoint, const std::string& split,
              const std::string& video) {
  const Dataset data = load_dataset(need_dir(cfg.data.dataset, "dataset"));
  const fs::path out = need_dir(cfg.data.output, "output directory");
  fs::create_directories(out);
  Model model = build_model(cfg, data);
  load_checkpoint(checkpoint, model.parameters());
  const ClipSpec spec = model.config().clip;

  std::vector<double> latencies;
  std::size_t videos = 0;
  for (const auto& s : pick_split(data, split)) {
    if (!video.empty() && s.id != video) continue;
    ++videos;
    std::ofstream f(out / (s.id + ".labels"), std::ios::binary);
    if (!f) throw DataError("cannot write " + (out / (s.id + ".labels")).string());
    NoGradGuard no_grad;
    MemoryBank memory = model.initial_memory();
    for (const Clip& clip : make_clips(s.frames, spec)) {
      const auto t0 = std::chrono::steady_clock::now();
      auto step = model.step(s, clip, memory);
      const auto block = decide(step.action, spec, clip.window_length());
      memory = std::move(step.memory);
      latencies.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      for (int label : block) f << label << '\n';
      f.flush();
    }
  }
  if (!video.empty() && videos == 0) throw DataError("no video '" + video + "' in split " + split);
  if (latencies.empty()) throw DataError("no clips processed");

  std::vector<double> sorted = latencies;
  std::sort(sorted.begin(), sorted.end());
  const auto q = [&](double p) { return sorted[std::size_t(p * double(sorted.size() - 1) + 0.5)]; };
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / double(sorted.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "clips,mean_ms,p50_ms,p95_ms,max_ms\n%zu,%.4f,%.4f,%.4f,%.4f\n", sorted.size(),
                mean, q(0.5), q(0.95), sorted.back());
  write_text(out / "latency.csv", buf);
  std::printf("%zu videos, %zu clips: mean %.3f ms, p50 %.3f ms, p95 %.3f ms, max %.3f ms per clip\n", videos,
              sorted.size(), mean, q(0.5), q(0.95), sorted.back());
  return 0;
}

int cmd_gradcheck(const GradCheckOptions& opts) {
  bool ok = true;
  std::printf("%-22s %6s %12s  %s\n", "check", "cases", "rel_err", "result");
  run_gradient_suite(opts, [&](const GradCheckRow& r) {
    ok = ok && r.passed;
    std::printf("%-22s %6zu %12.3e  %s\n", r.name.c_str(), r.cases, r.worst_error, r.passed ? "pass" : "FAIL");
    std::fflush(stdout);
  });
  if (!ok) throw NumericalError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming temporal action segmentation with reinforcement learning"};
  app.require_subcommand(1);
  std::string kernel_name;
  app.add_option("--kernels", kernel_name, "force kernel set (scalar|avx2)");

  Common common;
  std::string checkpoint, split = "test", video;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthConfig sc;
  std::string synth_out;
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--classes", sc.classes);
  synth->add_option("--width", sc.width);
  synth->add_option("--train", sc.train_videos, "training videos");
  synth->add_option("--test", sc.test_videos, "test videos");
  synth->add_option("--min-frames", sc.min_frames);
  synth->add_option("--max-frames", sc.max_frames);
  synth->add_option("--min-duration", sc.min_duration);
  synth->add_option("--max-duration", sc.max_duration);
  synth->add_option("--noise", sc.noise, "per-dimension sigma");
  synth->add_option("--blur", sc.blur, "boundary blend half-width");
  synth->add_option("--seed", sc.seed);

  auto* train = app.add_subcommand("train", "train a model, writing checkpoints and metrics.csv");
  add_common(train, common);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--split", split, "train|test");

  auto* infer = app.add_subcommand("infer", "stream videos clip by clip and write per-frame labels");
  add_common(infer, common);
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--split", split, "train|test");
  infer->add_option("--video", video, "only this video id");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every kernel and block");
  GradCheckOptions gopts;
  grad->add_option("--seed", gopts.seed);
  grad->add_option("--cases", gopts.cases);
  grad->add_option("--tolerance", gopts.tolerance);
  grad->add_option("--filter", gopts.filter, "substring of check names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (!kernel_name.empty() && !kernels::select(kernel_name))
      throw ConfigError("kernel set '" + kernel_name + "' unavailable");
    if (synth->parsed()) return cmd_synth(sc, synth_out);
    if (train->parsed()) return cmd_train(resolve(common));
    if (eval->parsed()) return cmd_eval(resolve(common), checkpoint, split);
    if (infer->parsed()) return cmd_infer(resolve(common), checkpoint, split, video);
    if (grad->parsed()) return cmd_gradcheck(gopts);
  } catch (const Error& e) {
    std::fprintf(stderr, "svtas: %s\n", e.what());
    switch (e.kind()) {
      case ErrorKind::usage: return 1;
      case ErrorKind::data: return 2;
      case ErrorKind::numerical: return 3;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "svtas: %s\n", e.what());
    return 2;
  }
  return 1;
}
