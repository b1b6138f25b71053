#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ctxfeat/pipeline/checkpoint.h"
#include "ctxfeat/pipeline/config.h"
#include "ctxfeat/pipeline/dataset.h"
#include "ctxfeat/pipeline/evaluate.h"
#include "ctxfeat/pipeline/formats.h"
#include "ctxfeat/pipeline/train.h"

namespace {

using namespace ctxfeat;

void RequireFiles(const std::vector<std::string>& paths) {
  std::string missing;
  for (const std::string& p : paths) {
    if (!p.empty() && !std::filesystem::exists(p)) missing += (missing.empty() ? "" : ", ") + p;
  }
  if (!missing.empty()) throw std::runtime_error("missing files: " + missing);
}

int RunTrain(const std::string& config_path, const std::string& out_path) {
  RequireFiles({config_path});
  const TrainConfig config = LoadTrainConfig(config_path);
  const TrainResult result = Train(config, [&](const StepLog& log) {
    if (log.step % config.log_every != 0) return;
    std::printf("step %llu", static_cast<unsigned long long>(log.step));
    for (const auto& [name, value] : log.terms) std::printf(" %s=%.6f", name.c_str(), value);
    std::printf("\n");
    std::fflush(stdout);
  });
  SaveCheckpoint(result.checkpoint, out_path);
  std::printf("saved %s after %llu steps\n", out_path.c_str(),
              static_cast<unsigned long long>(result.checkpoint.step));
  return 0;
}

int RunExtract(const std::string& ckpt_path, const std::string& image_path,
               const DetectSettings& detect, const std::string& out_path) {
  RequireFiles({ckpt_path, image_path});
  const Checkpoint ckpt = LoadCheckpoint(ckpt_path);
  const Grid image = ReadPpm(image_path);
  const FeatureSet features = ExtractFeatures(ckpt.params, ckpt.model, image, detect);
  WriteFeatureFile(out_path, features);
  std::printf("%zu keypoints -> %s\n", features.size(), out_path.c_str());
  return 0;
}

int RunMatch(const std::string& a_path, const std::string& b_path, const std::string& out_path) {
  RequireFiles({a_path, b_path});
  const FeatureSet a = ReadFeatureFile(a_path);
  const FeatureSet b = ReadFeatureFile(b_path);
  const std::vector<Match> matches =
      a.size() == 0 || b.size() == 0 ? std::vector<Match>{} : MutualNnMatch(a, b);
  WriteMatchFile(out_path, matches);
  std::printf("%zu matches -> %s\n", matches.size(), out_path.c_str());
  return 0;
}

int RunEval(const std::string& ckpt_path, const std::string& scenes, bool ablation,
            const std::string& poses, const std::string& gt_poses, const EvalSettings& settings,
            const std::string& report_path) {
  RequireFiles({ckpt_path, poses, gt_poses});
  if (poses.empty() != gt_poses.empty()) {
    throw std::runtime_error("--poses and --gt-poses must be given together");
  }
  const Checkpoint ckpt = LoadCheckpoint(ckpt_path);
  const std::vector<ImagePair> pairs = BuildPairs(ParseSceneSpec(scenes));
  MetricsReport report = EvaluateScenes(ckpt, pairs, scenes, settings, ablation);
  if (!poses.empty()) {
    const std::vector<PoseError> errors = PoseErrors(ReadPoseFile(poses), ReadPoseFile(gt_poses));
    report.pose_buckets = BucketRates(errors);
    report.pose_count = errors.size();
  }
  const std::string text = RenderReport(report, settings);
  WriteFileAtomic(report_path, text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctxfeat: context-fused local features"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "key = value config file")->required();
  train->add_option("--out", out_path, "checkpoint to write")->required();

  std::string ckpt_path, image_path;
  DetectSettings detect;
  auto* extract = app.add_subcommand("extract", "detect and describe keypoints in a PPM image");
  extract->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  extract->add_option("--image", image_path, "binary PPM (P6) image")->required();
  extract->add_option("--k", detect.k, "maximum number of keypoints")->check(CLI::PositiveNumber);
  extract->add_option("--nms", detect.nms_radius, "NMS radius in pixels")->check(CLI::PositiveNumber);
  extract->add_option("--border", detect.border, "excluded border margin")->check(CLI::NonNegativeNumber);
  extract->add_option("--out", out_path, "feature file to write")->required();

  std::string a_path, b_path;
  auto* match = app.add_subcommand("match", "mutual nearest-neighbour matching");
  match->add_option("--a", a_path, "feature file of image A")->required();
  match->add_option("--b", b_path, "feature file of image B")->required();
  match->add_option("--out", out_path, "match file to write")->required();

  std::string scenes, poses, gt_poses, report_path;
  bool ablation = false;
  EvalSettings eval_settings;
  auto* eval = app.add_subcommand("eval", "repeatability, matching and pose-bucket report");
  eval->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  eval->add_option("--scenes", scenes, "synthetic:count=N,seed=S,size=P | dir:<path>")->required();
  eval->add_flag("--ablation", ablation, "baseline / +LG / +LG+MA rows");
  eval->add_option("--poses", poses, "estimated poses, one `w x y z px py pz` per line");
  eval->add_option("--gt-poses", gt_poses, "ground-truth poses aligned with --poses");
  eval->add_option("--k", eval_settings.detect.k)->check(CLI::PositiveNumber);
  eval->add_option("--nms", eval_settings.detect.nms_radius)->check(CLI::PositiveNumber);
  eval->add_option("--border", eval_settings.detect.border)->check(CLI::NonNegativeNumber);
  eval->add_option("--tol", eval_settings.tolerance_px, "pixel tolerance")->check(CLI::PositiveNumber);
  eval->add_option("--report", report_path, "report file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return RunTrain(config_path, out_path);
    if (*extract) return RunExtract(ckpt_path, image_path, detect, out_path);
    if (*match) return RunMatch(a_path, b_path, out_path);
    if (*eval) {
      return RunEval(ckpt_path, scenes, ablation, poses, gt_poses, eval_settings, report_path);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ctxfeat: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
