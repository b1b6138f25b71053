#include "ctxfeat/pipeline/evaluate.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace ctxfeat {
namespace {

double WindowContrast(const Grid& image, int cx, int cy, int radius) {
  double range = 0.0;
  for (int c = 0; c < image.channels(); ++c) {
    double lo = image.at(c, cy, cx), hi = lo;
    for (int y = std::max(0, cy - radius); y <= std::min(image.height() - 1, cy + radius); ++y) {
      for (int x = std::max(0, cx - radius); x <= std::min(image.width() - 1, cx + radius); ++x) {
        lo = std::min(lo, image.at(c, y, x));
        hi = std::max(hi, image.at(c, y, x));
      }
    }
    range = std::max(range, hi - lo);
  }
  return range;
}

std::string Fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string Pad(const std::string& s, std::size_t width) {
  return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
}

std::string KeyPrefix(const std::string& label) {
  if (label == kAblationLabels[0]) return "baseline";
  if (label == kAblationLabels[1]) return "lg";
  return "lg_ma";
}

std::uint64_t ParseUnsigned(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw std::invalid_argument("scene spec: bad value for " + key + ": '" + value + "'");
  }
  return v;
}

double ParseReal(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw std::invalid_argument("scene spec: bad value for " + key + ": '" + value + "'");
  }
  return v;
}

}  // namespace

FeatureSet ExtractFeatures(const Parameters& params, const ModelConfig& model, const Grid& image,
                           const DetectSettings& settings, const FusionToggles& toggles) {
  Tape tape;
  const ModelOutputs out = FullForward(tape, image, params, model, toggles);
  FeatureSet set;
  set.width = image.width();
  set.height = image.height();
  for (const Keypoint& kp : Detect(out.final.score, std::max(1, image.height() * image.width()),
                                   settings.nms_radius, settings.border)) {
    if (static_cast<int>(set.keypoints.size()) == settings.k) break;
    const int x = static_cast<int>(kp.x), y = static_cast<int>(kp.y);
    if (WindowContrast(image, x, y, settings.nms_radius) < settings.min_contrast) continue;
    set.keypoints.push_back(kp);
  }
  set.descriptors = SampleDescriptors(out.final.descriptors, set.keypoints);
  return set;
}

PairMetrics EvaluatePair(const Parameters& params, const ModelConfig& model,
                         const ImagePair& pair, const EvalSettings& settings,
                         const FusionToggles& toggles) {
  PairMetrics m;
  m.features_a = ExtractFeatures(params, model, pair.image_a, settings.detect, toggles);
  m.features_b = ExtractFeatures(params, model, pair.image_b, settings.detect, toggles);
  if (m.features_a.size() == 0 || m.features_b.size() == 0) return m;
  m.repeatability = RepeatabilityMetric(
      m.features_a.keypoints, m.features_b.keypoints, pair.homography, settings.tolerance_px,
      pair.image_a.width(), pair.image_a.height(), pair.image_b.width(), pair.image_b.height());
  const std::vector<Match> matches = MutualNnMatch(m.features_a, m.features_b);
  m.matches = matches.size();
  m.matching_score =
      MatchingScore(m.features_a, m.features_b, matches, pair.homography, settings.tolerance_px);
  double sum = 0.0;
  for (const Match& match : matches) sum += match.distance;
  m.mean_match_distance = matches.empty() ? 0.0 : sum / static_cast<double>(matches.size());
  return m;
}

std::array<FusionToggles, 3> AblationToggles() {
  return {FusionToggles{false, false}, FusionToggles{true, false}, FusionToggles{true, true}};
}

MetricsReport EvaluateScenes(const Checkpoint& checkpoint, const std::vector<ImagePair>& pairs,
                             const std::string& scenes, const EvalSettings& settings,
                             bool ablation) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no scene pairs");
  MetricsReport report;
  report.scenes = scenes;
  report.pairs = pairs.size();
  report.ablation = ablation;
  std::vector<std::pair<std::string, FusionToggles>> configs;
  if (ablation) {
    const auto toggles = AblationToggles();
    for (std::size_t i = 0; i < toggles.size(); ++i) configs.emplace_back(kAblationLabels[i], toggles[i]);
  } else {
    configs.emplace_back(kAblationLabels[2], FusionToggles{});
  }
  for (const auto& [label, toggles] : configs) {
    MetricsRow row{label, toggles};
    for (const ImagePair& pair : pairs) {
      const PairMetrics m = EvaluatePair(checkpoint.params, checkpoint.model, pair, settings, toggles);
      row.repeatability += m.repeatability;
      row.matching_score += m.matching_score;
      row.mean_match_distance += m.mean_match_distance;
    }
    const double n = static_cast<double>(pairs.size());
    row.repeatability /= n;
    row.matching_score /= n;
    row.mean_match_distance /= n;
    report.rows.push_back(row);
  }
  return report;
}

std::vector<PoseError> PoseErrors(const std::vector<Pose>& estimates,
                                  const std::vector<Pose>& ground_truth) {
  if (estimates.size() != ground_truth.size()) {
    throw std::invalid_argument("pose files differ in length: " +
                                std::to_string(estimates.size()) + " estimates vs " +
                                std::to_string(ground_truth.size()) + " ground-truth poses");
  }
  std::vector<PoseError> errors;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    errors.push_back(ComputePoseError(estimates[i], ground_truth[i]));
  }
  return errors;
}

std::string RenderReport(const MetricsReport& report, const EvalSettings& settings) {
  std::ostringstream out;
  out << "ctxfeat evaluation report\n";
  out << "scenes: " << report.scenes << " (" << report.pairs << " pairs)\n";
  out << "repeatability: keypoints of A projected into B, matched greedily one-to-one "
         "nearest-first within "
      << Fixed(settings.tolerance_px, 1)
      << " px, divided by min(in-view count of A, in-view count of B)\n";
  out << "matching score: mutual-NN matches within " << Fixed(settings.tolerance_px, 1)
      << " px under the ground-truth homography / matches\n";
  if (report.ablation) {
    out << "ablation: all rows use the same checkpoint with modules toggled at inference "
           "time (LG off: score mask = 1; MA off: aggregation bypassed); no row is a "
           "retrained model\n";
  }
  out << "\n";

  const std::vector<std::string> header = {"Method", "Repeatability", "Matching score",
                                           "Mean match distance"};
  std::vector<std::size_t> widths;
  for (const std::string& h : header) widths.push_back(h.size());
  for (const MetricsRow& row : report.rows) widths[0] = std::max(widths[0], row.label.size());
  auto line = [&](const std::vector<std::string>& cells) {
    out << "|";
    for (std::size_t i = 0; i < cells.size(); ++i) out << " " << Pad(cells[i], widths[i]) << " |";
    out << "\n";
  };
  line(header);
  out << "|";
  for (std::size_t w : widths) out << std::string(w + 2, '-') << "|";
  out << "\n";
  for (const MetricsRow& row : report.rows) {
    line({row.label, Fixed(row.repeatability, 3), Fixed(row.matching_score, 3),
          Fixed(row.mean_match_distance, 3)});
  }
  if (report.pose_buckets) {
    out << "\npose error buckets (0.5m, 2°) / (1m, 5°) / (5m, 10°): "
        << FormatBucketRates(*report.pose_buckets) << " over " << report.pose_count
        << " poses\n";
  }

  out << "\n";
  out << "pairs = " << report.pairs << "\n";
  out << "tolerance_px = " << Fixed(settings.tolerance_px, 1) << "\n";
  for (const MetricsRow& row : report.rows) {
    const std::string key = report.ablation ? KeyPrefix(row.label) : "full";
    out << key << ".repeatability = " << Fixed(row.repeatability, 6) << "\n";
    out << key << ".matching_score = " << Fixed(row.matching_score, 6) << "\n";
    out << key << ".mean_match_distance = " << Fixed(row.mean_match_distance, 6) << "\n";
  }
  if (report.pose_buckets) {
    out << "pose.count = " << report.pose_count << "\n";
    out << "pose.0.5m_2deg = " << Fixed((*report.pose_buckets)[0], 1) << "\n";
    out << "pose.1m_5deg = " << Fixed((*report.pose_buckets)[1], 1) << "\n";
    out << "pose.5m_10deg = " << Fixed((*report.pose_buckets)[2], 1) << "\n";
  }
  return out.str();
}

DatasetSpec ParseSceneSpec(const std::string& spec) {
  DatasetSpec out;
  std::string rest;
  if (spec.rfind("synthetic:", 0) == 0) {
    rest = spec.substr(10);
  } else if (spec == "synthetic") {
    rest = "";
  } else if (spec.rfind("dir:", 0) == 0) {
    rest = spec.substr(4);
    const auto comma = rest.find(',');
    out.corpus_dir = rest.substr(0, comma);
    rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
  } else if (std::filesystem::is_directory(spec)) {
    out.corpus_dir = spec;
  } else {
    throw std::invalid_argument("scene spec '" + spec +
                                "' is neither synthetic:<options>, dir:<path> nor a directory");
  }
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("scene spec: expected key=value in '" + item + "'");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "count") out.count = static_cast<int>(ParseUnsigned(key, value));
    else if (key == "seed") out.seed = ParseUnsigned(key, value);
    else if (key == "size") out.size = static_cast<int>(ParseUnsigned(key, value));
    else if (key == "identity") out.identity = ParseUnsigned(key, value) != 0;
    else if (key == "rotation") out.homography.max_rotation_deg = ParseReal(key, value);
    else if (key == "translation") out.homography.max_translation_frac = ParseReal(key, value);
    else if (key == "perspective") out.homography.max_perspective = ParseReal(key, value);
    else if (key == "scale") out.homography.max_scale_delta = ParseReal(key, value);
    else if (key == "jitter") {
      if (ParseUnsigned(key, value) == 0) out.jitter = PhotometricJitter::None();
    } else {
      throw std::invalid_argument("scene spec: unknown key '" + key + "'");
    }
  }
  if (out.count < 1) throw std::invalid_argument("scene spec: count must be >= 1");
  if (out.size < 16) throw std::invalid_argument("scene spec: size must be >= 16");
  return out;
}

}  // namespace ctxfeat
