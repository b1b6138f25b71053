#include "ctxfeat/pipeline/config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace ctxfeat {
namespace {

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T ParseNumber(const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw std::invalid_argument("not a number: " + text);
  return value;
}

bool ParseBool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("not a boolean: " + text);
}

std::vector<int> ParseIntList(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ParseNumber<int>(Trim(item)));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> parse;
  std::function<std::string(const TrainConfig&)> format;
};

template <typename T>
Field NumberField(const char* key, T TrainConfig::*member) {
  return {key, [member](TrainConfig& c, const std::string& v) { c.*member = ParseNumber<T>(v); },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return FormatDouble(c.*member);
            else return std::to_string(c.*member);
          }};
}

// Accessor-based field for nested members.
template <typename T, typename Get>
Field NestedField(const char* key, Get get) {
  return {key,
          [get](TrainConfig& c, const std::string& v) { get(c) = ParseNumber<T>(v); },
          [get](const TrainConfig& c) {
            T value = get(const_cast<TrainConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return FormatDouble(value);
            else return std::to_string(value);
          }};
}

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      NumberField("epochs", &TrainConfig::epochs),
      NumberField("steps", &TrainConfig::steps),
      NumberField("batch_size", &TrainConfig::batch_size),
      NumberField("learning_rate", &TrainConfig::learning_rate),
      NumberField("weight_decay", &TrainConfig::weight_decay),
      NumberField("seed", &TrainConfig::seed),
      NumberField("log_every", &TrainConfig::log_every),
      NestedField<double>("lambda", [](TrainConfig& c) -> double& { return c.loss.lambda; }),
      NestedField<double>("kappa", [](TrainConfig& c) -> double& { return c.loss.kappa; }),
      NestedField<int>("patch_size", [](TrainConfig& c) -> int& { return c.loss.patch_size; }),
      NestedField<int>("patch_stride",
                       [](TrainConfig& c) -> int& { return c.loss.patch_stride; }),
      NestedField<int>("ap_bins", [](TrainConfig& c) -> int& { return c.loss.ap_bins; }),
      NestedField<int>("ap_queries", [](TrainConfig& c) -> int& { return c.ap.queries; }),
      NestedField<int>("ap_candidates", [](TrainConfig& c) -> int& { return c.ap.candidates; }),
      NestedField<double>("ap_positive_radius",
                          [](TrainConfig& c) -> double& { return c.ap.positive_radius; }),
      NestedField<int>("descriptor_dim",
                       [](TrainConfig& c) -> int& { return c.model.descriptor_dim; }),
      {"backbone_channels",
       [](TrainConfig& c, const std::string& v) { c.model.backbone_channels = ParseIntList(v); },
       [](const TrainConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.model.backbone_channels.size(); ++i) {
           out += (i ? "," : "") + std::to_string(c.model.backbone_channels[i]);
         }
         return out;
       }},
      NestedField<int>("semantic_channels",
                       [](TrainConfig& c) -> int& { return c.model.semantic_channels; }),
      NestedField<int>("semantic_branches",
                       [](TrainConfig& c) -> int& { return c.model.semantic_branches; }),
      NestedField<std::uint64_t>("model_seed",
                                 [](TrainConfig& c) -> std::uint64_t& { return c.model.seed; }),
      {"detach_score_mask",
       [](TrainConfig& c, const std::string& v) { c.model.detach_score_mask = ParseBool(v); },
       [](const TrainConfig& c) { return std::string(c.model.detach_score_mask ? "true" : "false"); }},
      NumberField("synthetic_pairs", &TrainConfig::synthetic_pairs),
      NumberField("image_size", &TrainConfig::image_size),
      {"corpus_dir", [](TrainConfig& c, const std::string& v) { c.corpus_dir = v; },
       [](const TrainConfig& c) { return c.corpus_dir; }},
      NestedField<double>("max_rotation_deg",
                          [](TrainConfig& c) -> double& { return c.homography.max_rotation_deg; }),
      NestedField<double>("max_translation_frac", [](TrainConfig& c) -> double& {
        return c.homography.max_translation_frac;
      }),
      NestedField<double>("max_perspective",
                          [](TrainConfig& c) -> double& { return c.homography.max_perspective; }),
      NestedField<double>("max_scale_delta",
                          [](TrainConfig& c) -> double& { return c.homography.max_scale_delta; }),
      NestedField<double>("jitter_brightness",
                          [](TrainConfig& c) -> double& { return c.jitter.brightness; }),
      NestedField<double>("jitter_contrast_min",
                          [](TrainConfig& c) -> double& { return c.jitter.contrast_min; }),
      NestedField<double>("jitter_contrast_max",
                          [](TrainConfig& c) -> double& { return c.jitter.contrast_max; }),
      NestedField<double>("jitter_noise_sigma",
                          [](TrainConfig& c) -> double& { return c.jitter.noise_sigma; }),
      {"init_checkpoint", [](TrainConfig& c, const std::string& v) { c.init_checkpoint = v; },
       [](const TrainConfig& c) { return c.init_checkpoint; }},
  };
  return fields;
}

}  // namespace

void TrainConfig::Validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
  };
  require(epochs >= 0, "epochs must be >= 0");
  require(steps >= 0, "steps must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(log_every >= 1, "log_every must be >= 1");
  require(loss.lambda >= 0.0, "lambda must be >= 0");
  require(loss.kappa >= 0.0 && loss.kappa <= 1.0, "kappa must be in [0, 1]");
  require(loss.patch_size >= 1 && loss.patch_stride >= 1, "patch_size and patch_stride must be >= 1");
  require(loss.patch_size <= image_size, "patch_size must not exceed image_size");
  require(loss.ap_bins >= 2, "ap_bins must be >= 2");
  require(ap.queries >= 1 && ap.candidates >= 0 && ap.positive_radius > 0.0,
          "ap sampling parameters out of range");
  require(synthetic_pairs >= 1, "synthetic_pairs must be >= 1");
  require(image_size >= 16, "image_size must be >= 16");
  require(image_size % (1 << (model.semantic_branches - 1)) == 0,
          "image_size must be divisible by 2^(semantic_branches - 1)");
  require(homography.max_rotation_deg >= 0 && homography.max_translation_frac >= 0 &&
              homography.max_perspective >= 0 && homography.max_scale_delta >= 0,
          "homography ranges must be >= 0");
  require(homography.max_scale_delta < 1.0, "max_scale_delta must be < 1");
  require(jitter.brightness >= 0 && jitter.noise_sigma >= 0 && jitter.contrast_min > 0 &&
              jitter.contrast_min <= jitter.contrast_max,
          "jitter parameters out of range");
  try {
    model.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

TrainConfig ParseTrainConfig(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const Field& f : Fields()) {
      if (key == f.key) field = &f;
    }
    if (field == nullptr) {
      throw ConfigError("config line " + std::to_string(number) + ": unknown key '" + key + "'");
    }
    try {
      field->parse(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + key + ": " + e.what());
    }
  }
  config.Validate();
  return config;
}

TrainConfig LoadTrainConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ParseTrainConfig(ss.str());
}

std::string FormatTrainConfig(const TrainConfig& config) {
  std::string out;
  for (const Field& f : Fields()) out += std::string(f.key) + " = " + f.format(config) + "\n";
  return out;
}

}  // namespace ctxfeat
