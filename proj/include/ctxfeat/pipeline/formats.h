#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxfeat/detectmatch/detectmatch.h"
#include "ctxfeat/detectmatch/geometry.h"

namespace ctxfeat {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kFeatureFileVersion = 1;

// Header lines `version`, `width`, `height`, `count`, `dim` as `key value`,
// then `x y score d1 ... dD` per keypoint, 9 significant digits.
std::string FormatFeatureFile(const FeatureSet& features);
FeatureSet ParseFeatureFile(const std::string& text);
void WriteFeatureFile(const std::filesystem::path& path, const FeatureSet& features);
FeatureSet ReadFeatureFile(const std::filesystem::path& path);

// Header `count n`, then `index_a index_b distance` per match.
std::string FormatMatchFile(const std::vector<Match>& matches);
std::vector<Match> ParseMatchFile(const std::string& text);
void WriteMatchFile(const std::filesystem::path& path, const std::vector<Match>& matches);
std::vector<Match> ReadMatchFile(const std::filesystem::path& path);

// One pose per line: `w x y z px py pz`; blank lines and '#' comments skipped.
std::vector<Pose> ParsePoseFile(const std::string& text);
std::vector<Pose> ReadPoseFile(const std::filesystem::path& path);

std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace ctxfeat
