#include "ctxfeat/pipeline/formats.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctxfeat/pipeline/checkpoint.h"

namespace ctxfeat {
namespace {

std::string G9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

long ReadHeader(std::istringstream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header line '" + key + "'");
  std::istringstream ls(line);
  std::string name;
  long value;
  std::string rest;
  if (!(ls >> name >> value) || name != key || (ls >> rest)) {
    throw FormatError("expected header '" + key + " <int>', got '" + line + "'");
  }
  return value;
}

std::vector<double> ReadRow(std::istringstream& in, std::size_t expected, std::size_t row) {
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("file ends before row " + std::to_string(row + 1));
  }
  std::istringstream ls(line);
  std::vector<double> values;
  std::string token;
  while (ls >> token) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw FormatError("row " + std::to_string(row + 1) + ": bad number '" + token + "'");
    }
  }
  if (values.size() != expected) {
    throw FormatError("row " + std::to_string(row + 1) + ": expected " +
                      std::to_string(expected) + " values, got " +
                      std::to_string(values.size()));
  }
  return values;
}

// Writers end every line with '\n'; a missing final newline means the file
// was cut short.
void ExpectTerminated(const std::string& text) {
  if (text.empty() || text.back() != '\n') throw FormatError("file is truncated");
}

void ExpectEnd(std::istringstream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw FormatError("unexpected trailing content: '" + line + "'");
    }
  }
}

}  // namespace

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string FormatFeatureFile(const FeatureSet& f) {
  if (f.descriptors.size() != f.keypoints.size()) {
    throw FormatError("feature set: descriptors and keypoints differ in count");
  }
  const std::size_t dim = f.descriptors.empty() ? 0 : f.descriptors.front().size();
  std::string out = "version " + std::to_string(kFeatureFileVersion) + "\n";
  out += "width " + std::to_string(f.width) + "\n";
  out += "height " + std::to_string(f.height) + "\n";
  out += "count " + std::to_string(f.keypoints.size()) + "\n";
  out += "dim " + std::to_string(dim) + "\n";
  for (std::size_t i = 0; i < f.keypoints.size(); ++i) {
    const Keypoint& k = f.keypoints[i];
    if (f.descriptors[i].size() != dim) throw FormatError("feature set: ragged descriptors");
    out += G9(k.x) + " " + G9(k.y) + " " + G9(k.score);
    for (double d : f.descriptors[i]) out += " " + G9(d);
    out += "\n";
  }
  return out;
}

FeatureSet ParseFeatureFile(const std::string& text) {
  ExpectTerminated(text);
  std::istringstream in(text);
  const long version = ReadHeader(in, "version");
  if (version != kFeatureFileVersion) {
    throw FormatError("feature file version " + std::to_string(version) + " is not supported");
  }
  FeatureSet f;
  f.width = static_cast<int>(ReadHeader(in, "width"));
  f.height = static_cast<int>(ReadHeader(in, "height"));
  const long count = ReadHeader(in, "count");
  const long dim = ReadHeader(in, "dim");
  if (f.width < 1 || f.height < 1 || count < 0 || dim < 0) {
    throw FormatError("feature file: header values out of range");
  }
  for (long i = 0; i < count; ++i) {
    const std::vector<double> row = ReadRow(in, static_cast<std::size_t>(dim) + 3, i);
    f.keypoints.push_back({row[0], row[1], row[2]});
    f.descriptors.emplace_back(row.begin() + 3, row.end());
  }
  ExpectEnd(in);
  return f;
}

void WriteFeatureFile(const std::filesystem::path& path, const FeatureSet& features) {
  WriteFileAtomic(path, FormatFeatureFile(features));
}

FeatureSet ReadFeatureFile(const std::filesystem::path& path) {
  try {
    return ParseFeatureFile(ReadTextFile(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string FormatMatchFile(const std::vector<Match>& matches) {
  std::string out = "count " + std::to_string(matches.size()) + "\n";
  for (const Match& m : matches) {
    out += std::to_string(m.index_a) + " " + std::to_string(m.index_b) + " " + G9(m.distance) +
           "\n";
  }
  return out;
}

std::vector<Match> ParseMatchFile(const std::string& text) {
  ExpectTerminated(text);
  std::istringstream in(text);
  const long count = ReadHeader(in, "count");
  if (count < 0) throw FormatError("match file: negative count");
  std::vector<Match> matches;
  for (long i = 0; i < count; ++i) {
    const std::vector<double> row = ReadRow(in, 3, i);
    if (row[0] < 0 || row[1] < 0 || row[0] != std::floor(row[0]) ||
        row[1] != std::floor(row[1])) {
      throw FormatError("match file row " + std::to_string(i + 1) + ": bad index");
    }
    matches.push_back({static_cast<int>(row[0]), static_cast<int>(row[1]), row[2]});
  }
  ExpectEnd(in);
  return matches;
}

void WriteMatchFile(const std::filesystem::path& path, const std::vector<Match>& matches) {
  WriteFileAtomic(path, FormatMatchFile(matches));
}

std::vector<Match> ReadMatchFile(const std::filesystem::path& path) {
  return ParseMatchFile(ReadTextFile(path));
}

std::vector<Pose> ParsePoseFile(const std::string& text) {
  std::istringstream in(text);
  std::vector<Pose> poses;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    const std::vector<double> v = ReadRow(row, 7, number - 1);
    const double qn = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
    if (std::abs(qn - 1.0) > 1e-6) {
      throw FormatError("pose line " + std::to_string(number) + ": quaternion is not unit");
    }
    poses.push_back(Pose::FromQuaternion(v[0], v[1], v[2], v[3], {v[4], v[5], v[6]}));
  }
  return poses;
}

std::vector<Pose> ReadPoseFile(const std::filesystem::path& path) {
  try {
    return ParsePoseFile(ReadTextFile(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ctxfeat
