#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "ctxfeat/synthdata/synthdata.h"

namespace ctxfeat {
namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string HeaderToken(std::istream& in) {
  std::string token;
  while (in) {
    const int c = in.get();
    if (c == EOF) break;
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

int HeaderInt(std::istream& in, const std::filesystem::path& path) {
  const std::string token = HeaderToken(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used == token.size() && v > 0) return v;
  } catch (const std::exception&) {
  }
  throw ImageError(path.string() + ": bad PPM header field '" + token + "'");
}

}  // namespace

Grid ReadPpm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError(path.string() + ": cannot open image");
  if (HeaderToken(in) != "P6") throw ImageError(path.string() + ": not a binary PPM (P6)");
  const int width = HeaderInt(in, path);
  const int height = HeaderInt(in, path);
  const int maxval = HeaderInt(in, path);
  if (maxval > 255) throw ImageError(path.string() + ": only 8-bit PPM is supported");

  const std::size_t plane = static_cast<std::size_t>(width) * height;
  std::vector<unsigned char> raw(plane * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw ImageError(path.string() + ": truncated pixel data");
  }
  Grid image(Shape{3, height, width});
  auto out = image.mutable_data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) out[c * plane + i] = raw[3 * i + c] / static_cast<double>(maxval);
  }
  return image;
}

void WritePpm(const std::filesystem::path& path, const Grid& image) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw ShapeError("write_ppm: expected 3 x H x W, got " + ShapeString(image.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(image.height()) * image.width();
  std::vector<unsigned char> raw(plane * 3);
  auto v = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      raw[3 * i + c] = static_cast<unsigned char>(
          std::lround(std::clamp(v[c * plane + i], 0.0, 1.0) * 255.0));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError(path.string() + ": cannot write image");
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

}  // namespace ctxfeat
