#include "ctxfeat/pipeline/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ctxfeat {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

class Writer {
 public:
  template <typename T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void doubles(std::span<const double> values) {
    out_.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string bytes() {
    const std::uint32_t n = get<std::uint32_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(std::span<double> out) {
    need(out.size() * sizeof(double));
    std::memcpy(out.data(), in_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointTruncatedError("checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

// Guards allocations driven by untrusted counts.
void CheckCount(std::uint64_t count, std::uint64_t limit, const char* what) {
  if (count > limit) {
    throw CheckpointFormatError(std::string("checkpoint: implausible ") + what + " " +
                                std::to_string(count));
  }
}

}  // namespace

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : kCheckpointMagic) w.put<char>(c);
  w.put<std::uint32_t>(kCheckpointVersion);

  const ModelConfig& m = ckpt.model;
  w.put<std::uint32_t>(m.descriptor_dim);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.backbone_channels.size()));
  for (int c : m.backbone_channels) w.put<std::uint32_t>(c);
  w.put<std::uint32_t>(m.semantic_channels);
  w.put<std::uint32_t>(m.semantic_branches);
  w.put<std::uint64_t>(m.seed);
  w.put<std::uint8_t>(m.detach_score_mask ? 1 : 0);

  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, grid] : ckpt.params) {
    w.bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.rank()));
    for (int d : grid.shape()) w.put<std::uint32_t>(d);
    w.doubles(grid.data());
  }

  const bool has_moments = !ckpt.adam_m.empty();
  if (has_moments &&
      (ckpt.adam_m.size() != ckpt.params.size() || ckpt.adam_v.size() != ckpt.params.size())) {
    throw CheckpointFormatError("checkpoint: optimizer moments do not match parameters");
  }
  w.put<std::uint8_t>(has_moments ? 1 : 0);
  if (has_moments) {
    std::size_t i = 0;
    for (const auto& [name, grid] : ckpt.params) {
      if (ckpt.adam_m[i].size() != grid.size() || ckpt.adam_v[i].size() != grid.size()) {
        throw CheckpointFormatError("checkpoint: moment size mismatch for " + name);
      }
      w.doubles(ckpt.adam_m[i]);
      w.doubles(ckpt.adam_v[i]);
      ++i;
    }
  }
  w.put<std::uint64_t>(ckpt.step);
  w.bytes(ckpt.rng_state);
  return w.take();
}

Checkpoint DeserializeCheckpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic)) {
    if (bytes.empty() ||
        std::memcmp(bytes.data(), kCheckpointMagic, bytes.size()) == 0) {
      throw CheckpointTruncatedError("checkpoint truncated inside the magic bytes");
    }
    throw CheckpointMagicError("not a checkpoint: bad magic bytes");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw CheckpointMagicError("not a checkpoint: bad magic bytes");
  }
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof(kCheckpointMagic); ++i) r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint version " + std::to_string(version) +
                                 " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ckpt;
  ModelConfig& m = ckpt.model;
  m.descriptor_dim = static_cast<int>(r.get<std::uint32_t>());
  const auto layers = r.get<std::uint32_t>();
  CheckCount(layers, 1024, "layer count");
  m.backbone_channels.clear();
  for (std::uint32_t i = 0; i < layers; ++i) {
    m.backbone_channels.push_back(static_cast<int>(r.get<std::uint32_t>()));
  }
  m.semantic_channels = static_cast<int>(r.get<std::uint32_t>());
  m.semantic_branches = static_cast<int>(r.get<std::uint32_t>());
  m.seed = r.get<std::uint64_t>();
  const auto detach = r.get<std::uint8_t>();
  if (detach > 1) throw CheckpointFormatError("checkpoint: bad detach flag");
  m.detach_score_mask = detach == 1;

  const auto count = r.get<std::uint32_t>();
  CheckCount(count, 1u << 16, "parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes();
    const auto rank = r.get<std::uint32_t>();
    CheckCount(rank, 8, "rank");
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint32_t>();
      if (dim == 0) throw CheckpointFormatError("checkpoint: zero dimension in " + name);
      shape.push_back(static_cast<int>(dim));
      elements *= dim;
      CheckCount(elements, std::uint64_t{1} << 40, "parameter size");
    }
    if (elements > r.remaining() / sizeof(double)) {
      throw CheckpointTruncatedError("checkpoint truncated inside parameter " + name);
    }
    Grid grid(shape);
    r.doubles(grid.mutable_data());
    if (ckpt.params.contains(name)) {
      throw CheckpointFormatError("checkpoint: duplicate parameter " + name);
    }
    ckpt.params.add(std::move(name), grid);
  }

  const auto has_moments = r.get<std::uint8_t>();
  if (has_moments > 1) throw CheckpointFormatError("checkpoint: bad moment flag");
  if (has_moments == 1) {
    for (const auto& [name, grid] : ckpt.params) {
      std::vector<double> mm(grid.size()), vv(grid.size());
      r.doubles(mm);
      r.doubles(vv);
      ckpt.adam_m.push_back(std::move(mm));
      ckpt.adam_v.push_back(std::move(vv));
    }
  }
  ckpt.step = r.get<std::uint64_t>();
  ckpt.rng_state = r.bytes();
  if (r.remaining() != 0) throw CheckpointFormatError("checkpoint: trailing bytes");
  try {
    ckpt.model.Validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointFormatError(std::string("checkpoint: ") + e.what());
  }
  return ckpt;
}

void WriteFileAtomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return DeserializeCheckpoint(ss.str());
}

}  // namespace ctxfeat
