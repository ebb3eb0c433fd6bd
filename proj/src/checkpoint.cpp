#include "tpap/checkpoint.hpp"

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <fcntl.h>
#include <unistd.h>

#include "json.hpp"

namespace tpap {

const char* to_string(CheckpointError::Kind kind) noexcept {
  switch (kind) {
    case CheckpointError::Kind::io: return "io";
    case CheckpointError::Kind::bad_magic: return "bad_magic";
    case CheckpointError::Kind::bad_version: return "bad_version";
    case CheckpointError::Kind::truncated: return "truncated";
    case CheckpointError::Kind::bad_shape: return "bad_shape";
    case CheckpointError::Kind::bad_architecture: return "bad_architecture";
    case CheckpointError::Kind::bad_metadata: return "bad_metadata";
    case CheckpointError::Kind::trailing_data: return "trailing_data";
  }
  return "unknown";
}

namespace {

constexpr char kMagic[8] = {'T', 'P', 'A', 'P', 'C', 'K', 'P', 'T'};
constexpr char kBundleMagic[8] = {'T', 'P', 'A', 'P', 'T', 'E', 'N', 'S'};
constexpr std::uint32_t kBundleVersion = 1;
constexpr std::size_t kMaxRank = 8;

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint32_t>::max()) throw Error("checkpoint: string too long");
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (float f : t.data()) u32(std::bit_cast<std::uint32_t>(f));
  }
  const std::string& buffer() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  void need(std::size_t n, const std::string& what) const {
    if (data_.size() - pos_ < n)
      throw CheckpointError(Kind::truncated, path_ + ": truncated while reading " + what);
  }
  std::string raw(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(const std::string& what) { return raw(u32(what + " length"), what); }

  std::pair<std::string, Tensor> tensor(std::size_t index) {
    const std::string name = str("tensor #" + std::to_string(index) + " name");
    const std::uint32_t rank = u32("rank of tensor '" + name + "'");
    if (rank == 0 || rank > kMaxRank)
      throw CheckpointError(Kind::bad_shape, path_ + ": tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      const std::uint64_t v = u64("shape of tensor '" + name + "'");
      if (v > (std::uint64_t{1} << 40) || (numel && v > (std::uint64_t{1} << 40) / numel))
        throw CheckpointError(Kind::bad_shape, path_ + ": tensor '" + name + "' has an implausible shape");
      d = static_cast<std::size_t>(v);
      numel *= v;
    }
    need(4 * numel, "payload of tensor '" + name + "'");
    std::vector<float> values(numel);
    for (auto& f : values) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
      f = std::bit_cast<float>(bits);
      pos_ += 4;
    }
    try {
      return {name, Tensor(shape, std::move(values))};
    } catch (const ShapeError& e) {
      throw CheckpointError(Kind::bad_shape, path_ + ": tensor '" + name + "': " + e.what());
    }
  }

  void expect_magic(const char (&magic)[8]) {
    // A short prefix of the magic is an interrupted write, not a foreign file.
    if (data_.size() < 8 && std::memcmp(data_.data(), magic, data_.size()) == 0)
      throw CheckpointError(Kind::truncated, path_ + ": truncated while reading magic");
    if (data_.size() < 8 || std::memcmp(data_.data(), magic, 8) != 0)
      throw CheckpointError(Kind::bad_magic, path_ + ": not a " + std::string(magic, 8) + " file");
    pos_ = 8;
  }
  void expect_end() const {
    if (pos_ != data_.size())
      throw CheckpointError(Kind::trailing_data,
                            path_ + ": " + std::to_string(data_.size() - pos_) + " unexpected trailing bytes");
  }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, path.string() + ": cannot open for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw CheckpointError(Kind::io, path.string() + ": read failed");
  return data;
}

void write_file_durably(const std::filesystem::path& path, const std::string& data) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw CheckpointError(Kind::io, tmp.string() + ": " + std::strerror(errno));
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t w = ::write(fd, data.data() + done, data.size() - done);
    if (w < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      ::close(fd);
      throw CheckpointError(Kind::io, tmp.string() + ": " + why);
    }
    done += static_cast<std::size_t>(w);
  }
  if (::fsync(fd) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw CheckpointError(Kind::io, tmp.string() + ": fsync: " + why);
  }
  ::close(fd);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::io, path.string() + ": " + ec.message());
}

std::string meta_to_json(const CheckpointMeta& m) {
  nlohmann::json j;
  j["dataset"] = m.dataset;
  j["seed"] = m.seed;
  j["epoch"] = m.epoch;
  j["tag"] = m.tag;
  j["train_spec"] = m.train_spec;
  j["extra"] = m.extra;
  return j.dump();
}

CheckpointMeta meta_from_json(const std::string& text, const std::string& path) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    CheckpointMeta m;
    m.dataset = j.at("dataset").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epoch = j.at("epoch").get<int>();
    m.tag = j.at("tag").get<std::string>();
    m.train_spec = j.at("train_spec").get<std::string>();
    m.extra = j.at("extra").get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::bad_metadata, path + ": metadata: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(model.arch().to_text());
  w.str(meta_to_json(meta));
  // Order follows parameter_shapes() so files are canonical.
  const auto shapes = model.arch().parameter_shapes();
  w.u32(static_cast<std::uint32_t>(shapes.size()));
  for (const auto& [name, shape] : shapes) w.tensor(name, model.params().at(name));
  write_file_durably(path, w.buffer());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError(Kind::io, path.string() + ": no such file");
  Reader r(read_file(path), path.string());
  r.expect_magic(kMagic);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::bad_version, path.string() + ": version " + std::to_string(version) +
                                                 ", expected " + std::to_string(kCheckpointVersion));

  Architecture arch;
  try {
    arch = Architecture::from_text(r.str("architecture"));
    arch.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(Kind::bad_architecture, path.string() + ": " + e.what());
  }
  CheckpointMeta meta = meta_from_json(r.str("metadata"), path.string());

  const std::uint32_t count = r.u32("tensor count");
  ParamMap params;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor(i);
    if (!params.emplace(name, std::move(t)).second)
      throw CheckpointError(Kind::bad_shape, path.string() + ": duplicate tensor '" + name + "'");
  }
  r.expect_end();

  try {
    return {Model(std::move(arch), std::move(params)), std::move(meta)};
  } catch (const Error& e) {
    throw CheckpointError(Kind::bad_shape, path.string() + ": " + e.what());
  }
}

void save_tensors(const TensorBundle& tensors, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kBundleMagic, sizeof kBundleMagic);
  w.u32(kBundleVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) w.tensor(name, t);
  write_file_durably(path, w.buffer());
}

TensorBundle load_tensors(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError(Kind::io, path.string() + ": no such file");
  Reader r(read_file(path), path.string());
  r.expect_magic(kBundleMagic);
  const std::uint32_t version = r.u32("version");
  if (version != kBundleVersion)
    throw CheckpointError(Kind::bad_version, path.string() + ": version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");
  TensorBundle out;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor(i);
    out.insert_or_assign(name, std::move(t));
  }
  r.expect_end();
  return out;
}

}  // namespace tpap
