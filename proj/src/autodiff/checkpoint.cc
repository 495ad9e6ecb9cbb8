// Copyright 2026 The denoise Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "denoise/autodiff/checkpoint.h"

#include <bit>
#include <fstream>
#include <iterator>
#include <vector>

#include "denoise/errors.h"

namespace denoise::ad {

namespace {

constexpr char kMagic[4] = {'D', 'N', 'C', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}
  void need(std::size_t n) {
    if (pos_ + n > data_.size()) throw IoError("truncated checkpoint: " + source_);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::vector<char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(ckpt.version);
  const std::string meta = ckpt.meta.dump();
  w.u64(meta.size());
  w.bytes(meta.data(), meta.size());
  w.u64(ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) throw IoError("not a checkpoint file: " + path.string());
  Checkpoint ckpt;
  ckpt.version = static_cast<std::uint32_t>(r.uint(4));
  if (ckpt.version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.version) + ": " +
                  path.string());
  }
  const auto meta_len = r.uint(8);
  ckpt.meta = nlohmann::json::parse(r.bytes(meta_len));
  const auto count = r.uint(8);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.uint(4));
    const auto rank = r.uint(4);
    Shape shape;
    for (std::uint64_t k = 0; k < rank; ++k) shape.push_back(r.uint(8));
    std::vector<double> values(numel(shape));
    for (double& v : values) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw IoError("trailing bytes in checkpoint: " + path.string());
  return ckpt;
}

void restore_tensors(const Checkpoint& ckpt, NamedTensors& dst) {
  for (auto& [name, t] : dst) {
    const Tensor& src = ckpt.at(name);
    if (src.shape() != t.shape()) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) +
                    ", model expects " + shape_str(t.shape()));
    }
    auto d = t.mutable_data();
    std::copy(src.data().begin(), src.data().end(), d.begin());
  }
}

}  // namespace denoise::ad
