// SPDX-License-Identifier: Apache-2.0
#include "iocf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "iocf/config.hpp"
#include "iocf/dataset.hpp"
#include "iocf/error.hpp"

namespace iocf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'I', 'O', 'C', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string get_string(std::size_t n) { return std::string(take(n), n); }
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw ParseError(origin_ + ": truncated checkpoint at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint snapshot(const IocFormer& model, nlohmann::json meta) {
  Checkpoint c;
  c.model = model.config();
  c.meta = std::move(meta);
  for (const auto& [name, t] : model.parameters().entries()) {
    const auto d = t.data();
    c.tensors.push_back({name, t.shape(), std::vector<double>(d.begin(), d.end())});
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::ordered_json header;
  header["model"] = to_json(ckpt.model);
  header["meta"] = ckpt.meta;
  const std::string head = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(head.size()));
  out += head;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(double));
  }
  atomic_write(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  Reader r(os.str(), path.string());
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) throw ParseError(path.string() + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string(r.get<std::uint32_t>()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": corrupt header: " + e.what());
  }
  if (!header.contains("model")) throw ParseError(path.string() + ": header lacks a model config");
  c.model = model_config_from_json(header["model"]);
  if (header.contains("meta")) c.meta = header["meta"];
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    t.values.resize(numel(t.shape));
    std::memcpy(t.values.data(), r.take(t.values.size() * sizeof(double)), t.values.size() * sizeof(double));
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw ParseError(path.string() + ": trailing bytes after the last tensor");
  return c;
}

IocFormer restore_model(const Checkpoint& ckpt) {
  IocFormer model(ckpt.model, 0);
  auto& entries = model.parameters().entries();
  if (entries.size() != ckpt.tensors.size()) {
    throw ParseError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors but the config expects " +
                     std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& src = ckpt.tensors[i];
    Tensor dst = entries[i].second;
    if (src.name != entries[i].first || src.shape != dst.shape()) {
      throw ParseError("checkpoint tensor '" + src.name + "' " + to_string(src.shape) + " does not match '" +
                       entries[i].first + "' " + to_string(dst.shape()));
    }
    std::copy(src.values.begin(), src.values.end(), dst.mutable_data().begin());
  }
  return model;
}

}  // namespace iocf
