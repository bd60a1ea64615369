#include "gripcvae/ad/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "gripcvae/binary_io.hpp"
#include "gripcvae/errors.hpp"

namespace gripcvae::ad {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'V', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

const Tensor<float>& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw ValidationError("checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& entry : tensors)
    if (entry.first == name) return true;
  return false;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (t.data.size() != numel(t.shape)) throw DimensionError("tensor '" + name + "' has inconsistent size");
    header["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.data.size();
  }
  header["payload_floats"] = offset;
  const std::string text = header.dump();

  out.write(kMagic, 4);
  bin::put_uint<std::uint32_t>(out, kVersion);
  bin::put_uint<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& entry : ckpt.tensors)
    for (float v : entry.second.data) bin::put_f32(out, v);
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
    throw IoError("not a gripcvae checkpoint (bad magic)");
  const auto version = bin::get_uint<std::uint32_t>(in);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto len = bin::get_uint<std::uint64_t>(in);
  if (len > (1u << 26)) throw IoError("checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw IoError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    Tensor<float> t(entry.at("shape").get<Shape>());
    for (float& v : t.data) v = bin::get_f32(in);
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(ckpt, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace gripcvae::ad
