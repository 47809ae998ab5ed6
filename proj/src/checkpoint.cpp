#include "equiroute/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "equiroute/tensor.hpp"

namespace equiroute {

namespace {

constexpr char kMagic[8] = {'E', 'Q', 'R', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ValidationError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += 8;
  return v;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header = ckpt.header;
  header["kind"] = ckpt.kind;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  put_u64(out, ckpt.values.size());
  out.reserve(out.size() + 8 * ckpt.values.size());
  for (double v : ckpt.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || bytes.compare(0, sizeof kMagic, kMagic, sizeof kMagic) != 0) {
    throw ValidationError("not a checkpoint file");
  }
  std::size_t pos = sizeof kMagic;
  const std::uint64_t header_len = get_u64(bytes, pos);
  if (pos + header_len > bytes.size()) throw ValidationError("checkpoint truncated");
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(bytes.substr(pos, header_len));
    ckpt.kind = ckpt.header.at("kind").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }
  ckpt.header.erase("kind");
  pos += header_len;
  const std::uint64_t count = get_u64(bytes, pos);
  if (bytes.size() - pos != count * 8) throw ValidationError("checkpoint value block has wrong length");
  ckpt.values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) ckpt.values.push_back(std::bit_cast<double>(get_u64(bytes, pos)));
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file) {
  const std::string bytes = encode_checkpoint(ckpt);
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("missing checkpoint: " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace equiroute
