#include "wcl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "wcl/error.hpp"

namespace wcl {

namespace {

constexpr const char* kFormat = "wcl-checkpoint";

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ConfigError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = 1;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != t.shape.numel()) throw ContractViolation("checkpoint tensor '" + t.name + "' size mismatch");
    header["tensors"].push_back({{"name", t.name},
                                 {"shape", {t.shape.rows, t.shape.cols}},
                                 {"offset", offset},
                                 {"count", t.values.size()}});
    offset += 8 * t.values.size();
  }
  const std::string text = header.dump();
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) {
    for (double v : t.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  const auto len = get_u64(in);
  if (len > (1ULL << 32)) throw ConfigError("checkpoint header is implausibly large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != kFormat) throw ConfigError("not a wcl checkpoint");
  Checkpoint ckpt;
  ckpt.meta = header["meta"];
  std::uint64_t expected_offset = 0;
  for (const auto& t : header["tensors"]) {
    CheckpointEntry e;
    e.name = t["name"].get<std::string>();
    e.shape = {t["shape"][0].get<std::size_t>(), t["shape"][1].get<std::size_t>()};
    const auto count = t["count"].get<std::size_t>();
    if (count != e.shape.numel() || t["offset"].get<std::uint64_t>() != expected_offset) {
      throw ConfigError("inconsistent checkpoint entry '" + e.name + "'");
    }
    expected_offset += 8 * count;
    e.values.resize(count);
    for (auto& v : e.values) v = std::bit_cast<double>(get_u64(in));
    ckpt.tensors.push_back(std::move(e));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace wcl
