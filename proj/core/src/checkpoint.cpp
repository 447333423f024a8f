// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace modalbridge {

namespace {

constexpr std::string_view kMagic = "MODALBRIDGE-CHECKPOINT 1";

void append_le(std::string& out, float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float read_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

bool plain_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') return false;
  }
  return true;
}

}  // namespace

const Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& nt : tensors) {
    if (nt.name == name) return nt.tensor;
  }
  throw CheckpointError("checkpoint: no tensor named '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream header;
  header << kMagic << '\n';
  for (const auto& [key, value] : ckpt.meta) {
    if (!plain_token(key) || value.find('\n') != std::string::npos) {
      throw CheckpointError("checkpoint: invalid meta entry '" + key + "'");
    }
    header << "meta " << key << ' ' << value << '\n';
  }
  std::size_t offset = 0;
  for (const auto& nt : ckpt.tensors) {
    if (!plain_token(nt.name)) throw CheckpointError("checkpoint: invalid tensor name '" + nt.name + "'");
    const Shape& shape = nt.tensor.shape();
    header << "tensor " << nt.name << ' ' << offset << ' ' << shape.size();
    for (std::size_t d : shape) header << ' ' << d;
    header << '\n';
    offset += nt.tensor.numel() * sizeof(float);
  }
  header << "end\n";
  std::string out = header.str();
  out.reserve(out.size() + offset);
  for (const auto& nt : ckpt.tensors) {
    for (float v : nt.tensor.data()) append_le(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Checkpoint ckpt;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointError("checkpoint: truncated header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != kMagic) throw CheckpointError("checkpoint: bad magic line");

  struct Entry {
    std::string name;
    std::size_t offset;
    Shape shape;
  };
  std::vector<Entry> entries;
  for (;;) {
    const std::string line = next_line();
    if (line == "end") break;
    if (line.rfind("meta ", 0) == 0) {
      const std::size_t sp = line.find(' ', 5);
      if (sp == std::string::npos) throw CheckpointError("checkpoint: malformed meta line");
      ckpt.meta[line.substr(5, sp - 5)] = line.substr(sp + 1);
      continue;
    }
    std::istringstream is(line);
    std::string kind;
    Entry e;
    std::size_t rank = 0;
    if (!(is >> kind >> e.name >> e.offset >> rank) || kind != "tensor" || rank == 0) {
      throw CheckpointError("checkpoint: malformed header line '" + line + "'");
    }
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!(is >> d)) throw CheckpointError("checkpoint: malformed shape in '" + line + "'");
    }
    entries.push_back(std::move(e));
  }

  const std::size_t payload = pos;
  for (auto& e : entries) {
    const std::size_t n = shape_numel(e.shape);
    const std::size_t begin = payload + e.offset;
    if (begin + n * sizeof(float) > bytes.size()) {
      throw CheckpointError("checkpoint: tensor '" + e.name + "' runs past end of file");
    }
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = read_le(bytes.data() + begin + i * sizeof(float));
    ckpt.tensors.push_back({e.name, Tensor::from(e.shape, std::move(values))});
  }
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace modalbridge
