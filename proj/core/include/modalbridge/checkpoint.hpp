// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoint format:
//
//   MODALBRIDGE-CHECKPOINT 1\n
//   meta <key> <value>\n            (zero or more, value runs to end of line)
//   tensor <name> <offset> <rank> <d0> ... <dr-1>\n   (one per tensor)
//   end\n
//   <payload: little-endian float32 values>
//
// Offsets are byte offsets into the payload. Writing then reading then
// writing again reproduces the file byte for byte.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "modalbridge/tensor.hpp"

namespace modalbridge {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<NamedTensor> tensors;

  const Tensor& at(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace modalbridge
