// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "modalbridge/config.hpp"
#include "modalbridge/data.hpp"

namespace modalbridge::fixtures {

// Small enough for a full protocol run in well under a second.
TransferConfig tiny_config(Modality target = Modality::kDepth);
std::string tiny_config_text(Modality target = Modality::kDepth);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

}  // namespace modalbridge::fixtures
