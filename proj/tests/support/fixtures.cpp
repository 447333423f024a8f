// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <atomic>
#include <random>

namespace modalbridge::fixtures {

std::string tiny_config_text(Modality target) {
  std::string text =
      "data.seed = 11\n"
      "data.num_source_classes = 2\n"
      "data.num_target_classes = 2\n"
      "data.source_per_class = 4\n"
      "data.unlabeled_per_class = 3\n"
      "data.labeled_per_class = 2\n"
      "data.eval_per_class = 3\n"
      "model.base_channels = 4\n"
      "model.teacher_width = 8\n"
      "model.student_width = 6\n"
      "model.skeleton_base_channels = 4\n"
      "model.skeleton_blocks = 2\n"
      "teacher.epochs = 2\n"
      "transfer.epochs = 2\n"
      "finetune.epochs = 2\n"
      "run.seeds = 1,2\n";
  if (target == Modality::kSkeleton) {
    text += "transfer.target_modality = skeleton\n";
  }
  return text;
}

TransferConfig tiny_config(Modality target) { return parse_config(tiny_config_text(target)); }

TempDir::TempDir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("modalbridge-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace modalbridge::fixtures
