// SPDX-License-Identifier: Apache-2.0
//
// End-to-end protocol: teacher pretraining on labeled source videos,
// feature-supervised transfer on unlabeled pairs, fine-tuning on k labeled
// target videos per class, and video-level evaluation. Repeated per seed
// and aggregated as mean and unbiased sample variance.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modalbridge/config.hpp"
#include "modalbridge/data.hpp"
#include "modalbridge/nets.hpp"
#include "modalbridge/transfer.hpp"

namespace modalbridge {

enum class EvalMode { kClipAverage, kWholeSequence };
EvalMode eval_mode_for(Modality target);

struct MetricsRecord {
  std::string phase;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  double loss = 0.0;
  std::optional<double> accuracy;
  double ms = 0.0;
};

// True when MODALBRIDGE_DETERMINISTIC=1: single-threaded runs, and wall
// clock columns are written as 0 so outputs are byte-reproducible.
bool deterministic_mode();

// A network plus how to feed it target-modality data.
struct Classifier {
  std::unique_ptr<Network> net;
  Modality modality = Modality::kDepth;
  std::size_t input_channels = 1;  // > 1 replicates single-channel clips
  std::vector<int> classes;        // global ids, in head order
};

std::unique_ptr<Network> make_teacher(const TransferConfig& config, Modality source,
                                      std::size_t num_classes, Rng& rng);
std::unique_ptr<Network> make_student(const TransferConfig& config, std::size_t num_classes,
                                      Rng& rng);

// Rebuilds a network from the architecture tags of to_checkpoint() and
// loads its parameters.
std::unique_ptr<Network> network_from_checkpoint(const Checkpoint& ckpt);

class PhaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TeacherResult {
  std::unique_ptr<Network> net;
  double final_train_accuracy = 0.0;
};

// Cross-entropy training on random clips of the source stream. The returned
// teacher has requires_grad cleared on every parameter.
TeacherResult train_teacher(const TransferConfig& config, Modality source,
                            const DatasetSplit& split, std::uint64_t seed,
                            std::vector<MetricsRecord>* records = nullptr,
                            const std::string& phase = "teacher");

struct TransferResult {
  std::unique_ptr<Network> student;  // projection discarded
  std::vector<double> epoch_loss;    // index 0 = before any update
};

TransferResult run_transfer(const TransferConfig& config, const Network& teacher, Modality source,
                            std::unique_ptr<Network> student, const UnlabeledPairs& pairs,
                            std::uint64_t seed, std::vector<MetricsRecord>* records = nullptr,
                            const std::string& phase = "transfer");

// Attaches a fresh |classes| head and trains only the policy's trainable
// partition with cross-entropy. Labels must belong to `classes`.
Classifier finetune(const TransferConfig& config, std::unique_ptr<Network> student,
                    std::size_t input_channels, const std::vector<PairedVideo>& labeled,
                    const std::vector<int>& classes, FreezePolicy policy, std::uint64_t seed,
                    std::vector<MetricsRecord>* records = nullptr,
                    const std::string& phase = "finetune");

// Per-video class probabilities: mean softmax over every non-overlapping clip
// (clip_average) or one softmax over the whole sequence (whole_sequence).
std::vector<std::vector<float>> predict_scores(const Classifier& classifier,
                                               const std::vector<PairedVideo>& videos,
                                               EvalMode mode, std::size_t clip_len,
                                               std::size_t canvas);

// Index of the largest score; ties go to the lowest index.
std::size_t argmax(const std::vector<float>& scores);

double accuracy_of(const std::vector<std::vector<float>>& scores,
                   const std::vector<PairedVideo>& videos, const std::vector<int>& classes);

double evaluate(const Classifier& classifier, const std::vector<PairedVideo>& eval, EvalMode mode,
                std::size_t clip_len, std::size_t canvas);

struct FusedPrediction {
  std::vector<float> scores;
  std::size_t label = 0;
};

// Elementwise mean of two probability vectors, then argmax.
FusedPrediction two_stream_fuse(const std::vector<float>& a, const std::vector<float>& b);

struct SeedResult {
  std::uint64_t seed = 0;
  double final_accuracy = 0.0;
  std::vector<MetricsRecord> records;
  std::vector<std::pair<std::string, Checkpoint>> checkpoints;  // (name, checkpoint)
  std::string teacher_digest_before;
  std::string teacher_digest_after;
};

struct GridResult {
  std::vector<SeedResult> seeds;
  double mean = 0.0;
  double variance = 0.0;  // unbiased; 0 for a single seed
};

// Thrown when at least one seed fails; `partial` holds the seeds that
// completed, in seed-list order, and `failures` the messages of the rest.
class GridError : public PhaseError {
 public:
  GridError(const std::string& message, GridResult partial,
            std::vector<std::pair<std::uint64_t, std::string>> failures)
      : PhaseError(message), partial(std::move(partial)), failures(std::move(failures)) {}

  GridResult partial;
  std::vector<std::pair<std::uint64_t, std::string>> failures;
};

SeedResult run_seed(const TransferConfig& config, const DatasetSplit& split, std::uint64_t seed);

// One run per seed in config.seeds; `jobs` > 1 runs seeds on worker threads
// (forced to 1 in deterministic mode). Results are in seed-list order.
GridResult run_experiment_grid(const TransferConfig& config, const DatasetSplit& split,
                               std::size_t jobs = 1);

double sample_mean(const std::vector<double>& values);
double sample_variance(const std::vector<double>& values);

// Windows [e, e+width-1] over the epoch losses whose last value exceeds the first.
std::size_t count_window_increases(const std::vector<double>& losses, std::size_t width = 5);

}  // namespace modalbridge
