// SPDX-License-Identifier: Apache-2.0
#include "modalbridge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "modalbridge/optim.hpp"

namespace modalbridge {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  if (deterministic_mode()) return 0.0;
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

float lr_at(const PhaseSettings& phase, std::size_t epoch) {
  if (phase.lr_step == 0) return phase.sgd.lr;
  const auto drops = static_cast<int>((epoch - 1) / phase.lr_step);
  return phase.sgd.lr * static_cast<float>(std::pow(0.1, drops));
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::size_t uniform_index(std::size_t n, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

int local_label(const std::vector<int>& classes, int global) {
  const auto it = std::find(classes.begin(), classes.end(), global);
  if (it == classes.end()) {
    throw PhaseError("label " + std::to_string(global) + " is not in the classifier's label set");
  }
  return static_cast<int>(it - classes.begin());
}

std::size_t argmax_row(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::size_t parse_size(const std::map<std::string, std::string>& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("checkpoint is missing meta '" + key + "'");
  return static_cast<std::size_t>(std::stoull(it->second));
}

void push_record(std::vector<MetricsRecord>* records, MetricsRecord record) {
  if (records) records->push_back(std::move(record));
}

// Cross-entropy training loop shared by teacher pretraining and fine-tuning.
// Each epoch visits every video once in shuffled order; clip networks see one
// uniformly drawn window per video per visit.
struct SupervisedTask {
  const Network* net = nullptr;
  Modality modality = Modality::kDepth;
  std::size_t channels = 0;
  const std::vector<PairedVideo>* videos = nullptr;
  std::vector<int> labels;  // local, per video
  std::size_t clip_len = 8;
  std::size_t canvas = 16;
};

double train_supervised(const SupervisedTask& task, const PhaseSettings& phase,
                        std::vector<Tensor> trainable, Rng& rng, std::uint64_t seed,
                        const std::string& name, std::vector<MetricsRecord>* records) {
  Sgd opt(std::move(trainable), phase.sgd);
  const auto& videos = *task.videos;
  const std::size_t batch = std::max<std::size_t>(1, phase.batch);
  double accuracy = 0.0;
  for (std::size_t epoch = 1; epoch <= phase.epochs; ++epoch) {
    const auto start = Clock::now();
    opt.set_lr(lr_at(phase, epoch));
    const auto order = shuffled(videos.size(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t end = std::min(order.size(), b + batch);
      std::vector<const Tensor*> streams;
      std::vector<std::size_t> clips;
      std::vector<int> labels;
      for (std::size_t i = b; i < end; ++i) {
        const PairedVideo& v = videos[order[i]];
        streams.push_back(&v.stream(task.modality));
        clips.push_back(is_clip_modality(task.modality)
                            ? uniform_index(num_clips(v.frames, task.clip_len), rng)
                            : 0);
        labels.push_back(task.labels[order[i]]);
      }
      const NetInput input =
          student_input(task.modality, streams, clips, task.clip_len, task.canvas, task.channels);
      const Tensor logits = task.net->forward_classify(input);
      Tensor loss = cross_entropy(logits, labels);
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(labels.size());
      const std::size_t k = logits.dim(1);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (argmax_row(logits.data().subspan(i * k, k)) == static_cast<std::size_t>(labels[i])) {
          ++correct;
        }
      }
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, videos.size()));
    accuracy = static_cast<double>(correct) / n;
    push_record(records, {name, epoch, seed, loss_sum / n, accuracy, elapsed_ms(start)});
  }
  return accuracy;
}

}  // namespace

EvalMode eval_mode_for(Modality target) {
  return is_clip_modality(target) ? EvalMode::kClipAverage : EvalMode::kWholeSequence;
}

bool deterministic_mode() {
  const char* value = std::getenv("MODALBRIDGE_DETERMINISTIC");
  return value != nullptr && std::string_view(value) == "1";
}

std::unique_ptr<Network> make_teacher(const TransferConfig& config, Modality source,
                                      std::size_t num_classes, Rng& rng) {
  if (!is_clip_modality(source)) {
    throw ConfigError("teacher modality must be rgb or flow, got " + std::string(to_string(source)));
  }
  Conv3dNetConfig c;
  c.in_channels = modality_channels(source);
  c.clip_len = config.model.clip_len;
  c.height = c.width = config.data.canvas;
  c.base_channels = config.model.base_channels;
  c.num_blocks = config.model.blocks;
  c.feature_width = config.model.teacher_width;
  c.num_classes = num_classes;
  return std::make_unique<Conv3dNetLite>(c, rng);
}

std::unique_ptr<Network> make_student(const TransferConfig& config, std::size_t num_classes,
                                      Rng& rng) {
  if (config.target == Modality::kSkeleton) {
    SkeletonNetConfig c;
    c.joints = config.data.joints;
    c.base_channels = config.model.skeleton_base_channels;
    c.num_blocks = config.model.skeleton_blocks;
    c.temporal_kernel = config.model.temporal_kernel;
    c.feature_width = config.model.student_width;
    c.num_classes = num_classes;
    return std::make_unique<SkeletonGraphNetLite>(c, rng);
  }
  if (config.target != Modality::kDepth) {
    throw ConfigError("student modality must be depth or skeleton, got " +
                      std::string(to_string(config.target)));
  }
  Conv3dNetConfig c;
  c.in_channels = 1;
  c.clip_len = config.model.clip_len;
  c.height = c.width = config.data.canvas;
  c.base_channels = config.model.base_channels;
  c.num_blocks = config.model.blocks;
  c.feature_width = config.model.student_width;
  c.num_classes = num_classes;
  return std::make_unique<Conv3dNetLite>(c, rng);
}

std::unique_ptr<Network> network_from_checkpoint(const Checkpoint& ckpt) {
  const auto kind = ckpt.meta.find("network");
  if (kind == ckpt.meta.end()) throw CheckpointError("checkpoint is missing meta 'network'");
  Rng rng(0);
  std::unique_ptr<Network> net;
  if (kind->second == "conv3d") {
    Conv3dNetConfig c;
    c.in_channels = parse_size(ckpt.meta, "arch.in_channels");
    c.clip_len = parse_size(ckpt.meta, "arch.clip_len");
    c.height = parse_size(ckpt.meta, "arch.height");
    c.width = parse_size(ckpt.meta, "arch.width");
    c.base_channels = parse_size(ckpt.meta, "arch.base_channels");
    c.num_blocks = parse_size(ckpt.meta, "arch.num_blocks");
    c.feature_width = parse_size(ckpt.meta, "arch.feature_width");
    c.num_classes = parse_size(ckpt.meta, "num_classes");
    net = std::make_unique<Conv3dNetLite>(c, rng);
  } else if (kind->second == "skeleton_gcn") {
    SkeletonNetConfig c;
    c.joints = parse_size(ckpt.meta, "arch.joints");
    c.coord_channels = parse_size(ckpt.meta, "arch.coord_channels");
    c.base_channels = parse_size(ckpt.meta, "arch.base_channels");
    c.num_blocks = parse_size(ckpt.meta, "arch.num_blocks");
    c.temporal_kernel = parse_size(ckpt.meta, "arch.temporal_kernel");
    c.feature_width = parse_size(ckpt.meta, "arch.feature_width");
    c.num_classes = parse_size(ckpt.meta, "num_classes");
    const auto edges = ckpt.meta.find("arch.edges");
    if (edges == ckpt.meta.end()) throw CheckpointError("checkpoint is missing meta 'arch.edges'");
    std::size_t pos = 0;
    const std::string& text = edges->second;
    while (pos < text.size()) {
      const std::size_t comma = std::min(text.find(',', pos), text.size());
      const std::string edge = text.substr(pos, comma - pos);
      const std::size_t dash = edge.find('-');
      if (dash == std::string::npos) throw CheckpointError("malformed edge '" + edge + "'");
      c.edges.emplace_back(std::stoull(edge.substr(0, dash)), std::stoull(edge.substr(dash + 1)));
      pos = comma + 1;
    }
    net = std::make_unique<SkeletonGraphNetLite>(c, rng);
  } else {
    throw CheckpointError("unknown network kind '" + kind->second + "'");
  }
  net->load_parameters(ckpt);
  return net;
}

TeacherResult train_teacher(const TransferConfig& config, Modality source,
                            const DatasetSplit& split, std::uint64_t seed,
                            std::vector<MetricsRecord>* records, const std::string& phase) {
  if (split.source_train.empty()) throw PhaseError("teacher: empty source split");
  const std::string tag = "teacher:" + std::string(to_string(source));
  Rng init(derive_seed(seed, tag + ":init"));
  TeacherResult result;
  result.net = make_teacher(config, source, split.source_classes.size(), init);

  SupervisedTask task;
  task.net = result.net.get();
  task.modality = source;
  task.videos = &split.source_train;
  task.clip_len = config.model.clip_len;
  task.canvas = config.data.canvas;
  for (const auto& v : split.source_train) {
    if (!v.label) throw PhaseError("source video " + v.id + " has no label");
    task.labels.push_back(local_label(split.source_classes, *v.label));
  }
  Rng rng(derive_seed(seed, tag + ":order"));
  result.final_train_accuracy = train_supervised(
      task, config.teacher, tensors_of(result.net->parameters()), rng, seed, phase, records);
  result.net->set_requires_grad(false);
  return result;
}

TransferResult run_transfer(const TransferConfig& config, const Network& teacher, Modality source,
                            std::unique_ptr<Network> student, const UnlabeledPairs& pairs,
                            std::uint64_t seed, std::vector<MetricsRecord>* records,
                            const std::string& phase) {
  check_granularity(config.granularity, config.target);
  if (pairs.size() == 0) throw PhaseError("transfer: no unlabeled pairs");
  const std::size_t clip_len = config.model.clip_len;
  const std::string tag = "transfer:" + std::string(to_string(source));

  Rng init(derive_seed(seed, tag + ":projection"));
  FeatureProjection projection(student->feature_width(), teacher.feature_width(), init);
  const TeacherFeatureCache cache(teacher, pairs, source, clip_len);

  std::vector<Tensor> trainable = tensors_of(student->backbone_parameters());
  for (const auto& p : projection.parameters()) trainable.push_back(p.value);
  Sgd opt(trainable, config.transfer.sgd);

  const Granularity g = config.granularity;
  const bool clip_student = uses_clip_student(g);
  const std::size_t batch = std::max<std::size_t>(1, config.transfer.batch);

  auto batch_loss = [&](const std::vector<std::size_t>& ids, Rng& rng) {
    std::vector<const Tensor*> streams;
    std::vector<std::size_t> clips;
    std::vector<Tensor> clip_targets;
    std::vector<Tensor> video_targets;
    for (std::size_t id : ids) {
      streams.push_back(&pairs.stream(id, config.target));
      const std::size_t c = clip_student ? uniform_index(cache.clip_count(id), rng) : 0;
      clips.push_back(c);
      if (g == Granularity::kClipToClip || g == Granularity::kCombined) {
        clip_targets.push_back(cache.clip_feature(id, c));
      }
      if (g != Granularity::kClipToClip) video_targets.push_back(cache.video_feature(id));
    }
    TransferTargets targets;
    if (!clip_targets.empty()) targets.clip = stack(clip_targets);
    if (!video_targets.empty()) targets.video = stack(video_targets);
    const NetInput input =
        student_input(config.target, streams, clips, clip_len, config.data.canvas);
    const Tensor features = projection.forward(student->forward_features(input));
    return transfer_objective(g, config.loss, features, targets);
  };

  TransferResult result;
  {
    const auto start = Clock::now();
    NoGradGuard no_grad;
    Rng probe(derive_seed(seed, tag + ":initial"));
    double sum = 0.0;
    for (std::size_t b = 0; b < pairs.size(); b += batch) {
      std::vector<std::size_t> ids;
      for (std::size_t i = b; i < std::min(pairs.size(), b + batch); ++i) ids.push_back(i);
      sum += static_cast<double>(batch_loss(ids, probe).item()) * static_cast<double>(ids.size());
    }
    result.epoch_loss.push_back(sum / static_cast<double>(pairs.size()));
    push_record(records, {phase, 0, seed, result.epoch_loss.back(), std::nullopt, elapsed_ms(start)});
  }

  for (std::size_t epoch = 1; epoch <= config.transfer.epochs; ++epoch) {
    const auto start = Clock::now();
    Rng rng(derive_seed(seed, tag + ":epoch", epoch));
    opt.set_lr(lr_at(config.transfer, epoch));
    const auto order = shuffled(pairs.size(), rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::vector<std::size_t> ids(order.begin() + static_cast<std::ptrdiff_t>(b),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), b + batch)));
      Tensor loss = batch_loss(ids, rng);
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum += static_cast<double>(loss.item()) * static_cast<double>(ids.size());
    }
    result.epoch_loss.push_back(sum / static_cast<double>(pairs.size()));
    push_record(records,
                {phase, epoch, seed, result.epoch_loss.back(), std::nullopt, elapsed_ms(start)});
  }
  result.student = std::move(student);
  return result;
}

Classifier finetune(const TransferConfig& config, std::unique_ptr<Network> student,
                    std::size_t input_channels, const std::vector<PairedVideo>& labeled,
                    const std::vector<int>& classes, FreezePolicy policy, std::uint64_t seed,
                    std::vector<MetricsRecord>* records, const std::string& phase) {
  if (classes.empty()) throw PhaseError("finetune: empty label set");
  if (labeled.empty()) throw PhaseError("finetune: no labeled videos");
  Rng init(derive_seed(seed, phase + ":head"));
  student->reset_head(classes.size(), init);

  const ParameterPartition part = split_parameters(*student, policy);
  for (auto p : part.frozen) p.value.set_requires_grad(false);
  for (auto p : part.trainable) p.value.set_requires_grad(true);

  SupervisedTask task;
  task.net = student.get();
  task.modality = config.target;
  task.channels = input_channels;
  task.videos = &labeled;
  task.clip_len = config.model.clip_len;
  task.canvas = config.data.canvas;
  for (const auto& v : labeled) {
    if (!v.label) throw PhaseError("labeled video " + v.id + " has no label");
    task.labels.push_back(local_label(classes, *v.label));
  }
  Rng rng(derive_seed(seed, phase + ":order"));
  train_supervised(task, config.finetune, tensors_of(part.trainable), rng, seed, phase, records);

  Classifier out;
  out.net = std::move(student);
  out.modality = config.target;
  out.input_channels = input_channels == 0 ? modality_channels(config.target) : input_channels;
  out.classes = classes;
  return out;
}

std::vector<std::vector<float>> predict_scores(const Classifier& classifier,
                                               const std::vector<PairedVideo>& videos,
                                               EvalMode mode, std::size_t clip_len,
                                               std::size_t canvas) {
  NoGradGuard no_grad;
  std::vector<std::vector<float>> out;
  out.reserve(videos.size());
  const std::size_t k = classifier.net->num_classes();
  for (const auto& v : videos) {
    const Tensor& stream = v.stream(classifier.modality);
    NetInput input;
    if (mode == EvalMode::kClipAverage) {
      const std::size_t n = num_clips(v.frames, clip_len);
      std::vector<const Tensor*> streams(n, &stream);
      std::vector<std::size_t> clips(n);
      std::iota(clips.begin(), clips.end(), 0);
      input = student_input(classifier.modality, streams, clips, clip_len, canvas,
                            classifier.input_channels);
    } else {
      input = student_input(classifier.modality, {&stream}, {0}, clip_len, canvas);
    }
    const Tensor probs = softmax(classifier.net->forward_classify(input));
    const std::size_t rows = probs.dim(0);
    std::vector<float> mean(k, 0.0f);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < k; ++c) mean[c] += probs.data()[r * k + c];
    }
    for (float& m : mean) m /= static_cast<float>(rows);
    out.push_back(std::move(mean));
  }
  return out;
}

std::size_t argmax(const std::vector<float>& scores) {
  if (scores.empty()) throw std::invalid_argument("argmax: empty scores");
  return argmax_row(scores);
}

double accuracy_of(const std::vector<std::vector<float>>& scores,
                   const std::vector<PairedVideo>& videos, const std::vector<int>& classes) {
  if (scores.size() != videos.size()) {
    throw std::invalid_argument("accuracy_of: " + std::to_string(scores.size()) +
                                " score rows for " + std::to_string(videos.size()) + " videos");
  }
  if (videos.empty()) throw PhaseError("accuracy_of: empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (!videos[i].label) throw PhaseError("evaluation video " + videos[i].id + " has no label");
    if (static_cast<int>(argmax(scores[i])) == local_label(classes, *videos[i].label)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(videos.size());
}

double evaluate(const Classifier& classifier, const std::vector<PairedVideo>& eval, EvalMode mode,
                std::size_t clip_len, std::size_t canvas) {
  return accuracy_of(predict_scores(classifier, eval, mode, clip_len, canvas), eval,
                     classifier.classes);
}

FusedPrediction two_stream_fuse(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("two_stream_fuse: score vectors of length " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  FusedPrediction out;
  out.scores.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.scores[i] = 0.5f * (a[i] + b[i]);
  out.label = argmax(out.scores);
  return out;
}

SeedResult run_seed(const TransferConfig& config, const DatasetSplit& split, std::uint64_t seed) {
  SeedResult result;
  result.seed = seed;
  const auto sources = source_modalities(config.source);
  const bool fused = sources.size() > 1;
  const EvalMode mode = eval_mode_for(config.target);
  const std::size_t clip_len = config.model.clip_len;
  const std::size_t canvas = config.data.canvas;
  const std::vector<PairedVideo> labeled =
      sample_few_labels(split, config.k, derive_seed(seed, "few_labels"));
  const UnlabeledPairs pairs = strip_labels(split);

  std::vector<std::vector<std::vector<float>>> stream_scores;
  for (Modality source : sources) {
    const std::string suffix = fused ? "_" + std::string(to_string(source)) : "";
    std::unique_ptr<Network> student;
    std::size_t channels = 0;
    FreezePolicy policy = config.freeze;
    std::unique_ptr<Network> teacher;

    if (config.baseline != Baseline::kFromScratch) {
      TeacherResult t = train_teacher(config, source, split, seed, &result.records,
                                      "teacher" + suffix);
      teacher = std::move(t.net);
      result.checkpoints.emplace_back("teacher" + suffix, teacher->to_checkpoint());
      result.teacher_digest_before += parameter_digest(*teacher);
    }
    switch (config.baseline) {
      case Baseline::kFeatureSupervised: {
        Rng init(derive_seed(seed, "student" + suffix));
        TransferResult tr = run_transfer(config, *teacher, source,
                                         make_student(config, split.target_classes.size(), init),
                                         pairs, seed, &result.records, "transfer" + suffix);
        student = std::move(tr.student);
        result.checkpoints.emplace_back("student" + suffix, student->to_checkpoint());
        break;
      }
      case Baseline::kModalityPretrain:
        student = teacher->clone();
        channels = modality_channels(source);
        break;
      case Baseline::kFromScratch: {
        Rng init(derive_seed(seed, "student" + suffix));
        student = make_student(config, split.target_classes.size(), init);
        policy = FreezePolicy::kAllLayers;
        break;
      }
    }

    Classifier clf = finetune(config, std::move(student), channels, labeled, split.target_classes,
                              policy, seed, &result.records, "finetune" + suffix);
    Checkpoint ckpt = clf.net->to_checkpoint();
    ckpt.meta["policy"] = std::string(to_string(policy));
    ckpt.meta["modality"] = std::string(to_string(clf.modality));
    ckpt.meta["input_channels"] = std::to_string(clf.input_channels);
    std::string classes;
    for (int c : split.target_classes) classes += (classes.empty() ? "" : ",") + std::to_string(c);
    ckpt.meta["classes"] = classes;
    result.checkpoints.emplace_back("classifier" + suffix, std::move(ckpt));

    const auto start = Clock::now();
    auto scores = predict_scores(clf, split.target_eval, mode, clip_len, canvas);
    const double acc = accuracy_of(scores, split.target_eval, split.target_classes);
    result.records.push_back({"eval" + suffix, config.finetune.epochs, seed, 0.0, acc,
                              elapsed_ms(start)});
    result.final_accuracy = acc;
    stream_scores.push_back(std::move(scores));

    if (teacher) {
      result.teacher_digest_after += parameter_digest(*teacher);
      if (result.teacher_digest_after != result.teacher_digest_before) {
        throw PhaseError("teacher" + suffix + " parameters changed after pretraining");
      }
    }
  }

  if (fused) {
    const auto start = Clock::now();
    std::vector<std::vector<float>> scores;
    for (std::size_t i = 0; i < split.target_eval.size(); ++i) {
      scores.push_back(two_stream_fuse(stream_scores[0][i], stream_scores[1][i]).scores);
    }
    result.final_accuracy = accuracy_of(scores, split.target_eval, split.target_classes);
    result.records.push_back({"eval_fused", config.finetune.epochs, seed, 0.0,
                              result.final_accuracy, elapsed_ms(start)});
  }
  return result;
}

GridResult run_experiment_grid(const TransferConfig& config, const DatasetSplit& split,
                               std::size_t jobs) {
  const std::size_t n = config.seeds.size();
  if (deterministic_mode()) jobs = 1;
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, n));

  GridResult grid;
  grid.seeds.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        grid.seeds[i] = run_seed(config, split, config.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  GridResult done;
  std::vector<std::pair<std::uint64_t, std::string>> failures;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) {
      done.seeds.push_back(std::move(grid.seeds[i]));
      continue;
    }
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      failures.emplace_back(config.seeds[i], e.what());
    } catch (...) {
      failures.emplace_back(config.seeds[i], "unknown error");
    }
  }
  std::vector<double> finals;
  for (const auto& s : done.seeds) finals.push_back(s.final_accuracy);
  done.mean = sample_mean(finals);
  done.variance = sample_variance(finals);
  if (!failures.empty()) {
    const std::string message = "seed " + std::to_string(failures.front().first) + ": " +
                                failures.front().second;
    throw GridError(message, std::move(done), std::move(failures));
  }
  return done;
}

double sample_mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_variance(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mu = sample_mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return ss / static_cast<double>(values.size() - 1);
}

std::size_t count_window_increases(const std::vector<double>& losses, std::size_t width) {
  if (width < 2 || losses.size() < width) return 0;
  std::size_t count = 0;
  for (std::size_t e = 0; e + width <= losses.size(); ++e) {
    if (losses[e + width - 1] > losses[e]) ++count;
  }
  return count;
}

}  // namespace modalbridge
