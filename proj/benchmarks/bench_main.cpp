// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "modalbridge/config.hpp"
#include "modalbridge/optim.hpp"
#include "modalbridge/pipeline.hpp"

namespace mb = modalbridge;

namespace {

mb::Tensor filled(mb::Shape shape, std::uint64_t seed, bool requires_grad = false) {
  mb::Rng rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::size_t count = 1;
  for (auto d : shape) count *= d;
  std::vector<float> v(count);
  for (auto& x : v) x = n(rng);
  return mb::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

mb::TransferConfig desk_config(mb::Modality target = mb::Modality::kDepth) {
  auto c = mb::default_config(target);
  c.data.seed = 7;
  return c;
}

void BM_Conv3dForward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto x = filled({8, channels, 8, 16, 16}, 1);
  const auto w = filled({channels, channels, 3, 3, 3}, 2);
  const auto b = filled({channels}, 3);
  mb::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(mb::conv3d(x, w, b, {{1, 1, 1}, {1, 1, 1}}));
}
BENCHMARK(BM_Conv3dForward)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_Conv3dBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto x = filled({8, channels, 8, 16, 16}, 1, true);
  const auto w = filled({channels, channels, 3, 3, 3}, 2, true);
  const auto b = filled({channels}, 3, true);
  for (auto _ : state) {
    mb::sum_all(mb::conv3d(x, w, b, {{1, 1, 1}, {1, 1, 1}})).backward();
  }
}
BENCHMARK(BM_Conv3dBackward)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

// One SGD step of the depth student on a batch of clips.
void BM_StudentStep(benchmark::State& state) {
  const auto config = desk_config();
  mb::Rng rng(4);
  auto net = mb::make_student(config, 4, rng);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = filled({batch, 1, config.model.clip_len, config.data.canvas, config.data.canvas}, 5);
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 4);
  mb::Sgd opt(mb::tensors_of(net->parameters()), {0.01f, 0.9f, 1e-3f});
  for (auto _ : state) {
    opt.zero_grad();
    mb::cross_entropy(net->forward_classify({x, {}}), labels).backward();
    opt.step();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_StudentStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SkeletonStep(benchmark::State& state) {
  const auto config = desk_config(mb::Modality::kSkeleton);
  mb::Rng rng(6);
  auto net = mb::make_student(config, 4, rng);
  const auto x = filled({8, 2, 40, config.data.joints}, 7);
  const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3};
  mb::Sgd opt(mb::tensors_of(net->parameters()), {0.01f, 0.9f, 1e-5f});
  for (auto _ : state) {
    opt.zero_grad();
    mb::cross_entropy(net->forward_classify({x, {}}), labels).backward();
    opt.step();
  }
}
BENCHMARK(BM_SkeletonStep)->Unit(benchmark::kMillisecond);

void BM_TransferObjective(benchmark::State& state) {
  const auto g = static_cast<mb::Granularity>(state.range(0));
  const auto student = filled({8, 64}, 8, true);
  const mb::TransferTargets targets{filled({8, 64}, 9), filled({8, 64}, 10)};
  for (auto _ : state) {
    mb::transfer_objective(g, mb::FeatureLoss::kCosine, student, targets).backward();
  }
  state.SetLabel(std::string(mb::to_string(g)));
}
BENCHMARK(BM_TransferObjective)->DenseRange(0, 2);

void BM_TeacherFeatureCache(benchmark::State& state) {
  const auto config = desk_config();
  mb::GeneratorConfig g = config.data;
  g.counts = {1, 5, 1, 1};
  const auto split = mb::generate(g);
  mb::Rng rng(11);
  auto teacher = mb::make_teacher(config, mb::Modality::kFlow, 6, rng);
  teacher->set_requires_grad(false);
  const auto pairs = mb::strip_labels(split);
  for (auto _ : state) {
    mb::TeacherFeatureCache cache(*teacher, pairs, mb::Modality::kFlow, config.model.clip_len);
    benchmark::DoNotOptimize(cache.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pairs.size()));
}
BENCHMARK(BM_TeacherFeatureCache)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
