// SPDX-License-Identifier: Apache-2.0
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "oracle.hpp"

namespace modalbridge {
namespace {

const std::vector<oracle::GradCase>& suite() {
  static const auto cases = oracle::gradient_suite(20240601);
  return cases;
}

TEST(GradientCheck, AnalyticMatchesCentralDifferences) {
  for (const auto& c : suite()) {
    EXPECT_LT(c.relative_error, 1e-4) << c.op << " " << c.shapes;
  }
}

TEST(GradientCheck, FloatForwardMatchesReference) {
  for (const auto& c : suite()) {
    EXPECT_LT(c.forward_error, 1e-5) << c.op << " " << c.shapes;
  }
}

TEST(GradientCheck, EveryOpHasAtLeastThreeShapes) {
  std::map<std::string, std::set<std::string>> shapes;
  for (const auto& c : suite()) shapes[c.op].insert(c.shapes);
  const std::vector<std::string> ops{
      "add", "sub", "mul", "div", "scale", "matmul", "conv3d", "max_pool3d", "global_avg_pool",
      "relu", "log", "sum", "mean", "sum_all", "mean_all", "reshape", "concat", "softmax",
      "l2_norm", "dot", "cross_entropy", "cosine_distance", "mse_distance"};
  for (const auto& op : ops) {
    EXPECT_GE(shapes[op].size(), 3u) << op;
  }
  EXPECT_EQ(shapes.size(), ops.size());
}

TEST(GradientCheck, DifferentSeedsAlsoPass) {
  for (const auto& c : oracle::gradient_suite(7)) {
    EXPECT_LT(c.relative_error, 1e-4) << c.op << " " << c.shapes;
  }
}

}  // namespace
}  // namespace modalbridge
