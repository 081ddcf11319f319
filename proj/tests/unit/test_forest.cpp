#include <cmath>
#include <random>

#include "handseg/forest.hpp"
#include "handseg/synth.hpp"
#include "test_util.hpp"

using namespace handseg;

namespace {

// Plain recursive walk with depth_feature, as an inference oracle.
ClassDistribution walk(const ForestModel& m, const DepthFrame& d, int x, int y) {
  ClassDistribution sum{};
  for (const auto& tree : m.trees) {
    int n = 0;
    while (!tree.nodes[n].is_leaf()) {
      const auto& node = tree.nodes[n];
      const double f = depth_feature(d, x, y, node.pair, m.features.background_mm);
      n = f < node.threshold ? node.left : node.right;
    }
    for (int k = 0; k < kNumClasses; ++k) sum[k] += tree.nodes[n].distribution[k];
  }
  for (auto& v : sum) v /= m.trees.size();
  return sum;
}

Label argmax(const ClassDistribution& p) {
  int best = 0;
  for (int k = 1; k < kNumClasses; ++k)
    if (p[k] > p[best]) best = k;
  return static_cast<Label>(best);
}

ForestModel stump(ClassDistribution dist) {
  ForestModel m;
  DecisionTree t;
  TreeNode leaf;
  leaf.distribution = dist;
  t.nodes.push_back(leaf);
  m.trees.push_back(t);
  return m;
}

std::vector<LabeledDepth> synth_frames(std::uint64_t seed, int count, int w, int h) {
  SynthParams p;
  p.width = w;
  p.height = h;
  std::vector<LabeledDepth> out;
  for (int i = 0; i < count; ++i) {
    SynthScene s = synth_scene(seed + i, p);
    out.push_back({std::move(s.depth), std::move(s.labels)});
  }
  return out;
}

double pixel_accuracy(const LabelMask& a, const LabelMask& b) {
  int same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return double(same) / a.size();
}

}  // namespace

TEST(DepthFeature, TwoByOneExample) {
  DepthFrame d(2, 1);
  d(0, 0) = 500;
  d(1, 0) = 1000;
  // u = 1 px*m at 0.5 m -> 2 px, outside the image
  EXPECT_DOUBLE_EQ(depth_feature(d, 0, 0, OffsetPair{1, 0, 0, 0}, 10'000.0), 9500.0);
  // 0.5 px*m -> 1 px, lands on the 1000 mm pixel
  EXPECT_DOUBLE_EQ(depth_feature(d, 0, 0, OffsetPair{0.5f, 0, 0, 0}, 10'000.0), 500.0);
}

TEST(DepthFeature, ConstantDepthAndEqualProbes) {
  DepthFrame flat(20, 10, 800);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> off(-3, 3);
  std::uniform_int_distribution<int> dv(300, 2000);
  DepthFrame rough(20, 10);
  for (auto& v : rough.pixels()) v = dv(rng);
  for (int i = 0; i < 200; ++i) {
    // keep the probes inside the flat image
    OffsetPair p{off(rng), off(rng), off(rng), off(rng)};
    EXPECT_EQ(depth_feature(flat, 10, 5, p, 10'000.0), 0.0);
    OffsetPair same{p.ux, p.uy, p.ux, p.uy};
    EXPECT_EQ(depth_feature(rough, i % 20, i % 10, same, 10'000.0), 0.0);
  }
}

TEST(DepthFeature, InvalidProbeReadsBackground) {
  DepthFrame d(3, 1);
  d(0, 0) = 1000;
  d(1, 0) = 0;
  d(2, 0) = 700;
  EXPECT_DOUBLE_EQ(depth_feature(d, 0, 0, OffsetPair{1, 0, 2, 0}, 10'000.0), 10'000.0 - 700.0);
}

TEST(ForestGain, EntropyAndGain) {
  EXPECT_DOUBLE_EQ(entropy_bits({50, 50, 0}), 1.0);
  EXPECT_DOUBLE_EQ(entropy_bits({7, 0, 0}), 0.0);
  EXPECT_NEAR(entropy_bits({1, 1, 1}), std::log2(3.0), 1e-12);
  EXPECT_DOUBLE_EQ(information_gain({50, 50, 0}, {50, 0, 0}, {0, 50, 0}), 1.0);
  EXPECT_NEAR(information_gain({40, 20, 10}, {20, 10, 5}, {20, 10, 5}), 0.0, 1e-12);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> c(0, 30);
  for (int i = 0; i < 500; ++i) {
    std::array<double, 3> l{double(c(rng)), double(c(rng)), double(c(rng))};
    std::array<double, 3> r{double(c(rng)), double(c(rng)), double(c(rng))};
    if (l[0] + l[1] + l[2] == 0 || r[0] + r[1] + r[2] == 0) continue;
    const std::array<double, 3> p{l[0] + r[0], l[1] + r[1], l[2] + r[2]};
    EXPECT_GE(information_gain(p, l, r), -1e-12);
  }
}

TEST(Forest, PureStumpPredictsBackground) {
  const ForestModel m = stump({1, 0, 0});
  std::mt19937_64 rng(2);
  DepthFrame d(16, 12);
  std::uniform_int_distribution<int> dv(0, 3000);
  for (auto& v : d.pixels()) v = dv(rng);
  EXPECT_EQ(predict_mask(m, d).labels, LabelMask(16, 12, Label::kBackground));
}

TEST(Forest, AllInvalidDepthIsBackground) {
  const ForestModel m = stump({0, 0.5, 0.5});
  const auto pred = predict_mask(m, DepthFrame(9, 7, 0), true);
  EXPECT_EQ(pred.labels, LabelMask(9, 7, Label::kBackground));
}

TEST(Forest, TieGoesToLowestLabel) {
  DepthFrame d(4, 4, 900);
  EXPECT_EQ(predict_mask(stump({0, 0.5, 0.5}), d).labels, LabelMask(4, 4, Label::kLeft));
  EXPECT_EQ(predict_mask(stump({0.5, 0.5, 0}), d).labels, LabelMask(4, 4, Label::kBackground));
}

TEST(Forest, SeparableSceneTrainingAccuracy) {
  // background wall far away, a near disk as left, a mid-depth square as right
  DepthFrame d(64, 48, 1500);
  LabelMask l(64, 48, Label::kBackground);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (std::hypot(x - 16, y - 24) < 10) d(x, y) = 500, l(x, y) = Label::kLeft;
      if (x >= 38 && x < 56 && y >= 14 && y < 34) d(x, y) = 900, l(x, y) = Label::kRight;
    }
  }
  std::vector<LabeledDepth> frames{{d, l}};
  ForestTrainConfig cfg;
  cfg.pixels_per_class_per_image = 300;
  cfg.bootstrap = false;
  cfg.features.radius = 40;
  const ForestModel m = train_forest(frames, cfg);
  EXPECT_EQ(m.trees.size(), 3u);
  for (const auto& t : m.trees) EXPECT_LE(t.depth(), 22);
  EXPECT_GE(pixel_accuracy(predict_mask(m, d).labels, l), 0.99);
}

TEST(Forest, MatchesWalkOracleAndProbabilities) {
  const auto train = synth_frames(100, 12, 80, 60);
  ForestTrainConfig cfg;
  cfg.features.radius = 25;
  cfg.seed = 9;
  const ForestModel m = train_forest(train, cfg);
  const auto test = synth_frames(500, 3, 80, 60);
  for (const auto& f : test) {
    const auto pred = predict_mask(m, f.depth, true);
    ASSERT_EQ(pred.probabilities.size(), f.depth.size() * 3);
    for (int y = 0; y < 60; ++y) {
      for (int x = 0; x < 80; ++x) {
        if (f.depth(x, y) == 0) {
          EXPECT_EQ(pred.labels(x, y), Label::kBackground);
          continue;
        }
        const auto p = walk(m, f.depth, x, y);
        const std::size_t i = (std::size_t(y) * 80 + x) * 3;
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(pred.probabilities[i + k], p[k], 1e-5);
        EXPECT_EQ(pred.labels(x, y), argmax(p)) << x << "," << y;
      }
    }
  }
}

// Random complete trees; thresholds mix integers and fractions so the
// integer fast path's ceil() is exercised on both.
ForestModel random_forest(std::mt19937_64& rng, double background, float max_offset) {
  std::uniform_real_distribution<float> off(-max_offset, max_offset), thr(-300, 300);
  std::uniform_real_distribution<double> prob(0, 1);
  ForestModel m;
  m.features.background_mm = background;
  for (int t = 0; t < 3; ++t) {
    DecisionTree tree;
    constexpr int kDepth = 5;
    for (int i = 0; i < (1 << (kDepth + 1)) - 1; ++i) {
      TreeNode n;
      if (i < (1 << kDepth) - 1) {
        n.pair = {off(rng), off(rng), off(rng), off(rng)};
        n.threshold = i % 2 ? std::round(thr(rng)) : thr(rng);
        n.left = 2 * i + 1;
        n.right = 2 * i + 2;
      } else {
        double a = prob(rng), b = prob(rng), c = prob(rng), s = a + b + c;
        n.distribution = {a / s, b / s, c / s};
      }
      tree.nodes.push_back(n);
    }
    m.trees.push_back(tree);
  }
  return m;
}

TEST(Forest, FastAndFallbackPathsMatchWalkOracle) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> depth(0, 1500);
  struct Case {
    double background;
    float max_offset;
  };
  // integer background; fractional background; background past 16 bits;
  // offsets large enough to need clamping
  for (const Case c : {Case{10'000.0, 40}, Case{10'000.5, 40}, Case{70'000.0, 40},
                       Case{10'000.0, 2e7f}}) {
    const ForestModel m = random_forest(rng, c.background, c.max_offset);
    DepthFrame d(40, 30);
    for (auto& v : d.pixels()) v = depth(rng) < 150 ? 0 : depth(rng) % 4 == 0 ? 1 : depth(rng) + 200;
    const auto pred = predict_mask(m, d, true);
    for (int y = 0; y < 30; ++y) {
      for (int x = 0; x < 40; ++x) {
        if (d(x, y) == 0) continue;
        const auto p = walk(m, d, x, y);
        const std::size_t i = (std::size_t(y) * 40 + x) * 3;
        for (int k = 0; k < 3; ++k) ASSERT_NEAR(pred.probabilities[i + k], p[k], 1e-6);
        ASSERT_EQ(pred.labels(x, y), argmax(p)) << c.background << " " << x << "," << y;
      }
    }
  }
}

TEST(Forest, DuplicateTreeKeepsPredictions) {
  const auto train = synth_frames(7, 8, 64, 48);
  ForestTrainConfig cfg;
  cfg.features.radius = 20;
  cfg.trees = 1;
  ForestModel m = train_forest(train, cfg);
  const auto test = synth_frames(70, 2, 64, 48);
  for (const auto& f : test) {
    const LabelMask before = predict_mask(m, f.depth).labels;
    ForestModel dup = m;
    dup.trees.push_back(m.trees[0]);
    EXPECT_EQ(predict_mask(dup, f.depth).labels, before);
  }
}

TEST(Forest, HeldOutSynthetic) {
  const auto train = synth_frames(1000, 40, 80, 60);
  ForestTrainConfig cfg;
  cfg.features.radius = 25;
  const ForestModel m = train_forest(train, cfg);
  const auto test = synth_frames(5000, 5, 80, 60);
  double acc = 0;
  for (const auto& f : test) acc += pixel_accuracy(predict_mask(m, f.depth).labels, f.labels);
  EXPECT_GE(acc / test.size(), 0.97);
}

TEST(Forest, SerializationRoundTrip) {
  const auto train = synth_frames(3, 4, 48, 36);
  ForestTrainConfig cfg;
  cfg.features.radius = 15;
  cfg.max_depth = 8;
  const ForestModel m = train_forest(train, cfg);
  const auto bytes = serialize_forest(m);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GSRF");
  const ForestModel back = deserialize_forest(bytes);
  EXPECT_EQ(serialize_forest(back), bytes);
  EXPECT_EQ(back.features.radius, m.features.radius);
  EXPECT_EQ(back.metadata, m.metadata);
  for (const auto& f : train) EXPECT_EQ(predict_mask(back, f.depth).labels, predict_mask(m, f.depth).labels);

  testutil::TempDir tmp;
  save_forest(m, tmp / "m.gsrf");
  EXPECT_EQ(serialize_forest(load_forest(tmp / "m.gsrf")), bytes);
  EXPECT_ERROR_CODE(load_forest(tmp / "absent.gsrf"), ErrorCode::kMissingFile);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_ERROR_CODE(deserialize_forest(bad), ErrorCode::kMalformedImage);
  EXPECT_ERROR_CODE(deserialize_forest(std::span(bytes).first(bytes.size() - 3)),
                    ErrorCode::kMalformedImage);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_ERROR_CODE(deserialize_forest(longer), ErrorCode::kMalformedImage);
}

TEST(Forest, MissingClassIsError) {
  DepthFrame d(10, 10, 800);
  LabelMask l(10, 10, Label::kBackground);
  l(2, 2) = Label::kLeft;
  std::vector<LabeledDepth> frames{{d, l}};
  EXPECT_ERROR_CODE(train_forest(frames, ForestTrainConfig{}), ErrorCode::kMissingClass);
  // right-hand pixels exist but only on invalid depth
  l(5, 5) = Label::kRight;
  frames[0].labels = l;
  frames[0].depth(5, 5) = 0;
  EXPECT_ERROR_CODE(train_forest(frames, ForestTrainConfig{}), ErrorCode::kMissingClass);
  EXPECT_ERROR_CODE(train_forest(std::span<const LabeledDepth>{}, ForestTrainConfig{}),
                    ErrorCode::kEmptyInput);
}

TEST(Forest, DeterministicAcrossJobs) {
  const auto train = synth_frames(42, 6, 64, 48);
  ForestTrainConfig cfg;
  cfg.features.radius = 20;
  cfg.seed = 5;
  const auto a = serialize_forest(train_forest(train, cfg));
  cfg.jobs = 3;
  const auto b = serialize_forest(train_forest(train, cfg));
  EXPECT_EQ(a, b);
  cfg.seed = 6;
  EXPECT_NE(serialize_forest(train_forest(train, cfg)), a);
}

TEST(Forest, ValidateRejectsBrokenTrees) {
  ForestModel m = stump({0.2, 0.2, 0.2});
  EXPECT_ERROR_CODE(m.validate(), ErrorCode::kInvalidParameter);
  m = stump({1, 0, 0});
  m.trees[0].nodes[0].left = 5;
  m.trees[0].nodes[0].right = 6;
  EXPECT_ERROR_CODE(m.validate(), ErrorCode::kInvalidParameter);
  EXPECT_ERROR_CODE(ForestModel{}.validate(), ErrorCode::kInvalidParameter);
}
