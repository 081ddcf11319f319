#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "handseg/grabcut.hpp"
#include "test_util.hpp"

using namespace handseg;

namespace {

GmmModel single_gaussian(Eigen::Vector3d mean, double var) {
  GaussianComponent c;
  c.weight = 1.0;
  c.mean = mean;
  c.covariance = var * Eigen::Matrix3d::Identity();
  return GmmModel({c});
}

// -log N(z | mean, var*I), written out by hand
double gaussian_cost(Rgb z, const Eigen::Vector3d& mean, double var) {
  const double d2 = (to_vec(z) - mean).squaredNorm();
  return 0.5 * d2 / var + 1.5 * std::log(2.0 * std::numbers::pi * var);
}

struct Instance {
  ColorFrame frame;
  Trimap trimap;
  Eigen::Vector3d fg_mean, bg_mean;
  double fg_var, bg_var;
};

// Independent energy: every unordered 8-neighbor pair, weight / euclidean dist.
double oracle_energy(const Instance& in, const BinaryMask& lab, double gamma, double beta) {
  const int w = in.frame.width(), h = in.frame.height();
  double e = 0;
  for (int i = 0; i < w * h; ++i) {
    if (in.trimap[i] != TrimapState::kUnknown) continue;
    e += lab[i] ? gaussian_cost(in.frame[i], in.fg_mean, in.fg_var)
                : gaussian_cost(in.frame[i], in.bg_mean, in.bg_var);
  }
  for (int a = 0; a < w * h; ++a) {
    for (int b = a + 1; b < w * h; ++b) {
      const int dx = std::abs(a % w - b % w), dy = std::abs(a / w - b / w);
      if (dx > 1 || dy > 1 || lab[a] == lab[b]) continue;
      const double d2 = (to_vec(in.frame[a]) - to_vec(in.frame[b])).squaredNorm();
      e += gamma * std::exp(-beta * d2) / std::sqrt(double(dx * dx + dy * dy));
    }
  }
  return e;
}

BinaryMask labeling_from_bits(int w, int h, unsigned bits) {
  BinaryMask m(w, h, 0);
  for (int i = 0; i < w * h; ++i) m[i] = (bits >> i) & 1u;
  return m;
}

bool consistent(const Trimap& t, const BinaryMask& lab) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == TrimapState::kForeground && !lab[i]) return false;
    if (t[i] == TrimapState::kBackground && lab[i]) return false;
  }
  return true;
}

BinaryMask cut_labeling(const MinCut& cut, int w, int h) {
  BinaryMask m(w, h, 0);
  for (int i = 0; i < w * h; ++i) m[i] = cut.side[i] == CutSide::kSink;
  return m;
}

ColorFrame disk_scene(int size, double cx, double cy, double r, BinaryMask* truth) {
  ColorFrame f(size, size, Rgb{128, 128, 128});
  *truth = BinaryMask(size, size, 0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (std::hypot(x - cx, y - cy) <= r) {
        f(x, y) = Rgb{40, 200, 60};
        (*truth)(x, y) = 1;
      }
    }
  }
  return f;
}

BinaryMask disk_mask(int size, double cx, double cy, double r) {
  BinaryMask m(size, size, 0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) m(x, y) = std::hypot(x - cx, y - cy) <= r;
  return m;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni ? double(inter) / uni : 1.0;
}

}  // namespace

TEST(GrabCut, ConstantImageNLinksEqualGamma) {
  ColorFrame f(4, 3, Rgb{7, 8, 9});
  const double beta = contrast_beta(f);
  EXPECT_EQ(beta, 0.0);
  Trimap t(4, 3, TrimapState::kUnknown);
  const auto g = single_gaussian({7, 8, 9}, 1.0);
  GrabCutConfig cfg;
  const GrabCutNetwork net = build_network(f, t, g, g, cfg, beta);
  // (0,0)-(1,0) horizontal, (0,0)-(1,1) diagonal
  EXPECT_DOUBLE_EQ(*net.network.capacity_between(0, 1), cfg.gamma);
  EXPECT_DOUBLE_EQ(*net.network.capacity_between(1, 0), cfg.gamma);
  EXPECT_DOUBLE_EQ(*net.network.capacity_between(0, 4), cfg.gamma);
  EXPECT_NEAR(*net.network.capacity_between(0, 5), cfg.gamma / std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(net.network.capacity_between(0, 2).has_value());
}

TEST(GrabCut, TwoByTwoStrongEdge) {
  // left column black, right column white
  ColorFrame f(2, 2);
  f(0, 0) = f(0, 1) = Rgb{0, 0, 0};
  f(1, 0) = f(1, 1) = Rgb{255, 255, 255};
  // pairs: 2 vertical (d=0), 2 horizontal (3*255^2), 2 diagonal (3*255^2)
  const double d2 = 3.0 * 255 * 255;
  const double beta_by_hand = 1.0 / (2.0 * (4 * d2) / 6.0);
  EXPECT_NEAR(contrast_beta(f), beta_by_hand, 1e-15);
  const double gamma = 50.0;
  const double across = gamma * std::exp(-beta_by_hand * d2);
  Trimap t(2, 2, TrimapState::kUnknown);
  const auto g = single_gaussian({0, 0, 0}, 1.0);
  GrabCutConfig cfg;
  const auto net = build_network(f, t, g, g, cfg, contrast_beta(f));
  const double within = *net.network.capacity_between(0, 2);
  const double edge = *net.network.capacity_between(0, 1);
  EXPECT_NEAR(within, gamma, 1e-12);
  EXPECT_NEAR(edge, across, 1e-12);
  EXPECT_LT(edge, within);
}

TEST(GrabCut, SureForegroundHasHardSinkLink) {
  std::mt19937_64 rng(5);
  ColorFrame f = testutil::random_color(5, 4, rng);
  Trimap t(5, 4, TrimapState::kUnknown);
  t(2, 1) = TrimapState::kForeground;
  t(0, 0) = TrimapState::kBackground;
  const auto fg = single_gaussian({200, 50, 50}, 100.0);
  const auto bg = single_gaussian({50, 50, 200}, 100.0);
  GrabCutConfig cfg;
  const auto net = build_network(f, t, fg, bg, cfg, contrast_beta(f));
  const int p = 1 * 5 + 2;
  EXPECT_EQ(net.network.sink_capacity(p), net.hard_capacity);
  EXPECT_EQ(net.network.source_capacity(p), 0.0);
  EXPECT_EQ(net.network.source_capacity(0), net.hard_capacity);
  EXPECT_EQ(net.network.sink_capacity(0), 0.0);
  // hard capacity must exceed any pixel's total n-link weight
  for (int q = 0; q < 20; ++q) {
    double incident = 0;
    for (int o = 0; o < 20; ++o)
      if (o != q) incident += net.network.capacity_between(q, o).value_or(0.0);
    EXPECT_GT(net.hard_capacity, incident);
  }
  const MinCut cut = max_flow(net.network);
  EXPECT_EQ(cut.side[p], CutSide::kSink);
  EXPECT_EQ(cut.side[0], CutSide::kSource);
}

TEST(GrabCut, DataCostMatchesClosedForm) {
  const Eigen::Vector3d m(10, 20, 30);
  const auto g = single_gaussian(m, 4.0);
  for (Rgb z : {Rgb{10, 20, 30}, Rgb{0, 0, 0}, Rgb{255, 1, 99}}) {
    EXPECT_NEAR(data_cost(g, z), gaussian_cost(z, m, 4.0), 1e-9);
  }
}

TEST(GrabCut, CutMinimizesEnergyByEnumeration) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> state(0, 5);
  for (int trial = 0; trial < 40; ++trial) {
    Instance in;
    in.frame = testutil::random_color(3, 3, rng);
    in.trimap = Trimap(3, 3, TrimapState::kUnknown);
    if (trial % 2) {
      for (auto& s : in.trimap.pixels()) {
        const int r = state(rng);
        s = r == 0 ? TrimapState::kForeground : r == 1 ? TrimapState::kBackground
                                                       : TrimapState::kUnknown;
      }
    }
    in.fg_mean = to_vec(in.frame[trial % 9]);
    in.bg_mean = to_vec(in.frame[(trial + 4) % 9]);
    in.fg_var = 2000.0 + 100 * trial;
    in.bg_var = 3000.0;
    GrabCutConfig cfg;
    cfg.gamma = 1.0 + trial;
    const double beta = contrast_beta(in.frame);
    const auto fg = single_gaussian(in.fg_mean, in.fg_var);
    const auto bg = single_gaussian(in.bg_mean, in.bg_var);

    double best = std::numeric_limits<double>::infinity();
    for (unsigned bits = 0; bits < 512; ++bits) {
      const BinaryMask lab = labeling_from_bits(3, 3, bits);
      if (!consistent(in.trimap, lab)) continue;
      const double e = oracle_energy(in, lab, cfg.gamma, beta);
      EXPECT_NEAR(grabcut_energy(in.frame, in.trimap, lab, fg, bg, cfg, beta), e,
                  1e-9 * (1 + std::abs(e)));
      best = std::min(best, e);
    }
    const auto net = build_network(in.frame, in.trimap, fg, bg, cfg, beta);
    const BinaryMask got = cut_labeling(max_flow(net.network), 3, 3);
    ASSERT_TRUE(consistent(in.trimap, got)) << "trial " << trial;
    EXPECT_NEAR(oracle_energy(in, got, cfg.gamma, beta), best, 1e-9 * (1 + std::abs(best)))
        << "trial " << trial;
  }
}

TEST(GrabCut, IdenticalModelsGiveOneSide) {
  std::mt19937_64 rng(2);
  ColorFrame f = testutil::random_color(3, 3, rng);
  Trimap t(3, 3, TrimapState::kUnknown);
  const auto g = single_gaussian({128, 128, 128}, 500.0);
  GrabCutConfig cfg;
  const auto net = build_network(f, t, g, g, cfg, contrast_beta(f));
  const MinCut cut = max_flow(net.network);
  EXPECT_EQ(cut.flow, 0.0);
  for (auto s : cut.side) EXPECT_EQ(s, cut.side[0]);
}

TEST(GrabCut, TrimapFromRect) {
  BinaryMask rough(6, 5, 0);
  rough(2, 2) = 1;
  rough(5, 4) = 1;  // outside rect
  const Trimap t = make_trimap(rough, SeedRect{1, 1, 3, 3});
  EXPECT_EQ(t(2, 2), TrimapState::kForeground);
  EXPECT_EQ(t(1, 1), TrimapState::kUnknown);
  EXPECT_EQ(t(3, 3), TrimapState::kUnknown);
  EXPECT_EQ(t(0, 0), TrimapState::kBackground);
  EXPECT_EQ(t(5, 4), TrimapState::kBackground);
}

TEST(GrabCut, DiskFromErodedSeed) {
  BinaryMask truth;
  const ColorFrame f = disk_scene(80, 40, 38, 20, &truth);
  const BinaryMask rough = disk_mask(80, 40, 38, 18);
  const SeedRect rect = enlarge_rect(*seed_rect(truth), 1.2, 80, 80);
  const GrabCutResult r = grabcut_refine(f, rough, rect, GrabCutConfig{});
  EXPECT_FALSE(r.degenerate_seed);
  EXPECT_GE(iou(r.mask, truth), 0.99);
  EXPECT_LT(iou(rough, truth), 0.9);
}

TEST(GrabCut, DiskFromSeedRectOfRough) {
  BinaryMask truth;
  const ColorFrame f = disk_scene(80, 40, 40, 20, &truth);
  const BinaryMask rough = disk_mask(80, 40, 40, 18);
  const GrabCutResult r = grabcut_refine(f, rough, *seed_rect(rough), GrabCutConfig{});
  EXPECT_GE(iou(r.mask, truth), 0.99);
}

TEST(GrabCut, ExactMaskIsFixedPoint) {
  BinaryMask truth;
  const ColorFrame f = disk_scene(60, 30, 30, 12, &truth);
  const SeedRect rect = enlarge_rect(*seed_rect(truth), 1.5, 60, 60);
  const GrabCutResult r = grabcut_refine(f, truth, rect, GrabCutConfig{});
  EXPECT_EQ(r.mask, truth);
  EXPECT_TRUE(r.converged);
}

TEST(GrabCut, EnergyNonIncreasingAndDeterministic) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0, 18);
  for (int trial = 0; trial < 5; ++trial) {
    BinaryMask truth;
    ColorFrame f = disk_scene(64, 30 + trial, 32, 14, &truth);
    for (auto& p : f.pixels()) {
      auto c = [&](std::uint8_t v) {
        return static_cast<std::uint8_t>(std::clamp(v + n(rng), 0.0, 255.0));
      };
      p = {c(p.r), c(p.g), c(p.b)};
    }
    const BinaryMask rough = disk_mask(64, 30 + trial, 32, 9);
    GrabCutConfig cfg;
    cfg.iterations = 8;
    cfg.seed = trial;
    const auto rect = enlarge_rect(*seed_rect(rough), 1.8, 64, 64);
    const GrabCutResult a = grabcut_refine(f, rough, rect, cfg);
    ASSERT_GE(a.energy.size(), 2u);
    for (std::size_t i = 1; i < a.energy.size(); ++i) {
      EXPECT_LE(a.energy[i], a.energy[i - 1] + 1e-6) << "trial " << trial << " step " << i;
    }
    const GrabCutResult b = grabcut_refine(f, rough, rect, cfg);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.energy, b.energy);
  }
}

TEST(GrabCut, OutputRestrictedToRect) {
  BinaryMask truth;
  const ColorFrame f = disk_scene(60, 30, 30, 12, &truth);
  const SeedRect rect{20, 20, 15, 15};
  const GrabCutResult r = grabcut_refine(f, truth, rect, GrabCutConfig{});
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 60; ++x)
      if (!rect.contains(x, y)) EXPECT_EQ(r.mask(x, y), 0) << x << "," << y;
}

TEST(GrabCut, DegenerateSeedReturnsRough) {
  ColorFrame f(10, 10, Rgb{1, 2, 3});
  BinaryMask rough(10, 10, 0);
  rough(9, 9) = 1;  // outside the rect, so no sure foreground
  const GrabCutResult r = grabcut_refine(f, rough, SeedRect{0, 0, 4, 4}, GrabCutConfig{});
  EXPECT_TRUE(r.degenerate_seed);
  EXPECT_EQ(r.mask, rough);
}

TEST(GrabCut, InvalidConfig) {
  ColorFrame f(4, 4);
  BinaryMask m(4, 4, 1);
  GrabCutConfig cfg;
  cfg.gamma = 0;
  EXPECT_ERROR_CODE(grabcut_refine(f, m, SeedRect{0, 0, 4, 4}, cfg), ErrorCode::kInvalidParameter);
  EXPECT_ERROR_CODE(grabcut_refine(f, BinaryMask(3, 4, 1), SeedRect{0, 0, 3, 3}, GrabCutConfig{}),
                    ErrorCode::kDimensionMismatch);
}

TEST(GrabCut, ResolveOverlapPrefersLikelierModel) {
  ColorFrame f(2, 1);
  f(0, 0) = Rgb{250, 10, 10};
  f(1, 0) = Rgb{10, 10, 250};
  BinaryMask l(2, 1, 1), r(2, 1, 1);
  resolve_overlap(f, l, r, single_gaussian({250, 10, 10}, 50), single_gaussian({10, 10, 250}, 50));
  EXPECT_EQ(l(0, 0), 1);
  EXPECT_EQ(r(0, 0), 0);
  EXPECT_EQ(l(1, 0), 0);
  EXPECT_EQ(r(1, 0), 1);
}
