#include "handseg/forest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

namespace handseg {

namespace {

// floor(v + 0.5) as a biased truncation, which is much cheaper than floor()
// in the inference hot loop. Exact up to ~4e-9 below a half-integer; training
// and inference both go through here, so they always agree.
constexpr double kOffsetLimit = 8388608.0;  // 2^23 px, off every image anyway

inline int round_offset_unchecked(double v) {  // |v| < kOffsetLimit
  constexpr double kBias = 16777216.0;          // 2^24
  return static_cast<int>(v + (kBias + 0.5)) - static_cast<int>(kBias);
}

inline int round_offset(double v) {
  return round_offset_unchecked(std::clamp(v, -kOffsetLimit, kOffsetLimit));
}

template <typename T>
struct FlatNode {
  double ux, uy, vx, vy;
  T threshold;
  std::int32_t left, right;  // leaf: left < 0, right = row in the distribution table
};

// Walks every valid pixel through every tree. `buf` is the depth frame with
// holes already replaced by the background value. T is int when that is
// exact, so probes and comparisons stay in integers.
template <typename T, bool kChecked, typename Pixel>
void walk_forest(const std::vector<Pixel>& buf, const DepthFrame& depth,
                 const std::vector<FlatNode<T>>& nodes, const std::vector<std::int32_t>& roots,
                 const std::vector<ClassDistribution>& dists, T bg, ForestPrediction& out,
                 bool with_probabilities) {
  const int w = depth.width();
  const int h = depth.height();
  const std::uint16_t* raw = depth.pixels().data();
  const Pixel* data = buf.data();
  const float inv_trees = 1.0f / static_cast<float>(roots.size());
  auto round = [](double v) {
    return kChecked ? round_offset(v) : round_offset_unchecked(v);
  };
  auto read = [&](int x, int y) -> T {
    if (static_cast<unsigned>(x) >= static_cast<unsigned>(w) ||
        static_cast<unsigned>(y) >= static_cast<unsigned>(h)) {
      return bg;
    }
    return static_cast<T>(data[static_cast<std::size_t>(y) * w + x]);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const std::uint16_t d = raw[p];
      if (d == 0) {
        if (with_probabilities) out.probabilities[p * kNumClasses] = 1.0f;
        continue;
      }
      const double scale = 1000.0 / static_cast<double>(d);
      ClassDistribution acc{};
      for (const std::int32_t root : roots) {
        const FlatNode<T>* node = &nodes[root];
        while (node->left >= 0) {
          const T a = read(x + round(node->ux * scale), y + round(node->uy * scale));
          const T b = read(x + round(node->vx * scale), y + round(node->vy * scale));
          node = &nodes[(a - b) < node->threshold ? node->left : node->right];
        }
        const auto& dist = dists[node->right];
        for (int c = 0; c < kNumClasses; ++c) acc[c] += dist[c];
      }
      int best = 0;
      for (int c = 1; c < kNumClasses; ++c) {
        if (acc[c] > acc[best]) best = c;
      }
      out.labels[p] = static_cast<Label>(best);
      if (with_probabilities) {
        for (int c = 0; c < kNumClasses; ++c) {
          out.probabilities[p * kNumClasses + c] = static_cast<float>(acc[c]) * inv_trees;
        }
      }
    }
  }
}

inline double probe(const DepthFrame& depth, int x, int y, double background_mm) {
  if (!depth.in_bounds(x, y)) return background_mm;
  const std::uint16_t d = depth(x, y);
  return d == 0 ? background_mm : static_cast<double>(d);
}

}  // namespace

double depth_feature(const DepthFrame& depth, int x, int y, const OffsetPair& pair,
                     double background_mm) {
  const double center = depth(x, y);
  if (center <= 0.0) return 0.0;
  const double scale = 1000.0 / center;  // px*m -> px at this depth
  const double a = probe(depth, x + round_offset(pair.ux * scale),
                         y + round_offset(pair.uy * scale), background_mm);
  const double b = probe(depth, x + round_offset(pair.vx * scale),
                         y + round_offset(pair.vy * scale), background_mm);
  return a - b;
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  int deepest = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [n, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[n].is_leaf()) {
      stack.push_back({nodes[n].left, d + 1});
      stack.push_back({nodes[n].right, d + 1});
    }
  }
  return deepest;
}

void ForestModel::validate(int max_depth) const {
  if (trees.empty()) throw Error(ErrorCode::kInvalidParameter, "forest has no trees");
  for (const auto& tree : trees) {
    if (tree.nodes.empty()) throw Error(ErrorCode::kInvalidParameter, "empty tree");
    const int n = static_cast<int>(tree.nodes.size());
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) {
        double s = 0.0;
        for (double p : node.distribution) {
          if (p < 0.0) throw Error(ErrorCode::kInvalidParameter, "negative leaf probability");
          s += p;
        }
        if (std::abs(s - 1.0) > 1e-9) {
          throw Error(ErrorCode::kInvalidParameter, "leaf distribution not normalized");
        }
      } else if (node.left >= n || node.right < 0 || node.right >= n) {
        throw Error(ErrorCode::kInvalidParameter, "tree child index out of range");
      }
    }
    if (tree.depth() > max_depth) {
      throw Error(ErrorCode::kInvalidParameter, "tree exceeds depth bound");
    }
  }
}

double entropy_bits(const std::array<double, kNumClasses>& counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

double information_gain(const std::array<double, kNumClasses>& parent,
                        const std::array<double, kNumClasses>& left,
                        const std::array<double, kNumClasses>& right) {
  double n = 0.0, nl = 0.0, nr = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    n += parent[c];
    nl += left[c];
    nr += right[c];
  }
  if (n <= 0.0) return 0.0;
  return entropy_bits(parent) - (nl / n) * entropy_bits(left) - (nr / n) * entropy_bits(right);
}

namespace {

struct Sample {
  std::uint32_t frame;
  std::uint16_t x;
  std::uint16_t y;
  std::uint8_t label;
};

using Counts = std::array<double, kNumClasses>;

ClassDistribution normalize(const Counts& counts) {
  double total = counts[0] + counts[1] + counts[2];
  ClassDistribution d{};
  if (total <= 0.0) {
    d[0] = 1.0;
    return d;
  }
  for (int c = 0; c < kNumClasses; ++c) d[c] = counts[c] / total;
  return d;
}

class TreeTrainer {
 public:
  TreeTrainer(std::span<const LabeledDepth> frames, const ForestTrainConfig& config,
              std::uint64_t seed)
      : frames_(frames), config_(config), rng_(seed) {}

  DecisionTree train() {
    collect_samples();
    order_.resize(samples_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    DecisionTree tree;
    tree.nodes.emplace_back();
    struct Job {
      int node;
      std::size_t begin;
      std::size_t end;
      int depth;
    };
    std::vector<Job> stack{{0, 0, order_.size(), 0}};
    while (!stack.empty()) {
      const Job job = stack.back();
      stack.pop_back();
      const Counts counts = count(job.begin, job.end);
      const std::size_t m = job.end - job.begin;
      const bool pure = std::count_if(counts.begin(), counts.end(),
                                      [](double c) { return c > 0.0; }) <= 1;
      Split split;
      if (job.depth < config_.max_depth && !pure &&
          m >= static_cast<std::size_t>(std::max(2, config_.min_samples))) {
        split = best_split(job.begin, job.end, counts);
      }
      if (!split.valid) {
        tree.nodes[job.node].distribution = normalize(counts);
        continue;
      }
      const std::size_t mid = partition(job.begin, job.end, split);
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& node = tree.nodes[job.node];
      node.pair = split.pair;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, job.end, job.depth + 1});
      stack.push_back({left, job.begin, mid, job.depth + 1});
    }
    return tree;
  }

 private:
  struct Split {
    bool valid = false;
    OffsetPair pair;
    float threshold = 0;
    double gain = 0;
  };

  void collect_samples() {
    const std::size_t n = frames_.size();
    std::vector<std::size_t> chosen(n);
    if (config_.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& c : chosen) c = pick(rng_);
    } else {
      for (std::size_t i = 0; i < n; ++i) chosen[i] = i;
    }
    std::array<std::vector<Sample>, kNumClasses> pool;
    for (std::size_t f : chosen) {
      const auto& fr = frames_[f];
      for (auto& p : pool) p.clear();
      for (int y = 0; y < fr.depth.height(); ++y) {
        for (int x = 0; x < fr.depth.width(); ++x) {
          if (fr.depth(x, y) == 0) continue;
          const auto label = static_cast<std::uint8_t>(fr.labels(x, y));
          pool[label].push_back({static_cast<std::uint32_t>(f), static_cast<std::uint16_t>(x),
                                 static_cast<std::uint16_t>(y), label});
        }
      }
      for (auto& p : pool) {
        const auto take = std::min<std::size_t>(p.size(), config_.pixels_per_class_per_image);
        std::sample(p.begin(), p.end(), std::back_inserter(samples_), take, rng_);
      }
    }
  }

  Counts count(std::size_t begin, std::size_t end) const {
    Counts c{};
    for (std::size_t i = begin; i < end; ++i) c[samples_[order_[i]].label] += 1.0;
    return c;
  }

  float feature(const Sample& s, const OffsetPair& pair) const {
    return static_cast<float>(
        depth_feature(frames_[s.frame].depth, s.x, s.y, pair, config_.features.background_mm));
  }

  Split best_split(std::size_t begin, std::size_t end, const Counts& parent) {
    const std::size_t m = end - begin;
    const float r = static_cast<float>(config_.features.radius);
    std::uniform_real_distribution<float> offset(-r, r);
    std::vector<float> values(m);
    std::vector<float> subsample;
    std::vector<float> thresholds;
    const int nt = std::max(1, config_.thresholds_per_candidate);
    std::vector<Counts> bins;
    Split best;
    for (int cand = 0; cand < config_.candidates_per_node; ++cand) {
      OffsetPair pair{offset(rng_), offset(rng_), offset(rng_), offset(rng_)};
      for (std::size_t i = 0; i < m; ++i) values[i] = feature(samples_[order_[begin + i]], pair);

      // Quantile thresholds of the node's empirical feature distribution.
      const std::size_t stride = std::max<std::size_t>(1, m / 1024);
      subsample.clear();
      for (std::size_t i = 0; i < m; i += stride) subsample.push_back(values[i]);
      std::sort(subsample.begin(), subsample.end());
      thresholds.clear();
      for (int t = 0; t < nt; ++t) {
        const std::size_t q = (subsample.size() * (t + 1)) / (nt + 1);
        thresholds.push_back(subsample[std::min(q, subsample.size() - 1)]);
      }
      thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

      bins.assign(thresholds.size() + 1, Counts{});
      for (std::size_t i = 0; i < m; ++i) {
        const auto b = std::upper_bound(thresholds.begin(), thresholds.end(), values[i]) -
                       thresholds.begin();
        bins[b][samples_[order_[begin + i]].label] += 1.0;
      }
      Counts left{};
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        for (int c = 0; c < kNumClasses; ++c) left[c] += bins[t][c];
        Counts right{};
        double nl = 0, nr = 0;
        for (int c = 0; c < kNumClasses; ++c) {
          right[c] = parent[c] - left[c];
          nl += left[c];
          nr += right[c];
        }
        if (nl <= 0 || nr <= 0) continue;
        const double gain = information_gain(parent, left, right);
        if (gain > 1e-12 && gain > best.gain) {
          best = {true, pair, thresholds[t], gain};
        }
      }
    }
    return best;
  }

  std::size_t partition(std::size_t begin, std::size_t end, const Split& split) {
    auto mid = std::stable_partition(
        order_.begin() + begin, order_.begin() + end,
        [&](std::uint32_t idx) { return feature(samples_[idx], split.pair) < split.threshold; });
    return static_cast<std::size_t>(mid - order_.begin());
  }

  std::span<const LabeledDepth> frames_;
  const ForestTrainConfig& config_;
  std::mt19937_64 rng_;
  std::vector<Sample> samples_;
  std::vector<std::uint32_t> order_;
};

}  // namespace

ForestModel train_forest(std::span<const LabeledDepth> frames, const ForestTrainConfig& config) {
  if (frames.empty()) throw Error(ErrorCode::kEmptyInput, "no training frames");
  if (config.trees < 1 || config.max_depth < 0 || config.candidates_per_node < 1 ||
      config.pixels_per_class_per_image < 1) {
    throw Error(ErrorCode::kInvalidParameter, "invalid forest training configuration");
  }
  std::array<bool, kNumClasses> seen{};
  for (const auto& f : frames) {
    if (!f.depth.same_shape(f.labels)) {
      throw Error(ErrorCode::kDimensionMismatch, "depth and label frames differ in size");
    }
    for (std::size_t i = 0; i < f.depth.size(); ++i) {
      if (f.depth[i] != 0) seen[static_cast<int>(f.labels[i])] = true;
    }
  }
  for (int c = 0; c < kNumClasses; ++c) {
    if (!seen[c]) {
      throw Error(ErrorCode::kMissingClass,
                  "class " + std::to_string(c) + " has no valid-depth training pixel");
    }
  }

  ForestModel model;
  model.features = config.features;
  model.trees.resize(config.trees);
  std::seed_seq seq{config.seed, std::uint64_t{0x475352}};
  std::vector<std::uint64_t> tree_seeds(config.trees);
  {
    std::vector<std::uint32_t> raw(2 * config.trees);
    seq.generate(raw.begin(), raw.end());
    for (int t = 0; t < config.trees; ++t) {
      tree_seeds[t] = (std::uint64_t{raw[2 * t]} << 32) | raw[2 * t + 1];
    }
  }
  auto train_one = [&](int t) {
    model.trees[t] = TreeTrainer(frames, config, tree_seeds[t]).train();
  };
  const int jobs = std::clamp(config.jobs, 1, config.trees);
  if (jobs == 1) {
    for (int t = 0; t < config.trees; ++t) train_one(t);
  } else {
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&, w] {
        for (int t = w; t < config.trees; t += jobs) train_one(t);
      });
    }
    for (auto& th : workers) th.join();
  }

  nlohmann::json meta{{"trees", config.trees},
                      {"max_depth", config.max_depth},
                      {"pixels_per_class_per_image", config.pixels_per_class_per_image},
                      {"candidates_per_node", config.candidates_per_node},
                      {"thresholds_per_candidate", config.thresholds_per_candidate},
                      {"min_samples", config.min_samples},
                      {"bootstrap", config.bootstrap},
                      {"seed", config.seed},
                      {"training_frames", frames.size()}};
  model.metadata = meta.dump();
  return model;
}

namespace {

template <typename T, typename Conv>
std::tuple<std::vector<FlatNode<T>>, std::vector<std::int32_t>, std::vector<ClassDistribution>>
flatten(const ForestModel& model, Conv threshold) {
  std::vector<FlatNode<T>> nodes;
  std::vector<std::int32_t> roots;
  std::vector<ClassDistribution> dists;
  for (const auto& tree : model.trees) {
    const auto base = static_cast<std::int32_t>(nodes.size());
    roots.push_back(base);
    for (const auto& n : tree.nodes) {
      FlatNode<T> f{n.pair.ux, n.pair.uy, n.pair.vx, n.pair.vy, threshold(n.threshold), -1, 0};
      if (n.is_leaf()) {
        f.right = static_cast<std::int32_t>(dists.size());
        dists.push_back(n.distribution);
      } else {
        f.left = base + n.left;
        f.right = base + n.right;
      }
      nodes.push_back(f);
    }
  }
  return {std::move(nodes), std::move(roots), std::move(dists)};
}

}  // namespace

ForestPrediction predict_mask(const ForestModel& model, const DepthFrame& depth,
                              bool with_probabilities) {
  ForestPrediction out;
  out.labels = LabelMask(depth.width(), depth.height(), Label::kBackground);
  if (with_probabilities) out.probabilities.assign(depth.size() * kNumClasses, 0.0f);

  const double bg = model.features.background_mm;
  const auto& px = depth.pixels();
  // depth >= 1 mm, so |offset| <= 1000 * |u|; the clamp is only needed past that
  float max_u = 0.0f;
  for (const auto& tree : model.trees) {
    for (const auto& n : tree.nodes) {
      max_u = std::max({max_u, std::abs(n.pair.ux), std::abs(n.pair.uy), std::abs(n.pair.vx),
                        std::abs(n.pair.vy)});
    }
  }
  const bool checked = !(1000.0 * max_u < kOffsetLimit);
  // integer features when the background value is a valid depth:
  // a - b < t  <=>  a - b < ceil(t)
  if (bg == std::floor(bg) && bg >= 0.0 && bg <= 65535.0) {
    std::vector<std::uint16_t> buf(px.begin(), px.end());
    for (auto& v : buf) if (v == 0) v = static_cast<std::uint16_t>(bg);
    const auto [nodes, roots, dists] = flatten<int>(model, [](float t) {
      return static_cast<int>(std::ceil(t));
    });
    const int b = static_cast<int>(bg);
    if (checked) {
      walk_forest<int, true>(buf, depth, nodes, roots, dists, b, out, with_probabilities);
    } else {
      walk_forest<int, false>(buf, depth, nodes, roots, dists, b, out, with_probabilities);
    }
  } else {
    std::vector<double> buf(px.begin(), px.end());
    for (auto& v : buf) if (v == 0) v = bg;
    const auto [nodes, roots, dists] = flatten<double>(model, [](float t) { return double(t); });
    walk_forest<double, true>(buf, depth, nodes, roots, dists, bg, out, with_probabilities);
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'G', 'S', 'R', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw Error(ErrorCode::kMalformedImage, "truncated forest model");
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_forest(const ForestModel& model) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kFormatVersion);
  w.u32(kNumClasses);
  w.f64(model.features.background_mm);
  w.f64(model.features.radius);
  w.u32(static_cast<std::uint32_t>(model.metadata.size()));
  w.raw(model.metadata.data(), model.metadata.size());
  w.u32(static_cast<std::uint32_t>(model.trees.size()));
  for (const auto& tree : model.trees) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& n : tree.nodes) {
      w.i32(n.left);
      w.i32(n.right);
      w.f32(n.pair.ux);
      w.f32(n.pair.uy);
      w.f32(n.pair.vx);
      w.f32(n.pair.vy);
      w.f32(n.threshold);
      for (double p : n.distribution) w.f64(p);
    }
  }
  return w.bytes;
}

ForestModel deserialize_forest(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) {
    throw Error(ErrorCode::kMalformedImage, "not a forest model (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kMalformedImage,
                "unsupported forest model version " + std::to_string(version));
  }
  if (r.u32() != kNumClasses) throw Error(ErrorCode::kMalformedImage, "class count mismatch");
  ForestModel model;
  model.features.background_mm = r.f64();
  model.features.radius = r.f64();
  model.metadata = r.str(r.u32());
  const std::uint32_t trees = r.u32();
  model.trees.resize(trees);
  for (auto& tree : model.trees) {
    const std::uint32_t nodes = r.u32();
    tree.nodes.resize(nodes);
    for (auto& n : tree.nodes) {
      n.left = r.i32();
      n.right = r.i32();
      n.pair.ux = r.f32();
      n.pair.uy = r.f32();
      n.pair.vx = r.f32();
      n.pair.vy = r.f32();
      n.threshold = r.f32();
      for (double& p : n.distribution) p = r.f64();
    }
  }
  if (!r.done()) throw Error(ErrorCode::kMalformedImage, "trailing bytes in forest model");
  model.validate();
  return model;
}

void save_forest(const ForestModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize_forest(model);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ForestModel load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_forest(bytes);
}

}  // namespace handseg
