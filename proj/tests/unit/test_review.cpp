#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "handseg/io.hpp"
#include "handseg/review.hpp"
#include "test_util.hpp"

using namespace handseg;

namespace {

SequenceManifest sequence(const std::string& id, int n) {
  SequenceManifest m;
  m.sequence_id = id;
  m.subject_id = "s";
  m.camera = "c";
  for (int i = 0; i < n; ++i) {
    m.frames.push_back({i, "depth/" + std::to_string(i) + ".png",
                        "color/" + std::to_string(i) + ".png", std::nullopt});
  }
  return m;
}

ReviewDecision decision(const std::string& id, int start, int end, Verdict v) {
  return {id, start, end, v, "tester", "2026-01-01T00:00:00Z"};
}

std::set<int> indices(const SequenceManifest& m) {
  std::set<int> out;
  for (const auto& f : m.frames) out.insert(f.index);
  return out;
}

}  // namespace

TEST(Filter, NoDecisionsIsIdentity) {
  const auto m = sequence("a", 12);
  EXPECT_EQ(indices(filter_dataset(m, {})), indices(m));
}

TEST(Filter, RejectFirstTen) {
  const auto m = sequence("a", 100);
  const std::vector<ReviewDecision> d{decision("a", 0, 9, Verdict::kReject)};
  const auto out = filter_dataset(m, d);
  EXPECT_EQ(out.frames.size(), 90u);
  EXPECT_EQ(out.frames.front().index, 10);
  EXPECT_EQ(out.sequence_id, "a");
}

TEST(Filter, RejectOverridesAccept) {
  const auto m = sequence("a", 20);
  const std::vector<ReviewDecision> d{decision("a", 0, 9, Verdict::kAccept),
                                      decision("a", 5, 9, Verdict::kReject)};
  const auto out = indices(filter_dataset(m, d));
  for (int i = 0; i < 20; ++i) EXPECT_EQ(out.count(i), (i >= 5 && i <= 9) ? 0u : 1u) << i;
}

TEST(Filter, OtherSequencesIgnoredAndRangeChecked) {
  const auto m = sequence("a", 10);
  std::vector<ReviewDecision> d{decision("b", 0, 500, Verdict::kReject)};
  EXPECT_EQ(filter_dataset(m, d).frames.size(), 10u);
  d.push_back(decision("a", 8, 10, Verdict::kReject));
  EXPECT_ERROR_CODE(filter_dataset(m, d), ErrorCode::kOutOfRange);
}

TEST(Filter, RandomRangesSubsetAndComplement) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const int n = 5 + rng() % 60;
    const auto m = sequence("q", n);
    std::vector<ReviewDecision> d;
    std::set<int> rejected;
    for (int k = 0; k < 4; ++k) {
      const int a = rng() % n, b = rng() % n;
      const Verdict v = rng() % 2 ? Verdict::kReject : Verdict::kAccept;
      d.push_back(decision("q", std::min(a, b), std::max(a, b), v));
      if (v == Verdict::kReject)
        for (int i = std::min(a, b); i <= std::max(a, b); ++i) rejected.insert(i);
    }
    const auto out = indices(filter_dataset(m, d));
    for (int i = 0; i < n; ++i) EXPECT_EQ(out.count(i) == 1, rejected.count(i) == 0);
  }
}

TEST(Decisions, JsonRoundTrip) {
  const ReviewDecision d = decision("seq-1", 3, 7, Verdict::kReject);
  const std::string line = decision_to_json_line(d);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(decision_from_json_text(line), d);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("verdict"), "reject");
  EXPECT_EQ(j.at("start"), 3);
  EXPECT_EQ(j.at("end"), 7);
  const ReviewDecision a = decision("x", 0, 0, Verdict::kAccept);
  EXPECT_EQ(decision_from_json_text(decision_to_json_line(a)), a);
}

TEST(Decisions, Malformed) {
  EXPECT_ERROR_CODE(decision_from_json_text("{"), ErrorCode::kConfig);
  EXPECT_ERROR_CODE(decision_from_json_text(R"({"sequence_id":"a","start":5,"end":2,"verdict":"reject"})"),
                    ErrorCode::kConfig);
  EXPECT_ERROR_CODE(decision_from_json_text(R"({"sequence_id":"a","start":0,"end":2,"verdict":"maybe"})"),
                    ErrorCode::kConfig);
  EXPECT_ERROR_CODE(decision_from_json_text(R"({"start":0,"end":2,"verdict":"reject"})"),
                    ErrorCode::kConfig);
}

TEST(Decisions, TimestampFormat) {
  const std::string ts = utc_timestamp_now();
  ASSERT_EQ(ts.size(), 20u);
  EXPECT_EQ(ts[4], '-');
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts.back(), 'Z');
}

TEST(DecisionLog, AppendAndReload) {
  testutil::TempDir tmp;
  const auto path = tmp / "nested/dir/decisions.jsonl";
  EXPECT_TRUE(load_decisions(path).empty());
  {
    DecisionLog log(path);
    log.append(decision("a", 0, 1, Verdict::kReject));
    log.append(decision("a", 4, 4, Verdict::kAccept));
  }
  DecisionLog again(path);
  again.append(decision("b", 2, 3, Verdict::kReject));
  const auto all = load_decisions(path);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0], decision("a", 0, 1, Verdict::kReject));
  EXPECT_EQ(all[2].sequence_id, "b");
  EXPECT_EQ(again.read_all(), all);
}

TEST(DecisionLog, ConcurrentAppendsAreWholeLines) {
  testutil::TempDir tmp;
  const auto path = tmp / "d.jsonl";
  DecisionLog log(path);
  constexpr int kThreads = 8, kEach = 50;
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < kThreads; ++t) {
      pool.emplace_back([&log, t] {
        for (int i = 0; i < kEach; ++i) {
          log.append(decision("seq" + std::to_string(t), i, i + t, Verdict::kReject));
        }
      });
    }
  }
  const auto all = load_decisions(path);
  ASSERT_EQ(all.size(), std::size_t(kThreads * kEach));
  std::set<std::pair<std::string, int>> seen;
  for (const auto& d : all) seen.insert({d.sequence_id, d.start});
  EXPECT_EQ(seen.size(), all.size());
}

TEST(DecisionLog, UnwritablePath) {
  testutil::TempDir tmp;
  std::ofstream(tmp / "file") << "x";
  // parent is a regular file
  EXPECT_ERROR_CODE(DecisionLog(tmp / "file/decisions.jsonl"), ErrorCode::kIo);
}

TEST(DecisionLog, MalformedLineIsReported) {
  testutil::TempDir tmp;
  std::ofstream(tmp / "d.jsonl") << decision_to_json_line(decision("a", 0, 1, Verdict::kReject))
                                 << "\nnot json\n";
  EXPECT_ERROR_CODE(load_decisions(tmp / "d.jsonl"), ErrorCode::kConfig);
}
