// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "csa/errors.hpp"
#include "csa/formats.hpp"
#include "csa/metrics.hpp"
#include "csa/search.hpp"
#include "csa/synthetic.hpp"
#include "test_support.hpp"

namespace csa {
namespace {

SyntheticDatasetSpec small_spec(std::uint64_t seed) {
  SyntheticDatasetSpec s;
  s.cluster_count = 10;
  s.items_per_cluster = 6;
  s.distractor_count = 30;
  s.dim = 16;
  s.num_views = 2;
  s.seed = seed;
  return s;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic data

TEST(Synthetic, ZeroNoiseCollapsesClusters) {
  auto spec = small_spec(1);
  spec.noise_sigma = 0.0;
  const auto data = generate_synthetic(spec);
  const auto& v = data.views[0];
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) {
      const auto li = data.labels.at(v.ids()[i]);
      if (li >= 0 && li == data.labels.at(v.ids()[j])) {
        EXPECT_NEAR(v.similarity(i, j), 1.0f, 1e-6f);
      }
    }
  }
  EXPECT_EQ(data.views[0].rows(), data.views[1].rows());
}

TEST(Synthetic, SeedingContract) {
  const auto a = generate_synthetic(small_spec(2));
  const auto b = generate_synthetic(small_spec(2));
  const auto c = generate_synthetic(small_spec(3));
  EXPECT_EQ(a.views[0].rows(), b.views[0].rows());
  EXPECT_EQ(a.views[0].ids(), b.views[0].ids());
  EXPECT_FALSE(a.views[0].rows() == a.views[1].rows());
  EXPECT_EQ(a.views[0].ids(), a.views[1].ids());
  EXPECT_FALSE(a.views[0].rows() == c.views[0].rows());

  // Adding views does not disturb the earlier ones.
  auto more = small_spec(2);
  more.num_views = 3;
  EXPECT_EQ(generate_synthetic(more).views[1].rows(), a.views[1].rows());
}

TEST(Synthetic, ShapesLabelsAndUnitNorm) {
  const auto spec = small_spec(4);
  const auto data = generate_synthetic(spec);
  ASSERT_EQ(data.views.size(), 2u);
  EXPECT_EQ(data.views[0].size(), 10u * 6u + 30u);
  EXPECT_EQ(data.views[0].dim(), 16u);
  EXPECT_EQ(data.clustered_ids.size(), 60u);
  std::size_t distractors = 0;
  for (const auto& [id, label] : data.labels) distractors += label < 0;
  EXPECT_EQ(distractors, 30u);
  for (std::size_t i = 0; i < data.views[1].size(); ++i) {
    EXPECT_NEAR(dot(data.views[1].row(i), data.views[1].row(i)), 1.0, 1e-5);
  }
}

TEST(Synthetic, WithinClusterCosineExceedsCrossCluster) {
  auto spec = small_spec(5);
  spec.noise_sigma = 0.1;
  spec.dim = 32;
  const auto data = generate_synthetic(spec);
  const auto& v = data.views[0];
  double within = 0.0, cross = 0.0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto li = data.labels.at(v.ids()[i]);
    if (li < 0) continue;
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const auto lj = data.labels.at(v.ids()[j]);
      if (lj < 0) continue;
      if (li == lj) {
        within += v.similarity(i, j);
        ++nw;
      } else {
        cross += v.similarity(i, j);
        ++nc;
      }
    }
  }
  EXPECT_GT(within / nw, cross / nc + 0.5);
}

TEST(Synthetic, SpecValidation) {
  auto s = small_spec(1);
  s.cluster_count = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec(1);
  s.noise_sigma = -0.1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec(1);
  s.distractor_count = 0;
  EXPECT_NO_THROW(s.validate());
}

TEST(Synthetic, QuerySamplingIsSeededAndOrdered) {
  const auto data = generate_synthetic(small_spec(6));
  const auto a = sample_queries(data.clustered_ids, 12, 9);
  EXPECT_EQ(a, sample_queries(data.clustered_ids, 12, 9));
  EXPECT_NE(a, sample_queries(data.clustered_ids, 12, 10));
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), 12u);
}

TEST(Synthetic, GroundTruthExcludesQueryAndDistractors) {
  const auto data = generate_synthetic(small_spec(7));
  const auto queries = sample_queries(data.clustered_ids, 5, 1);
  const auto truth = make_ground_truth(data.labels, data.views[0].ids(), queries);
  ASSERT_EQ(truth.size(), 5u);
  validate_ground_truth(truth);
  for (const auto& t : truth) {
    EXPECT_EQ(t.positives.size(), 5u);
    for (const auto& p : t.positives) EXPECT_EQ(data.labels.at(p), data.labels.at(t.query_id));
  }
}

// ---------------------------------------------------------------------------
// kNN

TEST(Knn, QueryRanksFirstWithScoreOne) {
  Rng rng(8);
  const auto emb = testing::random_embeddings(rng, 30, 6);
  const auto r = knn_search(emb, emb.ids()[11], 5);
  EXPECT_EQ(r.query_id, emb.ids()[11]);
  EXPECT_EQ(r.entries[0].id, emb.ids()[11]);
  EXPECT_NEAR(r.entries[0].score, 1.0, 1e-6);
  EXPECT_EQ(r.size(), 5u);
}

TEST(Knn, FullDepthAndBruteForceOracle) {
  Rng rng(9);
  const auto emb = testing::random_embeddings(rng, 12, 4);
  const auto r = knn_search(emb, emb.ids()[3], 12);
  ASSERT_EQ(r.size(), 12u);
  std::vector<std::pair<double, std::string>> oracle;
  for (std::size_t i = 0; i < 12; ++i) oracle.emplace_back(emb.similarity(3, i), emb.ids()[i]);
  std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(r.entries[i].id, oracle[i].second);
  EXPECT_EQ(knn_search(emb, emb.ids()[3], 100).size(), 12u);
}

TEST(Knn, TiesBrokenById) {
  std::vector<std::string> ids{"q", "b", "a", "c"};
  MatrixF rows(4, 2);
  rows(0, 0) = 1.0f;
  rows(1, 0) = 1.0f;
  rows(2, 0) = 1.0f;
  rows(3, 1) = 1.0f;
  EmbeddingMatrix emb(ids, rows);
  const auto r = knn_search(emb, "q", 4);
  EXPECT_EQ(r.entries[0].id, "a");
  EXPECT_EQ(r.entries[1].id, "b");
  EXPECT_EQ(r.entries[2].id, "q");
}

TEST(Knn, UnknownIdRejected) {
  Rng rng(10);
  const auto emb = testing::random_embeddings(rng, 4, 3);
  EXPECT_THROW((void)knn_search(emb, "missing", 2), std::out_of_range);
}

// ---------------------------------------------------------------------------
// AP / mAP

RankingList ranked(const std::string& query, std::vector<std::string> ids) {
  RankingList r;
  r.query_id = query;
  double s = 1.0;
  for (auto& id : ids) {
    r.entries.push_back({std::move(id), s});
    s -= 0.01;
  }
  return r;
}

TEST(AveragePrecision, PerfectRankingIsOne) {
  const QueryTruth t{"q", {"a", "b"}, {}};
  EXPECT_EQ(*average_precision(ranked("q", {"q", "a", "b", "x", "y"}), t), 1.0);
}

TEST(AveragePrecision, HandOracle) {
  const QueryTruth t{"q", {"a", "b"}, {}};
  EXPECT_NEAR(*average_precision(ranked("q", {"a", "x", "b"}), t), 0.8333333333333334, 1e-9);
  // The query's own entry and ignored ids are removed before scoring.
  const QueryTruth ti{"q", {"a", "b"}, {"junk"}};
  EXPECT_NEAR(*average_precision(ranked("q", {"q", "a", "junk", "x", "b"}), ti), 5.0 / 6.0, 1e-9);
}

TEST(AveragePrecision, SinglePositiveAtRankR) {
  const QueryTruth t{"q", {"p"}, {}};
  for (std::size_t r = 1; r <= 5; ++r) {
    std::vector<std::string> ids;
    for (std::size_t i = 1; i < r; ++i) ids.push_back("n" + std::to_string(i));
    ids.push_back("p");
    EXPECT_DOUBLE_EQ(*average_precision(ranked("q", ids), t), 1.0 / static_cast<double>(r));
  }
}

TEST(AveragePrecision, MissingPositivesCountAgainst) {
  const QueryTruth t{"q", {"a", "b", "c", "d"}, {}};
  EXPECT_DOUBLE_EQ(*average_precision(ranked("q", {"a", "x"}), t), 0.25);
}

TEST(AveragePrecision, NoPositivesIsSkipped) {
  EXPECT_FALSE(average_precision(ranked("q", {"a"}), QueryTruth{"q", {}, {}}).has_value());
}

TEST(AveragePrecision, InvariantToOrderAmongConsecutiveNegatives) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> ids;
    QueryTruth t{"q", {}, {}};
    const std::size_t n = 5 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("x" + std::to_string(i));
      if (rng.uniform() < 0.3) t.positives.push_back(ids.back());
    }
    if (t.positives.empty()) t.positives.push_back(ids[0]);
    const double base = *average_precision(ranked("q", ids), t);
    // Shuffle each maximal run of negatives.
    auto is_pos = [&](const std::string& id) {
      return std::find(t.positives.begin(), t.positives.end(), id) != t.positives.end();
    };
    std::size_t i = 0;
    while (i < ids.size()) {
      std::size_t j = i;
      while (j < ids.size() && !is_pos(ids[j])) ++j;
      rng.shuffle(std::span<std::string>(ids.data() + i, j - i));
      i = j + 1;
    }
    EXPECT_NEAR(*average_precision(ranked("q", ids), t), base, 1e-12);
  }
}

TEST(MeanAveragePrecision, SingleAndPairOfQueries) {
  const GroundTruth one{{"q1", {"a"}, {}}};
  const std::vector<RankingList> r1{ranked("q1", {"x", "a"})};
  EXPECT_DOUBLE_EQ(mean_average_precision(r1, one).map, 0.5);

  const GroundTruth two{{"q1", {"a"}, {}}, {"q2", {"b"}, {}}};
  const std::vector<RankingList> r2{ranked("q1", {"a"}), ranked("q2", {"x", "b"})};
  const auto report = mean_average_precision(r2, two, "knn");
  EXPECT_DOUBLE_EQ(report.map, 0.75);
  EXPECT_EQ(report.method, "knn");
  ASSERT_EQ(report.per_query.size(), 2u);
  EXPECT_EQ(report.per_query[1].query_id, "q2");

  const std::vector<RankingList> swapped{r2[1], r2[0]};
  EXPECT_DOUBLE_EQ(mean_average_precision(swapped, two).map, 0.75);
}

TEST(MeanAveragePrecision, SkipsQueriesWithoutPositives) {
  const GroundTruth truth{{"q1", {"a"}, {}}, {"q2", {}, {}}};
  const std::vector<RankingList> r{ranked("q1", {"a"}), ranked("q2", {"a"})};
  const auto report = mean_average_precision(r, truth);
  EXPECT_EQ(report.map, 1.0);
  EXPECT_EQ(report.skipped, std::vector<std::string>{"q2"});
  const auto j = report.to_json();
  EXPECT_EQ(j.at("skipped").size(), 1u);
}

TEST(MeanAveragePrecision, AllSkippedIsRejected) {
  const GroundTruth truth{{"q1", {}, {}}};
  const std::vector<RankingList> r{ranked("q1", {"a"})};
  EXPECT_THROW((void)mean_average_precision(r, truth), std::runtime_error);
}

TEST(MeanAveragePrecision, QuerySetMismatchIsRejected) {
  const GroundTruth truth{{"q1", {"a"}, {}}, {"q2", {"a"}, {}}};
  const std::vector<RankingList> r{ranked("q1", {"a"}), ranked("q3", {"a"})};
  try {
    (void)mean_average_precision(r, truth);
    FAIL();
  } catch (const QueryMismatchError& e) {
    EXPECT_EQ(e.missing(), std::vector<std::string>{"q2"});
    EXPECT_EQ(e.unexpected(), std::vector<std::string>{"q3"});
  }
}

TEST(MeanAveragePrecision, EqualsMeanOfPerQueryAps) {
  const auto data = generate_synthetic(small_spec(12));
  const auto queries = sample_queries(data.clustered_ids, 20, 2);
  const auto truth = make_ground_truth(data.labels, data.views[0].ids(), queries);
  std::vector<RankingList> rankings;
  for (const auto& q : queries) rankings.push_back(knn_search(data.views[0], q, 40));
  const auto report = mean_average_precision(rankings, truth);
  double sum = 0.0;
  for (const auto& q : report.per_query) sum += q.ap;
  EXPECT_NEAR(report.map, sum / static_cast<double>(report.per_query.size()), 1e-9);
  EXPECT_GE(report.map, 0.0);
  EXPECT_LE(report.map, 1.0);
}

TEST(MeanAveragePrecision, RandomPermutationBelowKnn) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto spec = small_spec(100 + seed);
    spec.num_views = 1;
    const auto data = generate_synthetic(spec);
    const auto queries = sample_queries(data.clustered_ids, 20, seed);
    const auto truth = make_ground_truth(data.labels, data.views[0].ids(), queries);
    const std::size_t n = data.views[0].size();
    std::vector<RankingList> knn, random;
    Rng rng(seed);
    for (const auto& q : queries) {
      knn.push_back(knn_search(data.views[0], q, n));
      RankingList r = knn.back();
      rng.shuffle(std::span<RankEntry>(r.entries));
      random.push_back(r);
    }
    EXPECT_LT(mean_average_precision(random, truth).map, mean_average_precision(knn, truth).map)
        << seed;
  }
}

TEST(GroundTruth, ValidationRejectsInconsistentEntries) {
  EXPECT_THROW(validate_ground_truth({{"q", {"q"}, {}}}), std::invalid_argument);
  EXPECT_THROW(validate_ground_truth({{"q", {"a"}, {"a"}}}), std::invalid_argument);
  EXPECT_THROW(validate_ground_truth({{"q", {"a"}, {}}, {"q", {"b"}, {}}}), std::invalid_argument);
  EXPECT_NO_THROW(validate_ground_truth({{"q", {"a"}, {"b"}}}));
}

// ---------------------------------------------------------------------------
// Formats

TEST(EmbeddingFormat, RoundTripIsBitExact) {
  std::vector<std::string> ids{"alpha", "b", "c"};
  MatrixF rows(3, 4, std::vector<float>{0.5f, 0.5f, 0.5f, 0.5f, 1.0f, 0.0f, 0.0f, 0.0f, 0.6f,
                                        0.0f, 0.0f, -0.8f});
  EmbeddingMatrix emb(ids, rows);
  const auto bytes = encode_embeddings(emb);
  const auto back = decode_embeddings(bytes);
  EXPECT_EQ(back.ids(), emb.ids());
  EXPECT_EQ(std::memcmp(back.rows().data(), emb.rows().data(), 12 * sizeof(float)), 0);
  EXPECT_EQ(encode_embeddings(back), bytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CSAE");
}

TEST(EmbeddingFormat, RandomRoundTripThroughFile) {
  Rng rng(13);
  const auto emb = testing::random_embeddings(rng, 50, 7);
  const auto path = std::filesystem::temp_directory_path() / "csa_unit.emb";
  write_embeddings(path, emb);
  const auto back = read_embeddings(path);
  EXPECT_EQ(back.rows(), emb.rows());
  EXPECT_EQ(back.ids(), emb.ids());
  std::filesystem::remove(path);
}

TEST(EmbeddingFormat, CorruptionReportsOffsets) {
  Rng rng(14);
  const auto bytes = encode_embeddings(testing::random_embeddings(rng, 3, 4));
  auto bad = bytes;
  bad[0] = 'X';
  try {
    (void)decode_embeddings(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[4] = 7;
  try {
    (void)decode_embeddings(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  for (std::size_t cut = 0; cut < bytes.size(); cut += 5) {
    EXPECT_THROW((void)decode_embeddings(std::span(bytes.data(), cut)), FormatError) << cut;
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW((void)decode_embeddings(bad), FormatError);
}

TEST(RankingFormat, EmptySetRoundTrips) {
  const RankingSet empty;
  EXPECT_EQ(decode_rankings(encode_rankings(empty)), empty);
}

TEST(RankingFormat, RoundTripIsExact) {
  RankingSet set;
  set.method = "knn+csa";
  set.lists.push_back(ranked("q1", {"a", "b", "c"}));
  set.lists.push_back(ranked("q2", {}));
  set.lists[0].entries[1].score = 0.1 + 0.2;
  set.lists[0].entries[2].score = -1e-300;
  const auto text = encode_rankings(set);
  EXPECT_EQ(decode_rankings(text), set);
  EXPECT_EQ(encode_rankings(decode_rankings(text)), text);
}

TEST(RankingFormat, RejectsBadHeaderAndTruncation) {
  try {
    (void)decode_rankings("csa-rankingz 1\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  EXPECT_THROW((void)decode_rankings("csa-rankings 2\n"), FormatError);
  EXPECT_THROW((void)decode_rankings("csa-rankings 1\nq1 2 a 0.5\n"), FormatError);
  EXPECT_THROW((void)decode_rankings("csa-rankings 1\nq1 1 a zero\n"), FormatError);
}

TEST(RankingFormat, RejectsUnwritableIds) {
  RankingSet set;
  set.lists.push_back(ranked("q 1", {"a"}));
  EXPECT_THROW((void)encode_rankings(set), std::invalid_argument);
}

TEST(TruthFormat, RoundTripIsExact) {
  const GroundTruth truth{{"q1", {"a", "b"}, {"junk"}}, {"q2", {}, {}}};
  EXPECT_EQ(decode_ground_truth(encode_ground_truth(truth)), truth);
  EXPECT_EQ(decode_ground_truth(encode_ground_truth({})), GroundTruth{});
  EXPECT_THROW((void)decode_ground_truth("csa-truth 1\nq1 3 a b\n"), FormatError);
}

TEST(LabelFormat, RoundTripSortedById) {
  const LabelMap labels{{"z", 2}, {"a", -1}, {"m", 7}};
  const auto text = encode_labels(labels);
  EXPECT_LT(text.find("\na "), text.find("\nm "));
  EXPECT_EQ(decode_labels(text), labels);
}

TEST(IdListFormat, SkipsCommentsAndBlankLines) {
  EXPECT_EQ(decode_id_list("# queries\n\na\n  b  \n#c\n"), (std::vector<std::string>{"a", "b"}));
  const std::vector<std::string> ids{"x", "y"};
  EXPECT_EQ(decode_id_list(encode_id_list(ids)), ids);
}

TEST(FormatDouble, ShortestRoundTrip) {
  Rng rng(15);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-20, 20));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}

}  // namespace
}  // namespace csa
