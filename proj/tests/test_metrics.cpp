#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "resflow/metrics.hpp"
#include "resflow/rng.hpp"

using namespace resflow;

namespace {

RankedItem item(double score, double w, bool order, bool atc = false,
                bool click = false) {
  RankedItem it;
  it.score = score;
  it.w = w;
  it.order = order;
  it.atc = atc || order;
  it.click = click || it.atc;
  return it;
}

}  // namespace

TEST_CASE("auc counts pairwise wins") {
  CHECK(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(auc({0.9, 0.1}, {1, 0}) == 1.0);
  CHECK(auc({0.1, 0.9}, {1, 0}) == 0.0);
}

TEST_CASE("auc scores ties as half wins") {
  CHECK(auc({0.5, 0.5}, {1, 0}) == doctest::Approx(0.5));
  CHECK(auc({0.5, 0.5, 0.7}, {0, 1, 1}) == doctest::Approx(0.75));
}

TEST_CASE("auc rejects degenerate inputs") {
  CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), UndefinedMetricError);
  CHECK_THROWS_AS(auc({0.1}, {1, 0}), UsageError);
  CHECK_THROWS_AS(auc({0.1, 0.2}, {0.5, 1}), UsageError);
  CHECK_THROWS_AS(auc({}, {}), UsageError);
}

TEST_CASE("rank-sum auc equals the quadratic reference with heavy ties") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 50 + rng.uniform_int(150);
    std::vector<double> scores(n), labels(n);
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid forces many exact ties.
      scores[i] = static_cast<double>(rng.uniform_int(12)) / 11.0;
      labels[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
      (labels[i] > 0 ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    CHECK(auc(scores, labels) ==
          doctest::Approx(auc_bruteforce(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("weighted recall transforms the order counts") {
  RankedList list;
  list.items = {item(0.9, 3, true), item(0.8, 0, false), item(0.7, 2, true),
                item(0.6, 1, true)};
  CHECK(weighted_recall_at_k(list, 2) == doctest::Approx(0.5));  // 3 of 6
  CHECK(weighted_recall_at_k(list, 4) == doctest::Approx(1.0));
  CHECK(weighted_recall_at_k(list, 10) == doctest::Approx(1.0));
  const double lg = std::log(4.0) / (std::log(4.0) + std::log(3.0) + std::log(2.0));
  CHECK(weighted_recall_at_k(list, 1, WrVariant::kLog) == doctest::Approx(lg));
  const double sq = std::sqrt(3.0) / (std::sqrt(3.0) + std::sqrt(2.0) + 1.0);
  CHECK(weighted_recall_at_k(list, 1, WrVariant::kSqrt) == doctest::Approx(sq));
  CHECK(weighted_recall_at_k(list, 1, WrVariant::kSquare) ==
        doctest::Approx(9.0 / 14.0));
}

TEST_CASE("weighted recall is monotone in K") {
  Rng rng(5);
  RankedList list;
  for (int i = 0; i < 30; ++i)
    list.items.push_back(item(1.0 - 0.01 * i, rng.uniform_int(4), rng.bernoulli(0.5)));
  double prev = 0.0;
  for (std::size_t k = 1; k <= 30; ++k) {
    const double v = weighted_recall_at_k(list, k);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(prev == doctest::Approx(1.0));
}

TEST_CASE("weighted recall rejects zero or negative mass") {
  RankedList zero;
  zero.items = {item(0.5, 0, false)};
  CHECK_THROWS_AS(weighted_recall_at_k(zero, 1), UndefinedMetricError);
  RankedList neg;
  neg.items = {item(0.5, -1, true)};
  CHECK_THROWS_AS(weighted_recall_at_k(neg, 1), UsageError);
}

TEST_CASE("binary weights reduce weighted recall to recall") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    RankedList list;
    const std::size_t n = 5 + rng.uniform_int(30);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      const bool ordered = rng.bernoulli(0.3);
      any = any || ordered;
      list.items.push_back(item(rng.uniform(), ordered ? 1.0 : 0.0, ordered));
    }
    if (!any) continue;
    const RankedList ranked = ranked_by_score(list);
    const std::size_t k = 1 + rng.uniform_int(n);
    CHECK(weighted_recall_at_k(ranked, k) ==
          doctest::Approx(recall_at_k(ranked, k)).epsilon(1e-15));
  }
}

TEST_CASE("recall_at_k distinguishes funnel labels") {
  RankedList list;
  list.items = {item(0.9, 0, false, false, true), item(0.8, 1, true),
                item(0.7, 0, false, true), item(0.6, 0, false, false, true)};
  CHECK(recall_at_k(list, 2, FunnelLabel::kOrder) == doctest::Approx(1.0));
  CHECK(recall_at_k(list, 2, FunnelLabel::kAtc) == doctest::Approx(0.5));
  CHECK(recall_at_k(list, 2, FunnelLabel::kClick) == doctest::Approx(0.5));
  CHECK_THROWS_AS(recall_at_k(RankedList{{item(0.1, 0, false)}}, 1),
                  UndefinedMetricError);
}

TEST_CASE("ndcg of an ideally ordered list is exactly one") {
  RankedList list;
  list.items = {item(0.9, 1, true), item(0.8, 0, false, true),
                item(0.7, 0, false, false, true), item(0.6, 0, false)};
  CHECK(ndcg(list) == 1.0);
}

TEST_CASE("ndcg closed-form for one misplaced order") {
  RankedList list;
  list.items = {item(0.9, 0, false), item(0.8, 1, true)};
  // DCG = 1/log2(3), ideal = 1.
  CHECK(ndcg(list) == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-14));
}

TEST_CASE("ndcg uses the graded funnel gains") {
  RankedList worst;  // click ahead of order: strictly below a flipped pair
  worst.items = {item(0.9, 0, false, false, true), item(0.8, 1, true)};
  RankedList best;
  best.items = {item(0.9, 1, true), item(0.8, 0, false, false, true)};
  CHECK(ndcg(best) == 1.0);
  CHECK(ndcg(worst) < 1.0);
  CHECK(ndcg(worst) > 0.0);
  RankedList blank;
  blank.items = {item(0.9, 0, false), item(0.8, 0, false)};
  CHECK_THROWS_AS(ndcg(blank), UndefinedMetricError);
}

TEST_CASE("list auc averages lists with both outcomes") {
  RankedList a;  // perfect
  a.items = {item(0.9, 1, true), item(0.1, 0, false)};
  RankedList b;  // inverted
  b.items = {item(0.1, 1, true), item(0.9, 0, false)};
  RankedList skip;  // single class, ignored
  skip.items = {item(0.5, 0, false), item(0.4, 0, false)};
  CHECK(list_auc({a, b, skip}) == doctest::Approx(0.5));
  CHECK(list_auc({a, skip}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(list_auc({skip}), UndefinedMetricError);
}

TEST_CASE("pearson matches the closed form") {
  const PearsonResult r = pearson({1, 2, 3}, {1, 2, 4});
  CHECK(r.r == doctest::Approx(9.0 / std::sqrt(84.0)).epsilon(1e-12));
  // t^2 = 27 with one degree of freedom -> Cauchy tail.
  const double p = 1.0 - 2.0 * std::atan(std::sqrt(27.0)) / M_PI;
  CHECK(r.p_value == doctest::Approx(p).epsilon(1e-6));
}

TEST_CASE("pearson of a series against itself is one") {
  Rng rng(9);
  std::vector<double> x(50);
  for (auto& v : x) v = rng.uniform(-3, 3);
  const PearsonResult r = pearson(x, x);
  CHECK(std::abs(r.r - 1.0) <= 1e-12);
}

TEST_CASE("pearson is invariant under positive affine maps") {
  Rng rng(10);
  std::vector<double> x(40), y(40);
  for (auto& v : x) v = rng.normal();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 2.0 * x[i] + rng.normal();
  const double base = pearson(x, y).r;
  std::vector<double> shifted(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) shifted[i] = 5.0 - 0.25 * y[i];
  CHECK(pearson(x, shifted).r == doctest::Approx(-base).epsilon(1e-12));
}

TEST_CASE("pearson edge cases") {
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), UndefinedMetricError);
  CHECK_THROWS_AS(pearson({1}, {1}), UsageError);
  const PearsonResult two = pearson({1, 2}, {2, 1});
  CHECK(two.r == doctest::Approx(-1.0));
  CHECK(std::isnan(two.p_value));
}

TEST_CASE("ranked_by_score sorts descending and keeps tie order") {
  RankedList list;
  list.items = {item(0.5, 1, true), item(0.9, 2, true), item(0.5, 3, true)};
  const RankedList r = ranked_by_score(list);
  CHECK(r.items[0].w == 2);
  CHECK(r.items[1].w == 1);  // first 0.5 stays ahead of the second
  CHECK(r.items[2].w == 3);
}

TEST_CASE("build_ranked_lists groups rows and ranks by score") {
  Dataset d;
  d.schema.fields = {FieldSpec{"u", false, false}};
  d.fields.resize(1);
  d.fields[0].single = {1, 1, 2, 2, 1};
  d.schema.label_columns = {"click", "atc", "order"};
  d.labels = {{1, 1, 0, 1, 1}, {0, 1, 0, 1, 0}, {0, 1, 0, 0, 0}};
  d.schema.list_id_column = "lid";
  d.list_id = {7, 7, 4, 4, 7};
  d.schema.item_id_column = "iid";
  d.item_id = {10, 11, 12, 13, 14};
  d.schema.weight_column = "w";
  d.weight = {0, 2, 0, 0, 0};
  const auto lists = build_ranked_lists(d, {0.1, 0.9, 0.3, 0.6, 0.5});
  REQUIRE(lists.size() == 2);  // first-appearance order: 7 then 4
  REQUIRE(lists[0].items.size() == 3);
  CHECK(lists[0].items[0].score == 0.9);
  CHECK(lists[0].items[0].w == 2);
  CHECK(lists[0].items[0].order);
  CHECK(lists[0].items[1].score == 0.5);
  CHECK(lists[1].items[0].score == 0.6);
  CHECK(lists[1].items[0].atc);
  CHECK_FALSE(lists[1].items[0].order);
}

TEST_CASE("metric report json round trip") {
  MetricReport rep;
  rep.values["auc.click"] = 0.7512345678901234;
  rep.values["wr@10"] = 0.25;
  const MetricReport back = MetricReport::from_json(rep.to_json());
  REQUIRE(back.values.size() == 2);
  CHECK(back.values.at("auc.click") == rep.values.at("auc.click"));
  CHECK(back.values.at("wr@10") == rep.values.at("wr@10"));
}
