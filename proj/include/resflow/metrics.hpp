#pragma once

#include <map>
#include <string>
#include <vector>

#include "resflow/data.hpp"
#include "resflow/errors.hpp"

namespace resflow {

// One item of a ranked list. `w` is the (non-negative, integral) order
// count used by weighted recall; the flags are funnel labels.
struct RankedItem {
  double score = 0.0;
  double w = 0.0;
  bool order = false;
  bool atc = false;
  bool click = false;
};

struct RankedList {
  std::vector<RankedItem> items;
};

// P(random positive scores above random negative), ties at 0.5. Rank-sum
// implementation, O(n log n). Throws UndefinedMetricError on single-class
// input.
double auc(const std::vector<double>& scores,
           const std::vector<double>& labels);
// O(P*N) reference used to cross-check the fast path.
double auc_bruteforce(const std::vector<double>& scores,
                      const std::vector<double>& labels);

enum class WrVariant { kIdentity, kLog, kSqrt, kSquare };
WrVariant wr_variant_from_string(const std::string& s);
std::string to_string(WrVariant v);

// Transformed order-count mass in the top K over total mass. The list must
// already be in ranked (score-descending) order; use ranked_by_score. The
// log variant uses log(1 + w) so zero counts stay finite.
double weighted_recall_at_k(const RankedList& list, std::size_t k,
                            WrVariant variant = WrVariant::kIdentity);

enum class FunnelLabel { kClick, kAtc, kOrder };
// Positives (under the chosen label) in the top K over all positives.
double recall_at_k(const RankedList& list, std::size_t k,
                   FunnelLabel label = FunnelLabel::kOrder);

// Gain schedule: order 1, add-to-cart 0.25, click 0.1, none 0;
// DCG = sum (2^gain - 1) / log2(i + 1) with positions from i = 1; NDCG
// divides by the ideal (gain-sorted) DCG.
double ndcg(const RankedList& list);

// Mean per-list AUC of order labels over lists with both classes present.
double list_auc(const std::vector<RankedList>& lists);

struct PearsonResult {
  double r = 0.0;
  // Two-sided, from the t-transform with n-2 degrees of freedom; NaN when
  // n < 3.
  double p_value = 0.0;
};
PearsonResult pearson(const std::vector<double>& x,
                      const std::vector<double>& y);

// Stable sort by descending score (ties keep original order).
RankedList ranked_by_score(const RankedList& list);

// Groups dataset rows by list id (order of first appearance) and ranks each
// list by the given per-row scores. Item weight comes from the weight
// column, else the "order" label, else 0; flags come from the
// click/atc/order label columns when present.
std::vector<RankedList> build_ranked_lists(const Dataset& data,
                                           const std::vector<double>& scores);

struct MetricReport {
  std::map<std::string, double> values;

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

}  // namespace resflow
