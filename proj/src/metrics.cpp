#include "resflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

namespace resflow {

namespace {
void check_binary(const std::vector<double>& labels) {
  for (double l : labels)
    if (l != 0.0 && l != 1.0)
      throw UsageError("auc: labels must be 0 or 1");
}
}  // namespace

double auc(const std::vector<double>& scores,
           const std::vector<double>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw UsageError("auc: need equal-length non-empty inputs");
  check_binary(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average ranks across tied scores, then rank-sum over positives.
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1.0) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw UndefinedMetricError("auc: need at least one positive and one negative");
  const double u = pos_rank_sum -
                   0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auc_bruteforce(const std::vector<double>& scores,
                      const std::vector<double>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw UsageError("auc: need equal-length non-empty inputs");
  check_binary(labels);
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0.0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  if (pairs == 0)
    throw UndefinedMetricError("auc: need at least one positive and one negative");
  return wins / static_cast<double>(pairs);
}

WrVariant wr_variant_from_string(const std::string& s) {
  if (s == "identity") return WrVariant::kIdentity;
  if (s == "log") return WrVariant::kLog;
  if (s == "sqrt") return WrVariant::kSqrt;
  if (s == "square") return WrVariant::kSquare;
  throw UsageError("unknown weighted-recall variant '" + s + "'");
}

std::string to_string(WrVariant v) {
  switch (v) {
    case WrVariant::kIdentity: return "identity";
    case WrVariant::kLog: return "log";
    case WrVariant::kSqrt: return "sqrt";
    case WrVariant::kSquare: return "square";
  }
  return "?";
}

namespace {
double transform_w(double w, WrVariant v) {
  switch (v) {
    case WrVariant::kIdentity: return w;
    case WrVariant::kLog: return std::log1p(w);
    case WrVariant::kSqrt: return std::sqrt(w);
    case WrVariant::kSquare: return w * w;
  }
  return w;
}
}  // namespace

double weighted_recall_at_k(const RankedList& list, std::size_t k,
                            WrVariant variant) {
  if (list.items.empty())
    throw UsageError("weighted_recall_at_k: empty list");
  if (k < 1) throw UsageError("weighted_recall_at_k: K must be >= 1");
  double total = 0.0, top = 0.0;
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    if (list.items[i].w < 0.0)
      throw UsageError("weighted_recall_at_k: negative weight");
    const double t = transform_w(list.items[i].w, variant);
    total += t;
    if (i < k) top += t;
  }
  if (total == 0.0)
    throw UndefinedMetricError("weighted_recall_at_k: total weight is zero");
  return top / total;
}

namespace {
bool item_flag(const RankedItem& it, FunnelLabel l) {
  switch (l) {
    case FunnelLabel::kClick: return it.click;
    case FunnelLabel::kAtc: return it.atc;
    case FunnelLabel::kOrder: return it.order;
  }
  return false;
}
}  // namespace

double recall_at_k(const RankedList& list, std::size_t k, FunnelLabel label) {
  if (list.items.empty()) throw UsageError("recall_at_k: empty list");
  if (k < 1) throw UsageError("recall_at_k: K must be >= 1");
  std::size_t total = 0, top = 0;
  for (std::size_t i = 0; i < list.items.size(); ++i)
    if (item_flag(list.items[i], label)) {
      ++total;
      if (i < k) ++top;
    }
  if (total == 0)
    throw UndefinedMetricError("recall_at_k: no positives under the label");
  return static_cast<double>(top) / static_cast<double>(total);
}

namespace {
double item_gain(const RankedItem& it) {
  if (it.order) return 1.0;
  if (it.atc) return 0.25;
  if (it.click) return 0.1;
  return 0.0;
}

double dcg(const std::vector<double>& gains) {
  double s = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i)
    s += (std::exp2(gains[i]) - 1.0) /
         std::log2(static_cast<double>(i + 2));  // positions start at 1
  return s;
}
}  // namespace

double ndcg(const RankedList& list) {
  if (list.items.empty()) throw UsageError("ndcg: empty list");
  std::vector<double> gains(list.items.size());
  for (std::size_t i = 0; i < list.items.size(); ++i)
    gains[i] = item_gain(list.items[i]);
  std::vector<double> ideal = gains;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal);
  if (idcg == 0.0)
    throw UndefinedMetricError("ndcg: all gains are zero");
  return dcg(gains) / idcg;
}

double list_auc(const std::vector<RankedList>& lists) {
  double total = 0.0;
  std::size_t used = 0;
  for (const RankedList& list : lists) {
    std::size_t pos = 0;
    for (const RankedItem& it : list.items) pos += it.order ? 1 : 0;
    if (pos == 0 || pos == list.items.size()) continue;
    std::vector<double> scores(list.items.size()), labels(list.items.size());
    for (std::size_t i = 0; i < list.items.size(); ++i) {
      scores[i] = list.items[i].score;
      labels[i] = list.items[i].order ? 1.0 : 0.0;
    }
    total += auc(scores, labels);
    ++used;
  }
  if (used == 0)
    throw UndefinedMetricError(
        "list_auc: no list has both ordered and non-ordered items");
  return total / static_cast<double>(used);
}

PearsonResult pearson(const std::vector<double>& x,
                      const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw UsageError("pearson: need two equal-length series of length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw UndefinedMetricError("pearson: zero variance");
  PearsonResult res;
  res.r = sxy / std::sqrt(sxx * syy);
  res.r = std::clamp(res.r, -1.0, 1.0);
  if (x.size() < 3) {
    res.p_value = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  const double df = n - 2.0;
  if (std::fabs(res.r) >= 1.0) {
    res.p_value = 0.0;
    return res;
  }
  const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
  boost::math::students_t dist(df);
  res.p_value = 2.0 * boost::math::cdf(dist, -std::fabs(t));
  return res;
}

RankedList ranked_by_score(const RankedList& list) {
  RankedList out = list;
  std::stable_sort(
      out.items.begin(), out.items.end(),
      [](const RankedItem& a, const RankedItem& b) { return a.score > b.score; });
  return out;
}

std::vector<RankedList> build_ranked_lists(const Dataset& data,
                                           const std::vector<double>& scores) {
  if (data.list_id.empty())
    throw UsageError("build_ranked_lists: dataset has no list ids");
  if (scores.size() != data.size())
    throw UsageError("build_ranked_lists: one score per row required");
  auto label_index = [&](const std::string& name) -> std::ptrdiff_t {
    const auto& cols = data.schema.label_columns;
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : it - cols.begin();
  };
  const std::ptrdiff_t click_i = label_index("click");
  const std::ptrdiff_t atc_i = label_index("atc");
  const std::ptrdiff_t order_i = label_index("order");

  std::vector<RankedList> lists;
  std::map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto [it, fresh] = slot.emplace(data.list_id[i], lists.size());
    if (fresh) lists.emplace_back();
    RankedItem item;
    item.score = scores[i];
    item.click = click_i >= 0 && data.labels[click_i][i] == 1.0;
    item.atc = atc_i >= 0 && data.labels[atc_i][i] == 1.0;
    item.order = order_i >= 0 && data.labels[order_i][i] == 1.0;
    if (!data.weight.empty())
      item.w = data.weight[i];
    else if (order_i >= 0)
      item.w = data.labels[order_i][i];
    lists[it->second].items.push_back(item);
  }
  for (RankedList& l : lists) l = ranked_by_score(l);
  return lists;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : values) j[k] = v;
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport rep;
  nlohmann::json j = nlohmann::json::parse(text);
  for (auto it = j.begin(); it != j.end(); ++it)
    rep.values[it.key()] = it.value().get<double>();
  return rep;
}

}  // namespace resflow
