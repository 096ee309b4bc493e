#include "resflow/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace resflow {

FusionFamily fusion_family_from_string(const std::string& s) {
  if (s == "add" || s == "additive") return FusionFamily::kAdditive;
  if (s == "mul" || s == "multiplicative") return FusionFamily::kMultiplicative;
  throw UsageError("unknown fusion family '" + s + "'");
}

std::string to_string(FusionFamily f) {
  return f == FusionFamily::kAdditive ? "additive" : "multiplicative";
}

double fuse(const FusionFormula& formula, double ctr, double ctcvr) {
  if (formula.family == FusionFamily::kAdditive)
    return formula.alpha * ctr + formula.beta * ctcvr;
  const double c = std::max(ctr, 1e-9);
  const double cvr = std::max(ctcvr / c, 1e-9);
  return std::pow(c, formula.alpha) * std::pow(cvr, formula.beta);
}

std::vector<double> default_alphas(FusionFamily family) {
  std::vector<double> v;
  if (family == FusionFamily::kAdditive) {
    for (int i = 0; i <= 8; ++i) v.push_back(0.25 * i);
  } else {
    for (int i = -5; i <= 15; ++i) v.push_back(0.1 * i);
  }
  return v;
}

std::vector<double> default_betas(FusionFamily family) {
  if (family == FusionFamily::kAdditive) return {1, 2, 5, 10, 20, 50};
  return default_alphas(family);
}

namespace {
// Mean WR@K under the formula-induced ranking; lists with zero transformed
// weight don't count toward the mean.
double mean_wr(const FusionFormula& f, const std::vector<PredictionList>& lists,
               std::size_t k, WrVariant variant) {
  double total = 0.0;
  std::size_t used = 0;
  for (const PredictionList& pl : lists) {
    RankedList rl;
    rl.items.reserve(pl.items.size());
    for (const PredictionItem& it : pl.items) {
      RankedItem r;
      r.score = fuse(f, it.ctr, it.ctcvr);
      r.w = it.w;
      r.order = it.order;
      r.atc = it.atc;
      r.click = it.click;
      rl.items.push_back(r);
    }
    rl = ranked_by_score(rl);
    try {
      total += weighted_recall_at_k(rl, k, variant);
      ++used;
    } catch (const UndefinedMetricError&) {
      continue;
    }
  }
  if (used == 0)
    throw UndefinedMetricError("fusion: no list has positive total weight");
  return total / static_cast<double>(used);
}
}  // namespace

double evaluate_formula(const FusionFormula& formula,
                        const std::vector<PredictionList>& lists,
                        std::size_t k, WrVariant variant) {
  if (lists.empty()) throw UsageError("fusion: empty list set");
  return mean_wr(formula, lists, k, variant);
}

GridResult grid_search(const GridSpec& spec,
                       const std::vector<PredictionList>& lists) {
  if (lists.empty()) throw UsageError("grid_search: empty list set");
  std::vector<double> alphas =
      spec.alphas.empty() ? default_alphas(spec.family) : spec.alphas;
  std::vector<double> betas =
      spec.betas.empty() ? default_betas(spec.family) : spec.betas;
  if (alphas.empty() || betas.empty())
    throw UsageError("grid_search: empty grid");
  // Ascending scan makes "first strict improvement wins" equivalent to the
  // lexicographic tie rule.
  std::sort(alphas.begin(), alphas.end());
  std::sort(betas.begin(), betas.end());

  GridResult res;
  bool have_best = false;
  for (double a : alphas)
    for (double b : betas) {
      FusionFormula f{spec.family, a, b};
      const double m = mean_wr(f, lists, spec.k, spec.variant);
      res.table.push_back(GridCell{a, b, m});
      if (!have_best || m > res.best_metric) {
        res.best = f;
        res.best_metric = m;
        have_best = true;
      }
    }
  return res;
}

void write_predictions(const std::string& path, const Dataset& data,
                       const std::vector<double>& ctr,
                       const std::vector<double>& ctcvr) {
  if (ctr.size() != data.size() || ctcvr.size() != data.size())
    throw UsageError("write_predictions: one ctr/ctcvr pair per row required");
  if (data.list_id.empty())
    throw UsageError("write_predictions: dataset has no list ids");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  auto label_col = [&](const std::string& name) -> std::ptrdiff_t {
    const auto& cols = data.schema.label_columns;
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : it - cols.begin();
  };
  const std::ptrdiff_t click_i = label_col("click");
  const std::ptrdiff_t atc_i = label_col("atc");
  const std::ptrdiff_t order_i = label_col("order");
  out << "list_id,item_id,ctr,ctcvr,w,order,atc,click\n";
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = !data.weight.empty()
                         ? data.weight[i]
                         : (order_i >= 0 ? data.labels[order_i][i] : 0.0);
    auto flag = [&](std::ptrdiff_t c) {
      return c >= 0 && data.labels[c][i] == 1.0 ? 1 : 0;
    };
    out << data.list_id[i] << ','
        << (data.item_id.empty() ? static_cast<std::int64_t>(i)
                                 : data.item_id[i]);
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g", ctr[i], ctcvr[i], w);
    out << buf << ',' << flag(order_i) << ',' << flag(atc_i) << ','
        << flag(click_i) << "\n";
  }
  out.close();
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<PredictionList> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw DataError(path + ": empty predictions file");
  if (line.rfind("list_id,item_id,ctr,ctcvr,w,order,atc,click", 0) != 0)
    throw DataError(path + ": unexpected predictions header");
  std::vector<PredictionList> lists;
  std::map<std::int64_t, std::size_t> slot;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    auto next = [&]() {
      if (!std::getline(ss, cell, ','))
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": short prediction row");
      return cell;
    };
    PredictionItem item;
    std::int64_t list_id = 0;
    try {
      list_id = std::stoll(next());
      item.item_id = std::stoll(next());
      item.ctr = std::stod(next());
      item.ctcvr = std::stod(next());
      item.w = std::stod(next());
      item.order = std::stoi(next()) != 0;
      item.atc = std::stoi(next()) != 0;
      item.click = std::stoi(next()) != 0;
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": malformed prediction row");
    }
    auto [it, fresh] = slot.emplace(list_id, lists.size());
    if (fresh) {
      lists.emplace_back();
      lists.back().list_id = list_id;
    }
    lists[it->second].items.push_back(item);
  }
  if (lists.empty()) throw DataError(path + ": no prediction rows");
  return lists;
}

}  // namespace resflow
