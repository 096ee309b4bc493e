#pragma once

#include <string>
#include <vector>

#include "resflow/data.hpp"
#include "resflow/metrics.hpp"

namespace resflow {

enum class FusionFamily { kMultiplicative, kAdditive };
FusionFamily fusion_family_from_string(const std::string& s);
std::string to_string(FusionFamily f);

// Multiplicative: Score = CTR^alpha * CVR^beta with CVR = ctcvr / ctr
// (inputs clamped to >= 1e-9). Additive: Score = alpha*CTR + beta*CTCVR.
struct FusionFormula {
  FusionFamily family = FusionFamily::kAdditive;
  double alpha = 1.0;
  double beta = 1.0;
};

double fuse(const FusionFormula& formula, double ctr, double ctcvr);

// Per-item model outputs plus the labels needed to score a ranking.
struct PredictionItem {
  std::int64_t item_id = 0;
  double ctr = 0.0;
  double ctcvr = 0.0;
  double w = 0.0;
  bool order = false;
  bool atc = false;
  bool click = false;
};

struct PredictionList {
  std::int64_t list_id = 0;
  std::vector<PredictionItem> items;
};

struct GridSpec {
  FusionFamily family = FusionFamily::kAdditive;
  std::vector<double> alphas;  // empty -> family default grid
  std::vector<double> betas;
  std::size_t k = 10;
  WrVariant variant = WrVariant::kIdentity;
};

// Family defaults: additive alpha 0..2 step 0.25, beta {1,2,5,10,20,50};
// multiplicative alpha, beta -0.5..1.5 step 0.1.
std::vector<double> default_alphas(FusionFamily family);
std::vector<double> default_betas(FusionFamily family);

struct GridCell {
  double alpha = 0.0;
  double beta = 0.0;
  double metric = 0.0;
};

struct GridResult {
  FusionFormula best;
  double best_metric = 0.0;
  std::vector<GridCell> table;  // full grid, evaluation order
};

// Evaluates mean WR@K over the lists for every (alpha, beta) cell and
// returns the argmax; exact metric ties resolve to the smaller
// (alpha, beta) pair lexicographically. Lists whose total transformed
// weight is zero are skipped; at least one list must count.
GridResult grid_search(const GridSpec& spec,
                       const std::vector<PredictionList>& lists);

// Applies the formula to every item and scores the induced ranking by mean
// WR@K (same skipping rule as grid_search).
double evaluate_formula(const FusionFormula& formula,
                        const std::vector<PredictionList>& lists,
                        std::size_t k, WrVariant variant);

// Prediction dump: header line, then one CSV row per item:
// list_id,item_id,ctr,ctcvr,w,order,atc,click.
void write_predictions(const std::string& path, const Dataset& data,
                       const std::vector<double>& ctr,
                       const std::vector<double>& ctcvr);
std::vector<PredictionList> read_predictions(const std::string& path);

}  // namespace resflow
