#include "resflow/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace resflow {

ParamId ParamStore::add(std::string name, Mat value) {
  if (by_name_.count(name))
    throw UsageError("ParamStore: duplicate parameter name '" + name + "'");
  ParamId id = entries_.size();
  Mat grad(value.rows(), value.cols());
  by_name_.emplace(name, id);
  entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
  return id;
}

ParamId ParamStore::id_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw UsageError("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ValueId Tape::push(Mat value, std::function<void()> back) {
  Node n;
  n.grad = Mat(value.rows(), value.cols());
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

ValueId Tape::constant(Mat v) { return push(std::move(v)); }

ValueId Tape::affine(ValueId x, ParamId w, ParamId b) {
  const Mat& xv = value(x);
  const Mat& wv = params_->value(w);
  const Mat& bv = params_->value(b);
  if (bv.rows() != 1 || bv.cols() != wv.cols())
    throw UsageError("affine: bias shape must be 1 x out");
  Mat y = matmul(xv, wv);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double* r = y.row_ptr(i);
    for (std::size_t j = 0; j < y.cols(); ++j) r[j] += bv(0, j);
  }
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x, w, b] {
    const Mat& g = nodes_[out].grad;
    const Mat& xv2 = nodes_[x].value;
    Mat dw = matmul_at_b(xv2, g);
    Mat& wg = params_->grad(w);
    for (std::size_t i = 0; i < wg.size(); ++i) wg.raw()[i] += dw.raw()[i];
    Mat& bg = params_->grad(b);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) bg(0, j) += g(i, j);
    Mat dx = matmul_a_bt(g, params_->value(w));
    Mat& xg = nodes_[x].grad;
    for (std::size_t i = 0; i < xg.size(); ++i) xg.raw()[i] += dx.raw()[i];
  };
  return out;
}

ValueId Tape::prelu(ValueId x, ParamId slope) {
  const Mat& xv = value(x);
  const Mat& av = params_->value(slope);
  if (av.rows() != 1 || av.cols() != xv.cols())
    throw UsageError("prelu: slope shape must be 1 x cols");
  Mat y = xv;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double* r = y.row_ptr(i);
    for (std::size_t j = 0; j < y.cols(); ++j)
      if (r[j] < 0.0) r[j] *= av(0, j);
  }
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x, slope] {
    const Mat& g = nodes_[out].grad;
    const Mat& xv2 = nodes_[x].value;
    const Mat& av2 = params_->value(slope);
    Mat& xg = nodes_[x].grad;
    Mat& ag = params_->grad(slope);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        const double xij = xv2(i, j);
        if (xij > 0.0) {
          xg(i, j) += g(i, j);
        } else {
          xg(i, j) += g(i, j) * av2(0, j);
          ag(0, j) += g(i, j) * xij;
        }
      }
  };
  return out;
}

ValueId Tape::sigmoid(ValueId x) {
  Mat y = value(x);
  for (double& v : y.raw()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x] {
    const Mat& g = nodes_[out].grad;
    const Mat& yv = nodes_[out].value;
    Mat& xg = nodes_[x].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = yv.raw()[i];
      xg.raw()[i] += g.raw()[i] * s * (1.0 - s);
    }
  };
  return out;
}

ValueId Tape::dropout(ValueId x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw UsageError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const Mat& xv = value(x);
  Mat mask(xv.rows(), xv.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask.raw()) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  Mat y = xv;
  for (std::size_t i = 0; i < y.size(); ++i) y.raw()[i] *= mask.raw()[i];
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x, mask = std::move(mask)] {
    const Mat& g = nodes_[out].grad;
    Mat& xg = nodes_[x].grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      xg.raw()[i] += g.raw()[i] * mask.raw()[i];
  };
  return out;
}

ValueId Tape::add(ValueId a, ValueId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (!av.same_shape(bv)) throw UsageError("add: shape mismatch");
  Mat y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y.raw()[i] += bv.raw()[i];
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, a, b] {
    const Mat& g = nodes_[out].grad;
    Mat& ag = nodes_[a].grad;
    Mat& bg = nodes_[b].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ag.raw()[i] += g.raw()[i];
      bg.raw()[i] += g.raw()[i];
    }
  };
  return out;
}

ValueId Tape::sub(ValueId a, ValueId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (!av.same_shape(bv)) throw UsageError("sub: shape mismatch");
  Mat y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y.raw()[i] -= bv.raw()[i];
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, a, b] {
    const Mat& g = nodes_[out].grad;
    Mat& ag = nodes_[a].grad;
    Mat& bg = nodes_[b].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ag.raw()[i] += g.raw()[i];
      bg.raw()[i] -= g.raw()[i];
    }
  };
  return out;
}

ValueId Tape::mul(ValueId a, ValueId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (!av.same_shape(bv)) throw UsageError("mul: shape mismatch");
  Mat y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y.raw()[i] *= bv.raw()[i];
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, a, b] {
    const Mat& g = nodes_[out].grad;
    const Mat& av2 = nodes_[a].value;
    const Mat& bv2 = nodes_[b].value;
    Mat& ag = nodes_[a].grad;
    Mat& bg = nodes_[b].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ag.raw()[i] += g.raw()[i] * bv2.raw()[i];
      bg.raw()[i] += g.raw()[i] * av2.raw()[i];
    }
  };
  return out;
}

ValueId Tape::scale(ValueId x, double c) {
  Mat y = value(x);
  for (double& v : y.raw()) v *= c;
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x, c] {
    const Mat& g = nodes_[out].grad;
    Mat& xg = nodes_[x].grad;
    for (std::size_t i = 0; i < g.size(); ++i) xg.raw()[i] += g.raw()[i] * c;
  };
  return out;
}

ValueId Tape::clamp(ValueId x, double lo, double hi) {
  if (lo > hi) throw UsageError("clamp: lo > hi");
  Mat y = value(x);
  for (double& v : y.raw()) v = std::min(std::max(v, lo), hi);
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x, lo, hi] {
    const Mat& g = nodes_[out].grad;
    const Mat& xv2 = nodes_[x].value;
    Mat& xg = nodes_[x].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv2.raw()[i];
      if (v >= lo && v <= hi) xg.raw()[i] += g.raw()[i];
    }
  };
  return out;
}

ValueId Tape::positive_part(ValueId x) {
  Mat y = value(x);
  for (double& v : y.raw()) v = std::max(v, 0.0);
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x] {
    const Mat& g = nodes_[out].grad;
    const Mat& xv2 = nodes_[x].value;
    Mat& xg = nodes_[x].grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv2.raw()[i] > 0.0) xg.raw()[i] += g.raw()[i];
  };
  return out;
}

ValueId Tape::min_zero(ValueId x) {
  Mat y = value(x);
  for (double& v : y.raw()) v = std::min(v, 0.0);
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x] {
    const Mat& g = nodes_[out].grad;
    const Mat& xv2 = nodes_[x].value;
    Mat& xg = nodes_[x].grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv2.raw()[i] < 0.0) xg.raw()[i] += g.raw()[i];
  };
  return out;
}

ValueId Tape::row_dot(ValueId a, ValueId b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (!av.same_shape(bv)) throw UsageError("row_dot: shape mismatch");
  Mat y(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const double* ar = av.row_ptr(i);
    const double* br = bv.row_ptr(i);
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) s += ar[j] * br[j];
    y(i, 0) = s;
  }
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, a, b] {
    const Mat& g = nodes_[out].grad;
    const Mat& av2 = nodes_[a].value;
    const Mat& bv2 = nodes_[b].value;
    Mat& ag = nodes_[a].grad;
    Mat& bg = nodes_[b].grad;
    for (std::size_t i = 0; i < av2.rows(); ++i) {
      const double gi = g(i, 0);
      for (std::size_t j = 0; j < av2.cols(); ++j) {
        ag(i, j) += gi * bv2(i, j);
        bg(i, j) += gi * av2(i, j);
      }
    }
  };
  return out;
}

ValueId Tape::concat(const std::vector<ValueId>& xs) {
  if (xs.empty()) throw UsageError("concat: no inputs");
  const std::size_t n = value(xs[0]).rows();
  std::size_t total = 0;
  for (ValueId x : xs) {
    if (value(x).rows() != n) throw UsageError("concat: row count mismatch");
    total += value(x).cols();
  }
  Mat y(n, total);
  std::size_t off = 0;
  for (ValueId x : xs) {
    const Mat& xv = value(x);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(xv.row_ptr(i), xv.row_ptr(i) + xv.cols(), y.row_ptr(i) + off);
    off += xv.cols();
  }
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, xs] {
    const Mat& g = nodes_[out].grad;
    std::size_t off2 = 0;
    for (ValueId x : xs) {
      Mat& xg = nodes_[x].grad;
      for (std::size_t i = 0; i < xg.rows(); ++i) {
        const double* gr = g.row_ptr(i) + off2;
        double* xr = xg.row_ptr(i);
        for (std::size_t j = 0; j < xg.cols(); ++j) xr[j] += gr[j];
      }
      off2 += xg.cols();
    }
  };
  return out;
}

ValueId Tape::gather_rows(ParamId table, std::vector<std::size_t> ids) {
  const Mat& tv = params_->value(table);
  Mat y(ids.size(), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows())
      throw UsageError("gather_rows: row index out of range");
    std::copy(tv.row_ptr(ids[i]), tv.row_ptr(ids[i]) + tv.cols(),
              y.row_ptr(i));
  }
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, table, ids = std::move(ids)] {
    const Mat& g = nodes_[out].grad;
    Mat& tg = params_->grad(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double* gr = g.row_ptr(i);
      double* tr = tg.row_ptr(ids[i]);
      for (std::size_t j = 0; j < g.cols(); ++j) tr[j] += gr[j];
    }
  };
  return out;
}

ValueId Tape::gather_sum_rows(ParamId table,
                              std::vector<std::vector<std::size_t>> groups) {
  const Mat& tv = params_->value(table);
  Mat y(groups.size(), tv.cols());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    double* yr = y.row_ptr(i);
    for (std::size_t rid : groups[i]) {
      if (rid >= tv.rows())
        throw UsageError("gather_sum_rows: row index out of range");
      const double* tr = tv.row_ptr(rid);
      for (std::size_t j = 0; j < tv.cols(); ++j) yr[j] += tr[j];
    }
  }
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, table, groups = std::move(groups)] {
    const Mat& g = nodes_[out].grad;
    Mat& tg = params_->grad(table);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const double* gr = g.row_ptr(i);
      for (std::size_t rid : groups[i]) {
        double* tr = tg.row_ptr(rid);
        for (std::size_t j = 0; j < g.cols(); ++j) tr[j] += gr[j];
      }
    }
  };
  return out;
}

ValueId Tape::sum(ValueId x) {
  const Mat& xv = value(x);
  double s = 0.0;
  for (double v : xv.raw()) s += v;
  Mat y(1, 1);
  y(0, 0) = s;
  ValueId out = push(std::move(y));
  nodes_[out].back = [this, out, x] {
    const double g = nodes_[out].grad(0, 0);
    Mat& xg = nodes_[x].grad;
    for (double& v : xg.raw()) v += g;
  };
  return out;
}

ValueId Tape::bce(ValueId p, const Mat& y, const Mat& w) {
  const Mat& pv = value(p);
  if (pv.cols() != 1) throw UsageError("bce: predictions must be N x 1");
  if (!pv.same_shape(y) || !pv.same_shape(w))
    throw UsageError("bce: label/weight shape mismatch");
  const double lo = kProbFloor, hi = 1.0 - kProbFloor;
  Mat out_v(pv.rows(), 1);
  for (std::size_t i = 0; i < pv.rows(); ++i) {
    const double pc = std::min(std::max(pv(i, 0), lo), hi);
    out_v(i, 0) = -w(i, 0) * (y(i, 0) * std::log(pc) +
                              (1.0 - y(i, 0)) * std::log(1.0 - pc));
  }
  ValueId out = push(std::move(out_v));
  nodes_[out].back = [this, out, p, y, w, lo, hi] {
    const Mat& g = nodes_[out].grad;
    const Mat& pv2 = nodes_[p].value;
    Mat& pg = nodes_[p].grad;
    for (std::size_t i = 0; i < pv2.rows(); ++i) {
      const double raw = pv2(i, 0);
      if (raw < lo || raw > hi) continue;  // clamped: zero slope
      pg(i, 0) += g(i, 0) * w(i, 0) * (raw - y(i, 0)) / (raw * (1.0 - raw));
    }
  };
  return out;
}

ValueId Tape::squared_error(ValueId pred, const Mat& target) {
  const Mat& pv = value(pred);
  if (!pv.same_shape(target))
    throw UsageError("squared_error: target shape mismatch");
  Mat out_v = pv;
  for (std::size_t i = 0; i < out_v.size(); ++i) {
    const double d = pv.raw()[i] - target.raw()[i];
    out_v.raw()[i] = d * d;
  }
  ValueId out = push(std::move(out_v));
  nodes_[out].back = [this, out, pred, target] {
    const Mat& g = nodes_[out].grad;
    const Mat& pv2 = nodes_[pred].value;
    Mat& pg = nodes_[pred].grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      pg.raw()[i] += g.raw()[i] * 2.0 * (pv2.raw()[i] - target.raw()[i]);
  };
  return out;
}

void Tape::backward(ValueId loss) {
  if (loss >= nodes_.size()) throw UsageError("backward: bad value id");
  const Mat& lv = nodes_[loss].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw UsageError("backward: loss must be a 1x1 scalar");
  nodes_[loss].grad(0, 0) = 1.0;
  for (std::size_t i = loss + 1; i-- > 0;)
    if (nodes_[i].back) nodes_[i].back();
}

GradCheckReport check_gradients(
    ParamStore& params, const std::function<double(bool with_grad)>& loss_fn,
    double h, double tol, std::size_t max_coords_per_param, Rng* coord_rng,
    const std::function<void(ParamStore&)>& after_grad) {
  params.zero_grad();
  loss_fn(true);
  if (after_grad) after_grad(params);

  // Snapshot analytic gradients before FD evaluations disturb anything.
  std::vector<std::vector<double>> analytic(params.count());
  for (ParamId pid = 0; pid < params.count(); ++pid)
    analytic[pid] = params.grad(pid).raw();

  GradCheckReport rep;
  for (ParamId pid = 0; pid < params.count(); ++pid) {
    Mat& v = params.value(pid);
    std::vector<std::size_t> coords(v.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords_per_param > 0 && coords.size() > max_coords_per_param) {
      if (coord_rng) coord_rng->shuffle(coords);
      coords.resize(max_coords_per_param);
    }
    for (std::size_t c : coords) {
      const double orig = v.raw()[c];
      v.raw()[c] = orig + h;
      const double up = loss_fn(false);
      v.raw()[c] = orig - h;
      const double down = loss_fn(false);
      v.raw()[c] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[pid][c];
      // Relative error for visible gradients; the 1e-2 floor turns the
      // criterion into an absolute one of tol*1e-2 near zero.
      const double denom =
          std::max(1e-2, std::max(std::fabs(fd), std::fabs(an)));
      const double rel = std::fabs(fd - an) / denom;
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = params.name(pid);
        rep.worst_index = c;
      }
    }
  }
  rep.ok = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace resflow
