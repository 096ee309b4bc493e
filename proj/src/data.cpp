#include "resflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace resflow {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_all(const std::string& s,
                                   const std::string& sep) {
  std::vector<std::string> out;
  if (sep.empty()) throw UsageError("empty separator");
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : split_all(s, ",")) {
    std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::int64_t parse_id(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    std::int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) +
                    ": expected integer id, got '" + s + "'");
  }
}

double parse_real(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) +
                    ": expected number, got '" + s + "'");
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::size_t DatasetSchema::field_index(const std::string& n) const {
  for (std::size_t i = 0; i < fields.size(); ++i)
    if (fields[i].name == n) return i;
  throw UsageError("unknown field '" + n + "'");
}

std::size_t Dataset::size() const {
  if (!fields.empty())
    return fields[0].single.empty() ? fields[0].multi.size()
                                    : fields[0].single.size();
  if (!labels.empty()) return labels[0].size();
  if (!target.empty()) return target.size();
  return timestamp.size();
}

Dataset Dataset::select(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.schema = schema;
  out.fields.resize(fields.size());
  for (std::size_t f = 0; f < fields.size(); ++f) {
    if (schema.fields[f].multi_value) {
      out.fields[f].multi.reserve(rows.size());
      for (std::size_t r : rows) out.fields[f].multi.push_back(fields[f].multi[r]);
    } else {
      out.fields[f].single.reserve(rows.size());
      for (std::size_t r : rows)
        out.fields[f].single.push_back(fields[f].single[r]);
    }
  }
  auto take = [&rows](const auto& src, auto& dst) {
    if (src.empty()) return;
    dst.reserve(rows.size());
    for (std::size_t r : rows) dst.push_back(src[r]);
  };
  out.numeric.resize(numeric.size());
  for (std::size_t i = 0; i < numeric.size(); ++i) take(numeric[i], out.numeric[i]);
  out.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) take(labels[i], out.labels[i]);
  take(target, out.target);
  take(timestamp, out.timestamp);
  take(list_id, out.list_id);
  take(item_id, out.item_id);
  take(weight, out.weight);
  return out;
}

std::int64_t Dataset::day(std::size_t i) const {
  if (timestamp.empty()) throw UsageError("dataset has no timestamps");
  if (schema.timestamp_unit == "days") return timestamp[i];
  return timestamp[i] / 86400;
}

namespace {

struct Manifest {
  std::string data_path;
  std::string separator = ",";
  std::string mv_separator = "|";
  bool header = true;
  std::vector<std::string> columns;  // only when header = false
  DatasetSchema schema;
};

Manifest parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key == "data") {
      m.data_path = val;
    } else if (key == "separator") {
      m.separator = val;
    } else if (key == "multi_value_separator") {
      m.mv_separator = val;
    } else if (key == "header") {
      if (val == "true") m.header = true;
      else if (val == "false") m.header = false;
      else
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": header must be true or false");
    } else if (key == "columns") {
      m.columns = split_list(val);
    } else if (key == "field") {
      FieldSpec f;
      auto parts = split_all(val, ":");
      f.name = trim(parts[0]);
      for (std::size_t i = 1; i < parts.size(); ++i) {
        std::string opt = trim(parts[i]);
        if (opt == "multi") f.multi_value = true;
        else if (opt == "enumerated") f.counted = false;
        else if (opt == "counted") f.counted = true;
        else
          throw ConfigError(path + ":" + std::to_string(line_no) +
                            ": unknown field option '" + opt + "'");
      }
      m.schema.fields.push_back(std::move(f));
    } else if (key == "numeric") {
      NumericSpec n;
      auto parts = split_all(val, ":");
      n.name = trim(parts[0]);
      if (parts.size() > 1)
        n.buckets = static_cast<std::size_t>(parse_real(trim(parts[1]), line_no));
      if (parts.size() > 2)
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": numeric takes at most name:buckets");
      m.schema.numeric.push_back(std::move(n));
    } else if (key == "labels") {
      m.schema.label_columns = split_list(val);
    } else if (key == "target") {
      m.schema.target_column = val;
    } else if (key == "timestamp") {
      m.schema.timestamp_column = val;
    } else if (key == "timestamp_unit") {
      if (val != "seconds" && val != "days")
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": timestamp_unit must be seconds or days");
      m.schema.timestamp_unit = val;
    } else if (key == "list_id") {
      m.schema.list_id_column = val;
    } else if (key == "item_id") {
      m.schema.item_id_column = val;
    } else if (key == "weight") {
      m.schema.weight_column = val;
    } else {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": unknown manifest key '" + key + "'");
    }
  }
  if (m.data_path.empty())
    throw ConfigError(path + ": manifest is missing the 'data' key");
  if (!m.header && m.columns.empty())
    throw ConfigError(path + ": header = false requires a 'columns' key");
  return m;
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path) {
  Manifest m = parse_manifest(manifest_path);
  std::filesystem::path data_path(m.data_path);
  if (data_path.is_relative())
    data_path = std::filesystem::path(manifest_path).parent_path() / data_path;
  std::ifstream in(data_path);
  if (!in) throw DataError("cannot open data file '" + data_path.string() + "'");

  Dataset ds;
  ds.schema = m.schema;
  ds.fields.resize(ds.schema.fields.size());
  ds.numeric.resize(ds.schema.numeric.size());
  ds.labels.resize(ds.schema.label_columns.size());

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> columns = m.columns;
  if (m.header) {
    if (!std::getline(in, line))
      throw DataError(data_path.string() + ": empty data file");
    ++line_no;
    columns.clear();
    for (auto& c : split_all(trim(line), m.separator))
      columns.push_back(trim(c));
  }

  // Map each column to the roles it serves.
  auto col_of = [&](const std::string& name, bool required) -> std::ptrdiff_t {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) {
      if (required)
        throw ConfigError("column '" + name + "' not present in data file");
      return -1;
    }
    return it - columns.begin();
  };
  std::vector<std::ptrdiff_t> field_col(ds.schema.fields.size());
  for (std::size_t f = 0; f < ds.schema.fields.size(); ++f)
    field_col[f] = col_of(ds.schema.fields[f].name, true);
  std::vector<std::ptrdiff_t> numeric_col(ds.schema.numeric.size());
  for (std::size_t f = 0; f < ds.schema.numeric.size(); ++f)
    numeric_col[f] = col_of(ds.schema.numeric[f].name, true);
  std::vector<std::ptrdiff_t> label_col(ds.schema.label_columns.size());
  for (std::size_t f = 0; f < ds.schema.label_columns.size(); ++f)
    label_col[f] = col_of(ds.schema.label_columns[f], true);
  const std::ptrdiff_t target_col =
      ds.schema.target_column.empty() ? -1 : col_of(ds.schema.target_column, true);
  const std::ptrdiff_t ts_col = ds.schema.timestamp_column.empty()
                                    ? -1
                                    : col_of(ds.schema.timestamp_column, true);
  const std::ptrdiff_t list_col = ds.schema.list_id_column.empty()
                                      ? -1
                                      : col_of(ds.schema.list_id_column, true);
  const std::ptrdiff_t item_col = ds.schema.item_id_column.empty()
                                      ? -1
                                      : col_of(ds.schema.item_id_column, true);
  const std::ptrdiff_t w_col =
      ds.schema.weight_column.empty() ? -1 : col_of(ds.schema.weight_column, true);

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_all(line, m.separator);
    if (cells.size() != columns.size())
      throw DataError(data_path.string() + ":" + std::to_string(line_no) +
                      ": expected " + std::to_string(columns.size()) +
                      " columns, got " + std::to_string(cells.size()));
    for (auto& c : cells) c = trim(c);
    for (std::size_t f = 0; f < ds.schema.fields.size(); ++f) {
      const std::string& cell = cells[field_col[f]];
      if (ds.schema.fields[f].multi_value) {
        std::vector<std::int64_t> vals;
        if (!cell.empty())
          for (auto& piece : split_all(cell, m.mv_separator))
            vals.push_back(parse_id(trim(piece), line_no));
        ds.fields[f].multi.push_back(std::move(vals));
      } else {
        ds.fields[f].single.push_back(cell.empty() ? kMissingId
                                                   : parse_id(cell, line_no));
      }
    }
    for (std::size_t f = 0; f < ds.schema.numeric.size(); ++f)
      ds.numeric[f].push_back(parse_real(cells[numeric_col[f]], line_no));
    for (std::size_t f = 0; f < label_col.size(); ++f) {
      const double v = parse_real(cells[label_col[f]], line_no);
      if (v != 0.0 && v != 1.0)
        throw DataError(data_path.string() + ":" + std::to_string(line_no) +
                        ": label '" + ds.schema.label_columns[f] +
                        "' must be 0 or 1");
      ds.labels[f].push_back(v);
    }
    if (target_col >= 0) ds.target.push_back(parse_real(cells[target_col], line_no));
    if (ts_col >= 0)
      ds.timestamp.push_back(
          static_cast<std::int64_t>(parse_real(cells[ts_col], line_no)));
    if (list_col >= 0) ds.list_id.push_back(parse_id(cells[list_col], line_no));
    if (item_col >= 0) ds.item_id.push_back(parse_id(cells[item_col], line_no));
    if (w_col >= 0) ds.weight.push_back(parse_real(cells[w_col], line_no));
  }
  return ds;
}

void write_dataset(const Dataset& data, const std::string& dir,
                   const std::string& name) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path csv_path =
      std::filesystem::path(dir) / (name + ".csv");
  const std::filesystem::path man_path =
      std::filesystem::path(dir) / (name + ".manifest");

  // Column layout: fields, numeric, labels, target, timestamp, list, item, w.
  std::vector<std::string> columns;
  for (const auto& f : data.schema.fields) columns.push_back(f.name);
  for (const auto& f : data.schema.numeric) columns.push_back(f.name);
  for (const auto& l : data.schema.label_columns) columns.push_back(l);
  if (!data.schema.target_column.empty())
    columns.push_back(data.schema.target_column);
  if (!data.schema.timestamp_column.empty())
    columns.push_back(data.schema.timestamp_column);
  if (!data.schema.list_id_column.empty())
    columns.push_back(data.schema.list_id_column);
  if (!data.schema.item_id_column.empty() &&
      std::find(columns.begin(), columns.end(), data.schema.item_id_column) ==
          columns.end())
    columns.push_back(data.schema.item_id_column);
  if (!data.schema.weight_column.empty())
    columns.push_back(data.schema.weight_column);

  std::ofstream csv(csv_path);
  if (!csv) throw DataError("cannot write '" + csv_path.string() + "'");
  for (std::size_t c = 0; c < columns.size(); ++c)
    csv << (c ? "," : "") << columns[c];
  csv << "\n";

  auto fmt = [](double v) {
    std::ostringstream os;
    if (v == static_cast<std::int64_t>(v))
      os << static_cast<std::int64_t>(v);
    else
      os << v;
    return os.str();
  };

  const std::size_t n = data.size();
  const bool item_doubles_as_field =
      !data.schema.item_id_column.empty() &&
      std::any_of(data.schema.fields.begin(), data.schema.fields.end(),
                  [&](const FieldSpec& f) {
                    return f.name == data.schema.item_id_column;
                  });
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> cells;
    for (std::size_t f = 0; f < data.fields.size(); ++f) {
      if (data.schema.fields[f].multi_value) {
        std::string cell;
        for (std::size_t j = 0; j < data.fields[f].multi[i].size(); ++j) {
          if (j) cell += "|";
          cell += std::to_string(data.fields[f].multi[i][j]);
        }
        cells.push_back(std::move(cell));
      } else {
        const std::int64_t v = data.fields[f].single[i];
        cells.push_back(v == kMissingId ? "" : std::to_string(v));
      }
    }
    for (std::size_t f = 0; f < data.numeric.size(); ++f)
      cells.push_back(fmt(data.numeric[f][i]));
    for (std::size_t l = 0; l < data.labels.size(); ++l)
      cells.push_back(fmt(data.labels[l][i]));
    if (!data.schema.target_column.empty()) cells.push_back(fmt(data.target[i]));
    if (!data.schema.timestamp_column.empty())
      cells.push_back(std::to_string(data.timestamp[i]));
    if (!data.schema.list_id_column.empty())
      cells.push_back(std::to_string(data.list_id[i]));
    if (!data.schema.item_id_column.empty() && !item_doubles_as_field)
      cells.push_back(std::to_string(data.item_id[i]));
    if (!data.schema.weight_column.empty()) cells.push_back(fmt(data.weight[i]));
    for (std::size_t c = 0; c < cells.size(); ++c)
      csv << (c ? "," : "") << cells[c];
    csv << "\n";
  }
  csv.close();
  if (!csv) throw DataError("write failed for '" + csv_path.string() + "'");

  std::ofstream man(man_path);
  if (!man) throw DataError("cannot write '" + man_path.string() + "'");
  man << "data = " << name << ".csv\n";
  man << "separator = ,\nheader = true\n";
  for (const auto& f : data.schema.fields) {
    man << "field = " << f.name;
    if (f.multi_value) man << ":multi";
    if (!f.counted) man << ":enumerated";
    man << "\n";
  }
  for (const auto& f : data.schema.numeric)
    man << "numeric = " << f.name << ":" << f.buckets << "\n";
  if (!data.schema.label_columns.empty()) {
    man << "labels = ";
    for (std::size_t i = 0; i < data.schema.label_columns.size(); ++i)
      man << (i ? "," : "") << data.schema.label_columns[i];
    man << "\n";
  }
  if (!data.schema.target_column.empty())
    man << "target = " << data.schema.target_column << "\n";
  if (!data.schema.timestamp_column.empty()) {
    man << "timestamp = " << data.schema.timestamp_column << "\n";
    man << "timestamp_unit = " << data.schema.timestamp_unit << "\n";
  }
  if (!data.schema.list_id_column.empty())
    man << "list_id = " << data.schema.list_id_column << "\n";
  if (!data.schema.item_id_column.empty())
    man << "item_id = " << data.schema.item_id_column << "\n";
  if (!data.schema.weight_column.empty())
    man << "weight = " << data.schema.weight_column << "\n";
  man.close();
  if (!man) throw DataError("write failed for '" + man_path.string() + "'");
}

Bucketizer::Bucketizer(std::vector<double> boundaries)
    : bounds_(std::move(boundaries)) {
  for (std::size_t i = 1; i < bounds_.size(); ++i)
    if (bounds_[i] <= bounds_[i - 1])
      throw UsageError("Bucketizer: boundaries must be strictly increasing");
}

Bucketizer Bucketizer::fit(std::vector<double> values,
                           std::size_t num_buckets) {
  if (values.empty()) throw UsageError("Bucketizer::fit: no values");
  if (num_buckets < 2) throw UsageError("Bucketizer::fit: need >= 2 buckets");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::vector<double> bounds;
  for (std::size_t k = 1; k < num_buckets; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(num_buckets);
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    const double v = lo + 1 < n
                         ? values[lo] * (1.0 - frac) + values[lo + 1] * frac
                         : values[lo];
    // A boundary at the sample maximum separates nothing; dropping it keeps
    // constant columns at a single category.
    if ((bounds.empty() || v > bounds.back()) && v < values[n - 1])
      bounds.push_back(v);
  }
  Bucketizer b;
  b.bounds_ = std::move(bounds);
  return b;
}

std::size_t Bucketizer::bucket(double v) const {
  return static_cast<std::size_t>(
      std::lower_bound(bounds_.begin(), bounds_.end(), v) - bounds_.begin());
}

namespace {
void numeric_to_fields(Dataset& ds, const std::vector<Bucketizer>& fitted) {
  if (fitted.size() != ds.schema.numeric.size())
    throw UsageError("bucketizer count does not match numeric columns");
  for (std::size_t f = 0; f < ds.schema.numeric.size(); ++f) {
    FieldSpec spec;
    spec.name = ds.schema.numeric[f].name;
    spec.multi_value = false;
    spec.counted = false;  // bucket ids are dense; keep them all
    FieldColumn col;
    col.single.reserve(ds.numeric[f].size());
    for (double v : ds.numeric[f])
      col.single.push_back(static_cast<std::int64_t>(fitted[f].bucket(v)));
    ds.schema.fields.push_back(std::move(spec));
    ds.fields.push_back(std::move(col));
  }
  ds.schema.numeric.clear();
  ds.numeric.clear();
}
}  // namespace

std::vector<Bucketizer> bucketize_datasets(std::vector<Dataset*> datasets) {
  if (datasets.empty() || datasets[0] == nullptr)
    throw UsageError("bucketize_datasets: need a train dataset first");
  Dataset& train = *datasets[0];
  std::vector<Bucketizer> fitted;
  fitted.reserve(train.schema.numeric.size());
  for (std::size_t f = 0; f < train.schema.numeric.size(); ++f)
    fitted.push_back(
        Bucketizer::fit(train.numeric[f], train.schema.numeric[f].buckets));
  for (Dataset* ds : datasets) numeric_to_fields(*ds, fitted);
  return fitted;
}

void apply_bucketizers(Dataset& data, const std::vector<Bucketizer>& fitted) {
  numeric_to_fields(data, fitted);
}

std::pair<Dataset, Dataset> split_by_time(const Dataset& data,
                                          const SplitSpec& spec) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("split_by_time: empty dataset");
  if (data.timestamp.empty())
    throw ConfigError("split_by_time: dataset has no timestamp column");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return data.timestamp[a] < data.timestamp[b];
                   });
  std::size_t n_train = 0;
  if (spec.mode == SplitSpec::Mode::kFraction) {
    if (spec.fraction <= 0.0 || spec.fraction >= 1.0)
      throw ConfigError("split fraction must be in (0, 1)");
    n_train = static_cast<std::size_t>(
        std::llround(spec.fraction * static_cast<double>(n)));
  } else {
    while (n_train < n && data.day(order[n_train]) <= spec.boundary_day)
      ++n_train;
  }
  if (n_train == 0 || n_train == n)
    throw ConfigError("split_by_time: one side of the split is empty");
  std::vector<std::size_t> train_rows(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test_rows(order.begin() + n_train, order.end());
  return {data.select(train_rows), data.select(test_rows)};
}

namespace {

// Mean sigmoid(a + b) over `aff` restricted to `rows`, as a function of b,
// is increasing; bisect b to hit `target`.
double calibrate_intercept(const std::vector<double>& aff,
                           const std::vector<std::size_t>& rows,
                           double target) {
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (std::size_t r : rows) mean += sigmoid(aff[r] + mid);
    mean /= static_cast<double>(rows.size());
    if (mean < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Dataset generate_funnel(std::uint64_t seed, const FunnelConfig& cfg) {
  if (cfg.base_ctr <= 0.0 || cfg.base_ctr >= 1.0)
    throw UsageError("generate_funnel: base_ctr must be in (0, 1)");
  if (cfg.base_cvr < 0.0 || cfg.base_cvr >= 1.0)
    throw UsageError("generate_funnel: base_cvr must be in [0, 1)");
  if (cfg.base_atc <= 0.0 || cfg.base_atc > 1.0)
    throw UsageError("generate_funnel: base_atc must be in (0, 1]");
  if (cfg.base_cvr > cfg.base_atc)
    throw UsageError("generate_funnel: base_cvr cannot exceed base_atc");
  if (cfg.n_lists == 0 || cfg.list_size == 0 || cfg.n_users == 0 ||
      cfg.n_items == 0 || cfg.latent_dim == 0)
    throw UsageError("generate_funnel: sizes must be positive");

  Rng rng(Rng::derive(seed, "funnel"));
  const std::size_t r = cfg.latent_dim;
  const double norm = cfg.affinity_scale / std::sqrt(static_cast<double>(r));

  // Latent stage factors: click, add-to-cart, order.
  auto draw_factors = [&](std::size_t count) {
    std::vector<double> f(count * r);
    for (double& v : f) v = rng.normal();
    return f;
  };
  std::vector<std::vector<double>> uf, itf;
  for (int s = 0; s < 3; ++s) uf.push_back(draw_factors(cfg.n_users));
  for (int s = 0; s < 3; ++s) itf.push_back(draw_factors(cfg.n_items));

  const std::size_t n = cfg.n_lists * cfg.list_size;
  std::vector<std::size_t> user_of(n), item_of(n);
  std::vector<std::int64_t> list_of(n);
  for (std::size_t l = 0; l < cfg.n_lists; ++l) {
    const std::size_t u = rng.uniform_int(cfg.n_users);
    for (std::size_t j = 0; j < cfg.list_size; ++j) {
      const std::size_t i = l * cfg.list_size + j;
      user_of[i] = u;
      item_of[i] = rng.uniform_int(cfg.n_items);
      list_of[i] = static_cast<std::int64_t>(l);
    }
  }

  auto stage_affinity = [&](int s, std::size_t u, std::size_t it) {
    const double* a = &uf[s][u * r];
    const double* b = &itf[s][it * r];
    double dot = 0.0;
    for (std::size_t k = 0; k < r; ++k) dot += a[k] * b[k];
    return dot * norm;
  };

  // Later stages inherit half of the previous stage's affinity, so
  // conversion propensity stays correlated with click propensity.
  std::vector<double> a_click(n), a_atc(n), a_order(n);
  for (std::size_t i = 0; i < n; ++i) {
    a_click[i] = stage_affinity(0, user_of[i], item_of[i]);
    a_atc[i] = 0.5 * a_click[i] + stage_affinity(1, user_of[i], item_of[i]);
    a_order[i] = 0.5 * a_atc[i] + stage_affinity(2, user_of[i], item_of[i]);
  }

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const double b_click = calibrate_intercept(a_click, all, cfg.base_ctr);
  std::vector<double> click(n, 0.0), atc(n, 0.0), order(n, 0.0), w(n, 0.0);
  std::vector<std::size_t> clicked;
  for (std::size_t i = 0; i < n; ++i)
    if (rng.bernoulli(sigmoid(a_click[i] + b_click))) {
      click[i] = 1.0;
      clicked.push_back(i);
    }
  if (!clicked.empty()) {
    const double b_atc = calibrate_intercept(a_atc, clicked, cfg.base_atc);
    std::vector<std::size_t> carted;
    for (std::size_t i : clicked)
      if (rng.bernoulli(sigmoid(a_atc[i] + b_atc))) {
        atc[i] = 1.0;
        carted.push_back(i);
      }
    if (!carted.empty() && cfg.base_cvr > 0.0) {
      const double b_order =
          calibrate_intercept(a_order, carted, cfg.base_cvr / cfg.base_atc);
      for (std::size_t i : carted)
        if (rng.bernoulli(sigmoid(a_order[i] + b_order))) {
          order[i] = 1.0;
          w[i] = 1.0 + static_cast<double>(rng.uniform_int(5));
        }
    }
  }

  Dataset ds;
  ds.schema.fields = {FieldSpec{"user_id", false, false},
                      FieldSpec{"item_id", false, false}};
  ds.schema.label_columns = {"click", "atc", "order"};
  ds.schema.timestamp_column = "ts";
  ds.schema.timestamp_unit = "seconds";
  ds.schema.list_id_column = "list_id";
  ds.schema.item_id_column = "item_id";
  ds.schema.weight_column = "w";
  ds.fields.resize(2);
  ds.fields[0].single.reserve(n);
  ds.fields[1].single.reserve(n);
  ds.labels = {std::move(click), std::move(atc), std::move(order)};
  ds.timestamp.resize(n);
  ds.list_id = std::move(list_of);
  ds.item_id.resize(n);
  ds.weight = std::move(w);
  for (std::size_t i = 0; i < n; ++i) {
    ds.fields[0].single.push_back(static_cast<std::int64_t>(user_of[i]));
    ds.fields[1].single.push_back(static_cast<std::int64_t>(item_of[i]));
    ds.timestamp[i] = static_cast<std::int64_t>(i);
    ds.item_id[i] = static_cast<std::int64_t>(item_of[i]);
  }
  return ds;
}

Dataset generate_funnel(std::uint64_t seed, std::size_t n_users,
                        std::size_t n_items, double base_ctr, double base_cvr) {
  FunnelConfig cfg;
  cfg.n_users = n_users;
  cfg.n_items = n_items;
  cfg.base_ctr = base_ctr;
  cfg.base_cvr = base_cvr;
  if (base_cvr > cfg.base_atc) cfg.base_atc = std::min(1.0, 2.0 * base_cvr);
  return generate_funnel(seed, cfg);
}

}  // namespace resflow
