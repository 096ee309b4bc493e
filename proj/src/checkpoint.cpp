#include "resflow/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace resflow {
namespace {

constexpr char kMagic[8] = {'R', 'E', 'S', 'F', 'L', 'O', 'W', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_i64(std::ostream& out, std::int64_t v) {
  put_u64(out, static_cast<std::uint64_t>(v));
}

void put_f32(std::ostream& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::int64_t get_i64(std::istream& in) {
  return static_cast<std::int64_t>(get_u64(in));
}

double get_f32(std::istream& in) {
  return static_cast<double>(std::bit_cast<float>(get_u32(in)));
}

std::string join_csv(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ",";
    out += parts[i];
  }
  return out;
}

template <typename T, typename F>
std::string join_csv_of(const std::vector<T>& xs, F fmt) {
  std::vector<std::string> parts;
  parts.reserve(xs.size());
  for (const T& x : xs) parts.push_back(fmt(x));
  return join_csv(parts);
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string build_manifest(
    const MultiTaskModel& model,
    const std::vector<std::pair<std::string, Bucketizer>>& bucketizers) {
  const ModelConfig& cfg = model.config();
  const EmbeddingVocab& vocab = model.vocab();
  std::ostringstream out;
  out << "mode = " << to_string(cfg.mode) << "\n";
  out << "tasks = " << join_csv(cfg.graph.tasks) << "\n";
  for (const ResidualEdge& e : cfg.graph.edges) {
    out << "edge = " << cfg.graph.tasks[e.src] << "->" << cfg.graph.tasks[e.dst]
        << " layers=";
    if (e.layers.empty())
      out << "-";
    else
      out << join_csv_of(e.layers,
                         [](std::size_t l) { return std::to_string(l); });
    out << " logit=" << (e.logit_link ? 1 : 0) << "\n";
  }
  out << "widths = "
      << join_csv_of(cfg.tower.widths,
                     [](std::size_t w) { return std::to_string(w); })
      << "\n";
  out << "twin = " << (cfg.tower.twin ? 1 : 0) << "\n";
  out << "activation = " << to_string(cfg.tower.hidden_act) << "\n";
  out << "dropout = " << fmt_real(cfg.tower.dropout) << "\n";
  out << "mandate = " << (cfg.tower.mandate ? 1 : 0) << "\n";
  out << "before_dot = " << (cfg.tower.residual_before_dot ? 1 : 0) << "\n";
  out << "regularizer = " << to_string(cfg.reg.kind) << "\n";
  out << "lambda = " << fmt_real(cfg.reg.lambda) << "\n";
  out << "emb_dim = " << cfg.emb_dim << "\n";
  out << "min_count = " << vocab.min_count() << "\n";
  out << "loss = "
      << join_csv_of(cfg.loss,
                     [](LossKind l) {
                       return std::string(l == LossKind::kBce ? "bce" : "mse");
                     })
      << "\n";
  out << "task_weight = " << join_csv_of(cfg.task_weight, fmt_real) << "\n";
  out << "pos_weight = " << join_csv_of(cfg.pos_weight, fmt_real) << "\n";
  out << "neg_weight = " << join_csv_of(cfg.neg_weight, fmt_real) << "\n";
  if (cfg.ladder)
    out << "ladder = " << join_csv_of(*cfg.ladder, fmt_real) << "\n";
  if (!cfg.user_fields.empty())
    out << "user_fields = " << join_csv(cfg.user_fields) << "\n";
  if (!cfg.item_fields.empty())
    out << "item_fields = " << join_csv(cfg.item_fields) << "\n";
  for (std::size_t f = 0; f < vocab.field_count(); ++f) {
    const FieldSpec& spec = vocab.field(f);
    out << "field = " << spec.name;
    if (spec.multi_value) out << ":multi";
    if (!spec.counted) out << ":enumerated";
    out << "\n";
  }
  for (const auto& [name, b] : bucketizers)
    out << "bucketizer = " << name << " : "
        << join_csv_of(b.boundaries(), fmt_real) << "\n";
  return out.str();
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> csv_items(const std::string& s) {
  std::vector<std::string> out;
  for (auto& p : split_on(s, ',')) {
    std::string t = trim(p);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

struct ParsedManifest {
  ModelConfig config;
  std::vector<FieldSpec> fields;
  std::int64_t min_count = 1;
  std::vector<std::pair<std::string, Bucketizer>> bucketizers;
};

ParsedManifest parse_manifest(const std::string& text) {
  ParsedManifest pm;
  ModelConfig& cfg = pm.config;
  std::istringstream in(text);
  std::string line;
  struct EdgeLine {
    std::string src, dst;
    std::vector<std::size_t> layers;
    bool logit = false;
  };
  std::vector<EdgeLine> edge_lines;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError("checkpoint manifest: bad line '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key == "mode") {
      cfg.mode = model_mode_from_string(val);
    } else if (key == "tasks") {
      cfg.graph.tasks = csv_items(val);
    } else if (key == "edge") {
      EdgeLine e;
      std::istringstream es(val);
      std::string arrow, tok;
      es >> arrow;
      const std::size_t a = arrow.find("->");
      if (a == std::string::npos)
        throw DataError("checkpoint manifest: bad edge '" + val + "'");
      e.src = arrow.substr(0, a);
      e.dst = arrow.substr(a + 2);
      while (es >> tok) {
        if (tok.rfind("layers=", 0) == 0) {
          const std::string body = tok.substr(7);
          if (body != "-")
            for (const std::string& l : csv_items(body))
              e.layers.push_back(std::stoul(l));
        } else if (tok.rfind("logit=", 0) == 0) {
          e.logit = tok.substr(6) == "1";
        } else {
          throw DataError("checkpoint manifest: bad edge token '" + tok + "'");
        }
      }
      edge_lines.push_back(std::move(e));
    } else if (key == "widths") {
      cfg.tower.widths.clear();
      for (const std::string& w : csv_items(val))
        cfg.tower.widths.push_back(std::stoul(w));
    } else if (key == "twin") {
      cfg.tower.twin = val == "1";
    } else if (key == "activation") {
      cfg.tower.hidden_act = activation_from_string(val);
    } else if (key == "dropout") {
      cfg.tower.dropout = std::stod(val);
    } else if (key == "mandate") {
      cfg.tower.mandate = val == "1";
    } else if (key == "before_dot") {
      cfg.tower.residual_before_dot = val == "1";
    } else if (key == "regularizer") {
      cfg.reg.kind = regularizer_from_string(val);
    } else if (key == "lambda") {
      cfg.reg.lambda = std::stod(val);
    } else if (key == "emb_dim") {
      cfg.emb_dim = std::stoul(val);
    } else if (key == "min_count") {
      pm.min_count = std::stoll(val);
    } else if (key == "loss") {
      cfg.loss.clear();
      for (const std::string& l : csv_items(val)) {
        if (l == "bce") cfg.loss.push_back(LossKind::kBce);
        else if (l == "mse") cfg.loss.push_back(LossKind::kMse);
        else throw DataError("checkpoint manifest: bad loss kind '" + l + "'");
      }
    } else if (key == "task_weight") {
      cfg.task_weight.clear();
      for (const std::string& w : csv_items(val))
        cfg.task_weight.push_back(std::stod(w));
    } else if (key == "pos_weight") {
      cfg.pos_weight.clear();
      for (const std::string& w : csv_items(val))
        cfg.pos_weight.push_back(std::stod(w));
    } else if (key == "neg_weight") {
      cfg.neg_weight.clear();
      for (const std::string& w : csv_items(val))
        cfg.neg_weight.push_back(std::stod(w));
    } else if (key == "ladder") {
      std::vector<double> lad;
      for (const std::string& v : csv_items(val)) lad.push_back(std::stod(v));
      cfg.ladder = std::move(lad);
    } else if (key == "user_fields") {
      cfg.user_fields = csv_items(val);
    } else if (key == "item_fields") {
      cfg.item_fields = csv_items(val);
    } else if (key == "field") {
      FieldSpec spec;
      auto parts = split_on(val, ':');
      spec.name = trim(parts[0]);
      for (std::size_t i = 1; i < parts.size(); ++i) {
        const std::string opt = trim(parts[i]);
        if (opt == "multi") spec.multi_value = true;
        else if (opt == "enumerated") spec.counted = false;
        else throw DataError("checkpoint manifest: bad field option '" + opt + "'");
      }
      pm.fields.push_back(std::move(spec));
    } else if (key == "bucketizer") {
      const std::size_t colon = val.find(':');
      if (colon == std::string::npos)
        throw DataError("checkpoint manifest: bad bucketizer line");
      std::vector<double> bounds;
      for (const std::string& b : csv_items(val.substr(colon + 1)))
        bounds.push_back(std::stod(b));
      pm.bucketizers.emplace_back(trim(val.substr(0, colon)),
                                  Bucketizer(std::move(bounds)));
    } else {
      throw DataError("checkpoint manifest: unknown key '" + key + "'");
    }
  }
  for (const EdgeLine& e : edge_lines) {
    ResidualEdge edge;
    edge.src = cfg.graph.task_index(e.src);
    edge.dst = cfg.graph.task_index(e.dst);
    edge.layers = e.layers;
    edge.logit_link = e.logit;
    cfg.graph.edges.push_back(std::move(edge));
  }
  return pm;
}

}  // namespace

void save_checkpoint(
    const std::string& path, const MultiTaskModel& model,
    const std::vector<std::pair<std::string, Bucketizer>>& bucketizers) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);

  const std::string manifest = build_manifest(model, bucketizers);
  put_u64(out, manifest.size());
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

  const ParamStore& params = model.params();
  std::uint64_t tower_floats = 0;
  for (ParamId pid = 0; pid < params.count(); ++pid)
    if (params.name(pid).rfind("emb.", 0) != 0)
      tower_floats += params.value(pid).size();
  put_u64(out, tower_floats);
  for (ParamId pid = 0; pid < params.count(); ++pid) {
    if (params.name(pid).rfind("emb.", 0) == 0) continue;
    for (double v : params.value(pid).raw()) put_f32(out, v);
  }

  const EmbeddingVocab& vocab = model.vocab();
  const EmbeddingLayer& emb = model.embedding();
  for (std::size_t f = 0; f < vocab.field_count(); ++f) {
    const Mat& table = params.value(emb.tables[f]);
    const auto& ids = vocab.ids(f);
    put_u64(out, ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      put_i64(out, ids[r]);
      for (std::size_t j = 0; j < emb.dim; ++j) put_f32(out, table(r, j));
    }
    for (std::size_t j = 0; j < emb.dim; ++j)
      put_f32(out, table(vocab.default_row(f), j));
  }
  out.close();
  if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError("'" + path + "' is not a model checkpoint");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw DataError("checkpoint version " + std::to_string(version) +
                    " is not supported (expected " + std::to_string(kVersion) +
                    ")");

  const std::uint64_t manifest_len = get_u64(in);
  std::string manifest(manifest_len, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw DataError("checkpoint truncated");
  ParsedManifest pm = parse_manifest(manifest);

  const std::uint64_t tower_floats = get_u64(in);
  std::vector<double> blob(tower_floats);
  for (std::uint64_t i = 0; i < tower_floats; ++i) blob[i] = get_f32(in);

  std::vector<std::vector<std::int64_t>> ids(pm.fields.size());
  std::vector<std::vector<double>> tables(pm.fields.size());
  for (std::size_t f = 0; f < pm.fields.size(); ++f) {
    const std::uint64_t n = get_u64(in);
    ids[f].resize(n);
    tables[f].resize((n + 1) * pm.config.emb_dim);
    for (std::uint64_t r = 0; r < n; ++r) {
      ids[f][r] = get_i64(in);
      for (std::size_t j = 0; j < pm.config.emb_dim; ++j)
        tables[f][r * pm.config.emb_dim + j] = get_f32(in);
    }
    for (std::size_t j = 0; j < pm.config.emb_dim; ++j)
      tables[f][n * pm.config.emb_dim + j] = get_f32(in);
  }

  LoadedModel loaded;
  loaded.vocab = std::make_unique<EmbeddingVocab>(
      EmbeddingVocab::restore(pm.fields, pm.min_count, std::move(ids)));
  loaded.params = std::make_unique<ParamStore>();
  loaded.model = std::make_unique<MultiTaskModel>(
      *loaded.params, /*seed=*/0, *loaded.vocab, std::move(pm.config));
  loaded.bucketizers = std::move(pm.bucketizers);

  // Overwrite the freshly initialized parameters with the stored values.
  ParamStore& params = *loaded.params;
  std::size_t off = 0;
  for (ParamId pid = 0; pid < params.count(); ++pid) {
    if (params.name(pid).rfind("emb.", 0) == 0) continue;
    for (double& v : params.value(pid).raw()) {
      if (off >= blob.size())
        throw DataError("checkpoint parameter blob is too short");
      v = blob[off++];
    }
  }
  if (off != blob.size())
    throw DataError("checkpoint parameter blob does not match the model");
  const EmbeddingLayer& emb = loaded.model->embedding();
  for (std::size_t f = 0; f < emb.tables.size(); ++f) {
    Mat& table = params.value(emb.tables[f]);
    if (table.size() != tables[f].size())
      throw DataError("checkpoint embedding table does not match the model");
    std::copy(tables[f].begin(), tables[f].end(), table.raw().begin());
  }
  return loaded;
}

}  // namespace resflow
