#include "lfr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lfr/errors.hpp"
#include "lfr/rng.hpp"

namespace lfr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string normalize_label(std::string v) {
  v = trim(v);
  if (!v.empty() && v.back() == '.') v.pop_back();
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

struct RawTable {
  std::vector<std::vector<std::string>> feature_rows;  // schema column order, label removed
  std::vector<std::string> label_values;               // normalized
  std::int64_t rows_dropped = 0;
};

RawTable read_rows(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file: " + path);

  int label_pos = -1;
  for (std::size_t i = 0; i < schema.columns.size(); ++i) {
    if (schema.columns[i].name == schema.label_column) label_pos = static_cast<int>(i);
  }
  if (label_pos < 0) {
    throw DataError("label column '" + schema.label_column + "' not declared in schema");
  }

  RawTable table;
  std::string line;
  std::int64_t line_no = 0;
  bool header_pending = schema.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '|') continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    auto fields = split_csv_line(t);
    if (fields.size() != schema.columns.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(schema.columns.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    bool missing = false;
    for (const auto& f : fields) {
      if (f.empty() || f == "?") {
        missing = true;
        break;
      }
    }
    if (missing) {
      ++table.rows_dropped;
      continue;
    }
    std::vector<std::string> feat;
    feat.reserve(fields.size() - 1);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (static_cast<int>(i) == label_pos) continue;
      feat.push_back(std::move(fields[i]));
    }
    // validate numerics early so errors carry the line number
    std::size_t fi = 0;
    for (std::size_t i = 0; i < schema.columns.size(); ++i) {
      if (static_cast<int>(i) == label_pos) continue;
      if (schema.columns[i].kind == ColumnKind::numeric) {
        try {
          std::size_t used = 0;
          (void)std::stod(feat[fi], &used);
          if (used != feat[fi].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw DataError("line " + std::to_string(line_no) + ": column '" +
                          schema.columns[i].name + "' is not numeric: '" + feat[fi] + "'");
        }
      }
      ++fi;
    }
    table.feature_rows.push_back(std::move(feat));
    table.label_values.push_back(normalize_label(fields[static_cast<std::size_t>(label_pos)]));
  }
  return table;
}

std::vector<ColumnSpec> feature_columns(const CsvSchema& schema) {
  std::vector<ColumnSpec> cols;
  for (const auto& c : schema.columns) {
    if (c.name != schema.label_column) cols.push_back(c);
  }
  return cols;
}

std::vector<std::int32_t> map_labels(const std::vector<std::string>& values,
                                     const std::vector<std::string>& classes) {
  std::map<std::string, std::int32_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i)
    index[classes[i]] = static_cast<std::int32_t>(i);
  std::vector<std::int32_t> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    auto it = index.find(v);
    if (it == index.end()) throw DataError("label value '" + v + "' not in class list");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

CsvSchema CsvSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("schema JSON parse error in " + path + ": " + e.what());
  }
  CsvSchema s;
  s.has_header = j.value("has_header", false);
  if (!j.contains("columns") || !j["columns"].is_array()) {
    throw DataError("schema must declare a 'columns' array");
  }
  for (const auto& c : j["columns"]) {
    ColumnSpec spec;
    spec.name = c.at("name").get<std::string>();
    const auto kind = c.at("kind").get<std::string>();
    if (kind == "numeric") {
      spec.kind = ColumnKind::numeric;
    } else if (kind == "categorical") {
      spec.kind = ColumnKind::categorical;
    } else {
      throw DataError("schema column '" + spec.name + "': unknown kind '" + kind + "'");
    }
    s.columns.push_back(std::move(spec));
  }
  s.label_column = j.at("label").get<std::string>();
  if (j.contains("label_classes")) {
    for (const auto& c : j["label_classes"]) s.label_classes.push_back(c.get<std::string>());
  }
  return s;
}

Tensor apply_feature_meta(const std::vector<std::vector<std::string>>& rows,
                          const CsvSchema& schema, const FeatureMeta& meta) {
  const auto n = static_cast<std::int64_t>(rows.size());
  Tensor features = Tensor::zeros({n, meta.feature_dim});
  auto dst = features.mutable_values();
  const auto cols = feature_columns(schema);
  for (std::int64_t r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    std::int64_t out_col = 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& cm = meta.columns[c];
      if (cm.kind == ColumnKind::numeric) {
        const double v = std::stod(row[c]);
        dst[static_cast<std::size_t>(r * meta.feature_dim + out_col)] =
            static_cast<float>((v - cm.mean) / cm.std_dev);
        ++out_col;
      } else {
        const auto it = std::lower_bound(cm.categories.begin(), cm.categories.end(), row[c]);
        if (it != cm.categories.end() && *it == row[c]) {
          const auto slot = static_cast<std::int64_t>(it - cm.categories.begin());
          dst[static_cast<std::size_t>(r * meta.feature_dim + out_col + slot)] = 1.0f;
        }
        // unseen category: all-zero block
        out_col += static_cast<std::int64_t>(cm.categories.size());
      }
    }
  }
  return features;
}

Dataset load_csv_train(const std::string& path, const CsvSchema& schema) {
  RawTable table = read_rows(path, schema);
  if (table.feature_rows.empty()) throw DataError("no usable rows in " + path);

  const auto cols = feature_columns(schema);
  FeatureMeta meta;
  meta.columns.resize(cols.size());

  for (std::size_t c = 0; c < cols.size(); ++c) {
    auto& cm = meta.columns[c];
    cm.name = cols[c].name;
    cm.kind = cols[c].kind;
    if (cm.kind == ColumnKind::numeric) {
      // two-pass mean/std in float64
      double sum = 0.0;
      for (const auto& row : table.feature_rows) sum += std::stod(row[c]);
      cm.mean = sum / static_cast<double>(table.feature_rows.size());
      double sq = 0.0;
      for (const auto& row : table.feature_rows) {
        const double d = std::stod(row[c]) - cm.mean;
        sq += d * d;
      }
      cm.std_dev = std::sqrt(sq / static_cast<double>(table.feature_rows.size()));
      if (cm.std_dev < 1e-12) cm.std_dev = 1.0;  // constant column guard
    } else {
      std::set<std::string> uniq;
      for (const auto& row : table.feature_rows) uniq.insert(row[c]);
      cm.categories.assign(uniq.begin(), uniq.end());
    }
  }
  meta.feature_dim = 0;
  for (const auto& cm : meta.columns) {
    meta.feature_dim +=
        cm.kind == ColumnKind::numeric ? 1 : static_cast<std::int64_t>(cm.categories.size());
  }

  if (!schema.label_classes.empty()) {
    meta.label_classes = schema.label_classes;
  } else {
    std::set<std::string> uniq(table.label_values.begin(), table.label_values.end());
    meta.label_classes.assign(uniq.begin(), uniq.end());
  }
  if (meta.label_classes.size() < 2) {
    throw DataError("train split contains a single label class");
  }

  Dataset ds;
  ds.features = apply_feature_meta(table.feature_rows, schema, meta);
  ds.labels = map_labels(table.label_values, meta.label_classes);
  ds.meta = std::move(meta);
  ds.split_tag = SplitTag::train;
  ds.rows_dropped = table.rows_dropped;
  return ds;
}

Dataset load_csv_eval(const std::string& path, const CsvSchema& schema, const FeatureMeta& meta) {
  RawTable table = read_rows(path, schema);
  if (table.feature_rows.empty()) throw DataError("no usable rows in " + path);
  Dataset ds;
  ds.features = apply_feature_meta(table.feature_rows, schema, meta);
  ds.labels = map_labels(table.label_values, meta.label_classes);
  ds.meta = meta;
  ds.split_tag = SplitTag::test;
  ds.rows_dropped = table.rows_dropped;
  return ds;
}

std::pair<Dataset, Dataset> make_synthetic_clusters(std::int64_t n, std::int64_t d_signal,
                                                    std::int64_t d_noise, int classes, double sep,
                                                    std::uint64_t seed) {
  if (classes < 2) throw DataError("make_synthetic_clusters: need at least 2 classes");
  if (n < 10 * classes) {
    throw DataError("make_synthetic_clusters: need n >= 10 * classes");
  }
  if (sep < 0.0) throw DataError("make_synthetic_clusters: sep must be >= 0");

  const std::int64_t d = d_signal + d_noise;
  CounterRng rng = CounterRng::from_seed(seed, "synthetic_clusters");

  // Class means: sep-scaled one-hot simplex corners when they fit in the
  // signal subspace, otherwise seeded random unit directions.
  std::vector<std::vector<float>> means(static_cast<std::size_t>(classes),
                                        std::vector<float>(static_cast<std::size_t>(d_signal), 0.0f));
  CounterRng mean_rng = rng.derive("means");
  for (int c = 0; c < classes; ++c) {
    if (c < d_signal) {
      means[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)] = static_cast<float>(sep);
    } else {
      double norm2 = 0.0;
      std::vector<double> dir(static_cast<std::size_t>(d_signal));
      for (auto& v : dir) {
        v = mean_rng.normal();
        norm2 += v * v;
      }
      const double norm = std::max(std::sqrt(norm2), 1e-12);
      for (std::int64_t j = 0; j < d_signal; ++j)
        means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] =
            static_cast<float>(sep * dir[static_cast<std::size_t>(j)] / norm);
    }
  }

  std::vector<float> feats(static_cast<std::size_t>(n) * static_cast<std::size_t>(d));
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  CounterRng noise_rng = rng.derive("noise");
  for (std::int64_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    labels[static_cast<std::size_t>(i)] = c;
    float* row = feats.data() + i * d;
    for (std::int64_t j = 0; j < d_signal; ++j)
      row[j] = means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] + noise_rng.normal();
    for (std::int64_t j = d_signal; j < d; ++j) row[j] = noise_rng.normal();
  }

  auto perm = rng.derive("split").permutation(n);
  const std::int64_t n_train = (n * 3) / 4;

  FeatureMeta meta;
  meta.feature_dim = d;
  meta.columns.resize(static_cast<std::size_t>(d));
  for (std::int64_t j = 0; j < d; ++j) {
    meta.columns[static_cast<std::size_t>(j)].name = "f" + std::to_string(j);
    meta.columns[static_cast<std::size_t>(j)].kind = ColumnKind::numeric;
    // identity transform; synthetic features are already unit scale
  }
  for (int c = 0; c < classes; ++c) meta.label_classes.push_back("c" + std::to_string(c));

  auto build = [&](std::int64_t begin, std::int64_t end, SplitTag tag) {
    Dataset ds;
    const std::int64_t rows = end - begin;
    std::vector<float> f(static_cast<std::size_t>(rows) * static_cast<std::size_t>(d));
    ds.labels.resize(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
      const auto src = perm[static_cast<std::size_t>(begin + r)];
      std::copy_n(feats.data() + src * d, d, f.data() + r * d);
      ds.labels[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(src)];
    }
    ds.features = Tensor::from_data({rows, d}, std::move(f));
    ds.meta = meta;
    ds.split_tag = tag;
    return ds;
  };

  return {build(0, n_train, SplitTag::train), build(n_train, n, SplitTag::test)};
}

BatchIterator::BatchIterator(const Dataset& ds, std::int64_t batch_size,
                             std::vector<std::int64_t> permutation)
    : ds_(&ds), permutation_(std::move(permutation)) {
  const auto n = static_cast<std::int64_t>(permutation_.size());
  if (batch_size < 2) throw ContractError("batch_size must be >= 2");
  if (batch_size > n) {
    throw ContractError("batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                        std::to_string(n));
  }
  std::int64_t begin = 0;
  while (begin < n) {
    std::int64_t end = std::min(begin + batch_size, n);
    const std::int64_t tail = n - end;
    // A short final tail folds into this batch instead of being emitted.
    if (tail > 0 && (tail < 2 || tail * 2 <= batch_size)) end = n;
    boundaries_.emplace_back(begin, end);
    begin = end;
  }
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= boundaries_.size()) return std::nullopt;
  const auto [begin, end] = boundaries_[cursor_++];
  Batch b;
  b.indices.assign(permutation_.begin() + begin, permutation_.begin() + end);
  b.features = take_rows(ds_->features, b.indices);
  b.labels.reserve(b.indices.size());
  for (auto i : b.indices) b.labels.push_back(ds_->labels[static_cast<std::size_t>(i)]);
  return b;
}

BatchIterator batches(const Dataset& ds, std::int64_t batch_size, std::uint64_t seed,
                      std::uint64_t epoch) {
  CounterRng rng = CounterRng::from_seed(seed, "batch_shuffle").derive(epoch);
  return BatchIterator(ds, batch_size, rng.permutation(ds.size()));
}

}  // namespace lfr
