#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lfr/tensor.hpp"

namespace lfr {

enum class ColumnKind { numeric, categorical };

struct ColumnMeta {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // numeric: train-split statistics used for z-scoring (std guarded to 1
  // for constant columns).
  double mean = 0.0;
  double std_dev = 1.0;
  // categorical: category -> one-hot slot, in sorted train-split order.
  std::vector<std::string> categories;
};

/// Preprocessing state fitted on the train split and applied verbatim to any
/// other split; persisted as JSON next to checkpoints.
struct FeatureMeta {
  std::vector<ColumnMeta> columns;
  std::vector<std::string> label_classes;
  std::int64_t feature_dim = 0;
};

enum class SplitTag { train, test };

struct Dataset {
  Tensor features;               // [n x d] float32
  std::vector<std::int32_t> labels;  // in [0, classes)
  FeatureMeta meta;
  SplitTag split_tag = SplitTag::train;
  std::int64_t rows_dropped = 0;  // rows removed for missing values

  std::int64_t size() const { return features.defined() ? features.dim(0) : 0; }
  std::int64_t dim() const { return features.defined() ? features.dim(1) : 0; }
  std::int64_t classes() const { return static_cast<std::int64_t>(meta.label_classes.size()); }
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
};

/// Declares the file layout: every column is numeric, categorical, or the
/// label. Lines that are empty or start with '|' are skipped; a field equal
/// to "?" or "" counts as missing and drops the row. Label values are
/// trimmed and a single trailing '.' is stripped (the classic census test
/// file quirk).
struct CsvSchema {
  bool has_header = false;
  std::vector<ColumnSpec> columns;
  std::string label_column;
  /// Optional pinned class order; otherwise sorted train-split uniques.
  std::vector<std::string> label_classes;

  static CsvSchema load(const std::string& path);
};

/// Load and preprocess the training split: fit one-hot maps and z-score
/// statistics on this data.
Dataset load_csv_train(const std::string& path, const CsvSchema& schema);

/// Load an evaluation split using already-fitted metadata. Unseen categories
/// map to an all-zero one-hot block.
Dataset load_csv_eval(const std::string& path, const CsvSchema& schema, const FeatureMeta& meta);

/// Apply fitted preprocessing to raw string rows; exposed for the
/// round-trip determinism checks.
Tensor apply_feature_meta(const std::vector<std::vector<std::string>>& rows,
                          const CsvSchema& schema, const FeatureMeta& meta);

/// Gaussian class clusters at sep-scaled simplex corners inside the first
/// d_signal dimensions, plus d_noise pure-noise dimensions; 75/25 split.
std::pair<Dataset, Dataset> make_synthetic_clusters(std::int64_t n, std::int64_t d_signal,
                                                    std::int64_t d_noise, int classes, double sep,
                                                    std::uint64_t seed);

struct Batch {
  Tensor features;
  std::vector<std::int32_t> labels;
  std::vector<std::int64_t> indices;
};

/// Seeded epoch iterator. Every index appears exactly once per epoch; a
/// short tail merges into the previous batch when it is smaller than 2 or
/// no larger than half the batch size, so no batch ever has fewer than
/// 2 rows.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::int64_t batch_size, std::vector<std::int64_t> permutation);

  std::optional<Batch> next();
  std::int64_t batch_count() const { return static_cast<std::int64_t>(boundaries_.size()); }
  void reset() { cursor_ = 0; }

 private:
  const Dataset* ds_;
  std::vector<std::int64_t> permutation_;
  std::vector<std::pair<std::int64_t, std::int64_t>> boundaries_;  // [begin, end)
  std::size_t cursor_ = 0;
};

/// Epoch iterator with the permutation derived from (seed, epoch).
BatchIterator batches(const Dataset& ds, std::int64_t batch_size, std::uint64_t seed,
                      std::uint64_t epoch);

}  // namespace lfr
