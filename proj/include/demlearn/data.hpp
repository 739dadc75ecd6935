#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "demlearn/model.hpp"

namespace demlearn {

/// Labelled samples; features are pixels scaled to [0, 1].
struct Dataset {
  RowMatrix features;
  std::vector<int> labels;
  int num_classes = 0;

  [[nodiscard]] Index size() const { return features.rows(); }
  [[nodiscard]] int input_dim() const { return static_cast<int>(features.cols()); }
  [[nodiscard]] Batch batch() const { return Batch(features, labels); }
  [[nodiscard]] Dataset subset(std::span<const int> indices) const;

  void validate() const;
};

/// Row-wise concatenation; all parts must agree on width and num_classes.
Dataset concat(std::span<const Dataset* const> parts);

struct ClientShard {
  int client_id = 0;
  Dataset train;
  Dataset test;
  std::vector<int> label_set;      // sorted
  std::vector<int> train_indices;  // indices into the source dataset
  std::vector<int> test_indices;
};

/// Reads an IDX image/label pair (big-endian headers, unsigned-byte payload).
/// Files ending in ".gz" are decompressed transparently.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, int num_classes = 10);

/// Writes `ds` as IDX files. Features are multiplied by 255 and rounded, so a
/// dataset loaded from IDX round-trips exactly. `rows * cols` must equal the
/// feature width.
void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, int rows, int cols);

struct PartitionOptions {
  int n_clients = 50;
  int labels_per_client = 2;
  int samples_per_client = 80;
  double test_frac = 0.2;
  std::uint64_t seed = 1;
};

/// Non-iid label-shard partition. Each label's samples are shuffled and cut
/// into shards of samples_per_client / labels_per_client; every client is dealt
/// labels_per_client shards with distinct labels, label demand spread evenly
/// over classes. Leftover samples are discarded. The per-client test split is
/// stratified by label.
std::vector<ClientShard> partition_shards(const Dataset& ds, const PartitionOptions& opts);

/// Gaussian blobs squashed into [0, 1] through a logistic map. Class means sit
/// on scaled one-hot directions (a simplex) when input_dim >= num_classes and
/// on seeded random unit directions otherwise.
Dataset synthetic_dataset(int num_classes, int input_dim, int samples_per_class,
                          double class_separation, std::uint64_t seed);

}  // namespace demlearn
