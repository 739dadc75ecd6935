#include "demlearn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include <zlib.h>

#include "demlearn/errors.hpp"

namespace demlearn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

bool is_gzip_path(const std::filesystem::path& p) { return p.extension() == ".gz"; }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  gzFile fh = gzopen(path.string().c_str(), "rb");
  if (fh == nullptr) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  int got = 0;
  while ((got = gzread(fh, buf, sizeof(buf))) > 0) bytes.insert(bytes.end(), buf, buf + got);
  const bool failed = got < 0;
  gzclose(fh);
  if (failed) throw TruncatedFileError(path.string() + ": corrupt or truncated gzip stream");
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (is_gzip_path(path)) {
    gzFile fh = gzopen(path.string().c_str(), "wb");
    if (fh == nullptr) throw FormatError("cannot create " + path.string());
    const int wrote = gzwrite(fh, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(fh);
    if (wrote != static_cast<int>(bytes.size())) throw FormatError("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at,
                        const std::filesystem::path& path) {
  if (b.size() < at + 4) throw TruncatedFileError(path.string() + ": header truncated");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

// Number of test samples per label group, largest-remainder rounding of
// test_frac * size, ties to the earlier group.
std::vector<int> stratified_test_counts(const std::vector<int>& group_sizes, double test_frac) {
  const int total = std::accumulate(group_sizes.begin(), group_sizes.end(), 0);
  int target = static_cast<int>(std::lround(test_frac * total));
  if (total >= 2) target = std::clamp(target, 1, total - 1);
  else target = 0;

  const std::size_t groups = group_sizes.size();
  std::vector<int> counts(groups);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const double exact = test_frac * group_sizes[g];
    counts[g] = static_cast<int>(std::floor(exact));
    assigned += counts[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  // target < total, so a group with room always exists.
  for (std::size_t i = 0; assigned < target; ++i) {
    const std::size_t g = remainders[i % groups].second;
    if (counts[g] < group_sizes[g]) {
      ++counts[g];
      ++assigned;
    }
  }
  for (std::size_t i = 0; assigned > target; ++i) {
    const std::size_t g = remainders[groups - 1 - i % groups].second;
    if (counts[g] > 0) {
      --counts[g];
      --assigned;
    }
  }
  return counts;
}

bool has_duplicate_label(std::span<const int> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j]) return true;
    }
  }
  return false;
}

// Slot positions [c*per, (c+1)*per) belong to client c. Swaps slots across
// clients until no client holds a label twice. Returns false if stuck.
bool repair_duplicates(std::vector<int>& slots, int n_clients, int per) {
  auto client_labels = [&](int c) {
    return std::span<const int>(slots).subspan(static_cast<std::size_t>(c * per),
                                               static_cast<std::size_t>(per));
  };
  auto holds = [&](int c, int label, int skip_pos) {
    for (int p = c * per; p < (c + 1) * per; ++p) {
      if (p != skip_pos && slots[static_cast<std::size_t>(p)] == label) return true;
    }
    return false;
  };
  for (int c = 0; c < n_clients; ++c) {
    for (int pos = c * per; pos < (c + 1) * per; ++pos) {
      const int label = slots[static_cast<std::size_t>(pos)];
      if (!holds(c, label, pos)) continue;
      bool fixed = false;
      for (int d = 0; d < n_clients && !fixed; ++d) {
        if (d == c) continue;
        for (int q = d * per; q < (d + 1) * per && !fixed; ++q) {
          const int other = slots[static_cast<std::size_t>(q)];
          if (holds(c, other, pos) || holds(d, label, q)) continue;
          std::swap(slots[static_cast<std::size_t>(pos)], slots[static_cast<std::size_t>(q)]);
          fixed = true;
        }
      }
      if (!fixed) return false;
    }
  }
  for (int c = 0; c < n_clients; ++c) {
    if (has_duplicate_label(client_labels(c))) return false;
  }
  return true;
}

}  // namespace

Dataset Dataset::subset(std::span<const int> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Index>(r)) = features.row(indices[r]);
    out.labels.push_back(labels[static_cast<std::size_t>(indices[r])]);
  }
  return out;
}

void Dataset::validate() const {
  if (size() < 1) throw ArgumentError("dataset is empty");
  if (static_cast<Index>(labels.size()) != size()) {
    throw DimensionError("dataset label count does not match feature rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ArgumentError("dataset label out of range");
  }
  if (!features.allFinite() || features.minCoeff() < 0.0 || features.maxCoeff() > 1.0) {
    throw ArgumentError("dataset features must be finite and within [0, 1]");
  }
}

Dataset concat(std::span<const Dataset* const> parts) {
  Dataset out;
  Index rows = 0;
  Index cols = -1;
  for (const Dataset* p : parts) {
    if (cols >= 0 && p->features.cols() != cols) throw DimensionError("concat: width mismatch");
    if (out.num_classes != 0 && p->num_classes != out.num_classes) {
      throw DimensionError("concat: num_classes mismatch");
    }
    cols = p->features.cols();
    out.num_classes = p->num_classes;
    rows += p->size();
  }
  out.features.resize(rows, std::max<Index>(cols, 0));
  out.labels.reserve(static_cast<std::size_t>(rows));
  Index at = 0;
  for (const Dataset* p : parts) {
    out.features.middleRows(at, p->size()) = p->features;
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    at += p->size();
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, int num_classes) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != kImageMagic) {
    throw MagicMismatchError(images_path.string() + ": image magic " + hex(img_magic) +
                             ", expected " + hex(kImageMagic));
  }
  const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != kLabelMagic) {
    throw MagicMismatchError(labels_path.string() + ": label magic " + hex(lab_magic) +
                             ", expected " + hex(kLabelMagic));
  }
  const std::uint32_t n = read_be32(img, 4, images_path);
  const std::uint32_t rows = read_be32(img, 8, images_path);
  const std::uint32_t cols = read_be32(img, 12, images_path);
  const std::uint32_t n_labels = read_be32(lab, 4, labels_path);
  if (n != n_labels) {
    throw CountMismatchError("image file holds " + std::to_string(n) + " samples, label file " +
                             std::to_string(n_labels));
  }
  const std::size_t dim = std::size_t{rows} * cols;
  if (img.size() < 16 + std::size_t{n} * dim) {
    throw TruncatedFileError(images_path.string() + ": payload shorter than header count");
  }
  if (lab.size() < 8 + std::size_t{n}) {
    throw TruncatedFileError(labels_path.string() + ": payload shorter than header count");
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.features.resize(n, static_cast<Index>(dim));
  ds.labels.resize(n);
  const std::uint8_t* pix = img.data() + 16;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features(static_cast<Index>(i), static_cast<Index>(j)) = pix[i * dim + j] / 255.0;
    }
    const int y = lab[8 + i];
    if (y >= num_classes) {
      throw FormatError(labels_path.string() + ": label " + std::to_string(y) + " at index " +
                        std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ds.labels[i] = y;
  }
  return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path, int rows, int cols) {
  if (static_cast<Index>(rows) * cols != ds.features.cols()) {
    throw DimensionError("rows * cols must equal the feature width");
  }
  std::vector<std::uint8_t> img;
  img.reserve(16 + static_cast<std::size_t>(ds.features.size()));
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.features.cols(); ++j) {
      const double v = std::clamp(ds.features(i, j), 0.0, 1.0);
      img.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  std::vector<std::uint8_t> lab;
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(ds.labels.size()));
  for (int y : ds.labels) lab.push_back(static_cast<std::uint8_t>(y));
  write_file(images_path, img);
  write_file(labels_path, lab);
}

std::vector<ClientShard> partition_shards(const Dataset& ds, const PartitionOptions& opts) {
  const int C = ds.num_classes;
  if (opts.n_clients < 1) throw ConfigError("data.clients must be >= 1");
  if (opts.labels_per_client < 1 || opts.labels_per_client > C) {
    throw ConfigError("data.labels_per_client must lie in [1, " + std::to_string(C) + "]");
  }
  if (!(opts.test_frac > 0.0 && opts.test_frac < 1.0)) {
    throw ConfigError("data.test_frac must lie in (0, 1)");
  }
  if (opts.samples_per_client < opts.labels_per_client) {
    throw ConfigError("data.samples_per_client must be >= labels_per_client");
  }
  if (static_cast<Index>(ds.labels.size()) != ds.size()) {
    throw DimensionError("dataset label count does not match feature rows");
  }

  const int n = opts.n_clients;
  const int per = opts.labels_per_client;
  const int shard_size = std::max(
      1, static_cast<int>(std::lround(static_cast<double>(opts.samples_per_client) / per)));

  Rng rng(mix_seed(opts.seed, 0x5eed));
  std::vector<std::vector<int>> by_label(static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    by_label[static_cast<std::size_t>(ds.labels[i])].push_back(static_cast<int>(i));
  }
  for (auto& idx : by_label) shuffle(std::span<int>(idx), rng);

  std::vector<int> label_order(static_cast<std::size_t>(C));
  std::iota(label_order.begin(), label_order.end(), 0);
  shuffle(std::span<int>(label_order), rng);

  // Water-fill label demand: each slot goes to the least-used label that still
  // has shards left, capped at one shard per client per label.
  const int slots_needed = n * per;
  std::vector<int> quota(static_cast<std::size_t>(C), 0);
  auto available = [&](int label) {
    return std::min(static_cast<int>(by_label[static_cast<std::size_t>(label)].size()) / shard_size, n);
  };
  for (int s = 0; s < slots_needed; ++s) {
    int best = -1;
    for (int label : label_order) {
      const auto l = static_cast<std::size_t>(label);
      if (quota[l] >= available(label)) continue;
      if (best < 0 || quota[l] < quota[static_cast<std::size_t>(best)]) best = label;
    }
    if (best < 0) {
      int have = 0;
      for (int label = 0; label < C; ++label) have += available(label);
      throw ConfigError("partition needs " + std::to_string(slots_needed) + " label shards of " +
                        std::to_string(shard_size) + " samples with distinct labels per client, "
                        "dataset supports " + std::to_string(have) + " (shortfall " +
                        std::to_string(slots_needed - have) + ")");
    }
    ++quota[static_cast<std::size_t>(best)];
  }

  std::vector<int> slots;
  slots.reserve(static_cast<std::size_t>(slots_needed));
  for (int label : label_order) {
    slots.insert(slots.end(), static_cast<std::size_t>(quota[static_cast<std::size_t>(label)]), label);
  }
  std::vector<int> grouped = slots;
  shuffle(std::span<int>(slots), rng);
  if (!repair_duplicates(slots, n, per)) {
    // Strided dealing from the label-grouped list: a label's run is at most
    // n long, so positions c, c+n, ... never repeat a label.
    for (int c = 0; c < n; ++c) {
      for (int j = 0; j < per; ++j) {
        slots[static_cast<std::size_t>(c * per + j)] = grouped[static_cast<std::size_t>(c + j * n)];
      }
    }
  }

  std::vector<int> next_shard(static_cast<std::size_t>(C), 0);
  std::vector<ClientShard> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    std::vector<int> labels(slots.begin() + c * per, slots.begin() + (c + 1) * per);
    std::sort(labels.begin(), labels.end());

    std::vector<std::vector<int>> groups;
    std::vector<int> sizes;
    for (int label : labels) {
      const auto l = static_cast<std::size_t>(label);
      const int k = next_shard[l]++;
      const auto& pool = by_label[l];
      groups.emplace_back(pool.begin() + k * shard_size, pool.begin() + (k + 1) * shard_size);
      sizes.push_back(shard_size);
    }
    const auto test_counts = stratified_test_counts(sizes, opts.test_frac);

    ClientShard shard;
    shard.client_id = c;
    shard.label_set = labels;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto t = static_cast<std::size_t>(test_counts[g]);
      shard.test_indices.insert(shard.test_indices.end(), groups[g].begin(), groups[g].begin() + t);
      shard.train_indices.insert(shard.train_indices.end(), groups[g].begin() + t, groups[g].end());
    }
    shard.train = ds.subset(shard.train_indices);
    shard.test = ds.subset(shard.test_indices);
    out.push_back(std::move(shard));
  }
  return out;
}

Dataset synthetic_dataset(int num_classes, int input_dim, int samples_per_class,
                          double class_separation, std::uint64_t seed) {
  if (num_classes < 2) throw ArgumentError("synthetic: num_classes must be >= 2");
  if (input_dim < 1) throw ArgumentError("synthetic: input_dim must be positive");
  if (samples_per_class < 1) throw ArgumentError("synthetic: samples_per_class must be positive");
  if (!(class_separation > 0.0)) throw ArgumentError("synthetic: class_separation must be > 0");

  Rng rng(seed);
  RowMatrix means = RowMatrix::Zero(num_classes, input_dim);
  if (input_dim >= num_classes) {
    for (int c = 0; c < num_classes; ++c) means(c, c) = class_separation;
  } else {
    for (int c = 0; c < num_classes; ++c) {
      for (int j = 0; j < input_dim; ++j) means(c, j) = normal(rng, 0.0, 1.0);
      means.row(c) *= class_separation / means.row(c).norm();
    }
  }

  Dataset ds;
  ds.num_classes = num_classes;
  const Index total = static_cast<Index>(num_classes) * samples_per_class;
  ds.features.resize(total, input_dim);
  ds.labels.resize(static_cast<std::size_t>(total));
  for (Index i = 0; i < total; ++i) {
    const int c = static_cast<int>(i % num_classes);
    ds.labels[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < input_dim; ++j) {
      const double x = means(c, j) + normal(rng, 0.0, 1.0);
      ds.features(i, j) = 1.0 / (1.0 + std::exp(-x));
    }
  }
  return ds;
}

}  // namespace demlearn
