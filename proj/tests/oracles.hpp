#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "demlearn/clustering.hpp"
#include "demlearn/data.hpp"
#include "demlearn/model.hpp"

namespace oracle {

using demlearn::ParamVector;

inline ParamVector central_difference(const std::function<double(const ParamVector&)>& f,
                                      const ParamVector& w, double h = 1e-5) {
  ParamVector g(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    ParamVector up = w, down = w;
    up[i] += h;
    down[i] -= h;
    g[i] = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const ParamVector& a, const ParamVector& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

// Softmax cross-entropy of a logistic model written with plain loops over the
// documented [W classes x input][b classes] layout.
inline double logistic_loss_loops(const ParamVector& w, int in, int classes,
                                  const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    std::vector<double> z(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
      double v = w[classes * in + c];
      for (int j = 0; j < in; ++j) v += w[c * in + j] * x[s][static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(c)] = v;
    }
    double denom = 0.0;
    for (double v : z) denom += std::exp(v);
    total += -std::log(std::exp(z[static_cast<std::size_t>(y[s])]) / denom);
  }
  return total / static_cast<double>(x.size());
}

inline double euclid_loops(const ParamVector& a, const ParamVector& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double cosine_loops(const ParamVector& a, const ParamVector& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

inline ParamVector weighted_mean_loops(const std::vector<ParamVector>& models, const std::vector<int>& counts) {
  double total = 0.0;
  for (int c : counts) total += c;
  ParamVector out = ParamVector::Zero(models.front().size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < models.size(); ++j) s += counts[j] * models[j][i];
    out[i] = s / total;
  }
  return out;
}

struct BruteMerge {
  int left;
  int right;
  double height;
  std::vector<int> members;
};

// Average linkage by recomputing every cluster pair from the raw leaf
// distances at each step. Same id scheme and tie rule as the library:
// leaves 0..n-1, k-th merge gets n+k, ties go to the smallest (min_id, max_id).
inline std::vector<BruteMerge> brute_upgma(const demlearn::RowMatrix& d) {
  const int n = static_cast<int>(d.rows());
  struct Cluster {
    int id;
    std::vector<int> members;
  };
  std::vector<Cluster> live;
  for (int i = 0; i < n; ++i) live.push_back({i, {i}});
  std::vector<BruteMerge> merges;
  int next = n;
  while (live.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> best_key{0, 0};
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (std::size_t j = i + 1; j < live.size(); ++j) {
        double s = 0.0;
        for (int a : live[i].members)
          for (int b : live[j].members) s += d(a, b);
        const double avg = s / static_cast<double>(live[i].members.size() * live[j].members.size());
        const std::pair<int, int> key{std::min(live[i].id, live[j].id), std::max(live[i].id, live[j].id)};
        if (avg < best || (avg == best && key < best_key)) {
          best = avg;
          best_key = key;
          bi = i;
          bj = j;
        }
      }
    }
    Cluster merged{next++, live[bi].members};
    merged.members.insert(merged.members.end(), live[bj].members.begin(), live[bj].members.end());
    std::sort(merged.members.begin(), merged.members.end());
    merges.push_back({best_key.first, best_key.second, best, merged.members});
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(bj));
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(bi));
    live.push_back(std::move(merged));
  }
  return merges;
}

inline demlearn::RowMatrix random_distances(int n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.1, 10.0);
  demlearn::RowMatrix d = demlearn::RowMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = u(gen);
  return d;
}

inline ParamVector random_vector(Eigen::Index m, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  ParamVector v(m);
  for (Eigen::Index i = 0; i < m; ++i) v[i] = nd(gen);
  return v;
}

inline demlearn::Dataset random_dataset(int n, int dim, int classes, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, classes - 1);
  demlearn::Dataset ds;
  ds.features.resize(n, dim);
  ds.num_classes = classes;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) ds.features(i, j) = u(gen);
    ds.labels.push_back(lab(gen));
  }
  return ds;
}

}  // namespace oracle
