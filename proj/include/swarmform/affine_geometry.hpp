#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "swarmform/core.hpp"

namespace swarmform {

/// Ordered list of n points in R^d, stored as a d x n matrix (points are
/// columns). Coordinates are meters. Immutable value type.
class Configuration {
 public:
  Configuration() = default;

  explicit Configuration(Mat points) : pts_(std::move(points)) {
    if (!pts_.allFinite()) throw Error("configuration has non-finite coordinates");
  }

  static Configuration from_points(const std::vector<Vec>& pts) {
    if (pts.empty()) return Configuration(Mat(0, 0));
    Mat m(pts.front().size(), pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].size() != m.rows()) {
        throw DimensionMismatchError("point " + std::to_string(i) + " has wrong dimension");
      }
      m.col(static_cast<int>(i)) = pts[i];
    }
    return Configuration(std::move(m));
  }

  int dimension() const { return static_cast<int>(pts_.rows()); }
  int count() const { return static_cast<int>(pts_.cols()); }

  Vec point(int i) const {
    if (i < 0 || i >= count()) {
      throw IndexOutOfRangeError("point index " + std::to_string(i) + " out of range");
    }
    return pts_.col(i);
  }

  const Mat& points() const { return pts_; }

  Vec centroid() const {
    if (count() == 0) throw Error("centroid of empty configuration");
    return pts_.rowwise().mean();
  }

  /// Sub-configuration with the given point indices, in the given order.
  Configuration select(const std::vector<int>& ids) const {
    Mat m(dimension(), ids.size());
    for (size_t k = 0; k < ids.size(); ++k) m.col(static_cast<int>(k)) = point(ids[k]);
    return Configuration(std::move(m));
  }

  /// Relabeled configuration q with q_k = p_{slot_to_index[k]}.
  Configuration permuted(const std::vector<int>& slot_to_index) const {
    if (static_cast<int>(slot_to_index.size()) != count()) {
      throw DimensionMismatchError("permutation size does not match point count");
    }
    return select(slot_to_index);
  }

 private:
  Mat pts_;
};

/// x -> A x + b on R^d.
struct AffineTransform {
  Mat A;
  Vec b;

  static AffineTransform identity(int d) {
    return {Mat::Identity(d, d), Vec::Zero(d)};
  }

  Vec apply(const Vec& p) const { return A * p + b; }

  /// this ∘ inner, i.e. apply `inner` first.
  AffineTransform compose(const AffineTransform& inner) const {
    return {A * inner.A, A * inner.b + b};
  }

  double det() const { return A.determinant(); }
};

/// A role reallocation: `permutation[k]` is the agent occupying slot k, and
/// slots 0..n_l-1 are the leader slots, so `leaders` is the prefix of
/// `permutation`. The relabeled configuration q_k = r_{permutation[k]} of a
/// viable assignment is an affine image of the base configuration r.
struct RoleAssignment {
  std::vector<int> leaders;
  std::vector<int> permutation;
};

/// True when the points affinely span R^d, i.e. rank([p^T | 1]) = d+1,
/// decided by SVD with relative tolerance Tol::rank_rel.
inline bool affinely_spans(const Configuration& c) {
  const int n = c.count();
  const int d = c.dimension();
  if (n < d + 1) return false;
  Mat h(n, d + 1);
  h.leftCols(d) = c.points().transpose();
  h.col(d).setOnes();
  Eigen::JacobiSVD<Mat> svd(h);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0.0) return false;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) >= Tol::rank_rel * sv(0)) ++rank;
  }
  return rank == d + 1;
}

inline Configuration apply_affine(const Configuration& c, const AffineTransform& t) {
  if (t.A.rows() != c.dimension() || t.A.cols() != c.dimension() ||
      t.b.size() != c.dimension()) {
    throw DimensionMismatchError("transform dimension does not match configuration");
  }
  return Configuration((t.A * c.points()).colwise() + t.b);
}

struct AffineFit {
  AffineTransform transform;
  double residual_rms_m = 0.0;
};

/// Least-squares fit of dst_i ≈ A src_i + b over all point pairs, solved via
/// the normal equations of the homogeneous system with a column-pivoting QR
/// fallback when the normal equations lose accuracy. The minimizer is unique
/// exactly when src affinely spans; otherwise DegenerateSourceError.
inline AffineFit fit_affine(const Configuration& src, const Configuration& dst) {
  const int n = src.count();
  const int d = src.dimension();
  if (dst.count() != n || dst.dimension() != d) {
    throw DimensionMismatchError("source and destination configurations differ in shape");
  }
  if (!affinely_spans(src)) {
    throw DegenerateSourceError("source configuration does not affinely span R^d");
  }

  Mat x(n, d + 1);
  x.leftCols(d) = src.points().transpose();
  x.col(d).setOnes();
  Mat rhs = dst.points().transpose();  // n x d

  Mat gram = x.transpose() * x;
  Mat xtb = x.transpose() * rhs;
  Mat y = gram.ldlt().solve(xtb);
  double check = (gram * y - xtb).norm();
  if (!y.allFinite() || check > 1e-8 * (1.0 + xtb.norm())) {
    y = x.colPivHouseholderQr().solve(rhs);
  }

  AffineFit fit;
  fit.transform.A = y.topRows(d).transpose();
  fit.transform.b = y.row(d).transpose();
  fit.residual_rms_m = std::sqrt((x * y - rhs).squaredNorm() / static_cast<double>(n));
  return fit;
}

/// Membership in the affine image family of `ref`: the best-fit transform
/// reproduces `query` within tol_m (RMS, meters) and is invertible.
inline bool in_affine_image(const Configuration& query, const Configuration& ref,
                            double tol_m = Tol::membership_m) {
  AffineFit fit = fit_affine(ref, query);
  return fit.residual_rms_m <= tol_m && std::abs(fit.transform.det()) > Tol::det_min;
}

namespace detail {

inline std::string transform_key(const AffineTransform& t) {
  auto q = [](double v) {
    double r = std::round(v * 1e9);
    if (r == 0.0) r = 0.0;  // collapse -0
    return static_cast<long long>(r);
  };
  std::string key;
  for (int i = 0; i < t.A.rows(); ++i) {
    for (int j = 0; j < t.A.cols(); ++j) key += std::to_string(q(t.A(i, j))) + ",";
  }
  for (int i = 0; i < t.b.size(); ++i) key += std::to_string(q(t.b(i))) + ";";
  return key;
}

/// Backtracking enumeration of follower-slot matchings. `candidates[k]` lists
/// the follower ids that can occupy follower slot k; emits every complete
/// injective assignment in lexicographic order.
template <typename Fn>
inline void for_each_matching(const std::vector<std::vector<int>>& candidates,
                              std::vector<int>& chosen, std::set<int>& used, size_t k,
                              Fn&& emit) {
  if (k == candidates.size()) {
    emit(chosen);
    return;
  }
  for (int id : candidates[k]) {
    if (used.count(id)) continue;
    used.insert(id);
    chosen.push_back(id);
    for_each_matching(candidates, chosen, used, k + 1, emit);
    chosen.pop_back();
    used.erase(id);
  }
}

/// Viable assignments whose leader set is exactly `leader_set` (sorted ids).
/// Shared by the full enumeration and by targeted reorganization checks.
/// When `stop_after_first` is set, returns at most one assignment (the
/// lexicographically first by leader ordering, then by permutation).
inline std::vector<RoleAssignment> viable_assignments_for_leader_set(
    const Configuration& nominal, const std::vector<int>& leader_set, double tol_m,
    bool stop_after_first) {
  const int n = nominal.count();
  const int n_l = static_cast<int>(leader_set.size());
  std::vector<RoleAssignment> out;

  if (!affinely_spans(nominal.select(leader_set))) return out;

  // Invertible transforms preserve spans, so slot positions of the leader
  // slots must span for any viable assignment to exist.
  std::vector<int> leader_slots(n_l);
  for (int k = 0; k < n_l; ++k) leader_slots[k] = k;
  if (!affinely_spans(nominal.select(leader_slots))) return out;

  std::vector<int> follower_ids;
  for (int i = 0; i < n; ++i) {
    if (!std::binary_search(leader_set.begin(), leader_set.end(), i)) {
      follower_ids.push_back(i);
    }
  }

  const double loose = tol_m * std::sqrt(static_cast<double>(n));
  std::vector<int> ordering = leader_set;
  do {
    AffineFit head = fit_affine(nominal.select(leader_slots), nominal.select(ordering));
    if (head.residual_rms_m > loose) continue;
    Mat images = (head.transform.A * nominal.points()).colwise() + head.transform.b;

    std::vector<std::vector<int>> candidates(n - n_l);
    bool feasible = true;
    for (int k = n_l; k < n && feasible; ++k) {
      for (int id : follower_ids) {
        if ((images.col(k) - nominal.point(id)).norm() <= loose) {
          candidates[k - n_l].push_back(id);
        }
      }
      feasible = !candidates[k - n_l].empty();
    }
    if (!feasible) continue;

    std::vector<int> chosen;
    std::set<int> used;
    for_each_matching(candidates, chosen, used, 0, [&](const std::vector<int>& tail) {
      if (stop_after_first && !out.empty()) return;
      std::vector<int> perm = ordering;
      perm.insert(perm.end(), tail.begin(), tail.end());
      Configuration q = nominal.permuted(perm);
      AffineFit full = fit_affine(nominal, q);
      if (full.residual_rms_m <= tol_m && std::abs(full.transform.det()) > Tol::det_min) {
        out.push_back(RoleAssignment{ordering, perm});
      }
    });
    if (stop_after_first && !out.empty()) return out;
  } while (std::next_permutation(ordering.begin(), ordering.end()));

  return out;
}

}  // namespace detail

/// All viable role reallocations for the given nominal configuration and
/// leader count: the leader positions affinely span R^d and the relabeled
/// configuration is an affine image of the nominal within tol_m. Assignments
/// that induce the same leader set and the same fitted transform are reported
/// once. Output is sorted by leader list, then permutation. Full enumeration
/// is factorial in spirit; capped at n <= 10 (UnsupportedSizeError beyond).
inline std::vector<RoleAssignment> enumerate_viable_assignments(
    const Configuration& nominal, int leader_count, double tol_m = Tol::membership_m) {
  const int n = nominal.count();
  const int d = nominal.dimension();
  if (n > 10) {
    throw UnsupportedSizeError("viable-assignment enumeration is capped at n = 10");
  }
  if (leader_count < 1 || leader_count > n) {
    throw IndexOutOfRangeError("leader count " + std::to_string(leader_count) +
                               " out of range");
  }
  (void)d;

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;

  std::vector<RoleAssignment> out;
  std::set<std::string> seen;
  detail::for_each_combination(all, leader_count, [&](const std::vector<int>& leader_set) {
    auto found =
        detail::viable_assignments_for_leader_set(nominal, leader_set, tol_m, false);
    for (auto& a : found) {
      Configuration q = nominal.permuted(a.permutation);
      AffineFit fit = fit_affine(nominal, q);
      std::vector<int> sorted_leaders = a.leaders;
      std::sort(sorted_leaders.begin(), sorted_leaders.end());
      std::string key;
      for (int id : sorted_leaders) key += std::to_string(id) + ".";
      key += "|" + detail::transform_key(fit.transform);
      if (seen.insert(key).second) out.push_back(std::move(a));
    }
    return false;
  });

  std::sort(out.begin(), out.end(), [](const RoleAssignment& a, const RoleAssignment& b) {
    if (a.leaders != b.leaders) return a.leaders < b.leaders;
    return a.permutation < b.permutation;
  });
  return out;
}

}  // namespace swarmform
