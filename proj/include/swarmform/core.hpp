#pragma once

#include <atomic>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace swarmform {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Default numeric tolerances, calibrated for coordinates of order 1 m in
/// double precision. Every operation that compares against a tolerance either
/// takes it as a parameter or uses one of these named constants.
struct Tol {
  /// Relative singular-value cutoff for affine-span rank decisions.
  static constexpr double rank_rel = 1e-8;
  /// Minimum |det A| for a fitted transform to count as invertible.
  static constexpr double det_min = 1e-8;
  /// Default affine-image membership residual, meters.
  static constexpr double membership_m = 1e-6;
  /// Maximum admissible equilibrium residual for a computed stress, meters.
  static constexpr double equilibrium_m = 1e-9;
  /// Smallest singular value of the follower block (after normalization)
  /// that still counts as localizable.
  static constexpr double singular_abs = 1e-10;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// graph construction
class DuplicateEdgeError : public Error { public: using Error::Error; };
class SelfLoopError : public Error { public: using Error::Error; };
class IndexOutOfRangeError : public Error { public: using Error::Error; };
class TooFewAgentsError : public Error { public: using Error::Error; };
class InvalidLeaderSetError : public Error { public: using Error::Error; };

// affine geometry
class DimensionMismatchError : public Error { public: using Error::Error; };
class DegenerateSourceError : public Error { public: using Error::Error; };
class UnsupportedSizeError : public Error { public: using Error::Error; };

// stress computation
class NotRootedError : public Error { public: using Error::Error; };
class DegenerateConfigurationError : public Error { public: using Error::Error; };
class NoValidStressError : public Error { public: using Error::Error; };
class MissingEdgeWeightError : public Error { public: using Error::Error; };
class NotLocalizableError : public Error { public: using Error::Error; };

// reorganization
class TooFewLeadersError : public Error { public: using Error::Error; };
class DegenerateLeadersError : public Error { public: using Error::Error; };
class NoViableAssignmentError : public Error { public: using Error::Error; };
class LeadersDoNotSpanError : public Error { public: using Error::Error; };
class NotViableAssignmentError : public Error { public: using Error::Error; };

// simulation
class ZeroWeightSumError : public Error { public: using Error::Error; };

// serialization
class ParseError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class SchemaVersionMismatchError : public Error { public: using Error::Error; };

class OperationCancelledError : public Error { public: using Error::Error; };

/// Cooperative cancellation flag. Long-running solvers poll it between
/// iterations and abort with OperationCancelledError when set.
class CancelToken {
 public:
  void cancel() noexcept { flag_.store(true, std::memory_order_relaxed); }
  bool cancelled() const noexcept { return flag_.load(std::memory_order_relaxed); }

 private:
  std::atomic<bool> flag_{false};
};

namespace detail {

inline void throw_if_cancelled(const CancelToken* token, const char* where) {
  if (token != nullptr && token->cancelled()) {
    throw OperationCancelledError(std::string("cancelled during ") + where);
  }
}

/// Calls fn with each k-subset of items in lexicographic order until fn
/// returns true (early exit) or the subsets are exhausted.
template <typename Fn>
inline bool for_each_combination(const std::vector<int>& items, int k, Fn&& fn) {
  const int m = static_cast<int>(items.size());
  if (k > m || k < 0) return false;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    std::vector<int> combo(k);
    for (int i = 0; i < k; ++i) combo[i] = items[idx[i]];
    if (fn(combo)) return true;
    int i = k - 1;
    while (i >= 0 && idx[i] == m - k + i) --i;
    if (i < 0) return false;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

}  // namespace swarmform
