#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "swarmform/affine_geometry.hpp"
#include "swarmform/core.hpp"
#include "swarmform/formation_graph.hpp"

namespace swarmform {

/// Edge weights keyed by (tail, head).
using EdgeWeights = std::map<std::pair<int, int>, double>;

struct StressBlocks {
  Mat ll, lf, fl, ff;
  std::vector<int> order;      // leaders (assigned order) then followers (ascending)
  std::vector<int> leaders;
  std::vector<int> followers;
};

/// A stress together with the graph it lives on. For the PSD pathway the
/// graph is the symmetric closure of the input digraph; for the power-centric
/// pathway it is the digraph itself with zero-weight leader-leader edges.
struct StressAssignment {
  FormationGraph graph;
  EdgeWeights weights;
  Mat omega;
  StressBlocks blocks;
};

struct LocalizabilityReport {
  bool localizable = false;
  double det_omega_ff = 0.0;
  double min_singular_value_ff = 0.0;
};

/// Row-wise stress matrix assembly: for each edge (j, i) with weight w,
/// omega(i, j) = -w and omega(i, i) accumulates +w; all other entries zero.
/// Weights must be defined on exactly the edge set.
inline Mat assemble_stress_matrix(const FormationGraph& g, const EdgeWeights& weights) {
  if (weights.size() != g.edges().size()) {
    throw MissingEdgeWeightError("weight map does not cover the edge set exactly (" +
                                 std::to_string(weights.size()) + " weights, " +
                                 std::to_string(g.edges().size()) + " edges)");
  }
  const int n = g.agent_count();
  Mat omega = Mat::Zero(n, n);
  for (const auto& [tail, head] : g.edges()) {
    auto it = weights.find({tail, head});
    if (it == weights.end()) {
      throw MissingEdgeWeightError("missing weight for edge (" + std::to_string(tail) +
                                   ", " + std::to_string(head) + ")");
    }
    omega(head, tail) -= it->second;
    omega(head, head) += it->second;
  }
  return omega;
}

/// Leader/follower block partition of omega under the permutation that lists
/// leaders first (in their assigned order) and followers after (ascending).
inline StressBlocks partition_stress(const Mat& omega, const FormationGraph& g) {
  const int n = g.agent_count();
  if (omega.rows() != n || omega.cols() != n) {
    throw DimensionMismatchError("stress matrix size does not match graph");
  }
  StressBlocks b;
  b.leaders = g.leaders();
  b.followers = g.followers();
  b.order = b.leaders;
  b.order.insert(b.order.end(), b.followers.begin(), b.followers.end());
  const int nl = g.leader_count();
  const int nf = g.follower_count();
  b.ll.resize(nl, nl);
  b.lf.resize(nl, nf);
  b.fl.resize(nf, nl);
  b.ff.resize(nf, nf);
  for (int i = 0; i < nl; ++i) {
    for (int j = 0; j < nl; ++j) b.ll(i, j) = omega(b.leaders[i], b.leaders[j]);
    for (int j = 0; j < nf; ++j) b.lf(i, j) = omega(b.leaders[i], b.followers[j]);
  }
  for (int i = 0; i < nf; ++i) {
    for (int j = 0; j < nl; ++j) b.fl(i, j) = omega(b.followers[i], b.leaders[j]);
    for (int j = 0; j < nf; ++j) b.ff(i, j) = omega(b.followers[i], b.followers[j]);
  }
  return b;
}

inline StressBlocks partition_stress(const StressAssignment& s) {
  return partition_stress(s.omega, s.graph);
}

/// Bundles assembly and partition; the usual way to make a StressAssignment
/// from explicitly supplied weights.
inline StressAssignment make_stress_assignment(FormationGraph g, EdgeWeights weights) {
  StressAssignment s;
  s.omega = assemble_stress_matrix(g, weights);
  s.blocks = partition_stress(s.omega, g);
  s.graph = std::move(g);
  s.weights = std::move(weights);
  return s;
}

/// Follower block nonsingularity, measured as the smallest singular value of
/// omega_ff against Tol::singular_abs. An empty follower set is vacuously
/// localizable.
inline LocalizabilityReport is_affinely_localizable(const StressAssignment& s) {
  LocalizabilityReport r;
  const int nf = static_cast<int>(s.blocks.followers.size());
  if (nf == 0) {
    r.localizable = true;
    r.det_omega_ff = 1.0;
    r.min_singular_value_ff = std::numeric_limits<double>::infinity();
    return r;
  }
  Eigen::JacobiSVD<Mat> svd(s.blocks.ff);
  r.min_singular_value_ff = svd.singularValues()(svd.singularValues().size() - 1);
  r.det_omega_ff = s.blocks.ff.determinant();
  r.localizable = r.min_singular_value_ff > Tol::singular_abs;
  return r;
}

/// Unique follower positions induced by the leader positions:
/// p_f = -omega_ff^{-1} omega_fl p_l, applied per coordinate. Leader columns
/// follow the stress blocks leader order; the result lists followers in the
/// blocks follower order.
inline Configuration follower_positions_from_leaders(const StressAssignment& s,
                                                     const Configuration& leader_positions) {
  const int nl = static_cast<int>(s.blocks.leaders.size());
  if (leader_positions.count() != nl) {
    throw DimensionMismatchError("expected " + std::to_string(nl) + " leader positions");
  }
  LocalizabilityReport rep = is_affinely_localizable(s);
  if (!rep.localizable) {
    throw NotLocalizableError("follower block is singular (min sigma = " +
                              std::to_string(rep.min_singular_value_ff) + ")");
  }
  if (s.blocks.followers.empty()) {
    return Configuration(Mat(leader_positions.dimension(), 0));
  }
  Mat xl = leader_positions.points().transpose();            // nl x d
  Mat xf = s.blocks.ff.partialPivLu().solve(-s.blocks.fl * xl);  // nf x d
  return Configuration(xf.transpose());
}

/// Max-norm of the stacked equilibrium residual (Omega ⊗ I_d) r.
inline double equilibrium_residual(const FormationGraph& g, const Configuration& r,
                                   const EdgeWeights& weights) {
  if (r.count() != g.agent_count() || r.dimension() != g.dimension()) {
    throw DimensionMismatchError("configuration does not match graph");
  }
  Mat omega = assemble_stress_matrix(g, weights);
  Mat res = omega * r.points().transpose();  // n x d
  return res.cwiseAbs().maxCoeff();
}

inline double equilibrium_residual(const StressAssignment& s, const Configuration& r) {
  return equilibrium_residual(s.graph, r, s.weights);
}

namespace detail {

/// Orthonormal basis of the complement of the affine column space
/// span{r rows, 1} in R^n; the complement has dimension n - d - 1 when the
/// configuration affinely spans.
inline Mat affine_complement_basis(const Configuration& r) {
  const int n = r.count();
  const int d = r.dimension();
  Mat h(n, d + 1);
  h.leftCols(d) = r.points().transpose();
  h.col(d).setOnes();
  Eigen::JacobiSVD<Mat> svd(h, Eigen::ComputeFullU);
  return svd.matrixU().rightCols(n - d - 1);
}

struct SymmetricStressSystem {
  std::vector<std::pair<int, int>> pairs;  // undirected support, i < j
  Mat constraints;                         // (n d) x m equilibrium system
  Mat null_basis;                          // m x k
};

inline SymmetricStressSystem build_symmetric_system(const FormationGraph& g,
                                                    const Configuration& r) {
  SymmetricStressSystem sys;
  std::set<std::pair<int, int>> support;
  for (const auto& [tail, head] : g.edges()) {
    support.insert({std::min(tail, head), std::max(tail, head)});
  }
  sys.pairs.assign(support.begin(), support.end());
  const int n = g.agent_count();
  const int d = g.dimension();
  const int m = static_cast<int>(sys.pairs.size());
  sys.constraints = Mat::Zero(n * d, m);
  for (int e = 0; e < m; ++e) {
    auto [i, j] = sys.pairs[e];
    Vec diff = r.point(j) - r.point(i);
    sys.constraints.block(i * d, e, d, 1) = diff;
    sys.constraints.block(j * d, e, d, 1) = -diff;
  }
  Eigen::JacobiSVD<Mat> svd(sys.constraints, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = (sv.size() > 0 ? sv(0) : 0.0) * 1e-10;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++rank;
  }
  sys.null_basis = svd.matrixV().rightCols(m - rank);
  return sys;
}

inline FormationGraph symmetric_closure(const FormationGraph& g) {
  std::set<std::pair<int, int>> edges(g.edges().begin(), g.edges().end());
  for (const auto& [tail, head] : g.edges()) edges.insert({head, tail});
  return FormationGraph::build(g.agent_count(), g.dimension(),
                               {edges.begin(), edges.end()}, g.leaders());
}

}  // namespace detail

/// Equilibrium stress for a rooted graph and spanning configuration.
///
/// The weight space is the nullspace of the per-node equilibrium system over
/// the symmetrized edge support (weights are shared by both directions of an
/// edge, which keeps omega symmetric). Among equilibrium stresses the solver
/// picks the combination maximizing the smallest eigenvalue of omega
/// restricted to the complement of the affine kernel: positive semidefinite
/// with rank n-d-1 exactly when that objective is positive. Selection is
/// exact for one-dimensional nullspaces (sign choice); otherwise candidate
/// directions (a least-squares fit of the ideal complement projector, the
/// coordinate directions, and a coarse sphere grid in low dimension) are
/// refined by deterministic projected ascent. The result is normalized to
/// max |w| = 1. Pass a CancelToken to abort selection cooperatively.
inline StressAssignment compute_equilibrium_stress(const FormationGraph& g,
                                                   const Configuration& r,
                                                   const CancelToken* cancel = nullptr) {
  const int n = g.agent_count();
  const int d = g.dimension();
  if (r.count() != n || r.dimension() != d) {
    throw DimensionMismatchError("configuration does not match graph");
  }
  if (n > 64) {
    throw UnsupportedSizeError("stress computation is capped at n = 64");
  }
  if (!affinely_spans(r)) {
    throw DegenerateConfigurationError("configuration does not affinely span R^d");
  }
  RootedWitness witness = is_d_plus_1_rooted(g);
  if (!witness.rooted) {
    throw NotRootedError("graph is not (d+1)-rooted");
  }

  FormationGraph closure = detail::symmetric_closure(g);

  auto finish = [&](const std::vector<std::pair<int, int>>& pairs, const Vec& w) {
    EdgeWeights weights;
    for (size_t e = 0; e < pairs.size(); ++e) {
      weights[{pairs[e].first, pairs[e].second}] = w(static_cast<int>(e));
      weights[{pairs[e].second, pairs[e].first}] = w(static_cast<int>(e));
    }
    StressAssignment s = make_stress_assignment(closure, std::move(weights));
    double res = equilibrium_residual(s, r);
    if (res > Tol::equilibrium_m) {
      throw NoValidStressError("equilibrium residual " + std::to_string(res) +
                               " exceeds tolerance");
    }
    return s;
  };

  detail::SymmetricStressSystem sys = detail::build_symmetric_system(closure, r);
  const int m = static_cast<int>(sys.pairs.size());

  if (n == d + 1) {
    return finish(sys.pairs, Vec::Zero(m));
  }

  const int k = static_cast<int>(sys.null_basis.cols());
  if (k == 0) {
    throw NoValidStressError("equilibrium system admits only the zero stress");
  }

  Mat p = detail::affine_complement_basis(r);  // n x (n-d-1)

  // Restrictions of each basis stress to the complement of the affine kernel.
  std::vector<Mat> restricted(k);
  std::vector<Mat> full(k);
  for (int l = 0; l < k; ++l) {
    EdgeWeights wl;
    for (int e = 0; e < m; ++e) {
      wl[{sys.pairs[e].first, sys.pairs[e].second}] = sys.null_basis(e, l);
      wl[{sys.pairs[e].second, sys.pairs[e].first}] = sys.null_basis(e, l);
    }
    full[l] = assemble_stress_matrix(closure, wl);
    restricted[l] = p.transpose() * full[l] * p;
  }

  auto lambda_min = [&](const Vec& c) {
    Mat s = Mat::Zero(p.cols(), p.cols());
    for (int l = 0; l < k; ++l) s += c(l) * restricted[l];
    Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  };

  std::vector<Vec> candidates;
  if (k == 1) {
    candidates.push_back(Vec::Ones(1));
    candidates.push_back(-Vec::Ones(1));
  } else {
    // Least-squares fit of the ideal complement projector p p^T; exact for
    // complete supports, a strong starting point otherwise.
    Mat target = p * p.transpose();
    Mat gram(k, k);
    Vec rhs(k);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b <= a; ++b) {
        gram(a, b) = gram(b, a) = (full[a].array() * full[b].array()).sum();
      }
      rhs(a) = (full[a].array() * target.array()).sum();
    }
    Vec fit = gram.ldlt().solve(rhs);
    if (fit.allFinite() && fit.norm() > 0.0) {
      candidates.push_back(fit.normalized());
      candidates.push_back(-fit.normalized());
    }
    for (int l = 0; l < k; ++l) {
      Vec e = Vec::Zero(k);
      e(l) = 1.0;
      candidates.push_back(e);
      candidates.push_back(-e);
    }
    if (k == 2) {
      for (int a = 0; a < 64; ++a) {
        double th = 2.0 * M_PI * a / 64.0;
        Vec c(2);
        c << std::cos(th), std::sin(th);
        candidates.push_back(c);
      }
    } else if (k == 3) {
      for (int a = 0; a < 256; ++a) {
        double z = 1.0 - 2.0 * (a + 0.5) / 256.0;
        double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
        double th = a * 2.399963229728653;  // golden angle
        Vec c(3);
        c << rad * std::cos(th), rad * std::sin(th), z;
        candidates.push_back(c);
      }
    }
  }

  Vec best = candidates.front();
  double best_val = lambda_min(best);
  for (const auto& c : candidates) {
    detail::throw_if_cancelled(cancel, "stress candidate scan");
    double v = lambda_min(c);
    if (v > best_val) {
      best_val = v;
      best = c;
    }
  }

  if (k > 1) {
    double step = 0.5;
    for (int iter = 0; iter < 300 && step > 1e-12; ++iter) {
      detail::throw_if_cancelled(cancel, "stress refinement");
      Mat s = Mat::Zero(p.cols(), p.cols());
      for (int l = 0; l < k; ++l) s += best(l) * restricted[l];
      Eigen::SelfAdjointEigenSolver<Mat> es(s);
      Vec v = es.eigenvectors().col(0);
      Vec grad(k);
      for (int l = 0; l < k; ++l) grad(l) = v.dot(restricted[l] * v);
      grad -= grad.dot(best) * best;
      if (grad.norm() < 1e-14) break;
      bool improved = false;
      while (step > 1e-12) {
        Vec trial = (best + step * grad).normalized();
        double val = lambda_min(trial);
        if (val > best_val + 1e-15) {
          best = trial;
          best_val = val;
          step = std::min(step * 1.5, 1.0);
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
    }
  }

  Vec w = sys.null_basis * best;
  double scale = w.cwiseAbs().maxCoeff();
  if (scale <= 0.0) {
    throw NoValidStressError("selected stress is identically zero");
  }
  w /= scale;
  if (best_val / scale <= Tol::singular_abs) {
    throw NoValidStressError(
        "no positive-semidefinite stress of rank n-d-1 in the equilibrium nullspace");
  }
  return finish(sys.pairs, w);
}

}  // namespace swarmform
