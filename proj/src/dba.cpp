#include "splatflow/dba.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace splatflow {

void DbaEdge::validate() const {
  const std::size_t n = static_cast<std::size_t>(depth.width()) * depth.height();
  if (corrected.width != depth.width() || corrected.height != depth.height() || weights.size() != n) {
    throw DimensionMismatch("dba edge: depth, correspondences and weights disagree in size");
  }
}

DbaEdge make_edge(const Pose& neighbor_pose, EdgeDirection direction, DepthMap depth, const PixelField& prior,
                  const FlowField& flow) {
  DbaEdge edge;
  edge.neighbor_pose = neighbor_pose;
  edge.direction = direction;
  edge.depth = std::move(depth);
  edge.corrected = corrected_correspondence(prior, flow);
  edge.weights.resize(flow.size());
  for (std::size_t i = 0; i < flow.size(); ++i) {
    edge.weights[i] = edge.corrected.valid[i] ? Eigen::Vector2d(flow.confidence[i].cast<double>()) : Eigen::Vector2d::Zero();
  }
  edge.validate();
  return edge;
}

const char* to_string(DbaStatus s) {
  switch (s) {
    case DbaStatus::converged: return "converged";
    case DbaStatus::max_iterations: return "max_iterations";
    case DbaStatus::singular: return "singular";
    case DbaStatus::no_constraints: return "no_constraints";
  }
  return "unknown";
}

namespace {

template <bool WithJacobian>
void linearize(const DbaEdge& edge, const Pose& target_pose, const Intrinsics& k, EdgeLinearization& out) {
  edge.validate();
  const bool to_target = edge.direction == EdgeDirection::neighbor_to_target;
  // Y = dst_from_src * X
  const Pose dst_from_src = to_target ? relative(edge.neighbor_pose, target_pose)
                                      : relative(target_pose, edge.neighbor_pose);
  const Eigen::Matrix3d R = dst_from_src.rotation_matrix();
  const Eigen::Vector3d t = dst_from_src.translation();
  const Eigen::Matrix3d Rnt = edge.neighbor_pose.rotation_matrix().transpose() * target_pose.rotation_matrix();

  for (int y = 0; y < edge.depth.height(); ++y) {
    for (int x = 0; x < edge.depth.width(); ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * edge.depth.width() + x;
      if (!edge.corrected.valid[idx] || !edge.depth.valid(x, y)) continue;
      const Eigen::Vector2d& w = edge.weights[idx];
      if (w.x() <= 0.0 && w.y() <= 0.0) continue;

      const Eigen::Vector3d X = backproject({x, y}, edge.depth(x, y), k);
      const Eigen::Vector3d Y = R * X + t;
      out.pixels.push_back(idx);
      if (Y.z() <= kMinDepth) {
        out.residuals.emplace_back(Eigen::Vector2d::Zero());
        out.weights.emplace_back(Eigen::Vector2d::Zero());
        if constexpr (WithJacobian) out.jacobians.emplace_back(Jacobian26::Zero());
        continue;
      }
      out.residuals.push_back(edge.corrected.coords[idx] - project(Y, k));
      out.weights.push_back(w);
      if constexpr (WithJacobian) {
        const double iz = 1.0 / Y.z();
        Eigen::Matrix<double, 2, 3> jp;
        jp << k.fx * iz, 0.0, -k.fx * Y.x() * iz * iz, 0.0, k.fy * iz, -k.fy * Y.y() * iz * iz;
        Eigen::Matrix<double, 3, 6> dy;
        if (to_target) {
          dy << skew(Y), -Eigen::Matrix3d::Identity();
        } else {
          dy << -Rnt * skew(X), Rnt;
        }
        out.jacobians.push_back(-jp * dy);
      }
    }
  }
}

Eigen::Vector2d robust_weight(const Eigen::Vector2d& w, const Eigen::Vector2d& r, const DbaSettings& s) {
  if (!s.huber) return w;
  Eigen::Vector2d out = w;
  for (int a = 0; a < 2; ++a) {
    const double m = std::abs(r[a]);
    if (m > s.huber_threshold_px) out[a] *= s.huber_threshold_px / m;
  }
  return out;
}

}  // namespace

EdgeLinearization residuals_and_jacobian(const DbaEdge& edge, const Pose& target_pose, const Intrinsics& k) {
  EdgeLinearization out;
  linearize<true>(edge, target_pose, k, out);
  return out;
}

double dba_cost(const std::vector<DbaEdge>& edges, const Pose& target_pose, const Intrinsics& k,
                const DbaSettings& settings, double* total_weight) {
  double cost = 0.0;
  double weight = 0.0;
  EdgeLinearization lin;
  for (const DbaEdge& e : edges) {
    lin = {};
    linearize<false>(e, target_pose, k, lin);
    for (std::size_t i = 0; i < lin.residuals.size(); ++i) {
      const Eigen::Vector2d w = robust_weight(lin.weights[i], lin.residuals[i], settings);
      cost += w.dot(lin.residuals[i].cwiseAbs2());
      weight += w.sum();
    }
  }
  if (total_weight) *total_weight = weight;
  return cost;
}

DbaSolution solve(const DbaProblem& problem) {
  if (problem.edges.empty()) throw std::invalid_argument("dba: problem has no edges");
  problem.intrinsics.validate();
  const DbaSettings& s = problem.settings;
  const Intrinsics& k = problem.intrinsics;

  DbaSolution sol;
  sol.pose = problem.initial;
  double weight = 0.0;
  double cost = dba_cost(problem.edges, sol.pose, k, s, &weight);
  sol.history.push_back(cost);
  auto finish = [&](DbaStatus status) {
    sol.status = status;
    sol.weighted_residual = cost;
    sol.mean_residual = weight > 0 ? cost / weight : 0.0;
    return sol;
  };
  if (weight <= 0.0) return finish(DbaStatus::no_constraints);

  double lambda = s.lambda0;
  sol.status = DbaStatus::max_iterations;
  for (int it = 0; it < s.max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Tangent g = Tangent::Zero();
    for (const DbaEdge& e : problem.edges) {
      const EdgeLinearization lin = residuals_and_jacobian(e, sol.pose, k);
      for (std::size_t i = 0; i < lin.residuals.size(); ++i) {
        const Eigen::Vector2d w = robust_weight(lin.weights[i], lin.residuals[i], s);
        const Jacobian26& J = lin.jacobians[i];
        H.noalias() += J.transpose() * w.asDiagonal() * J;
        g.noalias() += J.transpose() * w.cwiseProduct(lin.residuals[i]);
      }
    }
    sol.iterations = it + 1;

    Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(H);
    lu.setThreshold(1e-12);
    if (lu.rank() < 6 || !H.allFinite()) {
      sol.pose = problem.initial;
      cost = sol.history.front();
      return finish(DbaStatus::singular);
    }

    bool accepted = false;
    bool small = false;
    while (lambda <= s.lambda_max) {
      Eigen::Matrix<double, 6, 6> A = H;
      A.diagonal() += lambda * H.diagonal();
      const Tangent xi = A.ldlt().solve(-g);
      if (!xi.allFinite()) {
        lambda *= s.lambda_grow;
        continue;
      }
      small = xi.norm() < s.tangent_tolerance;
      const Pose candidate = compose(sol.pose, exp(xi));
      double candidate_weight = 0.0;
      const double candidate_cost = dba_cost(problem.edges, candidate, k, s, &candidate_weight);
      // Ties are accepted: near the minimum the cost stops resolving the
      // remaining Gauss-Newton step.
      if (candidate_cost <= cost) {
        sol.pose = candidate;
        cost = candidate_cost;
        weight = candidate_weight;
        sol.history.push_back(cost);
        lambda *= s.lambda_shrink;
        accepted = true;
        break;
      }
      if (small) break;
      lambda *= s.lambda_grow;
    }
    if (small) return finish(DbaStatus::converged);
    if (!accepted) return finish(DbaStatus::converged);  // no descent left at any damping
  }
  return finish(sol.status);
}

}  // namespace splatflow
