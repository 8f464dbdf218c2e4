#include "dualpg/solver.hpp"

#include "dualpg/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <chrono>
#include <cmath>
#include <vector>

namespace dualpg {

namespace {

using SparseLLT = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                                       Eigen::AMDOrdering<int>>;

// Solves (H + lambda diag(H)) x = rhs. The sparse path keeps its symbolic
// analysis across calls since the pattern is fixed within one optimize().
class DampedSolver {
 public:
  DampedSolver(const SolverConfig& config, int free_blocks)
      : dense_(free_blocks < config.dense_below_blocks) {}

  bool solve(const Eigen::SparseMatrix<double>& H, double lambda, const Eigen::VectorXd& rhs,
             Eigen::VectorXd& x) {
    Eigen::SparseMatrix<double> A = H;
    for (int k = 0; k < A.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
        if (it.row() == it.col()) it.valueRef() += lambda * std::max(it.value(), 1e-12);
      }
    }
    if (dense_) {
      Eigen::LLT<Eigen::MatrixXd> llt{Eigen::MatrixXd(A)};  // H is stored in full
      if (llt.info() != Eigen::Success) return false;
      x = llt.solve(rhs);
    } else {
      if (!analyzed_) {
        llt_.analyzePattern(A);
        analyzed_ = true;
      }
      llt_.factorize(A);
      if (llt_.info() != Eigen::Success) return false;
      x = llt_.solve(rhs);
    }
    return x.allFinite();
  }

 private:
  bool dense_;
  bool analyzed_ = false;
  SparseLLT llt_;
};

void apply_step(Graph& graph, const VariableOrdering& ord, const Eigen::VectorXd& step) {
  for (std::size_t i = 0; i < ord.free_nodes.size(); ++i) {
    graph.apply_increment(ord.free_nodes[i], step.segment(ord.offsets[i], ord.dims[i]));
  }
}

// Estimates of the free nodes, for reverting rejected steps without
// accumulating round-off from inverse increments.
std::vector<Node> snapshot(const Graph& graph, const VariableOrdering& ord) {
  std::vector<Node> saved;
  saved.reserve(ord.free_nodes.size());
  for (NodeId id : ord.free_nodes) saved.push_back(graph.node(id));
  return saved;
}

void restore(Graph& graph, const VariableOrdering& ord, const std::vector<Node>& saved) {
  for (std::size_t i = 0; i < saved.size(); ++i) {
    if (const auto* p = std::get_if<PoseNode>(&saved[i])) {
      graph.pose_node(ord.free_nodes[i]).estimate = p->estimate;
    } else {
      graph.landmark_node(ord.free_nodes[i]).estimate = std::get<LandmarkNode>(saved[i]).estimate;
    }
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("solver max_iterations must be >= 1");
  if (!(lambda_init > 0 && lambda_up > 0 && lambda_down > 0 && chi2_rel_tol > 0 &&
        step_norm_tol > 0)) {
    throw ConfigError("solver parameters must be positive");
  }
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Converged:
      return "converged";
    case Termination::Budget:
      return "budget";
    case Termination::Stalled:
      return "stalled";
  }
  return "unknown";
}

OptReport optimize(Graph& graph, const SolverConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  OptReport report;
  LinearSystem sys = linearize(graph);
  report.initial_chi2 = report.final_chi2 = sys.chi2;
  report.chi2_history.push_back(sys.chi2);
  auto finish = [&](Termination reason) {
    report.reason = reason;
    report.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return report;
  };
  if (sys.ordering.dimension == 0 || sys.chi2 == 0.0) return finish(Termination::Converged);

  DampedSolver solver(config, static_cast<int>(sys.ordering.free_nodes.size()));
  double lambda = config.lambda_init;
  int rejections = 0;
  Eigen::VectorXd step;
  double chi2_now = sys.chi2;

  while (report.iterations < config.max_iterations) {
    ++report.iterations;
    if (!solver.solve(sys.H, lambda, -sys.b, step)) {
      lambda *= config.lambda_up;
      if (++rejections >= 10) return finish(Termination::Stalled);
      continue;
    }
    if (step.norm() < config.step_norm_tol) return finish(Termination::Converged);

    const std::vector<Node> saved = snapshot(graph, sys.ordering);
    apply_step(graph, sys.ordering, step);
    const double chi2_new = chi2(graph);
    if (std::isfinite(chi2_new) && chi2_new < chi2_now) {
      const double rel = (chi2_now - chi2_new) / std::max(chi2_now, 1e-300);
      chi2_now = chi2_new;
      report.final_chi2 = chi2_now;
      report.chi2_history.push_back(chi2_now);
      lambda *= config.lambda_down;
      rejections = 0;
      if (rel < config.chi2_rel_tol || chi2_now == 0.0) return finish(Termination::Converged);
      sys = linearize(graph);
    } else {
      restore(graph, sys.ordering, saved);
      lambda *= config.lambda_up;
      if (++rejections >= 10) return finish(Termination::Stalled);
    }
  }
  return finish(Termination::Budget);
}

Eigen::MatrixXd marginal_information(const Graph& graph, NodeId node) {
  const LinearSystem sys = linearize(graph);
  const auto idx = sys.ordering.index_of(node);
  if (!idx) throw StructuralError("marginal requested for a fixed or missing node");
  const int off = sys.ordering.offsets[*idx];
  const int dim = sys.ordering.dims[*idx];
  const int n = sys.ordering.dimension;
  const int rest = n - dim;

  // Split H into the landmark block and everything else.
  auto remap = [&](int i) { return i < off ? i : i - dim; };
  Eigen::MatrixXd H_ll = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd H_xl = Eigen::MatrixXd::Zero(rest, dim);
  std::vector<Eigen::Triplet<double>> xx;
  for (int k = 0; k < sys.H.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.H, k); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      const bool r_in = r >= off && r < off + dim;
      const bool c_in = c >= off && c < off + dim;
      if (r_in && c_in) {
        H_ll(r - off, c - off) = it.value();
      } else if (!r_in && c_in) {
        H_xl(remap(r), c - off) = it.value();
      } else if (!r_in && !c_in) {
        xx.emplace_back(remap(r), remap(c), it.value());
      }
    }
  }
  Eigen::MatrixXd info = H_ll;
  if (rest > 0 && !H_xl.isZero(0.0)) {
    Eigen::MatrixXd Y;
    if (static_cast<int>(sys.ordering.free_nodes.size()) <= SolverConfig{}.dense_below_blocks) {
      Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(rest, rest);
      for (const auto& t : xx) dense(t.row(), t.col()) += t.value();
      Eigen::LLT<Eigen::MatrixXd> llt(dense);
      if (llt.info() != Eigen::Success) throw GaugeError("information matrix is singular");
      Y = llt.solve(H_xl);
    } else {
      Eigen::SparseMatrix<double> H_xx(rest, rest);
      H_xx.setFromTriplets(xx.begin(), xx.end());
      SparseLLT llt(H_xx);
      if (llt.info() != Eigen::Success) throw GaugeError("information matrix is singular");
      Y = llt.solve(H_xl);
    }
    info -= H_xl.transpose() * Y;
  }
  return 0.5 * (info + info.transpose());
}

}  // namespace dualpg
