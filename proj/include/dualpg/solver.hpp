// Levenberg-Marquardt over a Graph with a fixed iteration budget.
#pragma once

#include "dualpg/graph.hpp"

#include <string>
#include <vector>

namespace dualpg {

struct SolverConfig {
  int max_iterations = 15;
  double lambda_init = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.5;
  double chi2_rel_tol = 1e-9;
  double step_norm_tol = 1e-10;
  /// Below this many free nodes the damped system is solved densely.
  int dense_below_blocks = 50;

  /// Throws ConfigError.
  void validate() const;
};

enum class Termination { Converged, Budget, Stalled };

std::string to_string(Termination t);

struct OptReport {
  int iterations = 0;
  double initial_chi2 = 0.0;
  double final_chi2 = 0.0;
  Termination reason = Termination::Converged;
  double wall_ms = 0.0;
  /// chi2 at the start and after every accepted step.
  std::vector<double> chi2_history;
};

/// Minimizes chi2(graph) in place. Estimates end at the best accepted state;
/// chi2 never increases. Throws GaugeError when the problem is not anchored.
OptReport optimize(Graph& graph, const SolverConfig& config);

/// Information left on one free landmark (or pose) after eliminating every
/// other free variable: H_ll - H_lx H_xx^-1 H_xl at the current estimates.
Eigen::MatrixXd marginal_information(const Graph& graph, NodeId node);

}  // namespace dualpg
