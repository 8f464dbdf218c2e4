// Plain-text graph dump, one record per line:
//
//   POSE id t x y z qx qy qz qw [FIXED]
//   LANDMARK_SE3 id gate x y z qx qy qz qw [FIXED]
//   LANDMARK_XYZ id gate x y z [FIXED]
//   EDGE_ODOM from to x y z qx qy qz qw <21 upper-triangular info>
//   EDGE_DET_SE3 pose landmark x y z qx qy qz qw <21 info>
//   EDGE_DET_XYZ pose landmark x y z <6 info>
//   EDGE_PRIOR_SE3 node x y z qx qy qz qw <21 info>
//   EDGE_PRIOR_XYZ node x y z <6 info>
//
// Floats use the shortest decimal that round-trips.
#pragma once

#include "dualpg/graph.hpp"

#include <iosfwd>
#include <string>
#include <string_view>

namespace dualpg {

std::string dump_graph(const Graph& graph);
/// Throws InputError with the offending line number.
Graph parse_graph(std::string_view text);

}  // namespace dualpg
