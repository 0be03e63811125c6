#pragma once

#include <stdexcept>

#include "ribbon/mesh_fe.hpp"

namespace ribbon {

/// Discrete ribbon frame: centerline y in S^{3,1} and director b in S^{1,0}
/// on a shared mesh. The second director is d = y' x b.
struct FrameState {
  HermiteField y;
  NodalField b;

  [[nodiscard]] int num_nodes() const { return b.num_nodes(); }

  void check(const Mesh& mesh) const {
    if (y.num_nodes() != mesh.num_nodes() || b.num_nodes() != mesh.num_nodes())
      throw std::invalid_argument("FrameState does not match mesh");
  }
};

}  // namespace ribbon
