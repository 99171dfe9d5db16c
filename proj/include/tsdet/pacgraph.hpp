#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tsdet/detgeom.hpp"

namespace tsdet {

/// Thresholds for position-aware clustering.
///
/// `theta` decides which boxes are neighbors, `delta` (> theta) decides which
/// neighbors count as low/high evidence, and `nms_iou` is the suppression
/// threshold of the final greedy selection.
struct PacParams {
  double theta = 0.5;
  double delta = 0.8;
  double nms_iou = 0.65;

  void validate() const;
};

/// IoU-thresholded neighbor graph over the candidate boxes of one image.
class AdjacencyGraph {
 public:
  struct Edge {
    std::size_t i;
    std::size_t j;  // i < j
    double iou;
  };
  struct Neighbor {
    std::size_t index;
    double iou;
  };

  AdjacencyGraph() = default;

  /// O(n^2) construction; edge (i, j) exists iff iou > theta.
  AdjacencyGraph(std::span<const Box> boxes, double theta);

  const std::vector<Box>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }
  double theta() const { return theta_; }

  /// Neighbors of node i, ordered by index.
  std::span<const Neighbor> neighbors(std::size_t i) const;

 private:
  std::vector<Box> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  double theta_ = 0.5;
};

AdjacencyGraph build_graph(std::span<const Box> boxes, double theta);

/// Partition of the nodes into connected components, each sorted ascending,
/// ordered by their smallest member.
std::vector<std::vector<std::size_t>> connected_components(const AdjacencyGraph& g);

/// Low neighbors: IoU > delta and strictly lower score. High neighbors: IoU >
/// delta and strictly higher score. Equal scores join neither set.
struct NeighborSplit {
  std::vector<std::size_t> low;
  std::vector<std::size_t> high;
};

NeighborSplit low_high_neighbors(const AdjacencyGraph& g, std::size_t i, double delta);

/// E = Q/(Q+1) * (1 - P_i) * max_{j in L} P_j, zero when L is empty.
double enhancement(const AdjacencyGraph& g, std::size_t i, double delta);

/// S = P_i * IoU(i, j*) where j* is the highest-scored high neighbor; zero
/// when H is empty. Among equally scored high neighbors the larger IoU wins.
double suppression(const AdjacencyGraph& g, std::size_t i, double delta);

/// Corrected scores P_i + E_i - S_i, all computed from the original scores in
/// one pass. Geometry and order are preserved.
std::vector<Box> pac_rescore(std::span<const Box> boxes, const PacParams& params);

/// Greedy score-descending NMS. Equal scores keep the lower input index first.
/// Kept boxes are returned in selection order.
std::vector<Box> classical_nms(std::span<const Box> boxes, double iou_thresh);

enum class SoftNmsMode { linear, gaussian };

/// Soft-NMS. Linear mode decays s <- s * (1 - IoU) when IoU > iou_thresh;
/// gaussian mode decays s <- s * exp(-IoU^2 / sigma). Every box is returned,
/// in selection order.
std::vector<Box> soft_nms(std::span<const Box> boxes, double iou_thresh, SoftNmsMode mode,
                          double sigma);

/// pac_rescore followed by classical_nms(nms_iou) on the corrected scores.
std::vector<Box> pac_select(std::span<const Box> boxes, const PacParams& params);

}  // namespace tsdet
