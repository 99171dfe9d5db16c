#include "tsdet/pacgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tsdet {

namespace {

void check_unit_interval(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) {
    throw InvalidInput(std::string(name) + " must lie in (0, 1), got " + std::to_string(v));
  }
}

// Indices sorted by descending score; ties keep the lower index first.
std::vector<std::size_t> score_order(std::span<const Box> boxes) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score > boxes[b].score;
  });
  return order;
}

}  // namespace

void PacParams::validate() const {
  check_unit_interval(theta, "theta");
  check_unit_interval(delta, "delta");
  check_unit_interval(nms_iou, "nms_iou");
  if (!(delta > theta)) {
    throw InvalidInput("delta (" + std::to_string(delta) + ") must exceed theta (" +
                       std::to_string(theta) + ")");
  }
}

AdjacencyGraph::AdjacencyGraph(std::span<const Box> boxes, double theta)
    : nodes_(boxes.begin(), boxes.end()), adjacency_(boxes.size()), theta_(theta) {
  check_unit_interval(theta, "theta");
  for (const auto& b : nodes_) tsdet::validate(b);
  const std::size_t n = nodes_.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = detail::iou_unchecked(nodes_[i], nodes_[j]);
      if (v > theta) {
        edges_.push_back({i, j, v});
        adjacency_[i].push_back({j, v});
        adjacency_[j].push_back({i, v});
      }
    }
  }
}

std::span<const AdjacencyGraph::Neighbor> AdjacencyGraph::neighbors(std::size_t i) const {
  if (i >= nodes_.size()) {
    throw InvalidInput("node index " + std::to_string(i) + " out of range for graph of " +
                       std::to_string(nodes_.size()) + " nodes");
  }
  return adjacency_[i];
}

AdjacencyGraph build_graph(std::span<const Box> boxes, double theta) {
  return AdjacencyGraph(boxes, theta);
}

std::vector<std::vector<std::size_t>> connected_components(const AdjacencyGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& e : g.edges()) {
    const std::size_t a = find(e.i);
    const std::size_t b = find(e.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  std::vector<std::vector<std::size_t>> components;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = find(i);
    if (slot[root] == n) {
      slot[root] = components.size();
      components.emplace_back();
    }
    components[slot[root]].push_back(i);
  }
  return components;
}

NeighborSplit low_high_neighbors(const AdjacencyGraph& g, std::size_t i, double delta) {
  if (delta < g.theta()) {
    throw InvalidInput("delta (" + std::to_string(delta) + ") below graph theta (" +
                       std::to_string(g.theta()) + ")");
  }
  const auto neighbors = g.neighbors(i);
  NeighborSplit split;
  const double p = g.nodes()[i].score;
  for (const auto& nb : neighbors) {
    if (!(nb.iou > delta)) continue;
    const double q = g.nodes()[nb.index].score;
    if (q < p) {
      split.low.push_back(nb.index);
    } else if (q > p) {
      split.high.push_back(nb.index);
    }
  }
  return split;
}

namespace {

struct Correction {
  double enhancement = 0.0;
  double suppression = 0.0;
};

// Single sweep over the neighbor list computing both terms for node i.
Correction correction(const AdjacencyGraph& g, std::size_t i, double delta) {
  const auto& nodes = g.nodes();
  const double p = nodes[i].score;
  std::size_t low_count = 0;
  double low_max = 0.0;
  double high_best = -1.0;
  double high_iou = 0.0;
  for (const auto& nb : g.neighbors(i)) {
    if (!(nb.iou > delta)) continue;
    const double q = nodes[nb.index].score;
    if (q < p) {
      ++low_count;
      low_max = std::max(low_max, q);
    } else if (q > p) {
      if (q > high_best || (q == high_best && nb.iou > high_iou)) {
        high_best = q;
        high_iou = nb.iou;
      }
    }
  }
  Correction c;
  if (low_count > 0) {
    const double q = static_cast<double>(low_count);
    c.enhancement = q / (q + 1.0) * (1.0 - p) * low_max;
  }
  if (high_best >= 0.0) c.suppression = p * high_iou;
  return c;
}

void check_delta(const AdjacencyGraph& g, double delta) {
  if (delta < g.theta()) {
    throw InvalidInput("delta (" + std::to_string(delta) + ") below graph theta (" +
                       std::to_string(g.theta()) + ")");
  }
}

}  // namespace

double enhancement(const AdjacencyGraph& g, std::size_t i, double delta) {
  check_delta(g, delta);
  g.neighbors(i);  // range check
  return correction(g, i, delta).enhancement;
}

double suppression(const AdjacencyGraph& g, std::size_t i, double delta) {
  check_delta(g, delta);
  g.neighbors(i);
  return correction(g, i, delta).suppression;
}

std::vector<Box> pac_rescore(std::span<const Box> boxes, const PacParams& params) {
  params.validate();
  const AdjacencyGraph g(boxes, params.theta);
  std::vector<Box> out(boxes.begin(), boxes.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Correction c = correction(g, i, params.delta);
    out[i].score = std::clamp(boxes[i].score + c.enhancement - c.suppression, 0.0, 1.0);
  }
  return out;
}

std::vector<Box> classical_nms(std::span<const Box> boxes, double iou_thresh) {
  check_unit_interval(iou_thresh, "iou_thresh");
  for (const auto& b : boxes) validate(b);
  std::vector<Box> kept;
  for (const std::size_t idx : score_order(boxes)) {
    const Box& cand = boxes[idx];
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Box& k) {
      return detail::iou_unchecked(k, cand) > iou_thresh;
    });
    if (!overlaps) kept.push_back(cand);
  }
  return kept;
}

std::vector<Box> soft_nms(std::span<const Box> boxes, double iou_thresh, SoftNmsMode mode,
                          double sigma) {
  check_unit_interval(iou_thresh, "iou_thresh");
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be positive");
  for (const auto& b : boxes) validate(b);

  std::vector<Box> pending(boxes.begin(), boxes.end());
  std::vector<Box> out;
  out.reserve(pending.size());
  while (!pending.empty()) {
    // First maximum keeps the earliest remaining box on ties.
    auto best = std::max_element(pending.begin(), pending.end(),
                                 [](const Box& a, const Box& b) { return a.score < b.score; });
    const Box top = *best;
    pending.erase(best);
    for (auto& b : pending) {
      const double v = detail::iou_unchecked(top, b);
      if (mode == SoftNmsMode::linear) {
        if (v > iou_thresh) b.score *= 1.0 - v;
      } else {
        b.score *= std::exp(-v * v / sigma);
      }
    }
    out.push_back(top);
  }
  return out;
}

std::vector<Box> pac_select(std::span<const Box> boxes, const PacParams& params) {
  const std::vector<Box> rescored = pac_rescore(boxes, params);
  return classical_nms(rescored, params.nms_iou);
}

}  // namespace tsdet
