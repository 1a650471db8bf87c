#pragma once

#include <vector>

#include "hcustom/rope3d.hpp"
#include "hcustom/tensor.hpp"

namespace hcustom {

enum class SegmentKind { identity, video, text };

struct SegmentLabel {
  SegmentKind kind = SegmentKind::video;
  int subject = 0;  // 1-based for identity tokens, 0 otherwise

  friend bool operator==(const SegmentLabel&, const SegmentLabel&) = default;
};

/// Token matrix (one row per token) plus a segment label per row.
struct TokenSequence {
  Matrix embeddings;
  std::vector<SegmentLabel> labels;

  Eigen::Index length() const { return embeddings.rows(); }
  Eigen::Index width() const { return embeddings.cols(); }
};

}  // namespace hcustom
