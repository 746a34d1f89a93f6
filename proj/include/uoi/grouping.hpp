// Copyright 2026 The UoI Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "uoi/box.hpp"

namespace uoi {

/// One scored candidate flowing through post-processing. `proposal` is the
/// box before regression (the grouping key); `regressed` is what the
/// regression head predicted for it.
struct ProposalRecord {
  Box proposal;
  Box regressed;
  double score = 0.0;
  int class_id = 0;
  int image_id = 0;
};

/// A final detection emitted by a post-processing pipeline.
struct Detection {
  Box box;
  double score = 0.0;
  int class_id = 0;
  int image_id = 0;
};

/// Which box field an overlap test keys on.
enum class BoxKey { kProposal, kRegressed };

/// Optional second-stage transform applied to merged boxes. An empty
/// function means identity.
using BoxRefiner = std::function<Box(const Box&)>;

inline BoxRefiner identity_refiner() {
  return [](const Box& b) { return b; };
}

/// Post-processing knobs shared by the grouping pipelines.
///   k           grouping / suppression IoU threshold
///   m           maximum proposals merged per group
///   score_floor pre-filter; records below it never enter grouping
struct PostprocessConfig {
  double k = 0.5;
  int m = 5;
  double score_floor = 0.05;
  BoxRefiner refiner;  // empty = identity
  bool per_class = true;
};

namespace detail {

inline const Box& keyed_box(const ProposalRecord& r, BoxKey key) {
  return key == BoxKey::kProposal ? r.proposal : r.regressed;
}

/// Indices sorted by descending score, ties by ascending index.
inline std::vector<std::size_t> score_order(
    std::span<const ProposalRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return records[a].score > records[b].score;
                   });
  return order;
}

}  // namespace detail

/// Greedy non-maximum suppression. Walks records by descending score and
/// suppresses any remaining record whose keyed box overlaps a kept one with
/// IoU >= iou_thresh (same class only, unless per_class is false). Returns
/// kept indices in selection order.
inline std::vector<std::size_t> greedy_nms(
    std::span<const ProposalRecord> records, double iou_thresh,
    BoxKey key = BoxKey::kRegressed, bool per_class = true) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) {
    throw std::invalid_argument("greedy_nms: iou_thresh must be in (0,1)");
  }
  const auto order = detail::score_order(records);
  std::vector<bool> suppressed(records.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t i = order[pos];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t qos = pos + 1; qos < order.size(); ++qos) {
      const std::size_t j = order[qos];
      if (suppressed[j]) continue;
      if (per_class && records[i].class_id != records[j].class_id) continue;
      if (iou(detail::keyed_box(records[i], key),
              detail::keyed_box(records[j], key)) >= iou_thresh) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

enum class SoftNmsMode { kLinear, kGaussian };

/// Soft suppression: nothing is discarded outright; scores decay with
/// overlap against already-selected records, and records ending below
/// `score_floor` are dropped at the end. Linear mode scales by (1 - IoU)
/// for any positive overlap; Gaussian mode scales by exp(-IoU^2 / sigma).
/// Returns (input index, rescored score) pairs in selection order.
inline std::vector<std::pair<std::size_t, double>> soft_nms_indexed(
    std::span<const ProposalRecord> records, double sigma, SoftNmsMode mode,
    double score_floor, bool per_class = true) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("soft_nms: sigma must be > 0");
  }
  std::vector<double> score(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) score[i] = records[i].score;
  std::vector<bool> done(records.size(), false);
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(records.size());
  for (std::size_t round = 0; round < records.size(); ++round) {
    // Highest current score among unprocessed records; ties by index.
    std::size_t best = records.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!done[i] && (best == records.size() || score[i] > score[best])) {
        best = i;
      }
    }
    done[best] = true;
    out.emplace_back(best, score[best]);
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (done[i]) continue;
      if (per_class && records[i].class_id != records[best].class_id) continue;
      const double v = iou(records[best].regressed, records[i].regressed);
      if (v <= 0.0) continue;
      const double decay = mode == SoftNmsMode::kLinear
                               ? 1.0 - v
                               : std::exp(-(v * v) / sigma);
      score[i] *= decay;
    }
  }
  std::erase_if(out, [&](const auto& entry) {
    return entry.second < score_floor;
  });
  return out;
}

/// Convenience form of soft_nms_indexed returning whole rescored records.
inline std::vector<ProposalRecord> soft_nms(
    std::span<const ProposalRecord> records, double sigma, SoftNmsMode mode,
    double score_floor, bool per_class = true) {
  std::vector<ProposalRecord> out;
  for (const auto& [index, new_score] :
       soft_nms_indexed(records, sigma, mode, score_floor, per_class)) {
    ProposalRecord rec = records[index];
    rec.score = new_score;
    out.push_back(rec);
  }
  return out;
}

/// Matrix-style iterative suppression over the regressed boxes. Runs the
/// score-ordered IoU matrix to its fixed point, which reproduces the greedy
/// kept set exactly; only the schedule differs.
inline std::vector<std::size_t> cluster_nms(
    std::span<const ProposalRecord> records, double iou_thresh,
    bool per_class = true) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) {
    throw std::invalid_argument("cluster_nms: iou_thresh must be in (0,1)");
  }
  const auto order = detail::score_order(records);
  const std::size_t n = order.size();
  // Pairwise IoU between score-ranked records, upper triangle only.
  std::vector<double> overlap(n * n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = p + 1; q < n; ++q) {
      if (per_class &&
          records[order[p]].class_id != records[order[q]].class_id) {
        continue;
      }
      overlap[p * n + q] =
          iou(records[order[p]].regressed, records[order[q]].regressed);
    }
  }
  std::vector<char> alive(n, 1);
  for (std::size_t iter = 0; iter < n; ++iter) {
    std::vector<char> next(n, 1);
    for (std::size_t q = 0; q < n; ++q) {
      double max_overlap = 0.0;
      for (std::size_t p = 0; p < q; ++p) {
        if (alive[p]) {
          max_overlap = std::max(max_overlap, overlap[p * n + q]);
        }
      }
      next[q] = max_overlap < iou_thresh ? 1 : 0;
    }
    if (next == alive) break;
    alive = next;
  }
  std::vector<std::size_t> kept;
  for (std::size_t p = 0; p < n; ++p) {
    if (alive[p]) kept.push_back(order[p]);
  }
  return kept;
}

/// A seed proposal plus the records assigned to it. `member_indices` holds
/// the top-m members by descending score, seed first; records captured by
/// the group beyond the cap are consumed but take no part in the merge.
struct Group {
  std::size_t seed_index = 0;
  std::vector<std::size_t> member_indices;
  int class_id = 0;
};

/// Greedy seed grouping over original proposals: repeatedly take the
/// highest-scoring unassigned record as a seed and capture every unassigned
/// record whose proposal overlaps the seed's proposal with IoU >= k.
/// Records are expected to belong to a single image; with per_class set,
/// grouping runs independently per class id. Every record is consumed by
/// exactly one group.
inline std::vector<Group> group_by_seed(std::span<const ProposalRecord> records,
                                        const PostprocessConfig& config) {
  if (!(config.k > 0.0 && config.k < 1.0)) {
    throw std::invalid_argument("group_by_seed: k must be in (0,1)");
  }
  if (config.m < 1) {
    throw std::invalid_argument("group_by_seed: m must be >= 1");
  }
  const auto order = detail::score_order(records);
  std::vector<bool> assigned(records.size(), false);
  std::vector<Group> groups;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t seed = order[pos];
    if (assigned[seed]) continue;
    assigned[seed] = true;
    Group group;
    group.seed_index = seed;
    group.class_id = records[seed].class_id;
    group.member_indices.push_back(seed);
    for (std::size_t qos = pos + 1; qos < order.size(); ++qos) {
      const std::size_t i = order[qos];
      if (assigned[i]) continue;
      if (config.per_class &&
          records[i].class_id != records[seed].class_id) {
        continue;
      }
      if (iou(records[i].proposal, records[seed].proposal) >= config.k) {
        assigned[i] = true;
        if (group.member_indices.size() <
            static_cast<std::size_t>(config.m)) {
          group.member_indices.push_back(i);
        }
      }
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

/// Coordinate-wise min/max over the members' regressed boxes: the union of
/// the predicted intersections.
inline Box uoi_merge(const Group& group,
                     std::span<const ProposalRecord> records) {
  if (group.member_indices.empty()) {
    throw std::invalid_argument("uoi_merge: empty group");
  }
  std::vector<Box> boxes;
  boxes.reserve(group.member_indices.size());
  for (std::size_t i : group.member_indices) {
    boxes.push_back(records[i].regressed);
  }
  return union_bounds(boxes);
}

/// Score-weighted average of the members' regressed coordinates. Falls back
/// to an unweighted mean when all member scores are zero.
inline Box box_voting_merge(const Group& group,
                            std::span<const ProposalRecord> records) {
  if (group.member_indices.empty()) {
    throw std::invalid_argument("box_voting_merge: empty group");
  }
  double wsum = 0.0;
  for (std::size_t i : group.member_indices) {
    wsum += records[i].score;
  }
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  for (std::size_t i : group.member_indices) {
    const double w = wsum > 0.0
                         ? records[i].score / wsum
                         : 1.0 / static_cast<double>(group.member_indices.size());
    x1 += w * records[i].regressed.x1;
    y1 += w * records[i].regressed.y1;
    x2 += w * records[i].regressed.x2;
    y2 += w * records[i].regressed.y2;
  }
  return Box(x1, y1, x2, y2);
}

/// How a group turns into one output box.
enum class MergeRule { kUnionOfIntersections, kWinnerTakesAll, kBoxVoting };

namespace detail {

inline std::vector<Detection> postprocess_grouped(
    std::span<const ProposalRecord> records, const PostprocessConfig& config,
    MergeRule rule) {
  std::vector<ProposalRecord> filtered;
  filtered.reserve(records.size());
  for (const ProposalRecord& r : records) {
    if (r.score >= config.score_floor) filtered.push_back(r);
  }
  const auto groups = group_by_seed(filtered, config);
  std::vector<Detection> out;
  out.reserve(groups.size());
  for (const Group& g : groups) {
    Box merged = [&] {
      switch (rule) {
        case MergeRule::kWinnerTakesAll:
          return filtered[g.seed_index].regressed;
        case MergeRule::kBoxVoting:
          return box_voting_merge(g, filtered);
        case MergeRule::kUnionOfIntersections:
        default:
          return uoi_merge(g, filtered);
      }
    }();
    if (config.refiner) {
      merged = config.refiner(merged);
    }
    const ProposalRecord& seed = filtered[g.seed_index];
    out.push_back(Detection{merged, seed.score, g.class_id, seed.image_id});
  }
  return out;
}

}  // namespace detail

/// Union-over-intersections pipeline for one image: seed grouping over
/// original proposals, union merge of the members' regressed boxes, optional
/// refinement. Emits one detection per group with the seed's score, so the
/// output count matches what greedy NMS at threshold k on the proposals
/// would keep.
inline std::vector<Detection> postprocess_uoi(
    std::span<const ProposalRecord> records, const PostprocessConfig& config) {
  return detail::postprocess_grouped(records, config,
                                     MergeRule::kUnionOfIntersections);
}

/// Same grouping, but each group keeps only its seed's regressed box.
inline std::vector<Detection> postprocess_wta(
    std::span<const ProposalRecord> records, const PostprocessConfig& config) {
  return detail::postprocess_grouped(records, config,
                                     MergeRule::kWinnerTakesAll);
}

/// Same grouping with score-weighted coordinate averaging per group.
inline std::vector<Detection> postprocess_box_voting(
    std::span<const ProposalRecord> records, const PostprocessConfig& config) {
  return detail::postprocess_grouped(records, config, MergeRule::kBoxVoting);
}

}  // namespace uoi
