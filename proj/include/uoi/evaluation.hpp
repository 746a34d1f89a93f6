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
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "uoi/box.hpp"
#include "uoi/grouping.hpp"

namespace uoi {

/// An annotated object. (image_id, instance_id) identifies it uniquely.
struct GroundTruthBox {
  Box box;
  int class_id = 0;
  int image_id = 0;
  int instance_id = 0;
};

/// Outcome of matching a detection set against ground truth at one IoU
/// threshold. Each ground truth and each detection is used at most once.
struct MatchResult {
  struct TpPair {
    std::size_t det_index = 0;
    std::size_t gt_index = 0;
    double iou = 0.0;
  };
  std::vector<TpPair> tp_pairs;
  std::vector<std::size_t> fp_indices;
  std::vector<std::size_t> fn_gt_indices;
};

/// Aggregate metric bundle. All values live in [0, 1]; LRP components are
/// scaled to [0, 100] only at display time.
struct MetricReport {
  double map = 0.0;
  std::map<double, double> ap_at;  // per matching threshold
  double ap_small = 0.0;
  double ap_medium = 0.0;
  double ap_large = 0.0;
  double lrp = 0.0;
  double lrp_loc = 0.0;
  double lrp_fp = 0.0;
  double lrp_fn = 0.0;
  double loc_miou = 0.0;
  double cls_acc = 0.0;
  bool lrp_no_tp = false;         // lrp_loc had no TPs and reads 1
  bool no_spatial_matches = false;  // loc_miou / cls_acc had no pairs
};

namespace detail {

inline std::vector<std::size_t> detection_score_order(
    std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score > dets[b].score;
                   });
  return order;
}

/// Ground truth indices bucketed by (class_id, image_id); class -1 pools
/// all classes. Keeps matching linear in the per-image object count.
inline std::map<std::pair<int, int>, std::vector<std::size_t>>
bucket_ground_truths(std::span<const GroundTruthBox> gts, bool class_aware) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> buckets;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const int cls = class_aware ? gts[g].class_id : -1;
    buckets[{cls, gts[g].image_id}].push_back(g);
  }
  return buckets;
}

}  // namespace detail

/// Greedy matching by descending detection score: each detection takes the
/// unmatched ground truth of maximum IoU in its image (same class unless
/// class_aware is false) provided that IoU >= tau. Leftover detections are
/// false positives, leftover ground truths false negatives. Ties break
/// toward lower indices, so the result is independent of input order up to
/// the score sort.
inline MatchResult match_detections(std::span<const Detection> dets,
                                    std::span<const GroundTruthBox> gts,
                                    double tau, bool class_aware = true) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("match_detections: tau must be in (0,1)");
  }
  MatchResult result;
  std::vector<bool> gt_taken(gts.size(), false);
  const auto buckets = detail::bucket_ground_truths(gts, class_aware);
  const auto order = detail::detection_score_order(dets);
  for (std::size_t d : order) {
    std::size_t best_gt = gts.size();
    double best_iou = 0.0;
    const auto bucket = buckets.find(
        {class_aware ? dets[d].class_id : -1, dets[d].image_id});
    if (bucket != buckets.end()) {
      for (std::size_t g : bucket->second) {
        if (gt_taken[g]) continue;
        const double v = iou(dets[d].box, gts[g].box);
        if (v > best_iou) {
          best_iou = v;
          best_gt = g;
        }
      }
    }
    if (best_gt < gts.size() && best_iou >= tau) {
      gt_taken[best_gt] = true;
      result.tp_pairs.push_back({d, best_gt, best_iou});
    } else {
      result.fp_indices.push_back(d);
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!gt_taken[g]) result.fn_gt_indices.push_back(g);
  }
  return result;
}

namespace detail {

/// Per-class AP at one threshold with an optional area gate on the ground
/// truth. Ground truths outside [area_min, area_max) are ignore targets:
/// detections prefer real targets, may consume an ignore target when no
/// real one fits, and detections left unmatched whose own area falls
/// outside the gate are dropped from the precision-recall tally entirely.
/// Classes with no gated ground truth are skipped; returns the class
/// average, or 0 when nothing was evaluable.
inline double average_precision_gated(std::span<const Detection> dets,
                                      std::span<const GroundTruthBox> gts,
                                      double tau, double area_min,
                                      double area_max) {
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);

  const auto order = detection_score_order(dets);
  const auto buckets = detail::bucket_ground_truths(gts, /*class_aware=*/true);
  double ap_sum = 0.0;
  int ap_classes = 0;
  for (int cls : classes) {
    std::size_t n_real = 0;
    for (const auto& g : gts) {
      if (g.class_id != cls) continue;
      const double a = g.box.area();
      if (a >= area_min && a < area_max) ++n_real;
    }
    if (n_real == 0) continue;
    ++ap_classes;

    std::vector<bool> taken(gts.size(), false);
    std::vector<char> flags;  // 1 = TP, 0 = FP; ignored detections skipped
    flags.reserve(dets.size());
    for (std::size_t d : order) {
      if (dets[d].class_id != cls) continue;
      std::size_t best_real = gts.size();
      double best_real_iou = 0.0;
      std::size_t best_ign = gts.size();
      double best_ign_iou = 0.0;
      const auto bucket = buckets.find({cls, dets[d].image_id});
      if (bucket == buckets.end()) {
        const double a = dets[d].box.area();
        if (a >= area_min && a < area_max) flags.push_back(0);
        continue;
      }
      for (std::size_t g : bucket->second) {
        if (taken[g]) continue;
        const double v = iou(dets[d].box, gts[g].box);
        if (v < tau) continue;
        const double a = gts[g].box.area();
        if (a >= area_min && a < area_max) {
          if (v > best_real_iou) {
            best_real_iou = v;
            best_real = g;
          }
        } else if (v > best_ign_iou) {
          best_ign_iou = v;
          best_ign = g;
        }
      }
      if (best_real < gts.size()) {
        taken[best_real] = true;
        flags.push_back(1);
      } else if (best_ign < gts.size()) {
        taken[best_ign] = true;  // matched an ignore target: not counted
      } else {
        const double a = dets[d].box.area();
        if (a >= area_min && a < area_max) {
          flags.push_back(0);
        }
        // otherwise the unmatched detection is outside the gate: ignored
      }
    }

    // Precision-recall points, then the standard 101-point interpolation.
    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t tp = 0, fp = 0;
    for (char f : flags) {
      f ? ++tp : ++fp;
      precision.push_back(static_cast<double>(tp) /
                          static_cast<double>(tp + fp));
      recall.push_back(static_cast<double>(tp) / static_cast<double>(n_real));
    }
    for (std::size_t i = precision.size(); i-- > 1;) {
      precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double ap = 0.0;
    std::size_t pr_pos = 0;
    for (int step = 0; step <= 100; ++step) {
      const double r = static_cast<double>(step) / 100.0;
      while (pr_pos < recall.size() && recall[pr_pos] < r) ++pr_pos;
      if (pr_pos < precision.size()) ap += precision[pr_pos];
    }
    ap_sum += ap / 101.0;
  }
  return ap_classes > 0 ? ap_sum / ap_classes : 0.0;
}

}  // namespace detail

/// 101-point interpolated average precision at one matching threshold,
/// computed per class over all images and then averaged across classes that
/// have at least one ground truth.
inline double average_precision(std::span<const Detection> dets,
                                std::span<const GroundTruthBox> gts,
                                double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("average_precision: tau must be in (0,1)");
  }
  return detail::average_precision_gated(
      dets, gts, tau, 0.0, std::numeric_limits<double>::infinity());
}

/// mAP over thresholds 0.50:0.05:0.95 plus per-threshold APs and the
/// small/medium/large split (area boundaries 32^2 and 96^2).
struct CocoApReport {
  double map = 0.0;
  std::map<double, double> ap_at;
  double ap_small = 0.0;
  double ap_medium = 0.0;
  double ap_large = 0.0;
};

inline CocoApReport map_coco(std::span<const Detection> dets,
                             std::span<const GroundTruthBox> gts) {
  constexpr double kSmallMax = 32.0 * 32.0;
  constexpr double kMediumMax = 96.0 * 96.0;
  const double inf = std::numeric_limits<double>::infinity();
  CocoApReport report;
  double sum = 0.0, sum_s = 0.0, sum_m = 0.0, sum_l = 0.0;
  int n = 0;
  for (int i = 0; i < 10; ++i) {
    const double tau = 0.5 + 0.05 * i;
    const double ap = detail::average_precision_gated(dets, gts, tau, 0.0, inf);
    report.ap_at[tau] = ap;
    sum += ap;
    sum_s += detail::average_precision_gated(dets, gts, tau, 0.0, kSmallMax);
    sum_m +=
        detail::average_precision_gated(dets, gts, tau, kSmallMax, kMediumMax);
    sum_l += detail::average_precision_gated(dets, gts, tau, kMediumMax, inf);
    ++n;
  }
  report.map = sum / n;
  report.ap_small = sum_s / n;
  report.ap_medium = sum_m / n;
  report.ap_large = sum_l / n;
  return report;
}

/// Localization-recall-precision error and its decomposition, evaluated at
/// the score threshold that minimizes the combined error. Matching is
/// class-aware; the threshold search is shared across classes.
struct LrpBreakdown {
  double lrp = 0.0;
  double lrp_loc = 0.0;
  double lrp_fp = 0.0;
  double lrp_fn = 0.0;
  bool no_tp = false;
};

inline LrpBreakdown lrp(std::span<const Detection> dets,
                        std::span<const GroundTruthBox> gts,
                        double tau = 0.5) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("lrp: tau must be in (0,1)");
  }
  // Greedy matching is prefix-stable in score order: whether detection i
  // matches does not depend on lower-scored detections. One pass gives the
  // TP/FP status of every score-threshold prefix.
  const auto order = detail::detection_score_order(dets);
  const auto buckets = detail::bucket_ground_truths(gts, /*class_aware=*/true);
  std::vector<bool> taken(gts.size(), false);
  std::vector<double> tp_iou;  // per prefix position; NaN marks FP
  tp_iou.reserve(order.size());
  for (std::size_t d : order) {
    std::size_t best_gt = gts.size();
    double best_iou = 0.0;
    const auto bucket = buckets.find({dets[d].class_id, dets[d].image_id});
    if (bucket != buckets.end()) {
      for (std::size_t g : bucket->second) {
        if (taken[g]) continue;
        const double v = iou(dets[d].box, gts[g].box);
        if (v > best_iou) {
          best_iou = v;
          best_gt = g;
        }
      }
    }
    if (best_gt < gts.size() && best_iou >= tau) {
      taken[best_gt] = true;
      tp_iou.push_back(best_iou);
    } else {
      tp_iou.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }

  const double n_gt = static_cast<double>(gts.size());
  double best_value = gts.empty() ? 0.0 : 1.0;  // the empty prefix
  std::size_t best_tp = 0, best_fp = 0;
  double best_loc_sum = 0.0;
  std::size_t tp = 0, fp = 0;
  double loc_sum = 0.0;
  for (std::size_t i = 0; i < tp_iou.size(); ++i) {
    if (std::isnan(tp_iou[i])) {
      ++fp;
    } else {
      ++tp;
      loc_sum += (1.0 - tp_iou[i]) / (1.0 - tau);
    }
    const double fn = n_gt - static_cast<double>(tp);
    const double denom = static_cast<double>(tp + fp) + fn;
    if (denom <= 0.0) continue;
    const double value = (loc_sum + static_cast<double>(fp) + fn) / denom;
    if (value < best_value) {
      best_value = value;
      best_tp = tp;
      best_fp = fp;
      best_loc_sum = loc_sum;
    }
  }

  LrpBreakdown out;
  const double fn = n_gt - static_cast<double>(best_tp);
  out.lrp = best_value;
  out.no_tp = best_tp == 0;
  out.lrp_loc = best_tp > 0 ? best_loc_sum / static_cast<double>(best_tp) : 1.0;
  out.lrp_fp = best_tp + best_fp > 0
                   ? static_cast<double>(best_fp) /
                         static_cast<double>(best_tp + best_fp)
                   : 0.0;
  out.lrp_fn = static_cast<double>(best_tp) + fn > 0.0
                   ? fn / (static_cast<double>(best_tp) + fn)
                   : 0.0;
  if (gts.empty() && dets.empty()) {
    out.no_tp = false;
    out.lrp_loc = 0.0;
  }
  return out;
}

/// Mean IoU over class-agnostic spatial matches, and the fraction of those
/// matches whose predicted class is correct.
struct LocalizationStats {
  double loc_miou = 0.0;
  double cls_acc = 0.0;
  bool no_matches = false;
};

inline LocalizationStats localization_stats(std::span<const Detection> dets,
                                            std::span<const GroundTruthBox> gts,
                                            double tau) {
  const MatchResult match =
      match_detections(dets, gts, tau, /*class_aware=*/false);
  LocalizationStats out;
  if (match.tp_pairs.empty()) {
    out.no_matches = true;
    return out;
  }
  double iou_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& pair : match.tp_pairs) {
    iou_sum += pair.iou;
    if (dets[pair.det_index].class_id == gts[pair.gt_index].class_id) {
      ++correct;
    }
  }
  out.loc_miou = iou_sum / static_cast<double>(match.tp_pairs.size());
  out.cls_acc =
      static_cast<double>(correct) / static_cast<double>(match.tp_pairs.size());
  return out;
}

inline double localization_miou(std::span<const Detection> dets,
                                std::span<const GroundTruthBox> gts,
                                double tau) {
  return localization_stats(dets, gts, tau).loc_miou;
}

inline double classification_accuracy(std::span<const Detection> dets,
                                      std::span<const GroundTruthBox> gts,
                                      double tau) {
  return localization_stats(dets, gts, tau).cls_acc;
}

/// Full metric bundle: COCO-style AP block, LRP decomposition at `tau`,
/// and the localization/classification split at `tau`.
inline MetricReport evaluate_detections(std::span<const Detection> dets,
                                        std::span<const GroundTruthBox> gts,
                                        double tau = 0.5) {
  MetricReport report;
  const CocoApReport ap = map_coco(dets, gts);
  report.map = ap.map;
  report.ap_at = ap.ap_at;
  report.ap_small = ap.ap_small;
  report.ap_medium = ap.ap_medium;
  report.ap_large = ap.ap_large;
  const LrpBreakdown err = lrp(dets, gts, tau);
  report.lrp = err.lrp;
  report.lrp_loc = err.lrp_loc;
  report.lrp_fp = err.lrp_fp;
  report.lrp_fn = err.lrp_fn;
  report.lrp_no_tp = err.no_tp;
  const LocalizationStats loc = localization_stats(dets, gts, tau);
  report.loc_miou = loc.loc_miou;
  report.cls_acc = loc.cls_acc;
  report.no_spatial_matches = loc.no_matches;
  return report;
}

}  // namespace uoi
