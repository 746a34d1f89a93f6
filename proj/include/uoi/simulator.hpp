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
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "uoi/box.hpp"
#include "uoi/evaluation.hpp"
#include "uoi/grouping.hpp"
#include "uoi/random.hpp"

namespace uoi {

/// What the oracle regression head predicts for each proposal: the overlap
/// with its object, or the whole object box.
enum class RegressorMode { kIntersection, kFullBox };

/// Post-processing pipeline under test.
enum class Pipeline { kWinnerTakesAll, kUnionOverIntersections, kBoxVoting };

/// Monte-Carlo experiment parameters. A (config, seed) pair fully
/// determines every generated byte.
///
/// The regression noise model is a modeling assumption, not a measured
/// quantity: intersection targets are perturbed with a flat per-coordinate
/// std of sigma0 * sqrt(gt area), while full-box targets additionally pay
/// kappa * (distance from the proposal's visible extent) per coordinate.
/// That encodes the premise that predicting geometry outside the proposal
/// is harder than predicting geometry inside it.
struct SimConfig {
  std::uint64_t rng_seed = 7;
  int n_scenes = 1000;
  std::pair<int, int> objects_per_scene{2, 8};
  std::pair<int, int> image_size{640, 480};  // (W, H)
  std::pair<int, int> proposals_per_object{8, 10};
  std::pair<double, double> proposal_iou_band{0.5, 0.9};
  RegressorMode regressor_mode = RegressorMode::kIntersection;
  double sigma0 = 0.02;  // base coordinate noise, fraction of object scale
  double kappa = 0.15;   // extra noise per unit of extrapolation distance
  double classifier_accuracy = 0.8;
  int num_classes = 10;
  PostprocessConfig postprocess;
  Pipeline pipeline = Pipeline::kUnionOverIntersections;
};

/// One generated image: ground truths, scored proposals with oracle
/// regressions, and for diagnostics the index of the object that produced
/// each proposal.
struct Scene {
  std::vector<GroundTruthBox> gts;
  std::vector<ProposalRecord> proposals;
  std::vector<int> proposal_gt;
};

namespace detail {

// Object size model. Scales are sampled uniformly per bucket so generated
// scenes exercise the small/medium/large AP split.
constexpr double kScaleSmallLo = 10.0, kScaleSmallHi = 30.0;
constexpr double kScaleMediumLo = 34.0, kScaleMediumHi = 90.0;
constexpr double kScaleLargeLo = 100.0, kScaleLargeHi = 200.0;
constexpr double kLogAspectHalfRange = 0.51;  // aspect ratio in ~[0.6, 1.67]

// Proposal model: undersized copies of the object, translated and
// rescaled. Low overlap bands mean proposals that see only part of the
// object, so the base scale shrinks toward sqrt(band mid) and the jitter
// widens as the band drops; same-object proposals still overlap each other
// enough for seed grouping while covering complementary parts.
constexpr double kShiftJitterGain = 0.135;  // per squared quality deficit
constexpr double kShiftWidthGain = 0.132;   // per unit of band width
constexpr double kBaseScaleExponent = 0.50;
constexpr double kScaleJitterBase = 0.02;
constexpr double kScaleJitterGain = 0.10;   // per unit of quality deficit
constexpr double kScaleWidthGain = 0.15;    // per unit of band width
constexpr int kProposalRetryCap = 10000;

// Scene layout: a fraction of objects spawn as same-class neighbors of the
// previous object, giving the crowded instances that stress grouping.
constexpr double kCrowdFraction = 0.37;
constexpr double kCrowdDistanceLo = 0.22;
constexpr double kCrowdDistanceHi = 0.85;

// Confidence model: quality signal plus observation noise, clamped away
// from 0 and 1.
constexpr double kScoreBase = 0.15;
constexpr double kScoreGain = 0.70;
constexpr double kScoreNoise = 0.05;

inline double max_object_side() {
  return kScaleLargeHi * std::exp(0.5 * kLogAspectHalfRange);
}

}  // namespace detail

/// Field-by-field validation problems; empty means the config is usable.
inline std::vector<std::string> validate_config(const SimConfig& config) {
  std::vector<std::string> errors;
  auto fail = [&](const std::string& msg) { errors.push_back(msg); };
  if (config.n_scenes < 0) fail("scenes: must be >= 0");
  if (config.objects_per_scene.first < 0 ||
      config.objects_per_scene.first > config.objects_per_scene.second) {
    fail("objects_per_scene: need 0 <= lo <= hi");
  }
  if (config.proposals_per_object.first < 0 ||
      config.proposals_per_object.first > config.proposals_per_object.second) {
    fail("proposals_per_object: need 0 <= lo <= hi");
  }
  const double min_dim =
      std::min(config.image_size.first, config.image_size.second);
  if (config.objects_per_scene.second > 0 &&
      min_dim < detail::max_object_side()) {
    std::ostringstream os;
    os << "image_size: objects can be larger than the image; need min "
          "dimension >= "
       << static_cast<int>(std::ceil(detail::max_object_side()));
    fail(os.str());
  }
  const auto [band_lo, band_hi] = config.proposal_iou_band;
  if (!(band_lo >= 0.0 && band_lo < band_hi && band_hi <= 1.0)) {
    fail("proposal_iou_band: need 0 <= lo < hi <= 1");
  }
  if (config.sigma0 < 0.0) fail("sigma0: must be >= 0");
  if (config.kappa < 0.0) fail("kappa: must be >= 0");
  if (!(config.classifier_accuracy >= 0.0 &&
        config.classifier_accuracy <= 1.0)) {
    fail("classifier_accuracy: must be in [0,1]");
  }
  if (config.num_classes < 1) fail("classes: must be >= 1");
  if (!(config.postprocess.k > 0.0 && config.postprocess.k < 1.0)) {
    fail("k: must be in (0,1)");
  }
  if (config.postprocess.m < 1) fail("m: must be >= 1");
  if (config.postprocess.score_floor < 0.0) fail("score_floor: must be >= 0");
  return errors;
}

inline void ensure_valid(const SimConfig& config) {
  const auto errors = validate_config(config);
  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) {
      if (!joined.empty()) joined += "; ";
      joined += e;
    }
    throw std::invalid_argument("invalid simulation config: " + joined);
  }
}

/// Perturbed copies of a ground truth box whose IoU with it falls inside
/// the configured band (strictly positive overlap always). Rejection
/// sampling with a bounded retry budget; an unreachable band is an error
/// rather than a silently widened one.
inline std::vector<Box> generate_proposals(const Box& gt,
                                           const SimConfig& config,
                                           RngStream& rng) {
  const auto [lo, hi] = config.proposal_iou_band;
  const double mid = 0.5 * (lo + hi);
  const double spread = 1.0 - mid;
  const double width = hi - lo;
  const double base_scale =
      std::pow(std::max(mid, 0.05), detail::kBaseScaleExponent);
  const double shift_sd = detail::kShiftJitterGain * spread * spread +
                          detail::kShiftWidthGain * width;
  const double scale_sd = detail::kScaleJitterBase +
                          detail::kScaleJitterGain * spread +
                          detail::kScaleWidthGain * width;
  const int count = rng.uniform_int(config.proposals_per_object.first,
                                    config.proposals_per_object.second);
  std::vector<Box> proposals;
  proposals.reserve(count);
  for (int p = 0; p < count; ++p) {
    bool accepted = false;
    for (int attempt = 0; attempt < detail::kProposalRetryCap; ++attempt) {
      const double cx =
          gt.center_x() + rng.normal(0.0, shift_sd * gt.width());
      const double cy =
          gt.center_y() + rng.normal(0.0, shift_sd * gt.height());
      const double size = std::exp(rng.normal(0.0, scale_sd));
      const double aspect = std::exp(rng.normal(0.0, 0.5 * scale_sd));
      const double w = gt.width() * base_scale * size * aspect;
      const double h = gt.height() * base_scale * size / aspect;
      const Box candidate(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w,
                          cy + 0.5 * h);
      const double overlap = iou(candidate, gt);
      if (overlap >= lo && overlap <= hi && overlap > 0.0) {
        proposals.push_back(candidate);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      std::ostringstream os;
      os << "generate_proposals: overlap band [" << lo << ", " << hi
         << "] unreachable after " << detail::kProposalRetryCap << " attempts";
      throw std::runtime_error(os.str());
    }
  }
  return proposals;
}

/// Oracle regression with configurable difficulty. Intersection mode
/// predicts the proposal/object overlap with flat noise; full-box mode
/// predicts the whole object with extra noise proportional to how far each
/// target coordinate lies outside the proposal.
inline Box oracle_regress(const Box& proposal, const Box& gt,
                          const SimConfig& config, RngStream& rng) {
  const auto inter = intersect(proposal, gt);
  if (!inter) {
    throw std::invalid_argument("oracle_regress: disjoint proposal and gt");
  }
  const double scale = std::sqrt(gt.area());
  double coords[4];
  if (config.regressor_mode == RegressorMode::kIntersection) {
    const Box& target = *inter;
    const double sd = config.sigma0 * scale;
    coords[0] = target.x1 + rng.normal(0.0, sd);
    coords[1] = target.y1 + rng.normal(0.0, sd);
    coords[2] = target.x2 + rng.normal(0.0, sd);
    coords[3] = target.y2 + rng.normal(0.0, sd);
  } else {
    const double targets[4] = {gt.x1, gt.y1, gt.x2, gt.y2};
    const double clamped[4] = {
        std::clamp(gt.x1, proposal.x1, proposal.x2),
        std::clamp(gt.y1, proposal.y1, proposal.y2),
        std::clamp(gt.x2, proposal.x1, proposal.x2),
        std::clamp(gt.y2, proposal.y1, proposal.y2),
    };
    for (int i = 0; i < 4; ++i) {
      const double extrapolation = std::abs(targets[i] - clamped[i]);
      const double sd = config.sigma0 * scale + config.kappa * extrapolation;
      coords[i] = targets[i] + rng.normal(0.0, sd);
    }
  }
  if (coords[0] > coords[2]) std::swap(coords[0], coords[2]);
  if (coords[1] > coords[3]) std::swap(coords[1], coords[3]);
  return Box(coords[0], coords[1], coords[2], coords[3]);
}

/// Noisy label oracle: returns the true class with the configured
/// probability, otherwise a uniformly random wrong class.
inline int oracle_classify(int true_class, const SimConfig& config,
                           RngStream& rng) {
  if (config.num_classes < 2) return true_class;
  if (rng.uniform() < config.classifier_accuracy) return true_class;
  const int other = rng.uniform_int(0, config.num_classes - 2);
  return other >= true_class ? other + 1 : other;
}

/// Deterministically generates scene `scene_index`. Every random draw comes
/// from the stream keyed by (rng_seed, scene_index), so scenes can be
/// produced in any order or on any thread with identical results. Some
/// objects spawn as same-class neighbors of the previous object to include
/// crowded instances.
inline Scene generate_scene(const SimConfig& config, int scene_index) {
  RngStream rng(config.rng_seed, static_cast<std::uint64_t>(scene_index));
  Scene scene;
  const double width = config.image_size.first;
  const double height = config.image_size.second;
  const int n_objects = rng.uniform_int(config.objects_per_scene.first,
                                        config.objects_per_scene.second);
  int prev_bucket = 0;
  int prev_class = 0;
  double prev_cx = 0.0, prev_cy = 0.0, prev_scale = 0.0;
  for (int obj = 0; obj < n_objects; ++obj) {
    const bool crowded =
        obj > 0 && rng.uniform() < detail::kCrowdFraction;
    const int bucket = crowded ? prev_bucket : rng.uniform_int(0, 2);
    double scale_lo = detail::kScaleSmallLo, scale_hi = detail::kScaleSmallHi;
    if (bucket == 1) {
      scale_lo = detail::kScaleMediumLo;
      scale_hi = detail::kScaleMediumHi;
    } else if (bucket == 2) {
      scale_lo = detail::kScaleLargeLo;
      scale_hi = detail::kScaleLargeHi;
    }
    const double scale =
        crowded ? std::clamp(prev_scale * std::exp(rng.normal(0.0, 0.10)),
                             scale_lo, scale_hi)
                : rng.uniform(scale_lo, scale_hi);
    const double aspect = std::exp(
        rng.uniform(-detail::kLogAspectHalfRange, detail::kLogAspectHalfRange));
    const double w = scale * std::sqrt(aspect);
    const double h = scale / std::sqrt(aspect);
    if (w > width || h > height) {
      throw std::invalid_argument("generate_scene: object larger than image");
    }
    double x1 = 0.0, y1 = 0.0;
    if (crowded) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double dist = rng.uniform(detail::kCrowdDistanceLo,
                                      detail::kCrowdDistanceHi) *
                          0.5 * (prev_scale + scale);
      x1 = std::clamp(prev_cx + dist * std::cos(angle) - 0.5 * w, 0.0,
                      width - w);
      y1 = std::clamp(prev_cy + dist * std::sin(angle) - 0.5 * h, 0.0,
                      height - h);
    } else {
      x1 = rng.uniform(0.0, width - w);
      y1 = rng.uniform(0.0, height - h);
    }
    const Box gt(x1, y1, x1 + w, y1 + h);
    const int true_class =
        crowded ? prev_class : rng.uniform_int(0, config.num_classes - 1);
    prev_bucket = bucket;
    prev_class = true_class;
    prev_cx = gt.center_x();
    prev_cy = gt.center_y();
    prev_scale = scale;
    scene.gts.push_back(GroundTruthBox{gt, true_class, scene_index, obj});

    const auto boxes = generate_proposals(gt, config, rng);
    for (const Box& proposal : boxes) {
      const double quality = iou(proposal, gt);
      const double raw = detail::kScoreBase + detail::kScoreGain * quality +
                         detail::kScoreNoise * rng.normal();
      ProposalRecord record;
      record.proposal = proposal;
      record.regressed = oracle_regress(proposal, gt, config, rng);
      record.score = std::clamp(raw, 0.01, 0.999);
      record.class_id = oracle_classify(true_class, config, rng);
      record.image_id = scene_index;
      scene.proposals.push_back(record);
      scene.proposal_gt.push_back(obj);
    }
  }
  return scene;
}

/// Second-stage oracle for plugging into PostprocessConfig::refiner: snaps
/// a merged box to its best-overlapping ground truth plus coordinate noise
/// of `sigma` * sqrt(gt area). Boxes overlapping nothing pass through.
inline BoxRefiner make_oracle_refiner(std::vector<GroundTruthBox> gts,
                                      double sigma, std::uint64_t seed) {
  auto rng = std::make_shared<RngStream>(seed, 0x5eedu);
  return [gts = std::move(gts), sigma, rng](const Box& merged) {
    const GroundTruthBox* best = nullptr;
    double best_iou = 0.0;
    for (const auto& gt : gts) {
      const double v = iou(merged, gt.box);
      if (v > best_iou) {
        best_iou = v;
        best = &gt;
      }
    }
    if (best == nullptr) return merged;
    const double sd = sigma * std::sqrt(best->box.area());
    double x1 = best->box.x1 + rng->normal(0.0, sd);
    double y1 = best->box.y1 + rng->normal(0.0, sd);
    double x2 = best->box.x2 + rng->normal(0.0, sd);
    double y2 = best->box.y2 + rng->normal(0.0, sd);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    return Box(x1, y1, x2, y2);
  };
}

/// Scene-level parallelism cap: the UOI_THREADS environment variable when
/// set (minimum 1), otherwise the machine default.
inline unsigned effective_thread_count() {
  if (const char* env = std::getenv("UOI_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed >= 1) return static_cast<unsigned>(parsed);
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

namespace detail {

inline std::vector<Detection> postprocess_scene(const Scene& scene,
                                                const SimConfig& config) {
  switch (config.pipeline) {
    case Pipeline::kWinnerTakesAll:
      return postprocess_wta(scene.proposals, config.postprocess);
    case Pipeline::kBoxVoting:
      return postprocess_box_voting(scene.proposals, config.postprocess);
    case Pipeline::kUnionOverIntersections:
    default:
      return postprocess_uoi(scene.proposals, config.postprocess);
  }
}

}  // namespace detail

/// Generates every scene, runs the configured pipeline on each, and
/// evaluates the pooled detections. Scenes are processed on up to
/// effective_thread_count() threads; per-scene RNG streams and index-order
/// pooling keep the result identical at any thread count.
inline MetricReport run_experiment(const SimConfig& config) {
  ensure_valid(config);
  const int n = config.n_scenes;
  std::vector<std::vector<Detection>> dets_per_scene(n);
  std::vector<std::vector<GroundTruthBox>> gts_per_scene(n);

  const unsigned threads =
      std::min<unsigned>(effective_thread_count(), n > 0 ? n : 1);
  auto worker = [&](unsigned first) {
    for (int i = static_cast<int>(first); i < n;
         i += static_cast<int>(threads)) {
      Scene scene = generate_scene(config, i);
      dets_per_scene[i] = detail::postprocess_scene(scene, config);
      gts_per_scene[i] = std::move(scene.gts);
    }
  };
  if (threads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }

  std::vector<Detection> dets;
  std::vector<GroundTruthBox> gts;
  for (int i = 0; i < n; ++i) {
    dets.insert(dets.end(), dets_per_scene[i].begin(), dets_per_scene[i].end());
    gts.insert(gts.end(), gts_per_scene[i].begin(), gts_per_scene[i].end());
  }
  MetricReport report = evaluate_detections(dets, gts, 0.5);
  // The localization split uses a deep association floor rather than the
  // 0.5 matching threshold: mean IoU over everything plausibly associated
  // with an object, so poorly localized outputs lower the number instead
  // of dropping out of it.
  constexpr double kLocalizationTau = 0.1;
  const LocalizationStats loc = localization_stats(dets, gts, kLocalizationTau);
  report.loc_miou = loc.loc_miou;
  report.cls_acc = loc.cls_acc;
  report.no_spatial_matches = loc.no_matches;
  return report;
}

enum class SweepAxis {
  kProposalQuality,
  kGroupSize,
  kClassifierAccuracy,
  kGroupingThresholdK,
  kRegressorMode,
};

struct SweepRow {
  std::string axis_value;
  Pipeline pipeline;
  MetricReport report;
};

inline const char* pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::kWinnerTakesAll:
      return "wta";
    case Pipeline::kBoxVoting:
      return "voting";
    case Pipeline::kUnionOverIntersections:
    default:
      return "uoi";
  }
}

inline Pipeline parse_pipeline(const std::string& name) {
  if (name == "wta") return Pipeline::kWinnerTakesAll;
  if (name == "uoi") return Pipeline::kUnionOverIntersections;
  if (name == "voting") return Pipeline::kBoxVoting;
  throw std::invalid_argument("unknown pipeline: " + name +
                              " (expected wta|uoi|voting)");
}

inline SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "proposal-quality") return SweepAxis::kProposalQuality;
  if (name == "group-size") return SweepAxis::kGroupSize;
  if (name == "classifier-accuracy") return SweepAxis::kClassifierAccuracy;
  if (name == "threshold-k") return SweepAxis::kGroupingThresholdK;
  if (name == "regressor-mode") return SweepAxis::kRegressorMode;
  throw std::invalid_argument(
      "unknown sweep axis: " + name +
      " (expected proposal-quality|group-size|classifier-accuracy|"
      "threshold-k|regressor-mode)");
}

/// Applies one textual axis value to a config copy. Band values use the
/// form "lo:hi"; regressor modes are "intersection" or "fullbox".
inline SimConfig apply_axis_value(const SimConfig& base, SweepAxis axis,
                                  const std::string& value) {
  SimConfig config = base;
  try {
    switch (axis) {
      case SweepAxis::kProposalQuality: {
        const auto sep = value.find(':');
        if (sep == std::string::npos) {
          throw std::invalid_argument("expected lo:hi");
        }
        config.proposal_iou_band = {std::stod(value.substr(0, sep)),
                                    std::stod(value.substr(sep + 1))};
        break;
      }
      case SweepAxis::kGroupSize:
        config.postprocess.m = std::stoi(value);
        break;
      case SweepAxis::kClassifierAccuracy:
        config.classifier_accuracy = std::stod(value);
        break;
      case SweepAxis::kGroupingThresholdK:
        config.postprocess.k = std::stod(value);
        break;
      case SweepAxis::kRegressorMode:
        if (value == "intersection") {
          config.regressor_mode = RegressorMode::kIntersection;
        } else if (value == "fullbox") {
          config.regressor_mode = RegressorMode::kFullBox;
        } else {
          throw std::invalid_argument("expected intersection|fullbox");
        }
        break;
    }
  } catch (const std::exception& e) {
    throw std::invalid_argument("bad axis value '" + value + "': " + e.what());
  }
  return config;
}

/// One experiment per (value, pipeline), rows in input order. Each row is
/// an independent seeded run, so the table is reproducible byte for byte.
inline std::vector<SweepRow> sweep(const SimConfig& base, SweepAxis axis,
                                   std::span<const std::string> values,
                                   std::span<const Pipeline> pipelines) {
  std::vector<SweepRow> rows;
  rows.reserve(values.size() * pipelines.size());
  for (const std::string& value : values) {
    SimConfig config = apply_axis_value(base, axis, value);
    for (Pipeline pipeline : pipelines) {
      config.pipeline = pipeline;
      rows.push_back(SweepRow{value, pipeline, run_experiment(config)});
    }
  }
  return rows;
}

}  // namespace uoi
