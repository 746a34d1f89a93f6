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

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uoi/evaluation.hpp"
#include "uoi/grouping.hpp"
#include "uoi/io.hpp"
#include "uoi/simulator.hpp"

namespace {

using uoi::Box;
using uoi::Detection;
using uoi::DetectionRecord;
using uoi::GroundTruthBox;
using uoi::MetricReport;
using uoi::PostprocessConfig;
using uoi::ProposalRecord;
using uoi::SimConfig;

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::string format_fixed(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

void print_report(const MetricReport& report) {
  auto row = [](const char* name, double value, int digits = 4) {
    std::printf("%-22s %8.*f\n", name, digits, value);
  };
  std::printf("%-22s %8s\n", "Metric", "Value");
  std::printf("%-22s %8s\n", "----------------------", "--------");
  row("mAP", report.map);
  row("AP@0.50", report.ap_at.count(0.50) ? report.ap_at.at(0.50) : 0.0);
  row("AP@0.75", report.ap_at.count(0.75) ? report.ap_at.at(0.75) : 0.0);
  row("AP (small)", report.ap_small);
  row("AP (medium)", report.ap_medium);
  row("AP (large)", report.ap_large);
  row("LRP (x100)", 100.0 * report.lrp, 2);
  row("LRP loc (x100)", 100.0 * report.lrp_loc, 2);
  row("LRP fp (x100)", 100.0 * report.lrp_fp, 2);
  row("LRP fn (x100)", 100.0 * report.lrp_fn, 2);
  row("Localization mIoU", report.loc_miou);
  row("Classification acc", report.cls_acc);
  if (report.lrp_no_tp) {
    std::printf("note: no true positives at the optimal threshold; "
                "LRP loc reads 1\n");
  }
  if (report.no_spatial_matches) {
    std::printf("note: no spatial matches; mIoU and accuracy read 0\n");
  }
  std::printf("\n");
  std::printf("map=%s\n", format_fixed(report.map).c_str());
  std::printf("ap50=%s\n",
              format_fixed(report.ap_at.count(0.50) ? report.ap_at.at(0.50)
                                                    : 0.0)
                  .c_str());
  std::printf("ap75=%s\n",
              format_fixed(report.ap_at.count(0.75) ? report.ap_at.at(0.75)
                                                    : 0.0)
                  .c_str());
  std::printf("ap_small=%s\n", format_fixed(report.ap_small).c_str());
  std::printf("ap_medium=%s\n", format_fixed(report.ap_medium).c_str());
  std::printf("ap_large=%s\n", format_fixed(report.ap_large).c_str());
  std::printf("lrp=%s\n", format_fixed(report.lrp).c_str());
  std::printf("lrp_loc=%s\n", format_fixed(report.lrp_loc).c_str());
  std::printf("lrp_fp=%s\n", format_fixed(report.lrp_fp).c_str());
  std::printf("lrp_fn=%s\n", format_fixed(report.lrp_fn).c_str());
  std::printf("loc_miou=%s\n", format_fixed(report.loc_miou).c_str());
  std::printf("cls_acc=%s\n", format_fixed(report.cls_acc).c_str());
}

ProposalRecord to_proposal_record(const DetectionRecord& rec) {
  ProposalRecord out;
  out.proposal = rec.proposal ? *rec.proposal : rec.box;
  out.regressed = rec.box;
  out.score = rec.score;
  out.class_id = rec.class_id;
  out.image_id = rec.image_id;
  return out;
}

DetectionRecord to_detection_record(const Detection& det) {
  DetectionRecord out;
  out.image_id = det.image_id;
  out.class_id = det.class_id;
  out.score = det.score;
  out.box = det.box;
  return out;
}

/// Groups record indices by image id, images in ascending order.
std::map<int, std::vector<std::size_t>> partition_by_image(
    const std::vector<DetectionRecord>& records) {
  std::map<int, std::vector<std::size_t>> images;
  for (std::size_t i = 0; i < records.size(); ++i) {
    images[records[i].image_id].push_back(i);
  }
  return images;
}

struct PostprocessArgs {
  std::string method;
  std::string in_path;
  std::string out_path;
  double k = 0.5;
  int m = 5;
  double score_floor = 0.05;
  double sigma = 0.5;
  std::string soft_mode = "gaussian";
  bool per_class = true;
};

int run_postprocess(const PostprocessArgs& args) {
  const auto records = uoi::read_detection_file(args.in_path);
  const bool needs_proposals =
      args.method == "uoi" || args.method == "box-voting";
  if (needs_proposals) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!records[i].proposal) {
        std::ostringstream os;
        os << args.in_path << ": record " << i + 1
           << " lacks the proposal field required by method '" << args.method
           << "'";
        throw std::runtime_error(os.str());
      }
    }
  }

  PostprocessConfig config;
  config.k = args.k;
  config.m = args.m;
  config.score_floor = args.score_floor;
  config.per_class = args.per_class;

  uoi::SoftNmsMode soft_mode;
  if (args.soft_mode == "linear") {
    soft_mode = uoi::SoftNmsMode::kLinear;
  } else if (args.soft_mode == "gaussian") {
    soft_mode = uoi::SoftNmsMode::kGaussian;
  } else {
    throw std::runtime_error("unknown soft-nms mode: " + args.soft_mode);
  }

  std::vector<DetectionRecord> output;
  for (const auto& [image_id, indices] : partition_by_image(records)) {
    std::vector<ProposalRecord> image_records;
    image_records.reserve(indices.size());
    for (std::size_t i : indices) {
      image_records.push_back(to_proposal_record(records[i]));
    }
    // Every method emits plain detections: image_id, class_id, score, box.
    auto emit = [&](const ProposalRecord& rec, double score) {
      DetectionRecord out_rec;
      out_rec.image_id = rec.image_id;
      out_rec.class_id = rec.class_id;
      out_rec.score = score;
      out_rec.box = rec.regressed;
      output.push_back(out_rec);
    };
    if (args.method == "nms") {
      for (std::size_t kept : uoi::greedy_nms(image_records, args.k,
                                              uoi::BoxKey::kRegressed,
                                              args.per_class)) {
        emit(image_records[kept], image_records[kept].score);
      }
    } else if (args.method == "cluster-nms") {
      for (std::size_t kept :
           uoi::cluster_nms(image_records, args.k, args.per_class)) {
        emit(image_records[kept], image_records[kept].score);
      }
    } else if (args.method == "soft-nms") {
      for (const auto& [kept, new_score] :
           uoi::soft_nms_indexed(image_records, args.sigma, soft_mode,
                                 args.score_floor, args.per_class)) {
        emit(image_records[kept], new_score);
      }
    } else if (args.method == "uoi" || args.method == "box-voting") {
      const auto detections =
          args.method == "uoi"
              ? uoi::postprocess_uoi(image_records, config)
              : uoi::postprocess_box_voting(image_records, config);
      for (const Detection& det : detections) {
        output.push_back(to_detection_record(det));
      }
    } else {
      throw std::runtime_error("unknown method: " + args.method);
    }
  }
  uoi::write_detection_file(args.out_path, output);
  return 0;
}

int run_eval(const std::string& dets_path, const std::string& gts_path,
             double tau) {
  const auto det_records = uoi::read_detection_file(dets_path);
  const auto gts = uoi::read_ground_truth_file(gts_path);

  std::set<int> det_images, gt_images;
  for (const auto& d : det_records) det_images.insert(d.image_id);
  for (const auto& g : gts) gt_images.insert(g.image_id);
  std::vector<int> shared;
  std::set_intersection(det_images.begin(), det_images.end(),
                        gt_images.begin(), gt_images.end(),
                        std::back_inserter(shared));
  if (!det_records.empty() && !gts.empty() && shared.empty()) {
    std::fprintf(stderr,
                 "warning: detections and ground truth share no image_id; "
                 "reporting all-zero metrics\n");
    print_report(MetricReport{});
    return 0;
  }

  std::vector<Detection> dets;
  dets.reserve(det_records.size());
  for (const auto& rec : det_records) {
    dets.push_back(Detection{rec.box, rec.score, rec.class_id, rec.image_id});
  }
  print_report(uoi::evaluate_detections(dets, gts, tau));
  return 0;
}

/// Flag overrides shared by `simulate` and `sweep`.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> scenes;
  std::optional<std::string> objects;    // lo:hi
  std::optional<std::string> proposals;  // lo:hi
  std::optional<std::string> image_size; // WxH
  std::optional<std::string> band;       // lo:hi
  std::optional<std::string> regressor_mode;
  std::optional<double> sigma0;
  std::optional<double> kappa;
  std::optional<double> classifier_accuracy;
  std::optional<int> classes;
  std::optional<double> k;
  std::optional<int> m;
  std::optional<double> score_floor;
  std::optional<bool> per_class;
  std::optional<std::string> pipeline;
};

std::pair<double, double> parse_range(const std::string& text,
                                      char sep, const char* what) {
  const auto pos = text.find(sep);
  if (pos == std::string::npos) {
    throw std::runtime_error(std::string(what) + ": expected lo" + sep +
                             std::string("hi"));
  }
  return {std::stod(text.substr(0, pos)), std::stod(text.substr(pos + 1))};
}

void apply_overrides(SimConfig& config, const ConfigOverrides& ov) {
  if (ov.seed) config.rng_seed = *ov.seed;
  if (ov.scenes) config.n_scenes = *ov.scenes;
  if (ov.objects) {
    const auto [lo, hi] = parse_range(*ov.objects, ':', "--objects");
    config.objects_per_scene = {static_cast<int>(lo), static_cast<int>(hi)};
  }
  if (ov.proposals) {
    const auto [lo, hi] = parse_range(*ov.proposals, ':', "--proposals");
    config.proposals_per_object = {static_cast<int>(lo),
                                   static_cast<int>(hi)};
  }
  if (ov.image_size) {
    const auto [w, h] = parse_range(*ov.image_size, 'x', "--image-size");
    config.image_size = {static_cast<int>(w), static_cast<int>(h)};
  }
  if (ov.band) {
    config.proposal_iou_band = parse_range(*ov.band, ':', "--band");
  }
  if (ov.regressor_mode) {
    if (*ov.regressor_mode == "intersection") {
      config.regressor_mode = uoi::RegressorMode::kIntersection;
    } else if (*ov.regressor_mode == "fullbox") {
      config.regressor_mode = uoi::RegressorMode::kFullBox;
    } else {
      throw std::runtime_error("--regressor-mode: expected intersection|fullbox");
    }
  }
  if (ov.sigma0) config.sigma0 = *ov.sigma0;
  if (ov.kappa) config.kappa = *ov.kappa;
  if (ov.classifier_accuracy) {
    config.classifier_accuracy = *ov.classifier_accuracy;
  }
  if (ov.classes) config.num_classes = *ov.classes;
  if (ov.k) config.postprocess.k = *ov.k;
  if (ov.m) config.postprocess.m = *ov.m;
  if (ov.score_floor) config.postprocess.score_floor = *ov.score_floor;
  if (ov.per_class) config.postprocess.per_class = *ov.per_class;
  if (ov.pipeline) config.pipeline = uoi::parse_pipeline(*ov.pipeline);
}

void add_override_flags(CLI::App* cmd, ConfigOverrides& ov) {
  cmd->add_option("--seed", ov.seed, "Override the RNG seed");
  cmd->add_option("--scenes", ov.scenes, "Override the scene count");
  cmd->add_option("--objects", ov.objects, "Objects per scene, lo:hi");
  cmd->add_option("--proposals", ov.proposals, "Proposals per object, lo:hi");
  cmd->add_option("--image-size", ov.image_size, "Image size, WxH");
  cmd->add_option("--band", ov.band, "Proposal IoU band, lo:hi");
  cmd->add_option("--regressor-mode", ov.regressor_mode,
                  "intersection|fullbox");
  cmd->add_option("--sigma0", ov.sigma0, "Base regression noise");
  cmd->add_option("--kappa", ov.kappa, "Extrapolation noise gain");
  cmd->add_option("--classifier-accuracy", ov.classifier_accuracy,
                  "Oracle classifier accuracy");
  cmd->add_option("--classes", ov.classes, "Number of classes");
  cmd->add_option("--k", ov.k, "Grouping IoU threshold");
  cmd->add_option("--m", ov.m, "Top proposals merged per group");
  cmd->add_option("--score-floor", ov.score_floor, "Score pre-filter");
  cmd->add_option("--per-class", ov.per_class, "Group per class (bool)");
  cmd->add_option("--pipeline", ov.pipeline, "wta|uoi|voting");
}

int run_sweep(const SimConfig& base, const std::string& axis_name,
              const std::string& values_csv, const std::string& pipelines_csv) {
  const uoi::SweepAxis axis = uoi::parse_sweep_axis(axis_name);
  const std::vector<std::string> values = split_list(values_csv);
  if (values.empty()) {
    throw std::runtime_error("--values: empty list");
  }
  std::vector<uoi::Pipeline> pipelines;
  for (const std::string& name : split_list(pipelines_csv)) {
    pipelines.push_back(uoi::parse_pipeline(name));
  }
  if (pipelines.empty()) {
    throw std::runtime_error("--pipelines: empty list");
  }
  // Validate every axis value before the first row is printed.
  for (const std::string& value : values) {
    uoi::ensure_valid(uoi::apply_axis_value(base, axis, value));
  }
  const auto rows = uoi::sweep(base, axis, values, pipelines);
  std::printf(
      "axis_value,pipeline,map,ap50,ap75,lrp,lrp_loc,lrp_fp,lrp_fn,"
      "loc_miou,cls_acc\n");
  for (const uoi::SweepRow& row : rows) {
    const MetricReport& r = row.report;
    std::printf("%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s\n", row.axis_value.c_str(),
                uoi::pipeline_name(row.pipeline), format_fixed(r.map).c_str(),
                format_fixed(r.ap_at.count(0.50) ? r.ap_at.at(0.50) : 0.0)
                    .c_str(),
                format_fixed(r.ap_at.count(0.75) ? r.ap_at.at(0.75) : 0.0)
                    .c_str(),
                format_fixed(r.lrp).c_str(), format_fixed(r.lrp_loc).c_str(),
                format_fixed(r.lrp_fp).c_str(), format_fixed(r.lrp_fn).c_str(),
                format_fixed(r.loc_miou).c_str(),
                format_fixed(r.cls_acc).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detection post-processing, evaluation, and simulation"};
  app.require_subcommand(1);

  PostprocessArgs pp;
  CLI::App* postprocess =
      app.add_subcommand("postprocess", "Run a post-processing method");
  postprocess
      ->add_option("--method", pp.method,
                   "nms|soft-nms|cluster-nms|box-voting|uoi")
      ->required();
  postprocess->add_option("--in", pp.in_path, "Input detection file")
      ->required();
  postprocess->add_option("--out", pp.out_path, "Output detection file")
      ->required();
  postprocess->add_option("--k", pp.k, "IoU threshold (default 0.5)");
  postprocess->add_option("--m", pp.m, "Top proposals per group (default 5)");
  postprocess->add_option("--score-floor", pp.score_floor,
                          "Score pre-filter (default 0.05)");
  postprocess->add_option("--sigma", pp.sigma,
                          "Soft-NMS decay width (default 0.5)");
  postprocess->add_option("--soft-mode", pp.soft_mode, "linear|gaussian");
  postprocess->add_option("--per-class", pp.per_class,
                          "Suppress/group per class (default true)");

  std::string dets_path, gts_path;
  double tau = 0.5;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate detections");
  eval->add_option("--dets", dets_path, "Detection file")->required();
  eval->add_option("--gts", gts_path, "Ground truth file")->required();
  eval->add_option("--tau", tau, "Matching IoU threshold (default 0.5)");

  std::string sim_config_path;
  ConfigOverrides sim_overrides;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Run one simulated experiment");
  simulate->add_option("--config", sim_config_path, "Config file")->required();
  add_override_flags(simulate, sim_overrides);

  std::string sweep_config_path, axis_name, values_csv;
  std::string pipelines_csv = "wta,uoi,voting";
  ConfigOverrides sweep_overrides;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "Run an ablation sweep, CSV to stdout");
  sweep_cmd->add_option("--config", sweep_config_path, "Config file")
      ->required();
  sweep_cmd
      ->add_option("--axis", axis_name,
                   "proposal-quality|group-size|classifier-accuracy|"
                   "threshold-k|regressor-mode")
      ->required();
  sweep_cmd->add_option("--values", values_csv, "Comma-separated axis values")
      ->required();
  sweep_cmd->add_option("--pipelines", pipelines_csv,
                        "Comma-separated pipelines (default all)");
  add_override_flags(sweep_cmd, sweep_overrides);

  CLI11_PARSE(app, argc, argv);

  try {
    if (postprocess->parsed()) {
      return run_postprocess(pp);
    }
    if (eval->parsed()) {
      return run_eval(dets_path, gts_path, tau);
    }
    if (simulate->parsed()) {
      SimConfig config = uoi::read_sim_config(sim_config_path);
      apply_overrides(config, sim_overrides);
      uoi::ensure_valid(config);
      print_report(uoi::run_experiment(config));
      return 0;
    }
    if (sweep_cmd->parsed()) {
      SimConfig config = uoi::read_sim_config(sweep_config_path);
      apply_overrides(config, sweep_overrides);
      uoi::ensure_valid(config);
      return run_sweep(config, axis_name, values_csv, pipelines_csv);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
