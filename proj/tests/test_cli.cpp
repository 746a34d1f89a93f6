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

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "uoi/grouping.hpp"
#include "uoi/io.hpp"

namespace {

using uoi::Box;
using uoi::DetectionRecord;

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args) {
  const std::string command = std::string(UOI_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(command.c_str(), "r");
  if (pipe == nullptr) {
    return {-1, "popen failed"};
  }
  CliResult result;
  char buffer[4096];
  std::size_t n;
  while ((n = std::fread(buffer, 1, sizeof(buffer), pipe)) > 0) {
    result.output.append(buffer, n);
  }
  const int status = ::pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("uoi_cli_test_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) const {
    return (dir_ / name).string();
  }

  void write_file(const std::string& name, const std::string& content) const {
    std::ofstream out(path(name));
    out << content;
  }

  std::filesystem::path dir_;
};

// A small two-image instance with overlapping duplicates per object.
std::vector<DetectionRecord> fixture_records() {
  std::vector<DetectionRecord> records;
  auto add = [&](int image, int cls, double score, const Box& box) {
    DetectionRecord rec;
    rec.image_id = image;
    rec.class_id = cls;
    rec.score = score;
    rec.box = box;
    rec.proposal = box;
    records.push_back(rec);
  };
  add(0, 0, 0.95, Box(10, 10, 50, 50));
  add(0, 0, 0.90, Box(12, 11, 52, 49));
  add(0, 0, 0.60, Box(8, 12, 48, 51));
  add(0, 1, 0.80, Box(100, 100, 140, 150));
  add(0, 1, 0.70, Box(102, 98, 141, 148));
  add(1, 0, 0.85, Box(30, 40, 90, 80));
  add(1, 0, 0.40, Box(33, 38, 88, 84));
  add(1, 2, 0.75, Box(200, 200, 260, 240));
  return records;
}

TEST_F(CliTest, PostprocessNmsMatchesLibrary) {
  const auto records = fixture_records();
  uoi::write_detection_file(path("in.jsonl"), records);
  const auto result = run_cli("postprocess --method nms --k 0.5 --in " +
                              path("in.jsonl") + " --out " + path("out.jsonl"));
  ASSERT_EQ(result.exit_code, 0) << result.output;

  const auto output = uoi::read_detection_file(path("out.jsonl"));
  // Expected: per image, per class greedy suppression of the duplicates.
  std::vector<uoi::ProposalRecord> image0, image1;
  for (const auto& rec : records) {
    uoi::ProposalRecord pr{*rec.proposal, rec.box, rec.score, rec.class_id,
                           rec.image_id};
    (rec.image_id == 0 ? image0 : image1).push_back(pr);
  }
  const auto kept0 = uoi::greedy_nms(image0, 0.5);
  const auto kept1 = uoi::greedy_nms(image1, 0.5);
  ASSERT_EQ(output.size(), kept0.size() + kept1.size());
  for (std::size_t i = 0; i < kept0.size(); ++i) {
    EXPECT_EQ(output[i].box, image0[kept0[i]].regressed);
    EXPECT_EQ(output[i].score, image0[kept0[i]].score);
  }
}

TEST_F(CliTest, UoiWithM1MatchesNmsByteForByte) {
  // With proposal == box the grouping key and the suppression key agree,
  // so single-member groups emit exactly the NMS winners.
  uoi::write_detection_file(path("in.jsonl"), fixture_records());
  auto uoi_run = run_cli("postprocess --method uoi --k 0.5 --m 1 --in " +
                         path("in.jsonl") + " --out " + path("uoi.jsonl"));
  ASSERT_EQ(uoi_run.exit_code, 0) << uoi_run.output;
  auto nms_run = run_cli("postprocess --method nms --k 0.5 --in " +
                         path("in.jsonl") + " --out " + path("nms.jsonl"));
  ASSERT_EQ(nms_run.exit_code, 0) << nms_run.output;
  EXPECT_EQ(read_file(path("uoi.jsonl")), read_file(path("nms.jsonl")));
}

TEST_F(CliTest, EmptyInputProducesEmptyOutput) {
  write_file("empty.jsonl", "");
  const auto result =
      run_cli("postprocess --method uoi --in " + path("empty.jsonl") +
              " --out " + path("out.jsonl"));
  EXPECT_EQ(result.exit_code, 0) << result.output;
  EXPECT_EQ(read_file(path("out.jsonl")), "");
}

TEST_F(CliTest, UoiWithoutProposalsFails) {
  write_file("noprop.jsonl",
             "{\"image_id\":0,\"class_id\":0,\"score\":0.9,\"box\":[0,0,10,10]}\n");
  const auto result =
      run_cli("postprocess --method uoi --in " + path("noprop.jsonl") +
              " --out " + path("out.jsonl"));
  EXPECT_NE(result.exit_code, 0);
  EXPECT_NE(result.output.find("proposal"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(path("out.jsonl")));
}

TEST_F(CliTest, UnknownMethodFails) {
  uoi::write_detection_file(path("in.jsonl"), fixture_records());
  const auto result =
      run_cli("postprocess --method magic --in " + path("in.jsonl") +
              " --out " + path("out.jsonl"));
  EXPECT_NE(result.exit_code, 0);
  EXPECT_NE(result.output.find("unknown method"), std::string::npos);
}

TEST_F(CliTest, ParseFailureReportsLineNumber) {
  write_file("bad.jsonl", "{\"image_id\":0}\nnot json\n");
  const auto result =
      run_cli("postprocess --method nms --in " + path("bad.jsonl") +
              " --out " + path("out.jsonl"));
  EXPECT_NE(result.exit_code, 0);
  EXPECT_NE(result.output.find(":1:"), std::string::npos);
}

TEST_F(CliTest, EvalPerfectDetections) {
  write_file("gts.jsonl",
             "{\"image_id\":0,\"instance_id\":0,\"class_id\":0,\"box\":[0,0,10,10]}\n"
             "{\"image_id\":0,\"instance_id\":1,\"class_id\":1,\"box\":[20,0,60,40]}\n");
  write_file("dets.jsonl",
             "{\"image_id\":0,\"class_id\":0,\"score\":1.0,\"box\":[0,0,10,10]}\n"
             "{\"image_id\":0,\"class_id\":1,\"score\":1.0,\"box\":[20,0,60,40]}\n");
  const auto result =
      run_cli("eval --dets " + path("dets.jsonl") + " --gts " + path("gts.jsonl"));
  ASSERT_EQ(result.exit_code, 0) << result.output;
  EXPECT_NE(result.output.find("map=1.000000"), std::string::npos);
  EXPECT_NE(result.output.find("ap50=1.000000"), std::string::npos);
  EXPECT_NE(result.output.find("lrp=0.000000"), std::string::npos);
  EXPECT_NE(result.output.find("loc_miou=1.000000"), std::string::npos);
}

TEST_F(CliTest, EvalMissingFileFails) {
  write_file("dets.jsonl", "");
  const auto result = run_cli("eval --dets " + path("dets.jsonl") + " --gts " +
                              path("missing.jsonl"));
  EXPECT_NE(result.exit_code, 0);
  EXPECT_NE(result.output.find("cannot open"), std::string::npos);
}

TEST_F(CliTest, EvalDisjointImageIdsWarnsAndZeroes) {
  write_file("gts.jsonl",
             "{\"image_id\":7,\"instance_id\":0,\"class_id\":0,\"box\":[0,0,10,10]}\n");
  write_file("dets.jsonl",
             "{\"image_id\":3,\"class_id\":0,\"score\":1.0,\"box\":[0,0,10,10]}\n");
  const auto result =
      run_cli("eval --dets " + path("dets.jsonl") + " --gts " + path("gts.jsonl"));
  ASSERT_EQ(result.exit_code, 0) << result.output;
  EXPECT_NE(result.output.find("warning"), std::string::npos);
  EXPECT_NE(result.output.find("map=0.000000"), std::string::npos);
}

TEST_F(CliTest, SimulateRunsFromConfig) {
  write_file("config.txt", "seed = 5\nscenes = 10\n");
  const auto result = run_cli("simulate --config " + path("config.txt"));
  ASSERT_EQ(result.exit_code, 0) << result.output;
  EXPECT_NE(result.output.find("map="), std::string::npos);
  EXPECT_NE(result.output.find("loc_miou="), std::string::npos);
}

TEST_F(CliTest, SimulateOverridesBeatConfig) {
  write_file("config.txt", "seed = 5\nscenes = 10\npipeline = uoi\n");
  const auto base = run_cli("simulate --config " + path("config.txt"));
  const auto overridden = run_cli("simulate --config " + path("config.txt") +
                                  " --pipeline wta --sigma0 0.1");
  ASSERT_EQ(base.exit_code, 0);
  ASSERT_EQ(overridden.exit_code, 0);
  EXPECT_NE(base.output, overridden.output);
}

TEST_F(CliTest, ConfigSchemaViolationsListedPerField) {
  write_file("broken.txt", "scenes = -2\nclassifier_accuracy = 9\nwat = 1\n");
  const auto result = run_cli("simulate --config " + path("broken.txt"));
  EXPECT_NE(result.exit_code, 0);
  EXPECT_NE(result.output.find("scenes"), std::string::npos);
  EXPECT_NE(result.output.find("classifier_accuracy"), std::string::npos);
  EXPECT_NE(result.output.find("wat"), std::string::npos);
}

TEST_F(CliTest, SweepRowCardinalityAndHeader) {
  write_file("config.txt", "seed = 5\nscenes = 6\n");
  const auto result =
      run_cli("sweep --config " + path("config.txt") +
              " --axis group-size --values 2,3,4,5,6,7,8 --pipelines uoi");
  ASSERT_EQ(result.exit_code, 0) << result.output;
  std::istringstream lines(result.output);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line,
            "axis_value,pipeline,map,ap50,ap75,lrp,lrp_loc,lrp_fp,lrp_fn,"
            "loc_miou,cls_acc");
  int rows = 0;
  while (std::getline(lines, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 7);
}

TEST_F(CliTest, SweepByteIdenticalAcrossThreadCounts) {
  write_file("config.txt", "seed = 9\nscenes = 12\n");
  const std::string args = "sweep --config " + path("config.txt") +
                           " --axis classifier-accuracy --values 0.5,1.0 "
                           "--pipelines wta,uoi";
  setenv("UOI_THREADS", "1", 1);
  const auto serial = run_cli(args);
  setenv("UOI_THREADS", "7", 1);
  const auto threaded = run_cli(args);
  unsetenv("UOI_THREADS");
  ASSERT_EQ(serial.exit_code, 0) << serial.output;
  ASSERT_EQ(threaded.exit_code, 0);
  EXPECT_EQ(serial.output, threaded.output);

  const auto again = run_cli(args);
  EXPECT_EQ(serial.output, again.output);
}

TEST_F(CliTest, SweepRejectsBadAxisValues) {
  write_file("config.txt", "seed = 5\nscenes = 4\n");
  const auto result = run_cli("sweep --config " + path("config.txt") +
                              " --axis threshold-k --values 0.3,oops");
  EXPECT_NE(result.exit_code, 0);
  EXPECT_NE(result.output.find("oops"), std::string::npos);
  // Validation happens before any CSV row is printed.
  EXPECT_EQ(result.output.find("axis_value"), std::string::npos);
}

}  // namespace
