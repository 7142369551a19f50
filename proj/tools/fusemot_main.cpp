/*
 * Copyright 2026 The Fusemot Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fusemot/fusemot.hpp"

namespace {

// Exit codes: 0 success, 1 usage error, 2 data/config error.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct TrackArgs {
  std::string dets3d_path;
  std::string dets2d_path;
  std::string rig_path;
  std::string poses_path;
  std::string config_path;
  std::string out_dir;
  std::string format = "json";
  std::string ablation;
  std::string metric_override;
  int jobs = 1;
  bool dump_config = false;
};

struct EvalArgs {
  std::string gt_path;
  std::string hyp_path;
  std::string rig_path;
  std::string criterion = "iou2d";
  bool as_json = false;
};

struct SynthArgs {
  std::string scenario_path;
  std::string out_dir;
  int64_t seed = -1;
};

int usage_error(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return kExitUsage;
}

fusemot::TrackerConfig assemble_config(const TrackArgs& args) {
  fusemot::TrackerConfig cfg;
  if (!args.config_path.empty()) {
    cfg = fusemot::load_config(args.config_path);
  }
  if (args.ablation == "no-2d") cfg.use_2d = false;
  if (!args.metric_override.empty()) {
    cfg.stage1_metric = fusemot::detail::metric_from_name(args.metric_override);
  }
  return cfg;
}

int run_track(const TrackArgs& args) {
  const fusemot::TrackerConfig cfg = assemble_config(args);
  if (args.dump_config) {
    std::cout << fusemot::config_to_json(cfg).dump(2) << "\n";
    return kExitOk;
  }
  if (args.rig_path.empty()) return usage_error("track: --rig is required");
  if (args.dets3d_path.empty()) {
    return usage_error("track: --dets3d is required");
  }
  if (args.out_dir.empty()) return usage_error("track: --out is required");

  const fusemot::Rig rig = fusemot::parse_rig(args.rig_path);
  fusemot::DetectionMap detections =
      fusemot::parse_detections(args.dets3d_path);
  if (!args.dets2d_path.empty()) {
    fusemot::merge_detections(detections,
                              fusemot::parse_detections(args.dets2d_path));
  }
  fusemot::PoseMap poses;
  if (!args.poses_path.empty()) poses = fusemot::parse_poses(args.poses_path);

  std::map<std::string, std::vector<fusemot::FrameInput>> inputs =
      fusemot::build_frame_inputs(detections, poses, rig, args.dets3d_path);

  std::filesystem::create_directories(args.out_dir);

  std::vector<std::string> sequences;
  sequences.reserve(inputs.size());
  for (const auto& [seq, frames] : inputs) sequences.push_back(seq);

  std::atomic<size_t> cursor{0};
  std::mutex io_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const size_t index = cursor.fetch_add(1);
      if (index >= sequences.size()) return;
      const std::string& seq = sequences[index];
      try {
        std::vector<fusemot::FrameInput>& frames = inputs.at(seq);
        fusemot::Tracker tracker(cfg, rig);
        std::vector<fusemot::FrameOutput> outputs;
        outputs.reserve(frames.size());

        const auto start = std::chrono::steady_clock::now();
        for (fusemot::FrameInput& frame : frames) {
          frame.dets3d = fusemot::to_tracking_frame(
              std::move(frame.dets3d), frame.ego_pose, rig.vertical_axis);
          outputs.push_back(tracker.step(frame));
        }
        const auto stop = std::chrono::steady_clock::now();
        const double ms =
            std::chrono::duration<double, std::milli>(stop - start).count();
        const double rate =
            ms > 0.0 ? 1000.0 * static_cast<double>(frames.size()) / ms : 0.0;

        const std::string filename =
            args.format == "kitti" ? seq + ".txt" : seq + ".jsonl";
        const std::string out_path =
            (std::filesystem::path(args.out_dir) / filename).string();
        if (args.format == "kitti") {
          fusemot::write_kitti(outputs, out_path);
        } else {
          fusemot::write_json(seq, outputs, out_path);
        }

        const fusemot::TrackerStats& stats = tracker.stats();
        std::lock_guard<std::mutex> lock(io_mutex);
        std::printf(
            "[seq %s] %zu frames in %.2f ms (%.1f frames/s) fused=%lld "
            "stage1=%lld stage2=%lld created=%lld terminated=%lld\n",
            seq.c_str(), frames.size(), ms, rate,
            static_cast<long long>(stats.fused_pairs),
            static_cast<long long>(stats.stage1_matches),
            static_cast<long long>(stats.stage2_matches),
            static_cast<long long>(stats.tracks_created),
            static_cast<long long>(stats.tracks_terminated));
        std::fflush(stdout);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int jobs = std::max(1, args.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return kExitOk;
}

void print_metrics_row(const std::string& name,
                       const fusemot::MotMetrics& m) {
  std::printf("%-12s %8.4f %8.4f %9.4f %6lld %6lld %6lld %6lld\n",
              name.c_str(), m.mota, m.recall, m.precision,
              static_cast<long long>(m.id_switches),
              static_cast<long long>(m.false_positives),
              static_cast<long long>(m.misses),
              static_cast<long long>(m.gt_count));
}

nlohmann::json metrics_to_json(const fusemot::MotMetrics& m) {
  return {{"mota", m.mota},
          {"recall", m.recall},
          {"precision", m.precision},
          {"id_switches", m.id_switches},
          {"false_positives", m.false_positives},
          {"misses", m.misses},
          {"true_positives", m.true_positives},
          {"gt_count", m.gt_count}};
}

int run_eval(const EvalArgs& args) {
  const fusemot::ResultMap gt = fusemot::parse_results(args.gt_path);
  const fusemot::ResultMap hyp = fusemot::parse_results(args.hyp_path);
  const fusemot::MatchCriterion criterion =
      args.criterion == "dist3d" ? fusemot::MatchCriterion::kDist3d
                                 : fusemot::MatchCriterion::kIou2d;
  std::optional<fusemot::Rig> rig;
  if (!args.rig_path.empty()) rig = fusemot::parse_rig(args.rig_path);

  const std::map<std::string, fusemot::MotMetrics> per_seq =
      fusemot::evaluate_all(gt, hyp, criterion,
                            rig ? &*rig : nullptr);
  fusemot::MotMetrics overall;
  overall.gt_count = 0;
  bool first = true;
  for (const auto& [seq, metrics] : per_seq) {
    overall = first ? metrics : fusemot::merge_metrics(overall, metrics);
    first = false;
  }

  if (args.as_json) {
    nlohmann::json j;
    for (const auto& [seq, metrics] : per_seq) {
      j["sequences"][seq] = metrics_to_json(metrics);
    }
    j["overall"] = metrics_to_json(overall);
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }

  std::printf("%-12s %8s %8s %9s %6s %6s %6s %6s\n", "seq", "MOTA", "recall",
              "precision", "IDSW", "FP", "FN", "GT");
  for (const auto& [seq, metrics] : per_seq) {
    print_metrics_row(seq, metrics);
  }
  print_metrics_row("ALL", overall);
  return kExitOk;
}

int run_synth(const SynthArgs& args) {
  fusemot::Scenario scenario = fusemot::parse_scenario(args.scenario_path);
  if (args.seed >= 0) scenario.seed = static_cast<uint64_t>(args.seed);

  const fusemot::GeneratedData data = fusemot::generate(scenario);
  std::filesystem::create_directories(args.out_dir);
  const std::filesystem::path out(args.out_dir);

  auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p);
    if (!f) throw fusemot::ParseError(p.string(), "cannot open for writing");
    return f;
  };
  {
    std::ofstream f = open(out / "dets3d.jsonl");
    fusemot::write_detections_3d("0", data.frames, f);
  }
  {
    std::ofstream f = open(out / "dets2d.jsonl");
    fusemot::write_detections_2d("0", data.frames, f);
  }
  {
    std::ofstream f = open(out / "poses.jsonl");
    fusemot::write_poses("0", data.frames, f);
  }
  fusemot::write_json("0", data.ground_truth,
                      (out / "gt.jsonl").string());
  fusemot::write_rig(scenario.rig, (out / "rig.json").string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusemot: camera-LiDAR multi-object tracking toolkit"};
  app.require_subcommand(1);

  TrackArgs track_args;
  CLI::App* track = app.add_subcommand(
      "track", "Run the tracker over detection files");
  track->add_option("--dets3d", track_args.dets3d_path,
                    "3D detections (JSON lines)");
  track->add_option("--dets2d", track_args.dets2d_path,
                    "2D detections (JSON lines)");
  track->add_option("--rig", track_args.rig_path,
                    "camera rig (JSON) or KITTI calibration text");
  track->add_option("--poses", track_args.poses_path,
                    "ego poses (JSON lines)");
  track->add_option("--config", track_args.config_path,
                    "tracker config (JSON), merged over built-in defaults");
  track->add_option("--out", track_args.out_dir,
                    "output directory (one file per sequence)");
  track->add_option("--format", track_args.format, "output format")
      ->check(CLI::IsMember({"kitti", "json"}));
  track->add_option("--ablation", track_args.ablation, "ablation mode")
      ->check(CLI::IsMember({"no-2d"}));
  track->add_option("--metric", track_args.metric_override,
                    "override the stage-1 association metric")
      ->check(CLI::IsMember(
          {"scaled_distance", "planar_distance", "iou_3d"}));
  track->add_option("--jobs", track_args.jobs,
                    "sequences to process concurrently")
      ->check(CLI::PositiveNumber);
  track->add_flag("--dump-config", track_args.dump_config,
                  "print the effective config and exit");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "eval", "Score hypotheses against ground truth (CLEAR-MOT)");
  eval->add_option("--gt", eval_args.gt_path, "ground-truth results file")
      ->required();
  eval->add_option("--hyp", eval_args.hyp_path, "hypothesis results file")
      ->required();
  eval->add_option("--criterion", eval_args.criterion, "match criterion")
      ->check(CLI::IsMember({"iou2d", "dist3d"}));
  eval->add_option("--rig", eval_args.rig_path,
                   "rig for projecting 3D-only records under iou2d");
  eval->add_flag("--json", eval_args.as_json, "print metrics as JSON");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate synthetic detections and ground truth");
  synth->add_option("--scenario", synth_args.scenario_path,
                    "scenario description (JSON)")
      ->required();
  synth->add_option("--seed", synth_args.seed, "override the scenario seed");
  synth->add_option("--out", synth_args.out_dir, "output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (track->parsed()) return run_track(track_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (synth->parsed()) return run_synth(synth_args);
  } catch (const fusemot::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
