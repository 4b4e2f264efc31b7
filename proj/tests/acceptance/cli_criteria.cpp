#include "harness.hpp"

#ifdef FUNCTA_ACCEPTANCE_CLI

#include <filesystem>
#include <set>
#include <sstream>
#include <unistd.h>

#include "functa/archive.hpp"
#include "functa/cli.hpp"

namespace functa::acceptance {

namespace {

namespace fs = std::filesystem;

struct Step {
  std::string name;
  std::vector<std::string> args;  // command first, without --out
};

// Runs each step, then re-runs it from the manifest it wrote and compares
// every recorded output digest and file.
Outcome manifest_determinism() {
  const fs::path root = fs::temp_directory_path() / ("functa_ac12_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  auto p = [&](const std::string& rel) { return (root / rel).string(); };

  const std::vector<std::string> blobs{"--dataset", "blobs", "--resolution", "8"};
  const std::vector<std::string> scenes{"--dataset", "scenes", "--resolution", "8", "--views", "3",
                                        "--points-per-ray", "8"};
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  const std::vector<Step> steps{
      {"meta", with({"meta-train", "--count", "24", "--eval-count", "4", "--latent-dim", "8", "--width", "16",
                     "--depth", "2", "--iters", "40", "--batch-size", "4", "--outer-lr", "1e-3", "--seed", "1"},
                    blobs)},
      {"fs", with({"fit-functaset", "--meta", p("meta/meta.ckpt"), "--count", "24", "--seed", "2"}, blobs)},
      {"fs_test", with({"fit-functaset", "--meta", p("meta/meta.ckpt"), "--first", "24", "--count", "8", "--split",
                        "test", "--train-stats", p("fs/functaset.funta"), "--seed", "3"},
                       blobs)},
      {"flow", {"flow-train", "--functaset", p("fs/functaset.funta"), "--test-functaset", p("fs_test/functaset.funta"),
                "--layers", "2", "--hidden", "16", "--dropout", "0.1", "--iters", "30", "--batch-size", "8",
                "--eval-every", "10", "--seed", "4"}},
      {"flow_sample", {"flow-sample", "--flow", p("flow/flow.ckpt"), "--functaset", p("fs/functaset.funta"), "--n",
                       "6", "--temperature", "0.8", "--seed", "5"}},
      {"flow_logprob", {"flow-logprob", "--flow", p("flow/flow.ckpt"), "--functaset", p("fs_test/functaset.funta")}},
      {"ddpm", {"ddpm-train", "--functaset", p("fs/functaset.funta"), "--width", "32", "--blocks", "2", "--dropout",
                "0.1", "--timesteps", "50", "--iters", "20", "--batch-size", "8", "--seed", "6"}},
      {"ddpm_sample", {"ddpm-sample", "--ddpm", p("ddpm/ddpm.ckpt"), "--functaset", p("fs/functaset.funta"), "--n",
                       "4", "--seed", "7"}},
      {"impute", with({"impute", "--meta", p("meta/meta.ckpt"), "--flow", p("flow/flow.ckpt"), "--functaset",
                       p("fs/functaset.funta"), "--first", "24", "--count", "2", "--half", "true", "--lambda", "100",
                       "--steps", "20"},
                      blobs)},
      {"classify", {"classify-train", "--functaset", p("fs/functaset.funta"), "--test-functaset",
                    p("fs_test/functaset.funta"), "--width", "16", "--depth", "2", "--dropout", "0.1", "--iters",
                    "30", "--batch-size", "8", "--lr", "1e-3", "--eval-every", "10", "--seed", "8"}},
      {"classify_eval", {"classify-eval", "--classifier", p("classify/classifier.ckpt"), "--functaset",
                         p("fs_test/functaset.funta")}},
      {"render", with({"render", "--meta", p("meta/meta.ckpt"), "--functaset", p("fs/functaset.funta"), "--rows",
                       "0,3"},
                      blobs)},
      {"render_samples", with({"render", "--meta", p("meta/meta.ckpt"), "--modulations",
                               p("flow_sample/samples.csv"), "--limit", "2"},
                              blobs)},
      {"perturb", with({"perturb-analyze", "--meta", p("meta/meta.ckpt"), "--functaset", p("fs/functaset.funta"),
                        "--rows", "0,1", "--maps", "1"},
                       blobs)},
      {"report", {"report", "--runs", p("meta")}},
      {"scene_meta", with({"meta-train", "--count", "4", "--eval-count", "1", "--latent-dim", "4", "--width", "8",
                           "--depth", "2", "--iters", "3", "--batch-size", "2", "--sample-points", "16",
                           "--outer-lr", "1e-3", "--seed", "9"},
                          scenes)},
      {"scene_fs", with({"fit-functaset", "--meta", p("scene_meta/meta.ckpt"), "--count", "4", "--sample-points",
                         "16", "--seed", "10"},
                        scenes)},
      {"scene_flow", {"flow-train", "--functaset", p("scene_fs/functaset.funta"), "--layers", "1", "--hidden", "8",
                      "--iters", "5", "--batch-size", "4", "--seed", "11"}},
      {"novel_view", with({"novel-view", "--meta", p("scene_meta/meta.ckpt"), "--flow", p("scene_flow/flow.ckpt"),
                           "--functaset", p("scene_fs/functaset.funta"), "--item", "5", "--observed-views", "0",
                           "--steps", "3", "--lambda", "10"},
                          scenes)},
  };

  Checks c;
  std::set<std::string> covered;
  int reproduced = 0;
  std::vector<std::string> failures;
  for (const auto& s : steps) {
    std::ostringstream out, err;
    auto args = s.args;
    args.push_back("--out");
    args.push_back(p(s.name));
    if (cli::run(args, out, err) != 0) {
      failures.push_back(s.name + " failed: " + err.str());
      continue;
    }
    covered.insert(s.args.front());
    const auto first = io::read_file(root / s.name / "manifest.txt");
    if (first.find("\noutput.") == std::string::npos) {
      failures.push_back(s.name + " recorded no outputs");
      continue;
    }
    std::ostringstream out2, err2;
    const std::string again = s.name + "_rerun";
    if (cli::run({s.args.front(), "--config", p(s.name + "/manifest.txt"), "--out", p(again)}, out2, err2) != 0) {
      failures.push_back(s.name + " rerun failed: " + err2.str());
      continue;
    }
    bool same = io::read_file(root / again / "manifest.txt") == first;
    // The manifest carries the digests; also compare the files themselves.
    std::istringstream lines(first);
    std::string line;
    while (std::getline(lines, line)) {
      if (!line.starts_with("output.")) continue;
      const std::string file = line.substr(7, line.find('=') - 7);
      same = same && io::read_file(root / s.name / file) == io::read_file(root / again / file);
    }
    if (same) {
      ++reproduced;
    } else {
      failures.push_back(s.name + " outputs differ on rerun");
    }
    log(s.name + (same ? " reproduced" : " DIFFERS"));
  }

  const auto commands = cli::command_names();
  std::vector<std::string> missing;
  for (const auto& name : commands) {
    if (!covered.contains(name)) missing.push_back(name);
  }
  c.add(failures.empty(), fmt("%d/%zu runs reproduced bit-identically from their manifests", reproduced, steps.size()));
  for (const auto& f : failures) c.add(false, f);
  c.add(missing.empty(), fmt("%zu/%zu commands exercised", commands.size() - missing.size(), commands.size()));
  for (const auto& m : missing) c.add(false, "not exercised: " + m);
  if (failures.empty()) fs::remove_all(root);
  return c.outcome();
}

}  // namespace

std::vector<Criterion> cli_criteria() {
  return {
      {12, "manifest determinism", 0, manifest_determinism},
  };
}

}  // namespace functa::acceptance

#else

// Built without the command line tool.
std::vector<functa::acceptance::Criterion> functa::acceptance::cli_criteria() { return {}; }

#endif
