#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <exception>

#include "harness.hpp"

using namespace functa::acceptance;

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the functa library"};
  std::vector<int> only;
  bool list = false;
  app.add_option("--only", only, "Run only these criteria (repeatable)");
  app.add_flag("--list", list, "List the criteria and exit");
  CLI11_PARSE(app, argc, argv);

  std::vector<Criterion> all = model_criteria();
  for (auto& c : cli_criteria()) all.push_back(std::move(c));
  std::sort(all.begin(), all.end(), [](const Criterion& a, const Criterion& b) { return a.id < b.id; });

  if (list) {
    for (const auto& c : all) std::printf("AC%-3d %s\n", c.id, c.title.c_str());
    return 0;
  }
  for (int id : only) {
    if (std::none_of(all.begin(), all.end(), [&](const Criterion& c) { return c.id == id; })) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
  }

  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    std::fprintf(stderr, "AC%d %s\n", c.id, c.title.c_str());
    Stopwatch sw;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = sw.seconds();
    if (c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      o.pass = false;
      o.detail += fmt("; runtime %.0f s exceeds the %.0f s budget", secs, c.budget_seconds);
    }
    std::printf("[%s] AC%d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
