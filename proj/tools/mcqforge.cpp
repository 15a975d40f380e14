// mcqforge: stage-oriented command-line driver.
//
//   mcqforge <stage>|all|resume --config run.json [--run-dir DIR] [--dry-run]
//
// Exit status: 0 on success, 2 on a validation error, 1 otherwise.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mcqforge/pipeline.hpp"

namespace {

using namespace mcqforge;

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::InvalidConfig:
    case ErrorCode::MissingUpstream:
    case ErrorCode::MissingRoot:
    case ErrorCode::CorruptManifest:
    case ErrorCode::InvalidArgument:
      return true;
    default:
      return false;
  }
}

void print_result(const StageResult& r) {
  std::cout << to_string(r.stage) << ": " << (r.cache_hit ? "cache hit" : "ran");
  if (!r.counts.empty()) std::cout << " " << r.counts.dump();
  std::cout << "\n";
}

void print_plan(const Pipeline& p, Stage first, bool single) {
  for (auto stage : kStages) {
    if (static_cast<int>(stage) < static_cast<int>(first)) continue;
    std::cout << to_string(stage) << ": " << (p.is_fresh(stage) ? "up to date" : "would run") << "\n";
    for (const auto& [name, path] : p.stage_inputs(stage)) {
      std::cout << "  reads " << name << (std::filesystem::exists(path) ? "" : " (missing)") << "\n";
    }
    if (single) break;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build and evaluate a retrieval-augmented multiple-choice benchmark"};
  std::string command;
  std::string config_path;
  std::string run_dir;
  bool dry_run = false;
  app.add_option("command", command, "ingest, chunk, embed, index, genq, score, filter, traces, trace-index, eval, "
                                     "report, all or resume")
      ->required();
  app.add_option("--config", config_path, "run config (JSON)")->required();
  app.add_option("--run-dir", run_dir, "overrides run_dir from the config");
  app.add_flag("--dry-run", dry_run, "print the stage plan and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto cfg = load_pipeline_config(config_path);
    if (!run_dir.empty()) cfg.run_dir = std::filesystem::absolute(run_dir);
    Pipeline pipeline(std::move(cfg));

    if (command == "resume") {
      const auto next = pipeline.next_pending();
      if (!next) {
        std::cout << "nothing to do\n";
        return 0;
      }
      std::cout << "next: " << to_string(*next) << "\n";
      if (dry_run) {
        print_plan(pipeline, *next, false);
        return 0;
      }
      for (const auto& r : pipeline.run_from(*next)) print_result(r);
      return 0;
    }
    if (command == "all") {
      if (dry_run) {
        print_plan(pipeline, Stage::ingest, false);
        return 0;
      }
      for (const auto& r : pipeline.run_from(Stage::ingest)) print_result(r);
      return 0;
    }

    const Stage stage = stage_from_string(command);
    if (dry_run) {
      print_plan(pipeline, stage, true);
      return 0;
    }
    print_result(pipeline.run_stage(stage));
    return 0;
  } catch (const Error& e) {
    std::cerr << "mcqforge: " << to_string(e.code()) << ": " << e.what() << "\n";
    return is_validation_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "mcqforge: " << e.what() << "\n";
    return 1;
  }
}
