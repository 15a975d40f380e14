#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mcqforge/eval_harness.hpp"
#include "mcqforge/pipeline.hpp"

namespace mcqforge::testkit {

namespace fs = std::filesystem;

/// Offline stand-in for every model the pipeline talks to. It recognizes
/// each prompt by its wording and answers deterministically from a digest
/// of the request, so a run is reproducible without a network.
///
/// As teacher it writes one question per chunk (from the chunk's first
/// sentence), scores questions, and writes traces with some injected
/// leakage and malformed replies. As student it answers more accurately
/// when the retrieved context carries the relevant text. It also acts as
/// judge and as the math classifier.
class FixtureTeacher final : public ChatBackend {
 public:
  BackendReply send(const ChatRequest& req) override;

  std::size_t calls() const noexcept { return calls_.load(); }
  std::size_t calls_of(const std::string& kind) const;

 private:
  std::string generate(const std::string& user);
  std::string score(const std::string& user);
  std::string traces(const std::string& user);
  std::string answer(const std::string& model, const std::string& user);
  std::string judge(const std::string& user);
  std::string classify(const std::string& user);

  std::string correct_text(const std::string& question) const;

  mutable std::mutex mu_;
  std::map<std::string, std::string> correct_;  // question -> correct option text
  std::map<std::string, std::size_t> kinds_;
  std::atomic<std::size_t> calls_{0};
};

/// Fresh empty directory under the system temp dir.
fs::path scratch_dir(const std::string& name);

fs::path fixture_dir();

/// Writes the run config used by the end-to-end tests and returns its path.
fs::path write_e2e_config(const fs::path& dir, const fs::path& run_dir, const fs::path& script = {});

/// Compares every output recorded in both manifests byte for byte; returns
/// the differing names.
std::vector<std::string> differing_artifacts(const fs::path& run_a, const fs::path& run_b);

/// One row of grading_fixture.jsonl after grading.
struct FixtureGrade {
  std::string id;
  std::string kind;  // clean | verbose | garbage
  GradedAnswer graded;
  bool expected_correct = false;
};

/// Grades the shipped 20-response fixture with a scripted judge that knows
/// only the replies recorded in the fixture.
std::vector<FixtureGrade> grade_fixture();

/// Accuracy tables used for the report-arithmetic checks.
json reported_accuracies();

/// Helpers for parsing the rendered prompts.
std::string between(const std::string& text, const std::string& open, const std::string& close);
std::vector<std::string> parse_options(const std::string& block);

}  // namespace mcqforge::testkit
