#include <doctest.h>

#include <filesystem>

#include "mcqforge/corpus.hpp"
#include "mcqforge/errors.hpp"
#include "mcqforge/json_io.hpp"
#include "mcqforge/text.hpp"
#include "testkit.hpp"

using namespace mcqforge;
namespace fs = std::filesystem;

TEST_CASE("text directory yields one document per file in path order") {
  const auto dir = testkit::scratch_dir("corpus_txt");
  fs::create_directories(dir / "sub");
  write_file_atomic(dir / "b.txt", "Second file.");
  write_file_atomic(dir / "a.txt", "First file.");
  write_file_atomic(dir / "sub" / "c.txt", "Nested file.");
  write_file_atomic(dir / "skip.md", "# Not a text file");

  const auto r = load_corpus(dir, CorpusFormat::text_dir);
  REQUIRE(r.documents.size() == 3);
  CHECK(r.documents[0].source_path == "a.txt");
  CHECK(r.documents[1].source_path == "b.txt");
  CHECK(r.documents[2].source_path == "sub/c.txt");
  CHECK(r.documents[0].doc_id == sha256_hex("First file."));
  CHECK(r.issues.empty());
  fs::remove_all(dir);
}

TEST_CASE("jsonl with a malformed line keeps the valid records and reports the bad one") {
  const auto dir = testkit::scratch_dir("corpus_jsonl");
  write_file_atomic(dir / "c.jsonl",
                    "{\"path\": \"p/one.json\", \"text\": \"Alpha.\", \"metadata\": {\"title\": \"One\", \"year\": 2021}}\n"
                    "{\"path\": \"p/two.json\", \"text\": \n"
                    "{\"path\": \"p/three.json\", \"text\": \"Gamma.\"}\n");
  const auto r = load_corpus(dir / "c.jsonl", CorpusFormat::jsonl);
  REQUIRE(r.documents.size() == 2);
  REQUIRE(r.issues.size() == 1);
  CHECK(r.issues[0].code == ErrorCode::MalformedRecord);
  CHECK(r.issues[0].line == 2);
  CHECK(r.documents[0].title == std::optional<std::string>("One"));
  CHECK(r.documents[0].metadata.at("year") == "2021");
  CHECK_FALSE(r.documents[1].title);
  fs::remove_all(dir);
}

TEST_CASE("count conservation over mixed good, malformed and empty records") {
  const auto dir = testkit::scratch_dir("corpus_count");
  write_file_atomic(dir / "a.jsonl",
                    "{\"path\": \"x\", \"text\": \"One.\"}\n"
                    "[1, 2]\n"
                    "{\"path\": \"y\", \"text\": \"   \\n \"}\n"
                    "{\"path\": \"z\"}\n"
                    "garbage\n"
                    "{\"text\": \"Two.\"}\n");
  const auto r = load_corpus(dir, CorpusFormat::jsonl);
  CHECK(r.records_encountered == 6);
  CHECK(r.documents.size() == 2);
  CHECK(r.malformed_skipped == 3);
  CHECK(r.empty_skipped == 1);
  CHECK(r.documents.size() + r.malformed_skipped + r.empty_skipped == r.records_encountered);
  // A record without a path falls back to the file name.
  CHECK(r.documents[0].source_path == "a.jsonl");
  fs::remove_all(dir);
}

TEST_CASE("json directory and markdown titles") {
  const auto dir = testkit::scratch_dir("corpus_dirs");
  write_file_atomic(dir / "j" / "a.json", "{\"text\": \"Body.\", \"metadata\": {\"kind\": \"abstract\"}}");
  write_file_atomic(dir / "j" / "b.json", "{broken");
  write_file_atomic(dir / "m" / "doc.md", "\n# Oxygen effect\n\nHypoxic cells resist radiation.\n");

  const auto j = load_corpus(dir / "j", CorpusFormat::json_dir);
  REQUIRE(j.documents.size() == 1);
  CHECK(j.documents[0].kind == DocumentKind::abstract);
  CHECK(j.count(DocumentKind::abstract) == 1);
  CHECK(j.malformed_skipped == 1);
  CHECK(j.issues[0].path == "b.json");

  const auto m = load_corpus(dir / "m", CorpusFormat::markdown_dir);
  REQUIRE(m.documents.size() == 1);
  CHECK(m.documents[0].title == std::optional<std::string>("Oxygen effect"));
  fs::remove_all(dir);
}

TEST_CASE("doc ids depend only on normalized text") {
  CHECK(assign_doc_id("Cells die.") == assign_doc_id("Cells die."));
  CHECK(assign_doc_id("a\r\nb") == assign_doc_id("a\nb"));
  CHECK(assign_doc_id("Cells die.") != assign_doc_id("Cells dye."));
  CHECK(assign_doc_id("Cells die.") == sha256_hex("Cells die."));
  CHECK_THROWS_AS(assign_doc_id("  \n"), Error);

  const auto dir = testkit::scratch_dir("corpus_crlf");
  write_file_atomic(dir / "a.txt", "Line one.\r\nLine two.\r\n");
  write_file_atomic(dir / "b.txt", "Line one.\nLine two.\n");
  const auto r = load_corpus(dir, CorpusFormat::text_dir);
  REQUIRE(r.documents.size() == 2);
  CHECK(r.documents[0].doc_id == r.documents[1].doc_id);
  CHECK(r.documents[0].text == "Line one.\nLine two.\n");
  fs::remove_all(dir);
}

TEST_CASE("missing root is an error, not an empty corpus") {
  try {
    load_corpus("/nonexistent/mcqforge/corpus", CorpusFormat::text_dir);
    FAIL("expected MissingRoot");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingRoot);
  }
}

TEST_CASE("ingestion is idempotent and records round-trip through json") {
  const auto root = testkit::fixture_dir() / "mock_corpus";
  const auto a = load_corpus(root, CorpusFormat::jsonl);
  const auto b = load_corpus(root, CorpusFormat::jsonl);
  REQUIRE(a.documents.size() == 5);
  CHECK(a.count(DocumentKind::abstract) == 1);
  std::vector<json> ja, jb;
  for (const auto& d : a.documents) ja.push_back(to_json(d));
  for (const auto& d : b.documents) jb.push_back(to_json(d));
  CHECK(to_jsonl(ja) == to_jsonl(jb));
  for (const auto& d : a.documents) CHECK(document_from_json(to_json(d)) == d);
  CHECK(ja[0].size() == 6);
}

TEST_CASE("corpus tallies add up at the reported scale") {
  CHECK(14115 + 8433 == 22548);
}
