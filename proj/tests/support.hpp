#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "classrag/corpus/corpus.hpp"
#include "classrag/llm/gateway.hpp"
#include "classrag/llm/mock_provider.hpp"

namespace classrag::testing {

struct MockRig {
  std::shared_ptr<llm::MockProvider> mock;
  std::unique_ptr<llm::Gateway> gateway;

  llm::UsageLedger usage() const { return gateway->usage_snapshot(); }
};

inline MockRig make_rig(llm::MockOptions options = {}) {
  MockRig rig;
  rig.mock = std::make_shared<llm::MockProvider>(options);
  rig.gateway = std::make_unique<llm::Gateway>(rig.mock, llm::deterministic_options());
  return rig;
}

inline MockRig make_synthetic_rig() {
  llm::MockOptions options;
  options.synthetic = true;
  return make_rig(options);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("classrag-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Document of `n` distinct words "w0 w1 ...".
inline corpus::CorpusDocument numbered_doc(const std::string& doc_id, std::size_t n) {
  std::string text;
  for (std::size_t i = 0; i < n; ++i) text += "w" + std::to_string(i) + " ";
  return corpus::ingest(doc_id, doc_id, corpus::Subject::other, text);
}

// Chunks with the given texts, ordinals 0..n-1 of `doc_id`.
inline std::vector<corpus::Chunk> chunks_from(const std::string& doc_id,
                                              const std::vector<std::string>& texts) {
  std::vector<corpus::Chunk> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto words = corpus::ingest(doc_id, doc_id, corpus::Subject::other, texts[i]).words.size();
    out.push_back({{doc_id, i}, begin, begin + words, texts[i]});
    begin += words;
  }
  return out;
}

}  // namespace classrag::testing
