#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "mtre/dataset.hpp"

namespace testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mtre_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Record with deterministic pseudo-random logits.
inline mtre::SentenceRecord make_record(const std::string& id, int label, int tokens, int vocab,
                                        std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  mtre::SentenceRecord r;
  r.id = id;
  r.label = label;
  r.logits.resize(tokens, vocab);
  for (int t = 0; t < tokens; ++t) {
    for (int v = 0; v < vocab; ++v) r.logits(t, v) = nd(gen);
    r.token_ids.push_back(static_cast<std::int32_t>(gen() % static_cast<std::uint64_t>(vocab)));
  }
  return r;
}

// Same record with `extra` all-zero rows appended.
inline mtre::SentenceRecord pad(const mtre::SentenceRecord& r, int extra) {
  mtre::SentenceRecord out = r;
  out.logits.conservativeResize(r.num_tokens() + extra, r.logits.cols());
  out.logits.bottomRows(extra).setZero();
  for (int i = 0; i < extra; ++i) out.token_ids.push_back(0);
  if (out.relevance) {
    for (int i = 0; i < extra; ++i) out.relevance->push_back(0.0);
  }
  return out;
}

}  // namespace testing
