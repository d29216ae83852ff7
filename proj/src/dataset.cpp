#include "mtre/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mtre/error.hpp"
#include "mtre/rng.hpp"

namespace mtre {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::uint32_t to_little_endian(std::uint32_t bits) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(bits);
  return bits;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) {
    throw DataError(where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

bool SentenceRecord::operator==(const SentenceRecord& other) const {
  if (id != other.id || label != other.label || group != other.group ||
      token_ids != other.token_ids || relevance != other.relevance) {
    return false;
  }
  if (logits.rows() != other.logits.rows() || logits.cols() != other.logits.cols()) return false;
  // Bitwise comparison so that round-trips are checked exactly.
  return std::memcmp(logits.data(), other.logits.data(),
                     sizeof(float) * static_cast<std::size_t>(logits.size())) == 0;
}

std::vector<const SentenceRecord*> FoldAssignment::members(
    const std::vector<SentenceRecord>& records, int fold) const {
  std::vector<const SentenceRecord*> out;
  for (const auto& r : records) {
    if (fold_of.at(r.id) == fold) out.push_back(&r);
  }
  return out;
}

std::vector<const SentenceRecord*> FoldAssignment::complement(
    const std::vector<SentenceRecord>& records, int fold) const {
  std::vector<const SentenceRecord*> out;
  for (const auto& r : records) {
    if (fold_of.at(r.id) != fold) out.push_back(&r);
  }
  return out;
}

void validate_meta(const DatasetMeta& meta) {
  if (meta.vocab_size < 2) throw DataError("meta: vocab_size must be >= 2");
  if (meta.max_tokens < 1) throw DataError("meta: max_tokens must be >= 1");
  if (meta.value_encoding != "f32le") {
    throw DataError("meta: unsupported value_encoding '" + meta.value_encoding + "'");
  }
}

void validate_record(const DatasetMeta& meta, const SentenceRecord& r) {
  const std::string where = "sentence '" + r.id + "'";
  if (r.label != 0 && r.label != 1) throw DataError(where + ": label must be 0 or 1");
  const int t = r.num_tokens();
  if (t < 1 || t > meta.max_tokens) {
    throw DataError(where + ": num_tokens " + std::to_string(t) + " outside [1, " +
                    std::to_string(meta.max_tokens) + "]");
  }
  if (r.logits.cols() != meta.vocab_size) {
    throw DataError(where + ": logit rows have " + std::to_string(r.logits.cols()) +
                    " columns, vocab_size is " + std::to_string(meta.vocab_size));
  }
  if (static_cast<int>(r.token_ids.size()) != t) {
    throw DataError(where + ": token_ids length " + std::to_string(r.token_ids.size()) +
                    " != num_tokens " + std::to_string(t));
  }
  for (std::size_t i = 0; i < r.token_ids.size(); ++i) {
    if (r.token_ids[i] < 0 || r.token_ids[i] >= meta.vocab_size) {
      throw DataError(where + ": token id " + std::to_string(r.token_ids[i]) + " at token " +
                      std::to_string(i + 1) + " out of range");
    }
  }
  if (r.relevance) {
    if (static_cast<int>(r.relevance->size()) != t) {
      throw DataError(where + ": relevance length differs from num_tokens");
    }
    bool any_positive = false;
    for (double w : *r.relevance) {
      if (!std::isfinite(w) || w < 0.0) throw DataError(where + ": relevance must be >= 0");
      any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) throw DataError(where + ": relevance has no positive entry");
  }
  for (int row = 0; row < t; ++row) {
    if (!r.logits.row(row).allFinite()) {
      throw DataError(where + ": non-finite logit at token " + std::to_string(row + 1));
    }
  }
}

Dataset load_dataset(const fs::path& root) {
  for (const char* name : {"meta.json", "manifest.jsonl", "logits.bin"}) {
    if (!fs::exists(root / name)) throw DataError("missing file " + (root / name).string());
  }

  Dataset ds;
  json meta_json;
  try {
    meta_json = json::parse(read_text(root / "meta.json"));
  } catch (const json::parse_error& e) {
    throw DataError("meta.json: " + std::string(e.what()));
  }
  ds.meta.vocab_size = required<int>(meta_json, "vocab_size", "meta.json");
  ds.meta.max_tokens = required<int>(meta_json, "max_tokens", "meta.json");
  ds.meta.value_encoding = required<std::string>(meta_json, "value_encoding", "meta.json");
  if (meta_json.contains("format_version") &&
      meta_json.at("format_version").get<int>() != kFormatVersion) {
    throw DataError("meta.json: unsupported format_version");
  }
  validate_meta(ds.meta);

  struct Entry {
    std::uint64_t offset;
    std::uint64_t length;
  };
  std::vector<Entry> regions;
  std::set<std::string> seen;

  std::istringstream manifest(read_text(root / "manifest.jsonl"));
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": " + e.what());
    }
    SentenceRecord r;
    r.id = required<std::string>(row, "id", where);
    if (!seen.insert(r.id).second) throw DataError(where + ": duplicate id '" + r.id + "'");
    r.label = required<int>(row, "label", where);
    if (row.contains("group") && !row.at("group").is_null()) {
      r.group = row.at("group").get<std::string>();
    }
    const auto n = required<std::int64_t>(row, "num_tokens", where);
    const auto offset = required<std::int64_t>(row, "byte_offset", where);
    if (n < 1 || n > ds.meta.max_tokens) {
      throw DataError("sentence '" + r.id + "': num_tokens " + std::to_string(n) +
                      " outside [1, max_tokens]");
    }
    if (offset < 0) throw DataError("sentence '" + r.id + "': negative byte_offset");
    r.token_ids = required<std::vector<std::int32_t>>(row, "token_ids", where);
    if (row.contains("relevance") && !row.at("relevance").is_null()) {
      r.relevance = row.at("relevance").get<std::vector<double>>();
    }
    r.logits.resize(n, ds.meta.vocab_size);
    regions.push_back({static_cast<std::uint64_t>(offset),
                       static_cast<std::uint64_t>(n) * ds.meta.vocab_size * 4});
    ds.records.push_back(std::move(r));
  }

  const fs::path bin_path = root / "logits.bin";
  const auto file_size = fs::file_size(bin_path);

  std::vector<std::size_t> by_offset(regions.size());
  std::iota(by_offset.begin(), by_offset.end(), std::size_t{0});
  std::stable_sort(by_offset.begin(), by_offset.end(), [&](std::size_t a, std::size_t b) {
    return regions[a].offset < regions[b].offset;
  });
  for (std::size_t k = 0; k < by_offset.size(); ++k) {
    const auto i = by_offset[k];
    const auto end = regions[i].offset + regions[i].length;
    if (end > file_size) {
      throw DataError("sentence '" + ds.records[i].id + "': byte region [" +
                      std::to_string(regions[i].offset) + ", " + std::to_string(end) +
                      ") exceeds logits.bin size " + std::to_string(file_size) +
                      " (num_tokens x vocab_size x 4 does not fit)");
    }
    if (k + 1 < by_offset.size() && regions[by_offset[k + 1]].offset < end) {
      const auto j = by_offset[k + 1];
      throw DataError("sentence '" + ds.records[i].id + "': byte region [" +
                      std::to_string(regions[i].offset) + ", " + std::to_string(end) +
                      ") overlaps sentence '" + ds.records[j].id + "' at byte offset " +
                      std::to_string(regions[j].offset));
    }
  }

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot open " + bin_path.string());
  std::vector<std::uint32_t> raw;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    auto& r = ds.records[i];
    raw.resize(static_cast<std::size_t>(r.logits.size()));
    bin.seekg(static_cast<std::streamoff>(regions[i].offset));
    bin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(regions[i].length));
    if (!bin) throw DataError("sentence '" + r.id + "': short read from logits.bin");
    float* dst = r.logits.data();
    for (std::size_t k = 0; k < raw.size(); ++k) {
      dst[k] = std::bit_cast<float>(to_little_endian(raw[k]));
    }
    const auto row_bytes = static_cast<std::uint64_t>(ds.meta.vocab_size) * 4;
    for (Eigen::Index t = 0; t < r.logits.rows(); ++t) {
      if (!r.logits.row(t).allFinite()) {
        throw DataError("sentence '" + r.id + "': non-finite logit at token " +
                        std::to_string(t + 1) + " (byte offset " +
                        std::to_string(regions[i].offset + t * row_bytes) + ")");
      }
    }
    validate_record(ds.meta, r);
  }
  return ds;
}

void save_dataset(const DatasetMeta& meta, const std::vector<SentenceRecord>& records,
                  const fs::path& root) {
  validate_meta(meta);
  std::set<std::string> ids;
  for (const auto& r : records) {
    validate_record(meta, r);
    if (!ids.insert(r.id).second) throw DataError("duplicate sentence id '" + r.id + "'");
  }

  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create " + root.string() + ": " + ec.message());

  const json meta_json = {{"vocab_size", meta.vocab_size},
                          {"max_tokens", meta.max_tokens},
                          {"value_encoding", meta.value_encoding},
                          {"format_version", kFormatVersion}};
  std::ofstream meta_out(root / "meta.json", std::ios::binary);
  meta_out << meta_json.dump(2) << '\n';

  std::ofstream manifest(root / "manifest.jsonl", std::ios::binary);
  std::ofstream bin(root / "logits.bin", std::ios::binary);
  if (!meta_out || !manifest || !bin) throw DataError("cannot write dataset under " + root.string());

  std::uint64_t offset = 0;
  std::vector<std::uint32_t> raw;
  for (const auto& r : records) {
    json row;
    row["id"] = r.id;
    row["label"] = r.label;
    row["group"] = r.group ? json(*r.group) : json(nullptr);
    row["num_tokens"] = r.num_tokens();
    row["byte_offset"] = offset;
    row["token_ids"] = r.token_ids;
    row["relevance"] = r.relevance ? json(*r.relevance) : json(nullptr);
    manifest << row.dump() << '\n';

    raw.resize(static_cast<std::size_t>(r.logits.size()));
    const float* src = r.logits.data();
    for (std::size_t k = 0; k < raw.size(); ++k) {
      raw[k] = to_little_endian(std::bit_cast<std::uint32_t>(src[k]));
    }
    bin.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
    offset += raw.size() * sizeof(std::uint32_t);
  }
  if (!manifest || !bin) throw DataError("I/O failure writing dataset under " + root.string());
}

std::vector<TokenExample> build_token_dataset(const std::vector<const SentenceRecord*>& records,
                                              int t_cap, std::uint64_t seed) {
  if (t_cap < 1) throw ConfigError("t_cap must be >= 1");
  std::vector<TokenExample> examples;
  for (const SentenceRecord* r : records) {
    const int n = std::min(r->num_tokens(), t_cap);
    for (int t = 0; t < n; ++t) {
      examples.push_back({r->logits.row(t).transpose().cast<double>(), r->label, r->id, t + 1});
    }
  }
  Rng rng(seed);
  rng.shuffle(examples);
  return examples;
}

std::vector<TokenExample> build_token_dataset(const std::vector<SentenceRecord>& records,
                                              int t_cap, std::uint64_t seed) {
  std::vector<const SentenceRecord*> refs;
  refs.reserve(records.size());
  for (const auto& r : records) refs.push_back(&r);
  return build_token_dataset(refs, t_cap, seed);
}

std::vector<int> pad_mask(const SentenceRecord& record, double epsilon) {
  std::vector<int> mask(static_cast<std::size_t>(record.num_tokens()));
  for (Eigen::Index t = 0; t < record.logits.rows(); ++t) {
    const double norm = record.logits.row(t).cast<double>().norm();
    mask[static_cast<std::size_t>(t)] = norm > epsilon ? 1 : 0;
  }
  return mask;
}

int effective_length(const std::vector<int>& mask) {
  for (std::size_t t = mask.size(); t > 0; --t) {
    if (mask[t - 1] != 0) return static_cast<int>(t);
  }
  return 1;
}

FoldAssignment split_stratified(const std::vector<SentenceRecord>& records, int k_cv,
                                std::uint64_t seed) {
  if (k_cv < 2) throw ConfigError("K_cv must be >= 2");
  FoldAssignment out;
  out.k_cv = k_cv;
  out.seed = seed;

  Rng rng(seed);
  int next_fold = 0;
  for (int label : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].label == label) members.push_back(i);
    }
    if (static_cast<int>(members.size()) < k_cv) {
      throw ConfigError("split_stratified: only " + std::to_string(members.size()) +
                        " sentences with label " + std::to_string(label) + " for K_cv=" +
                        std::to_string(k_cv) + " folds");
    }
    rng.shuffle(members);
    // Round-robin deal; the second class continues where the first stopped
    // so total fold sizes stay balanced as well.
    for (std::size_t i : members) {
      out.fold_of[records[i].id] = next_fold;
      next_fold = (next_fold + 1) % k_cv;
    }
  }
  return out;
}

}  // namespace mtre
