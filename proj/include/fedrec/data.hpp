#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedrec/random.hpp"

namespace fedrec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class Column { user, item, rating, timestamp, skip };

/// Column layout and delimiter of a delimited interaction file.
///
/// Descriptor syntax is `<delim>:<col>,<col>,...[:header]` where delim is one
/// of `tab`, `comma`, `space` (any run of blanks) and col is one of `user`,
/// `item`, `rating`, `ts`, `_`. Files without a `ts` column use the row
/// ordinal as the timestamp. Presets: `filmtrust` (space:user,item,rating),
/// `movielens` (tab:user,item,rating,ts), `tsv` (tab:user,item,rating,ts).
struct LogFormat {
  char delimiter = '\t';  // ' ' means any run of spaces/tabs
  std::vector<Column> columns{Column::user, Column::item, Column::rating, Column::timestamp};
  bool has_header = false;

  static LogFormat parse(std::string_view descriptor);
  std::string describe() const;
  bool has_timestamp() const;
};

struct Event {
  UserId user;
  ItemId item;
  std::int64_t timestamp;
};

struct LogStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;

  double sparsity() const;
};

struct InteractionLog {
  std::vector<std::string> user_ids;  // dense id -> external id
  std::vector<std::string> item_ids;
  std::vector<Event> events;
  std::size_t raw_rows = 0;
  std::size_t duplicates_removed = 0;

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }
  LogStats stats() const { return {num_users(), num_items(), events.size()}; }
};

InteractionLog parse_log(std::istream& in, const LogFormat& format);
InteractionLog parse_log(const std::filesystem::path& path, const LogFormat& format);

/// Writes `user<TAB>item<TAB>1<TAB>timestamp` rows using the external ids.
void write_log(std::ostream& out, const InteractionLog& log);

struct Sample {
  ItemId item;
  double label;  // 1 positive, 0 sampled negative
};

inline constexpr std::size_t kEvalCandidates = 100;

/// Leave-one-out split. Immutable once built; safe for concurrent reads.
struct SplitDataset {
  std::size_t num_items = 0;
  std::vector<std::vector<ItemId>> train;            // sorted ascending
  std::vector<ItemId> test;                          // one held-out item per user
  std::vector<std::vector<ItemId>> eval_candidates;  // [0] is the test item, then 99 negatives
  std::vector<std::string> user_ids;                 // external ids, may be empty
  std::vector<std::string> item_ids;
  LogStats pre_filter;
  LogStats post_filter;

  std::size_t num_users() const { return train.size(); }
  /// True when `item` is in the user's train set or is the held-out item.
  bool is_positive(UserId user, ItemId item) const;
  std::size_t unobserved_count(UserId user) const;
  std::uint64_t fingerprint() const;
};

SplitDataset filter_and_split(const InteractionLog& log, std::uint64_t rng_seed,
                              std::size_t min_interactions = 5);

/// All train positives (label 1), each followed by `negatives_per_positive`
/// uniform draws from the user's unobserved items (label 0).
std::vector<Sample> sample_train_negatives(const SplitDataset& ds, UserId user,
                                           std::size_t negatives_per_positive, Rng& rng);

/// Canonical split file: `user<TAB>test<TAB>train...<TAB>negatives...` per line,
/// dense ids, space-joined lists.
void write_split(std::ostream& out, const SplitDataset& ds);
void write_split(const std::filesystem::path& path, const SplitDataset& ds);
SplitDataset read_split(std::istream& in);
SplitDataset read_split(const std::filesystem::path& path);

}  // namespace fedrec
