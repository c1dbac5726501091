#include "fedrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace fedrec {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  if (delim == ' ') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      fields.push_back(line.substr(i, j - i));
      i = j;
    }
    return fields;
  }
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    fields.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

bool parse_int64(std::string_view s, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec == std::errc() && ptr == s.data() + s.size()) return true;
  // Some dumps write timestamps as floats ("978300760.0").
  double d = 0.0;
  auto [p2, ec2] = std::from_chars(s.data(), s.data() + s.size(), d);
  if (ec2 != std::errc() || p2 != s.data() + s.size()) return false;
  out = static_cast<std::int64_t>(d);
  return true;
}

bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct Vocabulary {
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::string> names;

  std::uint32_t intern(std::string_view key) {
    auto [it, inserted] = index.try_emplace(std::string(key), static_cast<std::uint32_t>(names.size()));
    if (inserted) names.emplace_back(key);
    return it->second;
  }
};

std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

LogFormat LogFormat::parse(std::string_view descriptor) {
  if (descriptor == "filmtrust") return parse("space:user,item,rating");
  if (descriptor == "movielens" || descriptor == "tsv") return parse("tab:user,item,rating,ts");
  if (descriptor == "csv") return parse("comma:user,item,rating,ts");

  LogFormat fmt;
  auto colon = descriptor.find(':');
  if (colon == std::string_view::npos) {
    throw DataError("log format '" + std::string(descriptor) + "' must be <delim>:<columns>");
  }
  auto delim = descriptor.substr(0, colon);
  if (delim == "tab") {
    fmt.delimiter = '\t';
  } else if (delim == "comma") {
    fmt.delimiter = ',';
  } else if (delim == "space") {
    fmt.delimiter = ' ';
  } else {
    throw DataError("unknown delimiter '" + std::string(delim) + "'");
  }
  auto rest = descriptor.substr(colon + 1);
  auto colon2 = rest.find(':');
  if (colon2 != std::string_view::npos) {
    if (rest.substr(colon2 + 1) != "header") {
      throw DataError("unknown log format flag '" + std::string(rest.substr(colon2 + 1)) + "'");
    }
    fmt.has_header = true;
    rest = rest.substr(0, colon2);
  }
  fmt.columns.clear();
  for (auto name : split_fields(rest, ',')) {
    if (name == "user") {
      fmt.columns.push_back(Column::user);
    } else if (name == "item") {
      fmt.columns.push_back(Column::item);
    } else if (name == "rating") {
      fmt.columns.push_back(Column::rating);
    } else if (name == "ts" || name == "timestamp") {
      fmt.columns.push_back(Column::timestamp);
    } else if (name == "_") {
      fmt.columns.push_back(Column::skip);
    } else {
      throw DataError("unknown column '" + std::string(name) + "'");
    }
  }
  auto count = [&](Column c) { return std::count(fmt.columns.begin(), fmt.columns.end(), c); };
  if (count(Column::user) != 1 || count(Column::item) != 1) {
    throw DataError("log format needs exactly one user and one item column");
  }
  if (count(Column::rating) > 1 || count(Column::timestamp) > 1) {
    throw DataError("log format repeats a rating or timestamp column");
  }
  return fmt;
}

std::string LogFormat::describe() const {
  std::string out = delimiter == '\t' ? "tab" : delimiter == ',' ? "comma" : "space";
  out += ':';
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out += ',';
    switch (columns[i]) {
      case Column::user: out += "user"; break;
      case Column::item: out += "item"; break;
      case Column::rating: out += "rating"; break;
      case Column::timestamp: out += "ts"; break;
      case Column::skip: out += "_"; break;
    }
  }
  if (has_header) out += ":header";
  return out;
}

bool LogFormat::has_timestamp() const {
  return std::find(columns.begin(), columns.end(), Column::timestamp) != columns.end();
}

double LogStats::sparsity() const {
  if (users == 0 || items == 0) return 1.0;
  return 1.0 - static_cast<double>(interactions) / (static_cast<double>(users) * static_cast<double>(items));
}

InteractionLog parse_log(std::istream& in, const LogFormat& format) {
  InteractionLog log;
  Vocabulary users;
  Vocabulary items;
  std::unordered_map<std::uint64_t, std::size_t> seen;  // (user,item) -> event index

  std::string line;
  std::size_t line_no = 0;
  std::int64_t ordinal = 0;
  bool header_pending = format.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = trim(line);
    if (body.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    auto fields = split_fields(body, format.delimiter);
    if (fields.size() < format.columns.size()) {
      throw ParseError(line_no, "expected " + std::to_string(format.columns.size()) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    std::string_view user_field;
    std::string_view item_field;
    std::int64_t ts = ordinal;
    for (std::size_t c = 0; c < format.columns.size(); ++c) {
      auto f = fields[c];
      switch (format.columns[c]) {
        case Column::user: user_field = f; break;
        case Column::item: item_field = f; break;
        case Column::rating: {
          double rating = 0.0;
          if (!parse_double(f, rating)) throw ParseError(line_no, "bad rating '" + std::string(f) + "'");
          break;  // implicit feedback: the rating value itself is discarded
        }
        case Column::timestamp:
          if (!parse_int64(f, ts)) throw ParseError(line_no, "bad timestamp '" + std::string(f) + "'");
          break;
        case Column::skip: break;
      }
    }
    if (user_field.empty() || item_field.empty()) throw ParseError(line_no, "empty user or item id");
    ++ordinal;
    ++log.raw_rows;

    UserId u = users.intern(user_field);
    ItemId i = items.intern(item_field);
    auto [it, inserted] = seen.try_emplace(pair_key(u, i), log.events.size());
    if (inserted) {
      log.events.push_back({u, i, ts});
    } else {
      ++log.duplicates_removed;
      auto& ev = log.events[it->second];
      ev.timestamp = std::min(ev.timestamp, ts);
    }
  }
  if (log.events.empty()) throw DataError("interaction log is empty");
  log.user_ids = std::move(users.names);
  log.item_ids = std::move(items.names);
  return log;
}

InteractionLog parse_log(const std::filesystem::path& path, const LogFormat& format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction log '" + path.string() + "'");
  return parse_log(in, format);
}

void write_log(std::ostream& out, const InteractionLog& log) {
  for (const auto& ev : log.events) {
    out << log.user_ids[ev.user] << '\t' << log.item_ids[ev.item] << "\t1\t" << ev.timestamp << '\n';
  }
}

bool SplitDataset::is_positive(UserId user, ItemId item) const {
  if (test[user] == item) return true;
  const auto& tr = train[user];
  return std::binary_search(tr.begin(), tr.end(), item);
}

std::size_t SplitDataset::unobserved_count(UserId user) const {
  return num_items - train[user].size() - 1;
}

std::uint64_t SplitDataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(num_items);
  mix(num_users());
  for (std::size_t u = 0; u < num_users(); ++u) {
    mix(test[u]);
    mix(train[u].size());
    for (auto i : train[u]) mix(i);
    for (auto i : eval_candidates[u]) mix(i);
  }
  return h;
}

SplitDataset filter_and_split(const InteractionLog& log, std::uint64_t rng_seed, std::size_t min_interactions) {
  if (log.events.empty()) throw DataError("interaction log is empty");

  std::vector<std::size_t> per_user(log.num_users(), 0);
  for (const auto& ev : log.events) ++per_user[ev.user];

  constexpr std::uint32_t kDropped = UINT32_MAX;
  std::vector<std::uint32_t> user_map(log.num_users(), kDropped);
  std::vector<std::uint32_t> item_map(log.num_items(), kDropped);
  SplitDataset ds;
  ds.pre_filter = log.stats();

  struct Held {
    std::int64_t ts;
    ItemId item;
  };
  std::vector<std::vector<Held>> history;
  std::size_t kept_events = 0;
  for (const auto& ev : log.events) {
    if (per_user[ev.user] < min_interactions) continue;
    if (user_map[ev.user] == kDropped) {
      user_map[ev.user] = static_cast<std::uint32_t>(ds.user_ids.size());
      ds.user_ids.push_back(log.user_ids[ev.user]);
      history.emplace_back();
    }
    if (item_map[ev.item] == kDropped) {
      item_map[ev.item] = static_cast<std::uint32_t>(ds.item_ids.size());
      ds.item_ids.push_back(log.item_ids[ev.item]);
    }
    history[user_map[ev.user]].push_back({ev.timestamp, item_map[ev.item]});
    ++kept_events;
  }
  if (ds.user_ids.empty()) {
    throw DataError("no user has at least " + std::to_string(min_interactions) + " interactions");
  }
  ds.num_items = ds.item_ids.size();
  ds.post_filter = {ds.user_ids.size(), ds.item_ids.size(), kept_events};

  const std::size_t m = ds.user_ids.size();
  ds.train.resize(m);
  ds.test.resize(m);
  ds.eval_candidates.resize(m);
  for (std::size_t u = 0; u < m; ++u) {
    auto& h = history[u];
    // Latest timestamp is held out; ties go to the larger item id.
    auto latest = std::max_element(h.begin(), h.end(), [](const Held& a, const Held& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.item < b.item;
    });
    ds.test[u] = latest->item;
    auto& tr = ds.train[u];
    tr.reserve(h.size() - 1);
    for (const auto& e : h) {
      if (e.item != latest->item) tr.push_back(e.item);
    }
    std::sort(tr.begin(), tr.end());
  }

  for (std::size_t u = 0; u < m; ++u) {
    const auto uid = static_cast<UserId>(u);
    if (ds.unobserved_count(uid) < kEvalCandidates) {
      throw DataError("user '" + ds.user_ids[u] + "' has only " + std::to_string(ds.unobserved_count(uid)) +
                      " unobserved items; 100-candidate evaluation needs at least 100");
    }
    Rng rng = make_rng(rng_seed, "eval-negatives", u);
    std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(ds.num_items - 1));
    auto& cand = ds.eval_candidates[u];
    cand.reserve(kEvalCandidates);
    cand.push_back(ds.test[u]);
    std::unordered_set<ItemId> chosen;
    while (cand.size() < kEvalCandidates) {
      ItemId i = pick(rng);
      if (ds.is_positive(uid, i) || !chosen.insert(i).second) continue;
      cand.push_back(i);
    }
  }
  return ds;
}

std::vector<Sample> sample_train_negatives(const SplitDataset& ds, UserId user, std::size_t negatives_per_positive,
                                           Rng& rng) {
  if (user >= ds.num_users()) throw DataError("unknown user " + std::to_string(user));
  const auto& positives = ds.train[user];
  std::vector<Sample> out;
  if (positives.empty()) return out;
  if (negatives_per_positive > 0 && ds.unobserved_count(user) == 0) {
    throw DataError("user " + std::to_string(user) + " has no unobserved items to sample");
  }
  out.reserve(positives.size() * (negatives_per_positive + 1));
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(ds.num_items - 1));
  for (auto p : positives) {
    out.push_back({p, 1.0});
    for (std::size_t k = 0; k < negatives_per_positive; ++k) {
      ItemId i;
      do {
        i = pick(rng);
      } while (ds.is_positive(user, i));
      out.push_back({i, 0.0});
    }
  }
  return out;
}

void write_split(std::ostream& out, const SplitDataset& ds) {
  for (std::size_t u = 0; u < ds.num_users(); ++u) {
    out << u << '\t' << ds.test[u] << '\t';
    for (std::size_t j = 0; j < ds.train[u].size(); ++j) {
      if (j) out << ' ';
      out << ds.train[u][j];
    }
    out << '\t';
    const auto& cand = ds.eval_candidates[u];
    for (std::size_t j = 1; j < cand.size(); ++j) {
      if (j > 1) out << ' ';
      out << cand[j];
    }
    out << '\n';
  }
}

void write_split(const std::filesystem::path& path, const SplitDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file '" + path.string() + "'");
  write_split(out, ds);
}

SplitDataset read_split(std::istream& in) {
  SplitDataset ds;
  std::string line;
  std::size_t line_no = 0;
  ItemId max_item = 0;
  auto parse_ids = [&](std::string_view field, std::vector<ItemId>& into) {
    for (auto tok : split_fields(field, ' ')) {
      std::int64_t v = 0;
      if (!parse_int64(tok, v) || v < 0) throw ParseError(line_no, "bad item id '" + std::string(tok) + "'");
      into.push_back(static_cast<ItemId>(v));
      max_item = std::max(max_item, static_cast<ItemId>(v));
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    while (!body.empty() && (body.back() == '\r' || body.back() == '\n')) body.remove_suffix(1);
    if (trim(body).empty()) continue;
    auto fields = split_fields(body, '\t');
    if (fields.size() != 4) throw ParseError(line_no, "split rows need 4 tab-separated fields");
    std::int64_t user = 0;
    std::int64_t test = 0;
    if (!parse_int64(fields[0], user) || user != static_cast<std::int64_t>(ds.num_users())) {
      throw ParseError(line_no, "user ids must be dense and in order");
    }
    if (!parse_int64(fields[1], test) || test < 0) throw ParseError(line_no, "bad test item");
    ds.test.push_back(static_cast<ItemId>(test));
    max_item = std::max(max_item, static_cast<ItemId>(test));
    ds.train.emplace_back();
    parse_ids(fields[2], ds.train.back());
    std::sort(ds.train.back().begin(), ds.train.back().end());
    std::vector<ItemId> cand{static_cast<ItemId>(test)};
    parse_ids(fields[3], cand);
    if (cand.size() != kEvalCandidates) {
      throw ParseError(line_no, "expected 99 evaluation negatives, found " + std::to_string(cand.size() - 1));
    }
    ds.eval_candidates.push_back(std::move(cand));
  }
  if (ds.train.empty()) throw DataError("split file is empty");
  ds.num_items = static_cast<std::size_t>(max_item) + 1;
  std::size_t interactions = 0;
  for (const auto& tr : ds.train) interactions += tr.size() + 1;
  ds.post_filter = {ds.num_users(), ds.num_items, interactions};
  ds.pre_filter = ds.post_filter;
  return ds;
}

SplitDataset read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file '" + path.string() + "'");
  return read_split(in);
}

}  // namespace fedrec
