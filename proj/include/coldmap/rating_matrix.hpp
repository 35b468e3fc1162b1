#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "coldmap/error.hpp"
#include "coldmap/version.hpp"

namespace coldmap {

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 5;

struct RatingRecord {
  std::string user_id;
  std::string item_id;
  int rating = 0;  // in {1..5}
  std::optional<std::int64_t> timestamp;  // carried through, never consumed

  friend bool operator==(const RatingRecord& a, const RatingRecord& b) {
    return a.user_id == b.user_id && a.item_id == b.item_id && a.rating == b.rating &&
           a.timestamp == b.timestamp;
  }
};

enum class FileFormat { csv };

// Sparse user x item rating store with first-appearance vocabularies.
// Rows and columns are kept sorted; every user and item has at least one
// entry by construction.
class RatingMatrix {
 public:
  using Entry = std::pair<int, int>;  // (index, rating)

  RatingMatrix() = default;

  static RatingMatrix from_records(std::span<const RatingRecord> records) {
    require(!records.empty(), "from_records: empty record sequence");
    RatingMatrix m;
    // Duplicate (user, item) pairs resolve last-write-wins in record order.
    std::vector<std::map<int, int>> row_maps;
    for (const auto& rec : records) {
      require(rec.rating >= kMinRating && rec.rating <= kMaxRating,
              "from_records: rating outside {1..5} for user " + rec.user_id);
      const int u = m.intern_user(rec.user_id);
      const int i = m.intern_item(rec.item_id);
      if (u >= static_cast<int>(row_maps.size())) row_maps.resize(u + 1);
      row_maps[u][i] = rec.rating;
    }
    m.rows_.resize(row_maps.size());
    m.cols_.resize(m.items_.size());
    m.n_entries_ = 0;
    for (int u = 0; u < static_cast<int>(row_maps.size()); ++u) {
      m.rows_[u].assign(row_maps[u].begin(), row_maps[u].end());
      m.n_entries_ += m.rows_[u].size();
      for (const auto& [i, r] : m.rows_[u]) m.cols_[i].emplace_back(u, r);
    }
    return m;
  }

  int n_users() const { return static_cast<int>(users_.size()); }
  int n_items() const { return static_cast<int>(items_.size()); }
  std::size_t n_entries() const { return n_entries_; }

  double density() const {
    if (users_.empty() || items_.empty()) return 0.0;
    return static_cast<double>(n_entries_) /
           (static_cast<double>(users_.size()) * static_cast<double>(items_.size()));
  }

  const std::vector<Entry>& user_row(int u) const { return rows_[u]; }
  const std::vector<Entry>& item_col(int i) const { return cols_[i]; }

  int user_rating_count(int u) const { return static_cast<int>(rows_[u].size()); }
  int item_rating_count(int i) const { return static_cast<int>(cols_[i].size()); }

  std::optional<int> rating(int u, int i) const {
    const auto& row = rows_[u];
    auto it = std::lower_bound(row.begin(), row.end(), i,
                               [](const Entry& e, int key) { return e.first < key; });
    if (it != row.end() && it->first == i) return it->second;
    return std::nullopt;
  }

  const std::string& user_id(int u) const { return users_[u]; }
  const std::string& item_id(int i) const { return items_[i]; }

  std::optional<int> user_index(const std::string& id) const {
    auto it = user_index_.find(id);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<int> item_index(const std::string& id) const {
    auto it = item_index_.find(id);
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::string>& user_ids() const { return users_; }
  const std::vector<std::string>& item_ids() const { return items_; }

  // Canonical (user index, item index) order; this is the record order every
  // deterministic resampling operation works from.
  std::vector<RatingRecord> to_records() const {
    std::vector<RatingRecord> out;
    out.reserve(n_entries_);
    for (int u = 0; u < n_users(); ++u)
      for (const auto& [i, r] : rows_[u])
        out.push_back({users_[u], items_[i], r, std::nullopt});
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = kMatrixFormatVersion;
    j["n_users"] = n_users();
    j["n_items"] = n_items();
    j["users"] = users_;
    j["items"] = items_;
    auto& entries = j["entries"] = nlohmann::json::array();
    for (int u = 0; u < n_users(); ++u)
      for (const auto& [i, r] : rows_[u]) entries.push_back({u, i, r});
    return j;
  }

  static RatingMatrix from_json(const nlohmann::json& j) {
    require(j.value("version", "") == kMatrixFormatVersion,
            "matrix artifact has unsupported version tag");
    std::vector<std::string> users = j.at("users"), items = j.at("items");
    std::vector<RatingRecord> records;
    records.reserve(j.at("entries").size());
    for (const auto& e : j.at("entries")) {
      const int u = e.at(0), i = e.at(1), r = e.at(2);
      require(u >= 0 && u < static_cast<int>(users.size()) && i >= 0 &&
                  i < static_cast<int>(items.size()),
              "matrix artifact: entry index out of range");
      records.push_back({users[u], items[i], r, std::nullopt});
    }
    RatingMatrix m = from_records(records);
    // Vocabularies in the artifact are authoritative; first-appearance
    // rebuild must reproduce them (entries are stored canonically).
    require(m.user_ids() == users && m.item_ids() == items,
            "matrix artifact: vocabularies inconsistent with entries");
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open for writing: " + path);
    out << to_json().dump(2) << "\n";
    require(out.good(), "write failed: " + path);
  }

  static RatingMatrix load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

 private:
  int intern_user(const std::string& id) {
    auto [it, inserted] = user_index_.try_emplace(id, static_cast<int>(users_.size()));
    if (inserted) users_.push_back(id);
    return it->second;
  }
  int intern_item(const std::string& id) {
    auto [it, inserted] = item_index_.try_emplace(id, static_cast<int>(items_.size()));
    if (inserted) items_.push_back(id);
    return it->second;
  }

  std::vector<std::string> users_, items_;
  std::unordered_map<std::string, int> user_index_, item_index_;
  std::vector<std::vector<Entry>> rows_;  // per user, sorted by item
  std::vector<std::vector<Entry>> cols_;  // per item, sorted by user
  std::size_t n_entries_ = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

}  // namespace detail

// CSV columns: user,item,rating[,timestamp]. Rating must parse as an integer
// in {1..5}; anything else is an error carrying the line number.
inline std::vector<RatingRecord> parse_ratings(std::istream& in, bool has_header = false,
                                               const std::string& origin = "<stream>") {
  std::vector<RatingRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && has_header) continue;
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    require(fields.size() >= 3, origin + ":" + std::to_string(line_no) +
                                    ": expected user,item,rating[,timestamp]");
    long long rating = 0;
    require(detail::parse_int(fields[2], rating),
            origin + ":" + std::to_string(line_no) + ": rating is not an integer");
    require(rating >= kMinRating && rating <= kMaxRating,
            origin + ":" + std::to_string(line_no) + ": rating out of range {1..5}");
    RatingRecord rec{fields[0], fields[1], static_cast<int>(rating), std::nullopt};
    if (fields.size() >= 4 && !fields[3].empty()) {
      long long ts = 0;
      require(detail::parse_int(fields[3], ts),
              origin + ":" + std::to_string(line_no) + ": timestamp is not an integer");
      rec.timestamp = ts;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<RatingRecord> parse_ratings_file(const std::string& path,
                                                    FileFormat format = FileFormat::csv,
                                                    bool has_header = false) {
  require(format == FileFormat::csv, "unsupported rating file format");
  std::ifstream in(path);
  require(in.good(), "cannot open ratings file: " + path);
  return parse_ratings(in, has_header, path);
}

inline RatingMatrix build_rating_matrix(std::span<const RatingRecord> records) {
  return RatingMatrix::from_records(records);
}

// Iteratively drops users with fewer than min_user ratings and items with
// fewer than min_item ratings until both thresholds hold, then reindexes
// densely (canonical record order).
inline RatingMatrix filter_min_ratings(const RatingMatrix& m, int min_user, int min_item) {
  require(min_user >= 0 && min_item >= 0, "filter_min_ratings: negative threshold");
  std::vector<char> user_alive(m.n_users(), 1), item_alive(m.n_items(), 1);
  std::vector<int> user_count(m.n_users()), item_count(m.n_items());
  for (int u = 0; u < m.n_users(); ++u) user_count[u] = m.user_rating_count(u);
  for (int i = 0; i < m.n_items(); ++i) item_count[i] = m.item_rating_count(i);

  bool changed = true;
  while (changed) {
    changed = false;
    for (int u = 0; u < m.n_users(); ++u) {
      if (user_alive[u] && user_count[u] < min_user) {
        user_alive[u] = 0;
        changed = true;
        for (const auto& [i, r] : m.user_row(u))
          if (item_alive[i]) --item_count[i];
      }
    }
    for (int i = 0; i < m.n_items(); ++i) {
      if (item_alive[i] && item_count[i] < min_item) {
        item_alive[i] = 0;
        changed = true;
        for (const auto& [u, r] : m.item_col(i))
          if (user_alive[u]) --user_count[u];
      }
    }
  }

  std::vector<RatingRecord> kept;
  for (int u = 0; u < m.n_users(); ++u) {
    if (!user_alive[u]) continue;
    for (const auto& [i, r] : m.user_row(u))
      if (item_alive[i]) kept.push_back({m.user_id(u), m.item_id(i), r, std::nullopt});
  }
  require(!kept.empty(), "filter_min_ratings: no ratings survive the thresholds");
  return RatingMatrix::from_records(kept);
}

}  // namespace coldmap
