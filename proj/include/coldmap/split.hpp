#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "coldmap/rating_matrix.hpp"
#include "coldmap/rng.hpp"

namespace coldmap {

// Two-domain container. linked_users have ratings in both matrices;
// cold_start_users have auxiliary ratings only (within the current split).
// Both lists are kept sorted by user id.
struct DomainPair {
  RatingMatrix target;
  RatingMatrix auxiliary;
  std::vector<std::string> linked_users;
  std::vector<std::string> cold_start_users;
};

struct SplitSpec {
  double cold_start_fraction = 0.5;
  double density_level = 1.0;
  double overlap_level = 1.0;  // < 1 means cold_start_fraction := 1 - overlap_level
  std::uint64_t seed = 0;
};

inline std::vector<std::string> users_in_both(const RatingMatrix& a, const RatingMatrix& b) {
  std::vector<std::string> out;
  for (const auto& id : a.user_ids())
    if (b.user_index(id)) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

inline DomainPair make_domain_pair(RatingMatrix target, RatingMatrix auxiliary) {
  DomainPair pair{std::move(target), std::move(auxiliary), {}, {}};
  pair.linked_users = users_in_both(pair.target, pair.auxiliary);
  return pair;
}

struct SplitResult {
  DomainPair train;
  std::vector<RatingRecord> test;  // cold users' target ratings, canonical order
};

// Samples floor(fraction * |linked|) linked users as cold-start users and
// removes their target-domain ratings into the test set. The sample is drawn
// from the id-sorted linked list, so the split is a pure function of
// (pair, fraction, seed).
inline SplitResult select_cold_start_split(const DomainPair& pair, const SplitSpec& spec) {
  const double fraction =
      spec.overlap_level < 1.0 ? 1.0 - spec.overlap_level : spec.cold_start_fraction;
  require(fraction > 0.0 && fraction < 1.0,
          "select_cold_start_split: fraction must be in (0,1)");
  require(!pair.linked_users.empty(), "select_cold_start_split: no linked users");

  const auto n_linked = pair.linked_users.size();
  const auto n_cold = static_cast<std::size_t>(fraction * static_cast<double>(n_linked));
  require(n_cold > 0, "select_cold_start_split: sample would be empty");

  SeededRng rng(spec.seed);
  const auto picked = rng.sample_indices(n_linked, n_cold);
  std::set<std::string> cold;
  for (auto idx : picked) cold.insert(pair.linked_users[idx]);

  std::vector<RatingRecord> train_records, test_records;
  for (const auto& rec : pair.target.to_records()) {
    if (cold.count(rec.user_id))
      test_records.push_back(rec);
    else
      train_records.push_back(rec);
  }
  require(!train_records.empty(), "select_cold_start_split: target domain left empty");

  SplitResult result;
  result.train.target = RatingMatrix::from_records(train_records);
  result.train.auxiliary = pair.auxiliary;
  result.train.linked_users = users_in_both(result.train.target, result.train.auxiliary);
  result.train.cold_start_users.assign(cold.begin(), cold.end());
  result.test = std::move(test_records);
  return result;
}

// Keeps a seeded uniform sample of level*|entries| ratings in each domain
// (target already has cold-start ratings removed). level = 1 is the identity.
// Linked/cold sets are recomputed against the surviving matrices.
inline DomainPair subsample_density(const DomainPair& train, double level, std::uint64_t seed) {
  require(level > 0.0 && level <= 1.0, "subsample_density: level must be in (0,1]");
  if (level == 1.0) return train;

  auto sample_matrix = [&](const RatingMatrix& m, std::uint64_t matrix_seed) {
    const auto records = m.to_records();
    const auto keep = static_cast<std::size_t>(level * static_cast<double>(records.size()));
    require(keep > 0, "subsample_density: domain left empty");
    SeededRng rng(matrix_seed);
    auto idx = rng.sample_indices(records.size(), keep);
    std::sort(idx.begin(), idx.end());
    std::vector<RatingRecord> kept;
    kept.reserve(keep);
    for (auto i : idx) kept.push_back(records[i]);
    return RatingMatrix::from_records(kept);
  };

  DomainPair out;
  out.auxiliary = sample_matrix(train.auxiliary, derive_seed(seed, SeedModule::subsample_auxiliary));
  out.target = sample_matrix(train.target, derive_seed(seed, SeedModule::subsample_target));
  out.linked_users = users_in_both(out.target, out.auxiliary);
  for (const auto& id : train.cold_start_users)
    if (out.auxiliary.user_index(id)) out.cold_start_users.push_back(id);
  return out;
}

// Full protocol: cold-start split (overlap translated to fraction), then
// density subsampling of the training pair. At most one of the two protocol
// knobs may move off 1 per experiment point.
inline SplitResult apply_split(const DomainPair& pair, const SplitSpec& spec) {
  require(!(spec.density_level < 1.0 && spec.overlap_level < 1.0),
          "apply_split: vary either density_level or overlap_level, not both");
  SplitResult result = select_cold_start_split(pair, spec);
  if (spec.density_level < 1.0)
    result.train = subsample_density(result.train, spec.density_level, spec.seed);
  return result;
}

}  // namespace coldmap
