#include "ntsf/split.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace ntsf {

namespace {

constexpr int64_t kMinStratumSize = 5;

std::vector<SplitSpec::Miss> assign_miss_groups(std::vector<int64_t>& ids, Rng& rng) {
  // shuffle a copy to decide membership; the returned flags stay parallel
  // to the original id order
  std::vector<int64_t> order = ids;
  rng.shuffle(order);
  const int64_t n = static_cast<int64_t>(ids.size());
  const int64_t base = n / 3, rem = n % 3;
  const int64_t n_text = base + (rem > 0);
  const int64_t n_visual = base + (rem > 1);
  std::map<int64_t, SplitSpec::Miss> by_id;
  for (int64_t i = 0; i < n; ++i) {
    SplitSpec::Miss m = SplitSpec::Miss::none;
    if (i < n_text)
      m = SplitSpec::Miss::text;
    else if (i < n_text + n_visual)
      m = SplitSpec::Miss::visual;
    by_id[order[i]] = m;
  }
  std::vector<SplitSpec::Miss> flags;
  flags.reserve(ids.size());
  for (int64_t id : ids) flags.push_back(by_id[id]);
  return flags;
}

}  // namespace

PartitionResult partition(int64_t n, const std::vector<int32_t>& labels,
                          const std::vector<Edge>& edges, uint64_t seed, bool stratify) {
  check_input(n >= 10, "partition: need at least 10 nodes");
  check_input(static_cast<int64_t>(labels.size()) == n, "partition: one label per node required");
  Rng rng = Rng::keyed(seed, Rng::kSplit);

  const int64_t n_unlabeled = (6 * n) / 10;
  const int64_t n_val = n / 10;
  const int64_t n_test = n / 10;
  const int64_t n_labeled = n - n_unlabeled - n_val - n_test;  // rounding goes here

  // group nodes by class; small classes and unlabeled nodes are pooled
  std::map<int32_t, std::vector<int64_t>> by_class;
  for (int64_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  std::vector<std::vector<int64_t>> strata;
  std::vector<int64_t> pool;
  for (auto& [cls, members] : by_class) {
    const bool small = static_cast<int64_t>(members.size()) < kMinStratumSize;
    if (cls < 0 || small || !stratify) {
      if (cls >= 0 && small && stratify)
        std::fprintf(stderr,
                     "partition: class %d has only %zu nodes; placing them unstratified\n",
                     cls, members.size());
      pool.insert(pool.end(), members.begin(), members.end());
    } else {
      rng.shuffle(members);
      strata.push_back(members);
    }
  }

  // class-cyclic stream: cutting it anywhere keeps every stratum's share
  // proportional to within one node
  std::vector<int64_t> stream;
  stream.reserve(static_cast<size_t>(n));
  for (size_t offset = 0; true; ++offset) {
    bool any = false;
    for (auto& s : strata)
      if (offset < s.size()) {
        stream.push_back(s[offset]);
        any = true;
      }
    if (!any) break;
  }
  rng.shuffle(pool);
  for (int64_t id : pool) {
    const size_t at = static_cast<size_t>(rng.below(stream.size() + 1));
    stream.insert(stream.begin() + at, id);
  }

  PartitionResult out;
  auto cut = stream.begin();
  out.split.labeled_train.assign(cut, cut + n_labeled);
  cut += n_labeled;
  out.split.unlabeled_train.assign(cut, cut + n_unlabeled);
  cut += n_unlabeled;
  out.split.validation.assign(cut, cut + n_val);
  cut += n_val;
  out.split.test.assign(cut, cut + n_test);

  out.split.val_miss = assign_miss_groups(out.split.validation, rng);
  out.split.test_miss = assign_miss_groups(out.split.test, rng);

  // training graph: drop every edge that touches a held-out node
  std::vector<uint8_t> is_train(static_cast<size_t>(n), 0);
  for (int64_t id : out.split.labeled_train) is_train[id] = 1;
  for (int64_t id : out.split.unlabeled_train) is_train[id] = 1;
  std::vector<Edge> kept;
  kept.reserve(edges.size());
  for (const auto& e : edges) {
    check_input(e.first >= 0 && e.first < n && e.second >= 0 && e.second < n,
                "partition: edge endpoint out of range");
    if (is_train[e.first] && is_train[e.second]) kept.push_back(e);
  }
  out.train_graph = build_csr(n, kept);
  return out;
}

}  // namespace ntsf
