#include <algorithm>
#include <set>

#include "doctest.h"
#include "ntsf/datagen.hpp"
#include "ntsf/split.hpp"

using namespace ntsf;

namespace {

Dataset make_data(int64_t n, int64_t classes, uint64_t seed, double p_in = 0.1,
                  double p_out = 0.05) {
  SynthSpec spec;
  spec.n = n;
  spec.classes = classes;
  spec.text_dim = 4;
  spec.visual_dim = 4;
  spec.p_in = p_in;
  spec.p_out = p_out;
  spec.seed = seed;
  return generate(spec);
}

void check_miss_groups(const std::vector<SplitSpec::Miss>& miss) {
  int64_t counts[3] = {0, 0, 0};
  for (auto m : miss) counts[static_cast<int>(m)] += 1;
  const int64_t lo = std::min({counts[0], counts[1], counts[2]});
  const int64_t hi = std::max({counts[0], counts[1], counts[2]});
  CHECK(hi - lo <= 1);
}

}  // namespace

TEST_CASE("partition: split sizes follow the 20/60/10/10 protocol") {
  for (int64_t n : {int64_t(100), int64_t(1000), int64_t(12345)}) {
    auto data = make_data(n, 5, 42, 0.05, 0.01);
    auto part = partition(n, data.labels, data.edges, 7);
    const auto& s = part.split;
    CHECK(static_cast<int64_t>(s.unlabeled_train.size()) == (6 * n) / 10);
    CHECK(static_cast<int64_t>(s.validation.size()) == n / 10);
    CHECK(static_cast<int64_t>(s.test.size()) == n / 10);
    CHECK(static_cast<int64_t>(s.labeled_train.size()) ==
          n - (6 * n) / 10 - 2 * (n / 10));  // rounding goes to labeled
    CHECK(s.n_total() == n);

    // disjoint cover of [0, n)
    std::set<int64_t> seen;
    for (const auto* group : {&s.labeled_train, &s.unlabeled_train, &s.validation, &s.test})
      for (int64_t id : *group) {
        CHECK(id >= 0);
        CHECK(id < n);
        CHECK(seen.insert(id).second);
      }
    CHECK(static_cast<int64_t>(seen.size()) == n);
  }
}

TEST_CASE("partition: the training graph never touches held-out nodes") {
  auto data = make_data(300, 4, 3);
  auto part = partition(300, data.labels, data.edges, 11);
  std::set<int64_t> held;
  for (int64_t id : part.split.validation) held.insert(id);
  for (int64_t id : part.split.test) held.insert(id);
  for (int64_t id : held) CHECK(part.train_graph.degree(id) == 0);
  // training edges survive the filter
  int64_t train_edges = 0;
  for (const auto& [a, b] : data.edges)
    if (!held.count(a) && !held.count(b)) ++train_edges;
  CHECK(part.train_graph.nnz() == 2 * train_edges);
}

TEST_CASE("partition: identical seeds give identical partitions") {
  auto data = make_data(250, 4, 4);
  auto a = partition(250, data.labels, data.edges, 21);
  auto b = partition(250, data.labels, data.edges, 21);
  CHECK(a.split.labeled_train == b.split.labeled_train);
  CHECK(a.split.unlabeled_train == b.split.unlabeled_train);
  CHECK(a.split.validation == b.split.validation);
  CHECK(a.split.test == b.split.test);
  CHECK(a.split.val_miss == b.split.val_miss);
  CHECK(a.split.test_miss == b.split.test_miss);
  auto c = partition(250, data.labels, data.edges, 22);
  CHECK(a.split.labeled_train != c.split.labeled_train);
}

TEST_CASE("partition: miss groups are near-equal thirds") {
  for (int64_t n : {int64_t(100), int64_t(130), int64_t(1000)}) {
    auto data = make_data(n, 4, 5);
    auto part = partition(n, data.labels, data.edges, 31);
    check_miss_groups(part.split.val_miss);
    check_miss_groups(part.split.test_miss);
  }
}

TEST_CASE("partition: stratification keeps class shares in every bucket") {
  auto data = make_data(400, 4, 6);
  auto part = partition(400, data.labels, data.edges, 41);
  for (const auto* group :
       {&part.split.labeled_train, &part.split.unlabeled_train, &part.split.validation,
        &part.split.test}) {
    std::vector<int64_t> counts(4, 0);
    for (int64_t id : *group) counts[data.labels[id]] += 1;
    const int64_t expected = static_cast<int64_t>(group->size()) / 4;
    for (int64_t c : counts) {
      CHECK(c >= expected - 2);
      CHECK(c <= expected + 2);
    }
  }
}

TEST_CASE("partition: tiny classes fall back to unstratified placement") {
  auto data = make_data(100, 4, 7);
  // shrink class 3 to three members
  int64_t kept = 0;
  for (auto& y : data.labels)
    if (y == 3 && ++kept > 3) y = 0;
  auto part = partition(100, data.labels, data.edges, 51);
  CHECK(part.split.n_total() == 100);
  CHECK(part.split.labeled_train.size() == 20);
}

TEST_CASE("partition: unstratified mode still hits the exact sizes") {
  auto data = make_data(120, 4, 8);
  auto part = partition(120, data.labels, data.edges, 61, false);
  CHECK(part.split.labeled_train.size() == 24);
  CHECK(part.split.unlabeled_train.size() == 72);
  CHECK(part.split.validation.size() == 12);
  CHECK(part.split.test.size() == 12);
}

TEST_CASE("partition: fewer than 10 nodes is rejected") {
  auto data = make_data(20, 2, 9);
  std::vector<int32_t> labels(data.labels.begin(), data.labels.begin() + 9);
  std::vector<Edge> none;
  CHECK_THROWS_AS(partition(9, labels, none, 1), InputError);
}
