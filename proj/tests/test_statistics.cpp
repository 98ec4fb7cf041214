#include <catch2/catch_amalgamated.hpp>

#include "pim/statistics.hpp"

using namespace pim;
using Catch::Approx;

TEST_CASE("eval_stats monomial means") {
  std::vector<double> y{2.0, 4.0};
  CHECK(monomial_set(1).eval(y)[0] == Approx(3.0));

  std::vector<double> y2{1.0, -1.0};
  auto v = monomial_set(2).eval(y2);
  CHECK(v[0] == Approx(0.0).margin(1e-15));
  CHECK(v[1] == Approx(1.0));

  std::vector<double> y3{2.0};
  auto v3 = monomial_set(3).eval(y3);
  CHECK(v3[0] == Approx(2.0));
  CHECK(v3[1] == Approx(4.0));
  CHECK(v3[2] == Approx(8.0));
}

TEST_CASE("custom statistics evaluate in declared order") {
  auto set = StatisticSet({StatisticDescriptor::monomial(1),
                           StatisticDescriptor::custom("absmean", [](std::span<const double> y) {
                             double s = 0.0;
                             for (double v : y) s += std::abs(v);
                             return s / static_cast<double>(y.size());
                           })});
  std::vector<double> y{-2.0, 2.0};
  auto v = set.eval(y);
  CHECK(v[0] == Approx(0.0).margin(1e-15));
  CHECK(v[1] == Approx(2.0));
}

TEST_CASE("monomial_ladder structure") {
  auto ladder1 = monomial_ladder(1);
  REQUIRE(ladder1.size() == 1);
  CHECK(ladder1[0].size() == 1);

  auto ladder3 = monomial_ladder(3);
  REQUIRE(ladder3.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(ladder3[i].size() == static_cast<Eigen::Index>(i + 1));
  CHECK_THROWS_AS(monomial_ladder(0), InvalidParameter);
}

TEST_CASE("extend appends and rejects duplicates") {
  auto s1 = monomial_set(1);
  auto s2 = s1.extend(StatisticDescriptor::monomial(2));
  CHECK(s2.size() == 2);
  CHECK(s1.size() == 1);  // original untouched
  CHECK_THROWS_AS(s1.extend(StatisticDescriptor::monomial(1)), DuplicateDescriptor);

  auto s3 = s2.extend(StatisticDescriptor::monomial(3));
  auto ladder = monomial_ladder(3);
  for (Eigen::Index i = 0; i < 3; ++i)
    CHECK(s3.at(i).label == ladder[2].at(i).label);
}

TEST_CASE("nested sets agree on shared components") {
  std::vector<double> y{0.3, -1.7, 2.2};
  auto small = monomial_set(2);
  auto large = monomial_set(4);
  auto vs = small.eval(y);
  auto vl = large.eval(y);
  for (Eigen::Index i = 0; i < small.size(); ++i) CHECK(vs[i] == vl[i]);
}

TEST_CASE("duplicate detection at construction") {
  std::vector<StatisticDescriptor> ds{StatisticDescriptor::monomial(1),
                                      StatisticDescriptor::monomial(1)};
  CHECK_THROWS_AS(StatisticSet(ds), DuplicateDescriptor);
}
