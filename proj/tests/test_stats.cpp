#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "parley/core.hpp"
#include "parley/stats.hpp"

using namespace parley;
using namespace parley::stats;

namespace {

Json load_fixture(const std::string& name) {
  std::ifstream f(std::string(PARLEY_FIXTURES) + "/" + name);
  if (!f) throw std::runtime_error("missing fixture " + name);
  return Json::parse(f);
}

}  // namespace

TEST(SpecialFunctions, IncompleteBetaKnownValues) {
  EXPECT_DOUBLE_EQ(incomplete_beta(1, 1, 0.3), 0.3);
  EXPECT_NEAR(incomplete_beta(2, 3, 0.4), 0.5248, 1e-12);
  EXPECT_NEAR(incomplete_beta(0.5, 0.5, 0.5), 0.5, 1e-12);
  EXPECT_EQ(incomplete_beta(2, 2, 0), 0);
  EXPECT_EQ(incomplete_beta(2, 2, 1), 1);
  EXPECT_THROW(incomplete_beta(0, 1, 0.5), ContractError);
  EXPECT_THROW(incomplete_beta(1, 1, 1.5), ContractError);
}

TEST(SpecialFunctions, StudentTMatchesBoost) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> tdist(-12, 12);
  for (int i = 0; i < 500; ++i) {
    const double df = 1 + double(rng() % 60);
    const double t = tdist(rng);
    boost::math::students_t dist(df);
    EXPECT_NEAR(student_t_cdf(t, df), boost::math::cdf(dist, t), 1e-12) << "t=" << t << " df=" << df;
    const double p = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
    EXPECT_NEAR(two_tailed_p(t, df), p, 1e-12);
  }
}

TEST(Descriptives, MeanAndSampleSd) {
  const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(x), 5.0);
  EXPECT_NEAR(sd(x), 2.138089935299395, 1e-12);
  EXPECT_THROW(mean(std::vector<double>{}), ContractError);
  EXPECT_THROW(sd(std::vector<double>{1.0}), ContractError);
}

TEST(EffectSize, PooledFromSummaries) {
  EXPECT_NEAR(*cohens_d_pooled(1.94, 0.42, 2.13, 0.30), -0.5205967931336313, 1e-12);
  EXPECT_NEAR(*cohens_d_pooled(2.89, 0.11, 2.11, 0.37), 2.857698891244517, 1e-12);
  EXPECT_NEAR(*cohens_d_pooled(4.00, 1.19, 0.86, 0.21), 3.6748403291854106, 1e-12);
  EXPECT_NEAR(*cohens_d_pooled(0.12, 0.35, 1.44, 1.35), -1.3385331341273594, 1e-12);
  EXPECT_FALSE(cohens_d_pooled(1, 0, 2, 0).has_value());
  EXPECT_THROW(cohens_d_pooled(1, -1, 2, 1), ContractError);
}

TEST(Bonferroni, ExactAndValidated) {
  EXPECT_EQ(bonferroni(0.05, 4), 0.0125);
  EXPECT_EQ(bonferroni(0.05, 1), 0.05);
  EXPECT_THROW(bonferroni(0.05, 0), ContractError);
  EXPECT_THROW(bonferroni(1.5, 2), ContractError);
  EXPECT_THROW(bonferroni(0.0, 2), ContractError);
}

TEST(PairedT, FrozenExample) {
  const std::vector<double> a{2.1, 2.4, 1.9, 2.6}, b{1.8, 2.0, 1.7, 2.1};
  const auto r = paired_t_test(a, b, 0.0125);
  EXPECT_NEAR(r.t, 5.422176684690384, 1e-9);
  EXPECT_NEAR(r.p, 0.01230755182148628, 1e-9);
  EXPECT_EQ(r.df, 3);
  EXPECT_TRUE(r.significant);  // 0.0123 < 0.0125
}

TEST(PairedT, MatchesOracleFixture) {
  const auto cases = load_fixture("oracle_ttest.json");
  ASSERT_EQ(cases.size(), 100u);
  for (const auto& c : cases) {
    const auto a = c.at("a").get<std::vector<double>>();
    const auto b = c.at("b").get<std::vector<double>>();
    const auto r = paired_t_test(a, b, 0.05);
    EXPECT_NEAR(r.t, c.at("t").get<double>(), 1e-6);
    EXPECT_NEAR(r.p, c.at("p").get<double>(), 1e-6);
    EXPECT_EQ(r.df, c.at("df").get<int>());
  }
}

TEST(PairedT, DegenerateCases) {
  const std::vector<double> a{1, 2, 3};
  auto r = paired_t_test(a, a, 0.05);
  EXPECT_EQ(r.t, 0.0);
  EXPECT_EQ(r.p, 1.0);
  EXPECT_FALSE(r.significant);
  const std::vector<double> b{0, 1, 2};
  r = paired_t_test(a, b, 0.05);
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(std::isinf(r.t));
  EXPECT_EQ(r.p, 0.0);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1, 2}, 0.05), ContractError);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{2}, 0.05), ContractError);
}

TEST(Icc, FrozenExample) {
  EXPECT_NEAR(*icc_2_1(make_matrix({{1, 2}, {2, 2}, {3, 3}, {3, 2}})), 0.5, 1e-12);
}

TEST(Icc, PerfectAgreementIsOne) {
  std::mt19937_64 rng(8);
  for (int n = 0; n < 50; ++n) {
    std::vector<std::vector<double>> rows;
    const std::size_t subjects = 2 + rng() % 8, raters = 2 + rng() % 3;
    for (std::size_t i = 0; i < subjects; ++i) rows.emplace_back(raters, double(1 + i % 3));
    EXPECT_EQ(*icc_2_1(make_matrix(rows)), 1.0);
  }
}

TEST(Icc, MatchesOracleFixture) {
  const auto cases = load_fixture("oracle_icc.json");
  ASSERT_EQ(cases.size(), 100u);
  for (const auto& c : cases) {
    const auto rows = c.at("matrix").get<std::vector<std::vector<double>>>();
    const auto v = icc_2_1(make_matrix(rows));
    if (c.at("icc").is_null()) {
      EXPECT_FALSE(v.has_value());
    } else {
      ASSERT_TRUE(v.has_value());
      EXPECT_NEAR(*v, c.at("icc").get<double>(), 1e-9);
    }
  }
}

TEST(Icc, Contracts) {
  EXPECT_THROW(icc_2_1(make_matrix({{1, 2}})), ContractError);
  EXPECT_THROW(icc_2_1(make_matrix({{1}, {2}})), ContractError);
  auto m = make_matrix({{1, 2}, {2, 3}});
  m.values[1][0].reset();
  EXPECT_THROW(icc_2_1(m), ContractError);
  m = make_matrix({{1, 2}, {2, 3}});
  m.values[1].push_back(1.0);
  EXPECT_THROW(icc_2_1(m), ContractError);
  EXPECT_FALSE(icc_2_1(make_matrix({{2, 2}, {2, 2}})).has_value());
}
