#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include <gtest/gtest.h>

#include "tpel/mc_harness.hpp"

using namespace tpel;

namespace {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

template <typename Draw>
Moments sample_moments(Draw draw, int count) {
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < count; ++i) {
    const double v = draw();
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / count;
  return {mean, sum_sq / count - mean * mean};
}

Scenario small_scenario() {
  Scenario s;
  s.n = 400;
  s.k = 200;
  s.replications = 6;
  s.base_seed = 11;
  return s;
}

}  // namespace

struct ErrorConstruction {
  ErrorCase error_case;
  Phase phase;
};

class ErrorMoments : public ::testing::TestWithParam<ErrorConstruction> {};

TEST_P(ErrorMoments, StandardizedMeanAndVariance) {
  const auto [error_case, phase] = GetParam();
  Sampler rng(20240601);
  const Moments m = sample_moments([&] { return rng.error(error_case, phase); }, 1000000);
  EXPECT_NEAR(m.mean, 0.0, 0.005);
  EXPECT_NEAR(m.variance, 1.0, 0.01);
}

INSTANTIATE_TEST_SUITE_P(AllCases, ErrorMoments,
                         ::testing::Values(ErrorConstruction{ErrorCase::A, Phase::First},
                                           ErrorConstruction{ErrorCase::A, Phase::Second},
                                           ErrorConstruction{ErrorCase::B, Phase::First},
                                           ErrorConstruction{ErrorCase::B, Phase::Second},
                                           ErrorConstruction{ErrorCase::C, Phase::First},
                                           ErrorConstruction{ErrorCase::C, Phase::Second}));

TEST(Sampler, ChiSquareAndStudentTMoments) {
  Sampler rng(5);
  const Moments chi = sample_moments([&] { return rng.chi_square(3); }, 400000);
  EXPECT_NEAR(chi.mean, 3.0, 0.03);
  EXPECT_NEAR(chi.variance, 6.0, 0.1);
  const Moments t = sample_moments([&] { return rng.student_t(6); }, 400000);
  EXPECT_NEAR(t.mean, 0.0, 0.01);
  EXPECT_NEAR(t.variance, 1.5, 0.05);
  const Moments e = sample_moments([&] { return rng.exponential(0.5); }, 400000);
  EXPECT_NEAR(e.mean, 0.5, 0.005);
  EXPECT_NEAR(e.variance, 0.25, 0.005);
}

TEST(Sampler, UniformStaysInsideTheOpenInterval) {
  Sampler rng(0);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Sampler, SameSeedSameStream) {
  Sampler a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double va = a.error(ErrorCase::B, Phase::Second);
    ASSERT_EQ(va, b.error(ErrorCase::B, Phase::Second));
    differs |= va != c.error(ErrorCase::B, Phase::Second);
  }
  EXPECT_TRUE(differs);
}

TEST(Seeds, ReplicationSeedsAreDistinct) {
  EXPECT_NE(replication_seed(0, 0), replication_seed(0, 1));
  EXPECT_NE(replication_seed(0, 1), replication_seed(1, 0) + 1);
  EXPECT_EQ(replication_seed(7, 3), splitmix64(10));
}

TEST(Truth, ModelsAndDifferences) {
  const Truth m1 = scenario_truth(ModelId::Model1);
  EXPECT_EQ(m1.beta, Eigen::Vector2d(10.0, 2.0));
  EXPECT_EQ(m1.beta1, Eigen::Vector2d(10.0, 2.0));
  EXPECT_LT(m1.delta0().norm(), 1e-15);
  const Truth m2 = scenario_truth(ModelId::Model2);
  EXPECT_EQ(m2.beta1, Eigen::Vector2d(7.0, 1.75));
  EXPECT_NEAR(m2.delta0()[0], 3.0, 1e-15);
  EXPECT_NEAR(m2.delta0()[1], 0.25, 1e-15);
}

TEST(StudyPi, SelectionFunctions) {
  EXPECT_EQ(study_pi(Study::None, Phase::First, 0.3), 1.0);
  EXPECT_NEAR(study_pi(Study::S1, Phase::First, 1.0), 0.8, 1e-15);
  EXPECT_NEAR(study_pi(Study::S1, Phase::Second, 0.5), 0.9, 1e-15);
  EXPECT_NEAR(study_pi(Study::S1, Phase::First, 0.0), 1.0, 1e-15);
  EXPECT_EQ(study_pi(Study::S2, Phase::First, 0.1), 0.8);
  EXPECT_EQ(study_pi(Study::S2, Phase::Second, 0.9), 0.8);
  EXPECT_NEAR(study_pi(Study::S3, Phase::First, 0.5), 0.9, 1e-15);
  EXPECT_EQ(study_pi(Study::S3, Phase::Second, 0.5), 0.8);
}

TEST(GenDataset, DesignAndPhases) {
  Scenario s;
  s.n = 1000;
  s.k = 300;
  s.model = ModelId::Model2;
  s.noise_scale = 0.0;
  const Dataset d = gen_dataset(s, 1);
  ASSERT_EQ(d.n(), 1000);
  EXPECT_EQ(d.k, 300);
  EXPECT_DOUBLE_EQ(d.x(0, 0), 0.001);
  EXPECT_DOUBLE_EQ(d.x(999, 0), 1.0);
  const auto m = paper_ratio_model();
  EXPECT_DOUBLE_EQ(d.y[10], m.value(d.x.row(10).transpose(), Eigen::Vector2d(10.0, 2.0)));
  EXPECT_DOUBLE_EQ(d.y[500], m.value(d.x.row(500).transpose(), Eigen::Vector2d(7.0, 1.75)));
  EXPECT_TRUE(std::all_of(d.delta.begin(), d.delta.end(), [](int v) { return v == 1; }));
}

TEST(GenDataset, StudyTwoMissingRate) {
  Scenario s;
  s.study = Study::S2;
  s.method = Method::CompleteCase;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const Dataset d = gen_dataset(s, seed);
    const int observed = std::accumulate(d.delta.begin(), d.delta.end(), 0);
    EXPECT_NEAR(1.0 - static_cast<double>(observed) / d.n(), 0.2, 0.04);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      EXPECT_EQ(std::isnan(d.y[i]), d.delta[static_cast<std::size_t>(i)] == 0);
    }
  }
  double missing = 0.0;
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    const Dataset d = gen_dataset(s, seed);
    missing += 1.0 - static_cast<double>(std::accumulate(d.delta.begin(), d.delta.end(), 0)) / d.n();
  }
  EXPECT_NEAR(missing / 20.0, 0.2, 0.02);
}

TEST(GenDataset, DeterministicInSeed) {
  Scenario s;
  s.study = Study::S1;
  s.method = Method::Weighted;
  s.error_case = ErrorCase::C;
  const Dataset a = gen_dataset(s, 99), b = gen_dataset(s, 99), c = gen_dataset(s, 100);
  EXPECT_TRUE(a.y.array().isNaN().cwiseEqual(b.y.array().isNaN()).all());
  EXPECT_EQ(a.delta, b.delta);
  for (Eigen::Index i = 0; i < a.n(); ++i) {
    if (a.delta[static_cast<std::size_t>(i)]) {
      EXPECT_EQ(a.y[i], b.y[i]);
    }
  }
  EXPECT_NE(a.delta, c.delta);
}

TEST(ScenarioValidation, RejectsBadSettings) {
  auto throws = [](auto mutate) {
    Scenario s;
    mutate(s);
    try {
      s.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::InvalidArgument;
    }
    return false;
  };
  EXPECT_FALSE(throws([](Scenario&) {}));
  EXPECT_TRUE(throws([](Scenario& s) { s.k = 0; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.k = s.n; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.replications = 0; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.alpha = 0.0; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.alpha = 1.0; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.lcr_replications = -1; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.noise_scale = -1.0; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.study = Study::S1; }));
  EXPECT_TRUE(throws([](Scenario& s) { s.method = Method::Imputed; }));
  EXPECT_FALSE(throws([](Scenario& s) {
    s.study = Study::S3;
    s.method = Method::Imputed;
  }));
  Scenario bad;
  bad.replications = 0;
  EXPECT_THROW(run_study(bad, 1), Error);
  EXPECT_THROW(gen_dataset(bad, 0), Error);
}

TEST(Names, RoundTrip) {
  for (ModelId v : {ModelId::Model1, ModelId::Model2}) EXPECT_EQ(parse_model_id(to_string(v)), v);
  for (ErrorCase v : {ErrorCase::A, ErrorCase::B, ErrorCase::C}) EXPECT_EQ(parse_error_case(to_string(v)), v);
  for (Study v : {Study::None, Study::S1, Study::S2, Study::S3}) EXPECT_EQ(parse_study(to_string(v)), v);
  for (Method v : {Method::Complete, Method::CompleteCase, Method::Weighted, Method::Imputed}) {
    EXPECT_EQ(parse_method(to_string(v)), v);
  }
  EXPECT_THROW(parse_model_id("model3"), Error);
  EXPECT_THROW(parse_error_case("d"), Error);
  EXPECT_THROW(parse_study("s4"), Error);
  EXPECT_THROW(parse_method("ipw"), Error);
}

TEST(Workers, EnvironmentOverride) {
  const char* saved = std::getenv("EL_THREADS");
  const std::string restore = saved ? saved : "";
  setenv("EL_THREADS", "3", 1);
  EXPECT_EQ(default_workers(), 3);
  setenv("EL_THREADS", "zero", 1);
  EXPECT_GE(default_workers(), 1);
  unsetenv("EL_THREADS");
  EXPECT_GE(default_workers(), 1);
  if (saved) setenv("EL_THREADS", restore.c_str(), 1);
}

TEST(Replication, NoiselessDataIsAlwaysCovered) {
  for (ModelId model : {ModelId::Model1, ModelId::Model2}) {
    Scenario s = small_scenario();
    s.model = model;
    s.noise_scale = 0.0;
    s.replications = 3;
    const SimulationReport r = run_study(s, 1);
    EXPECT_EQ(r.completed, 3);
    EXPECT_EQ(r.covered, 3);
    EXPECT_DOUBLE_EQ(r.coverage, 1.0);
    EXPECT_EQ(r.failure_count(), 0);
    for (double z : r.statistics) EXPECT_LT(z, 1e-6);
  }
}

TEST(Replication, MissingMethodsRun) {
  for (Method method : {Method::CompleteCase, Method::Weighted, Method::Imputed}) {
    Scenario s = small_scenario();
    s.study = Study::S2;
    s.method = method;
    const ReplicationResult r = run_replication(s, 0, false);
    ASSERT_TRUE(r.completed) << to_string(method) << ": " << r.failure_message;
    EXPECT_TRUE(std::isfinite(r.statistic));
    EXPECT_EQ(r.covered, !r.test.reject);
  }
}

TEST(Replication, SingleReplicationStudyMatches) {
  Scenario s = small_scenario();
  s.replications = 1;
  const SimulationReport report = run_study(s, 1);
  const ReplicationResult direct = run_replication(s, 0, false);
  ASSERT_TRUE(direct.completed);
  ASSERT_EQ(report.statistics.size(), 1u);
  EXPECT_EQ(report.statistics[0], direct.statistic);
  EXPECT_EQ(report.covered, direct.covered ? 1 : 0);
  EXPECT_DOUBLE_EQ(report.mc_stderr, 0.0);
}

TEST(Replication, RegionLengthOnRequestedSubset) {
  Scenario s = small_scenario();
  s.replications = 2;
  s.lcr_replications = 1;
  const SimulationReport r = run_study(s, 1);
  EXPECT_EQ(r.completed, 2);
  EXPECT_EQ(r.lcr_count, 1);
  EXPECT_GT(r.mean_lcr, 0.0);
}

TEST(Study, DeterministicAcrossWorkerCounts) {
  const Scenario s = small_scenario();
  const SimulationReport one = run_study(s, 1);
  const SimulationReport three = run_study(s, 3);
  const SimulationReport again = run_study(s, 3);
  EXPECT_EQ(one.statistics, three.statistics);
  EXPECT_EQ(three.statistics, again.statistics);
  EXPECT_EQ(one.covered, three.covered);
  EXPECT_EQ(one.completed, s.replications);
  EXPECT_NEAR(one.mc_stderr, std::sqrt(one.coverage * (1 - one.coverage) / one.completed), 1e-15);
}

TEST(Report, RejectionRate) {
  SimulationReport r;
  EXPECT_EQ(r.rejection_rate(0.05), 0.0);
  r.statistics = {0.1, 6.0, 9.3, 4.0};
  EXPECT_DOUBLE_EQ(r.rejection_rate(0.05), 0.5);
  EXPECT_DOUBLE_EQ(r.rejection_rate(0.01), 0.25);
  r.failures[ErrorKind::ConvexHull] = 2;
  r.failures[ErrorKind::FitFailure] = 1;
  EXPECT_EQ(r.failure_count(), 3);
}
