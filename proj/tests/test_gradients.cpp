#include <gtest/gtest.h>

#include "gradcheck.hpp"

namespace hdp::gradcheck {
namespace {

constexpr std::size_t kCases = 20;

void expect_all_cases_pass(const SuiteResult& s) {
  ASSERT_EQ(s.cases.size(), kCases);
  for (const CaseResult& c : s.cases) {
    EXPECT_GT(c.checked, 0u) << s.kernel << " seed " << c.seed;
    EXPECT_LT(c.rel_error, kTolerance) << s.kernel << " seed " << c.seed;
  }
  EXPECT_TRUE(s.passed());
}

TEST(GradientCheckTest, Conv) { expect_all_cases_pass(check_conv(kCases)); }
TEST(GradientCheckTest, MaxPool) { expect_all_cases_pass(check_maxpool(kCases)); }
TEST(GradientCheckTest, Relu) { expect_all_cases_pass(check_relu(kCases)); }
TEST(GradientCheckTest, RftmEndToEnd) { expect_all_cases_pass(check_rftm(kCases)); }
TEST(GradientCheckTest, SoftmaxKl) { expect_all_cases_pass(check_softmax_kl(kCases)); }

TEST(GradientCheckTest, SuiteWithoutCasesDoesNotPass) { EXPECT_FALSE((SuiteResult{"empty", {}}.passed())); }

}  // namespace
}  // namespace hdp::gradcheck
