#include <gtest/gtest.h>

#include "bpseg/metrics.hpp"
#include "support.hpp"

namespace bpseg {
namespace {

TEST(Binarize, ZeroLogitIsForeground) {
  ScoreMap s(3, 1, std::vector<double>{-0.1, 0.0, 0.2});
  EXPECT_EQ(binarize(s), test::mask_from({".##"}));
  EXPECT_EQ(binarize(s, 0.1), test::mask_from({"..#"}));
}

TEST(IoU, HandCounted) {
  const BinaryMask a = test::mask_from({"##..", "##.."});
  const BinaryMask b = test::mask_from({".##.", ".##."});
  EXPECT_DOUBLE_EQ(iou(a, b), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(iou(BinaryMask(2, 2), BinaryMask(2, 2)), 1.0);
  EXPECT_THROW(iou(a, BinaryMask(2, 2)), Error);
}

TEST(IoU, AggregateIsRatioOfSums) {
  const BinaryMask a1 = test::mask_from({"#..."});
  const BinaryMask b1 = test::mask_from({"##.."});
  const BinaryMask a2 = test::mask_from({"####"});
  const BinaryMask b2 = test::mask_from({"####"});
  IoUAccumulator acc;
  acc = iou_accumulate(acc, a1, b1);
  acc = iou_accumulate(acc, a2, b2);
  EXPECT_EQ(acc.intersection_sum, 5);
  EXPECT_EQ(acc.union_sum, 6);
  IoUAccumulator x = iou_accumulate({}, a2, b2);
  IoUAccumulator y = iou_accumulate({}, a1, b1);
  EXPECT_EQ(x.merge(y), acc);
}

TEST(Dispersion, KnownValues) {
  const std::vector<double> v{1, 2, 3, 4};
  const DispersionStats d = dispersion(v);
  EXPECT_DOUBLE_EQ(d.mean, 2.5);
  EXPECT_DOUBLE_EQ(d.population_variance, 1.25);
  EXPECT_NEAR(d.sample_variance, 5.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(d.mean_abs_deviation, 1.0);
  EXPECT_EQ(d.count, 4u);
  const std::vector<double> one{0.7};
  EXPECT_EQ(dispersion(one).sample_variance, 0.0);
  EXPECT_THROW(dispersion(std::vector<double>{}), Error);
}

TEST(Improvement, PercentAndBaseline) {
  EXPECT_DOUBLE_EQ(improvement_percent(0.5, 0.6), 20.0);
  EXPECT_DOUBLE_EQ(improvement_percent(0.5, 0.4), -20.0);
  try {
    improvement_percent(0.0, 0.3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonPositiveBaseline);
  }
}

TEST(Format, FixedDecimals) {
  EXPECT_EQ(format_fixed(0.52384, 4), "0.5238");
  EXPECT_EQ(format_fixed(0.47155, 4).size(), 6u);
  EXPECT_EQ(format_fixed(27.0, 2), "27.00");
}

}  // namespace
}  // namespace bpseg
