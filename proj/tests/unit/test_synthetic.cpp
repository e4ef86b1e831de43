#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bpseg/enhance.hpp"
#include "bpseg/metrics.hpp"
#include "bpseg/synthetic.hpp"
#include "support.hpp"

namespace bpseg {
namespace {

PhantomConfig net_scale(int count = 4) {
  PhantomConfig c;
  c.count = count;
  c.network_scale = true;
  c.network_size = 96;
  c.radius_min = 6;
  c.radius_max = 14;
  c.seed = 12;
  return c;
}

TEST(Phantoms, DeterministicPerIndex) {
  const auto all = generate_phantoms(net_scale());
  ASSERT_EQ(all.size(), 4u);
  const Phantom again = generate_phantom(net_scale(), 2);
  EXPECT_EQ(all[2].sample.image, again.sample.image);
  EXPECT_EQ(all[2].sample.id, "phantom_0002");
  EXPECT_NE(all[1].sample.image, all[2].sample.image);
  EXPECT_TRUE(validate_dataset(std::vector<AnnotatedSample>{all[0].sample, all[1].sample}).empty());
}

TEST(Phantoms, MaskIsEllipseUnion) {
  for (const auto& p : generate_phantoms(net_scale(6))) {
    const BinaryMask& m = p.sample.consensus;
    for (int y = 0; y < m.height(); ++y) {
      for (int x = 0; x < m.width(); ++x) {
        bool in = false;
        for (const auto& e : p.trunks) {
          const double dx = (x + 0.5 - e.cx) / e.ax;
          const double dy = (y + 0.5 - e.cy) / e.ay;
          in = in || dx * dx + dy * dy <= 1.0;
        }
        ASSERT_EQ(m.at(x, y), in ? 1 : 0);
      }
    }
  }
}

TEST(Phantoms, FrameModeKeepsTrunksInsideRoi) {
  PhantomConfig c;
  c.count = 1;
  c.seed = 3;
  const Phantom p = generate_phantom(c, 0);
  EXPECT_EQ(p.sample.image.width(), 700);
  EXPECT_EQ(p.sample.image.height(), 600);
  const auto roi = crop_profile(Device::kSynthetic);
  for (int y = 0; y < 600; ++y) {
    for (int x = 0; x < 700; ++x) {
      const bool inside = x >= roi.origin_x && x < roi.origin_x + roi.crop_width && y >= roi.origin_y &&
                          y < roi.origin_y + roi.crop_height;
      if (!inside) ASSERT_EQ(p.sample.consensus.at(x, y), 0);
    }
  }
}

TEST(Phantoms, DarkHistogram) {
  const auto all = generate_phantoms(net_scale(5));
  std::vector<GrayImage> imgs;
  for (const auto& p : all) imgs.push_back(p.sample.image);
  const HistogramReport h = dataset_histogram(imgs, "dark");
  std::uint64_t below = 0;
  for (int b = 0; b < 96; ++b) below += h.bins[static_cast<std::size_t>(b)];
  EXPECT_GE(static_cast<double>(below), 0.9 * static_cast<double>(h.total()));
}

TEST(Phantoms, InvalidConfig) {
  PhantomConfig c = net_scale();
  c.trunks_min = 4;
  c.trunks_max = 2;
  try {
    generate_phantoms(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
  }
}

TEST(DistanceTransform, MatchesBruteForce) {
  const BinaryMask m = test::random_mask(23, 17, 4, 10);
  const auto d = distance_to_label(m, 1);
  for (int y = 0; y < 17; ++y) {
    for (int x = 0; x < 23; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (int v = 0; v < 17; ++v) {
        for (int u = 0; u < 23; ++u) {
          if (m.at(u, v)) best = std::min(best, std::hypot(u - x, v - y));
        }
      }
      ASSERT_NEAR(d[static_cast<std::size_t>(y * 23 + x)], best, 1e-9);
    }
  }
}

TEST(Rater, ErosionOfDisk) {
  const BinaryMask d = test::disk(64, 64, 32, 32, 20);
  RaterSimConfig cfg;
  cfg.dilate_or_erode = -2;
  EXPECT_NEAR(iou(simulate_rater(d, cfg), d), 0.81, 0.02);
}

TEST(Rater, DilationContainsAndDropEmpties) {
  const BinaryMask d = test::disk(40, 40, 20, 20, 8);
  RaterSimConfig cfg;
  cfg.dilate_or_erode = 3;
  const BinaryMask big = simulate_rater(d, cfg);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.data()[i]) ASSERT_EQ(big.data()[i], 1);
  }
  cfg = {};
  cfg.drop_probability = 1.0;
  EXPECT_EQ(simulate_rater(d, cfg), BinaryMask(40, 40));
  cfg.drop_probability = 1.5;
  EXPECT_THROW(simulate_rater(d, cfg), Error);
}

TEST(Rater, JitterIsSeeded) {
  const BinaryMask d = test::disk(48, 48, 24, 24, 12);
  RaterSimConfig cfg;
  cfg.boundary_jitter_sd = 1.5;
  cfg.seed = 9;
  EXPECT_EQ(simulate_rater(d, cfg), simulate_rater(d, cfg));
  const double v = iou(simulate_rater(d, cfg), d);
  EXPECT_GT(v, 0.6);
  EXPECT_LT(v, 1.0);
}

}  // namespace
}  // namespace bpseg
