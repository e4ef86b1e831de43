#include <gtest/gtest.h>

#include <filesystem>

#include "bpseg/dataset_io.hpp"
#include "bpseg/image_io.hpp"
#include "support.hpp"

namespace bpseg {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bpseg_io_" + name);
  fs::remove_all(p);
  return p;
}

TEST(Png, RoundTripAndDeterministicBytes) {
  const GrayImage img = test::random_image(13, 7, 4);
  EXPECT_EQ(decode_png_gray(encode_png(img)), img);
  EXPECT_EQ(encode_png(img), encode_png(img));
  const BinaryMask m = test::random_mask(9, 9, 1);
  EXPECT_EQ(decode_png_mask(encode_png(m)), m);
  RgbImage rgb(2, 1);
  rgb.at(1, 0) = {1, 2, 3};
  EXPECT_EQ(decode_png_rgb(encode_png(rgb)), rgb);
  EXPECT_THROW(decode_png_gray(Bytes{1, 2, 3}), Error);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const fs::path root = fresh_dir("roundtrip");
  auto a = test::sample_with("a1", test::disk(12, 10, 5, 5, 3));
  a.device = Device::kYgy;
  a.image = test::random_image(12, 10, 2);
  a.rater_masks["A"] = test::random_mask(12, 10, 3);
  a.second_pass_masks["A"] = test::random_mask(12, 10, 4);
  auto b = test::sample_with("b2", test::disk(12, 10, 6, 4, 2));
  b.device = Device::kBk3000If1;
  const std::vector<AnnotatedSample> ds{b, a};
  save_dataset(root, ds);
  const auto loaded = load_dataset(root);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].id, "b2");
  EXPECT_EQ(loaded[1].id, "a1");
  EXPECT_EQ(loaded[1].image, a.image);
  EXPECT_EQ(loaded[1].rater_masks.at("A"), a.rater_masks.at("A"));
  EXPECT_EQ(loaded[1].second_pass_masks.at("A"), a.second_pass_masks.at("A"));
  const auto only = load_dataset(root, Device::kYgy);
  ASSERT_EQ(only.size(), 1u);
  EXPECT_EQ(only[0].id, "a1");
  fs::remove_all(root);
}

TEST(Dataset, AnnotationFallback) {
  const fs::path root = fresh_dir("annotation");
  const fs::path dir = root / "YGY" / "x";
  write_png(dir / "image.png", GrayImage(6, 6, 10));
  write_text(dir / "annotation.json", R"({"shapes": [{"label": "BP1", "points": [[1,1],[4,1],[4,4],[1,4]]}]})");
  const auto ds = load_dataset(root);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].consensus, test::mask_from({"......", ".###..", ".###..", ".###..", "......", "......"}));
  fs::remove_all(root);
}

TEST(Dataset, Errors) {
  const fs::path root = fresh_dir("errors");
  EXPECT_THROW(load_dataset(root), Error);
  write_png(root / "PHILIPS" / "x" / "image.png", GrayImage(4, 4));
  try {
    load_dataset(root);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
  }
  fs::remove_all(root);
  write_png(root / "YGY" / "x" / "image.png", GrayImage(4, 4));
  EXPECT_THROW(load_dataset(root), Error);
  fs::remove_all(root);
}

TEST(Dataset, PolygonJsonParsesBack) {
  const std::vector<Polygon> polys{{{{0.5, 0.5}, {3, 0.5}, {3, 2}}}, {{{5, 5}, {6, 5}, {6, 6}}}};
  const auto back = parse_trunk_polygons(polygons_to_json(polys));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_DOUBLE_EQ(back[0].vertices[1].x, 3.0);
}

}  // namespace
}  // namespace bpseg
