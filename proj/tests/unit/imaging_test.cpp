#include <gtest/gtest.h>

#include <filesystem>

#include "anogen/errors.hpp"
#include "anogen/imaging.hpp"
#include "anogen/rng.hpp"

using namespace anogen;

namespace {

TEST(SequenceToImage, RowMajorWithTrailingPad) {
  TraceSequence t{{3, 6, 3, 4, 19}, Label::Normal, "x"};
  const auto img = sequence_to_image(t);
  EXPECT_EQ(img.pixels[0], 3);
  EXPECT_EQ(img.pixels[4], 19);
  for (std::size_t i = 5; i < kImagePixels; ++i) ASSERT_EQ(img.pixels[i], 255);
  EXPECT_EQ(img.label, Label::Normal);
  EXPECT_EQ(img.source_id, "x");
  std::vector<std::uint8_t> row(33, 1);
  const auto img2 = sequence_to_image({row, Label::Anomaly, ""});
  EXPECT_EQ(img2.pixels[32], 1);  // second row, first column
}

TEST(SequenceToImage, RejectsOverlong) {
  EXPECT_THROW(sequence_to_image({std::vector<std::uint8_t>(1025, 1), Label::Normal, ""}), DataError);
  EXPECT_NO_THROW(sequence_to_image({std::vector<std::uint8_t>(1024, 1), Label::Normal, ""}));
}

TEST(ImageToSequence, RoundTripForRandomTraces) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t len = 1 + rng.uniform_index(1024);
    TraceSequence t;
    for (std::size_t j = 0; j < len; ++j) t.values.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
    t.values.back() = static_cast<std::uint8_t>(rng.uniform_index(255));
    t.label = i % 2 ? Label::Anomaly : Label::Normal;
    const auto back = image_to_sequence(sequence_to_image(t));
    ASSERT_EQ(back.values, t.values);
    ASSERT_EQ(back.label, t.label);
  }
}

TEST(ImageToSequence, TraceEndingIn255LosesItsTail) {
  const auto back = image_to_sequence(sequence_to_image({{4, 255, 255}, Label::Normal, ""}));
  EXPECT_EQ(back.values, (std::vector<std::uint8_t>{4}));
  TraceImage blank;
  blank.pixels.fill(255);
  EXPECT_EQ(image_to_sequence(blank).values, (std::vector<std::uint8_t>{255}));
}

TEST(Normalize, ExactForEveryByte) {
  TraceImage img;
  for (std::size_t i = 0; i < kImagePixels; ++i) img.pixels[i] = static_cast<std::uint8_t>(i % 256);
  const auto t = normalize(img);
  EXPECT_EQ(t.dims(), (nn::Shape{1, 32, 32}));
  EXPECT_EQ(t[0], -1.0f);
  EXPECT_EQ(t[255], 1.0f);
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    ASSERT_NEAR(t[i], 2.0 * img.pixels[i] / 255.0 - 1.0, 1e-6);
  }
  EXPECT_EQ(denormalize(t, Label::Normal, "s").pixels, img.pixels);
}

TEST(Denormalize, RoundsAndClamps) {
  nn::Tensor<float> t({1, 32, 32});
  t[0] = -3.0f;
  t[1] = 3.0f;
  t[2] = 0.0f;   // 127.5 -> 128
  t[3] = -1e-6f;  // just below 127.5 -> 127
  const auto img = denormalize(t);
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[1], 255);
  EXPECT_EQ(img.pixels[2], 128);
  EXPECT_EQ(img.pixels[3], 127);
  EXPECT_EQ(img.label, Label::Anomaly);
  EXPECT_THROW(denormalize(nn::Tensor<float>({1, 16, 16})), ShapeError);
}

TEST(Pgm, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "anogen_imaging_test.pgm";
  TraceImage img;
  for (std::size_t i = 0; i < kImagePixels; ++i) img.pixels[i] = static_cast<std::uint8_t>((i * 7) % 256);
  img.source_id = "synth/normal/000001@step500";
  img.label = Label::Anomaly;
  write_pgm(img, path);
  const auto back = read_pgm(path, Label::Anomaly);
  EXPECT_EQ(back, img);
  std::filesystem::remove(path);
}

}  // namespace
