#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "anogen/nn/tensor.hpp"
#include "anogen/trace_data.hpp"

namespace anogen {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr std::uint8_t kPadValue = 255;

// 32x32 single-channel byte image of one trace, row-major.
struct TraceImage {
  std::array<std::uint8_t, kImagePixels> pixels{};
  Label label = Label::Normal;
  std::string source_id;

  friend bool operator==(const TraceImage&, const TraceImage&) = default;
};

// Trace values fill pixels in row-major order; the remaining tail is 255.
// Throws DataError for traces longer than 1024.
TraceImage sequence_to_image(const TraceSequence& trace);

// Row-major pixels with the trailing run of 255s removed. An all-255 image
// decodes to the single value [255].
TraceSequence image_to_sequence(const TraceImage& image);

// Pixel p -> 2p/255 - 1, shape [1,32,32].
nn::Tensor<float> normalize(const TraceImage& image);

// v -> round(255(v+1)/2) clamped to [0,255], rounding halves away from zero.
TraceImage denormalize(const nn::Tensor<float>& t, Label label = Label::Anomaly, std::string source_id = {});

// Binary 8-bit PGM (P5). The source id is stored as a '#' comment line.
void write_pgm(const TraceImage& image, const std::filesystem::path& file);
TraceImage read_pgm(const std::filesystem::path& file, Label label);

}  // namespace anogen
