#include "anogen/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "anogen/errors.hpp"

namespace anogen {

TraceImage sequence_to_image(const TraceSequence& trace) {
  if (trace.values.size() > kImagePixels) {
    throw DataError("sequence_to_image: trace '" + trace.source_id + "' has length " +
                    std::to_string(trace.values.size()) + " > 1024");
  }
  TraceImage img;
  img.pixels.fill(kPadValue);
  std::copy(trace.values.begin(), trace.values.end(), img.pixels.begin());
  img.label = trace.label;
  img.source_id = trace.source_id;
  return img;
}

TraceSequence image_to_sequence(const TraceImage& image) {
  std::size_t len = kImagePixels;
  while (len > 0 && image.pixels[len - 1] == kPadValue) --len;
  TraceSequence t;
  t.label = image.label;
  t.source_id = image.source_id;
  if (len == 0) {
    t.values = {kPadValue};
  } else {
    t.values.assign(image.pixels.begin(), image.pixels.begin() + static_cast<std::ptrdiff_t>(len));
  }
  return t;
}

nn::Tensor<float> normalize(const TraceImage& image) {
  nn::Tensor<float> t({1, kImageSide, kImageSide});
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    t[i] = static_cast<float>(2.0 * image.pixels[i] / 255.0 - 1.0);
  }
  return t;
}

TraceImage denormalize(const nn::Tensor<float>& t, Label label, std::string source_id) {
  nn::require_shape(t, {1, kImageSide, kImageSide}, "denormalize");
  TraceImage img;
  for (std::size_t i = 0; i < kImagePixels; ++i) {
    const double p = std::round(255.0 * (static_cast<double>(t[i]) + 1.0) / 2.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
  }
  img.label = label;
  img.source_id = std::move(source_id);
  return img;
}

void write_pgm(const TraceImage& image, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + file.string() + "'");
  out << "P5\n# " << image.source_id << "\n" << kImageSide << " " << kImageSide << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), kImagePixels);
}

TraceImage read_pgm(const std::filesystem::path& file, Label label) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read image '" + file.string() + "'");
  TraceImage img;
  img.label = label;
  img.source_id = file.generic_string();
  std::string magic;
  std::getline(in, magic);
  if (magic != "P5") throw DataError("'" + file.string() + "' is not a binary PGM");
  // Header fields, skipping comment lines.
  std::size_t fields[3];
  for (auto& f : fields) {
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      if (img.source_id == file.generic_string() && comment.size() > 2) img.source_id = comment.substr(2);
    }
    if (!(in >> f)) throw DataError("'" + file.string() + "': malformed PGM header");
  }
  if (fields[0] != kImageSide || fields[1] != kImageSide || fields[2] != 255) {
    throw DataError("'" + file.string() + "': expected a 32x32 8-bit PGM");
  }
  in.get();
  in.read(reinterpret_cast<char*>(img.pixels.data()), kImagePixels);
  if (in.gcount() != static_cast<std::streamsize>(kImagePixels)) {
    throw DataError("'" + file.string() + "': truncated pixel data");
  }
  return img;
}

}  // namespace anogen
