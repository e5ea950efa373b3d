#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace anogen {

enum class Label : std::uint8_t { Normal = 0, Anomaly = 1 };

std::string_view to_string(Label label);

inline constexpr std::size_t kMaxTraceLength = 1024;

// Abstracted system-call trace. Byte storage enforces the [0,255] range.
struct TraceSequence {
  std::vector<std::uint8_t> values;
  Label label = Label::Normal;
  std::string source_id;

  friend bool operator==(const TraceSequence&, const TraceSequence&) = default;
};

struct Dataset {
  std::vector<TraceSequence> traces;
  std::size_t discarded_count = 0;  // dropped for exceeding max_length
  std::size_t clamped_count = 0;    // values > 255 stored as 255
  std::vector<std::string> warnings;

  std::size_t normal_count() const;
  std::size_t anomaly_count() const;
  std::size_t size() const { return traces.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class ClampPolicy { Clamp, Reject };

// Reads one trace per plain-text file (whitespace-separated non-negative
// decimal integers). `anomaly_dir` is walked recursively so nested per-attack
// folders all map to Label::Anomaly. Files are visited in sorted path order.
// Non-integer tokens and empty files skip the file with a warning; an
// unreadable directory throws DataError.
Dataset load_traces(const std::filesystem::path& normal_dir, const std::filesystem::path& anomaly_dir,
                    std::size_t max_length = kMaxTraceLength, ClampPolicy clamp_policy = ClampPolicy::Clamp);

// Writes each trace as "<dir>/<index>.txt" under normal_dir / anomaly_dir.
void write_traces(const Dataset& ds, const std::filesystem::path& normal_dir,
                  const std::filesystem::path& anomaly_dir);

struct SplitSpec {
  enum class Mode { Fraction, Counts };
  Mode mode = Mode::Fraction;
  double test_fraction = 0.3;
  std::size_t test_normal = 0;
  std::size_t test_anomaly = 0;
  std::uint64_t seed = 0;

  static SplitSpec fraction(double f, std::uint64_t seed) { return {Mode::Fraction, f, 0, 0, seed}; }
  static SplitSpec counts(std::size_t normal, std::size_t anomaly, std::uint64_t seed) {
    return {Mode::Counts, 0.0, normal, anomaly, seed};
  }
};

struct Split {
  Dataset train;
  Dataset test;
};

// Stratified split. Each class's members are shuffled by Rng(seed) (normal
// class first) and the first n go to test; Fraction mode takes
// round(fraction * class size). Both halves keep the input order.
Split split_dataset(const Dataset& ds, const SplitSpec& spec);

// `count` distinct Normal traces sampled without replacement.
std::vector<TraceSequence> select_template(const Dataset& train, std::size_t count, std::uint64_t seed);

// Anomalies needed to match the Normal count (0 when anomalies dominate).
std::size_t required_generation_count(const Dataset& train);

// Desk-scale stand-in for the real corpus: a seeded first-order Markov chain
// over byte-valued call codes. Anomalous traces add short bursts of codes
// never used by normal traces near the start of the trace.
Dataset synth_dataset(std::size_t n_normal, std::size_t n_anomaly, std::pair<std::size_t, std::size_t> length_range,
                      std::uint64_t seed);

}  // namespace anogen
