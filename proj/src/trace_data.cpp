#include "anogen/trace_data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include "anogen/errors.hpp"
#include "anogen/rng.hpp"

namespace fs = std::filesystem;

namespace anogen {

std::string_view to_string(Label label) { return label == Label::Normal ? "normal" : "anomaly"; }

std::size_t Dataset::normal_count() const {
  return static_cast<std::size_t>(
      std::count_if(traces.begin(), traces.end(), [](const auto& t) { return t.label == Label::Normal; }));
}

std::size_t Dataset::anomaly_count() const { return traces.size() - normal_count(); }

namespace {

std::vector<fs::path> list_files(const fs::path& root, bool recursive) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("cannot read trace directory '" + root.string() + "'");
  std::vector<fs::path> files;
  auto collect = [&](auto it) {
    for (const auto& entry : it) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
  };
  try {
    if (recursive) {
      collect(fs::recursive_directory_iterator(root));
    } else {
      collect(fs::directory_iterator(root));
    }
  } catch (const fs::filesystem_error& e) {
    throw DataError("cannot read trace directory '" + root.string() + "': " + e.what());
  }
  std::sort(files.begin(), files.end());
  return files;
}

enum class ParseOutcome { Ok, Skipped, TooLong };

ParseOutcome parse_trace_file(const fs::path& file, std::size_t max_length, ClampPolicy policy,
                              TraceSequence& trace, std::size_t& clamped, std::vector<std::string>& warnings) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    warnings.push_back("skipped unreadable file " + file.string());
    return ParseOutcome::Skipped;
  }
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t file_clamped = 0;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    const char* tok_end = p;
    while (tok_end < end && !std::isspace(static_cast<unsigned char>(*tok_end))) ++tok_end;
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(p, tok_end, v);
    if (ptr != tok_end || (ec != std::errc() && ec != std::errc::result_out_of_range)) {
      warnings.push_back("skipped " + file.string() + ": non-integer token '" + std::string(p, tok_end) + "'");
      return ParseOutcome::Skipped;
    }
    if (ec == std::errc::result_out_of_range || v > 255) {
      if (policy == ClampPolicy::Reject) {
        warnings.push_back("skipped " + file.string() + ": value '" + std::string(p, tok_end) + "' exceeds 255");
        return ParseOutcome::Skipped;
      }
      v = 255;
      ++file_clamped;
    }
    trace.values.push_back(static_cast<std::uint8_t>(v));
    p = tok_end;
  }
  if (trace.values.empty()) {
    warnings.push_back("skipped empty file " + file.string());
    return ParseOutcome::Skipped;
  }
  if (trace.values.size() > max_length) return ParseOutcome::TooLong;
  clamped += file_clamped;
  return ParseOutcome::Ok;
}

void load_class(const fs::path& root, bool recursive, Label label, std::size_t max_length, ClampPolicy policy,
                Dataset& ds) {
  for (const auto& file : list_files(root, recursive)) {
    TraceSequence trace;
    trace.label = label;
    trace.source_id = file.generic_string();
    switch (parse_trace_file(file, max_length, policy, trace, ds.clamped_count, ds.warnings)) {
      case ParseOutcome::Ok:
        ds.traces.push_back(std::move(trace));
        break;
      case ParseOutcome::TooLong:
        ++ds.discarded_count;
        break;
      case ParseOutcome::Skipped:
        break;
    }
  }
}

}  // namespace

Dataset load_traces(const fs::path& normal_dir, const fs::path& anomaly_dir, std::size_t max_length,
                    ClampPolicy clamp_policy) {
  Dataset ds;
  load_class(normal_dir, false, Label::Normal, max_length, clamp_policy, ds);
  load_class(anomaly_dir, true, Label::Anomaly, max_length, clamp_policy, ds);
  return ds;
}

void write_traces(const Dataset& ds, const fs::path& normal_dir, const fs::path& anomaly_dir) {
  fs::create_directories(normal_dir);
  fs::create_directories(anomaly_dir);
  std::size_t n_normal = 0, n_anomaly = 0;
  char name[32];
  for (const auto& t : ds.traces) {
    const bool normal = t.label == Label::Normal;
    std::snprintf(name, sizeof name, "%06zu.txt", normal ? n_normal++ : n_anomaly++);
    const fs::path file = (normal ? normal_dir : anomaly_dir) / name;
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot write trace file '" + file.string() + "'");
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      if (i) out << ' ';
      out << static_cast<unsigned>(t.values[i]);
    }
    out << '\n';
  }
}

Split split_dataset(const Dataset& ds, const SplitSpec& spec) {
  std::vector<std::size_t> normal_idx, anomaly_idx;
  for (std::size_t i = 0; i < ds.traces.size(); ++i) {
    (ds.traces[i].label == Label::Normal ? normal_idx : anomaly_idx).push_back(i);
  }

  std::size_t n_test_normal = 0, n_test_anomaly = 0;
  if (spec.mode == SplitSpec::Mode::Fraction) {
    if (!(spec.test_fraction >= 0.0 && spec.test_fraction <= 1.0)) {
      throw DataError("split: test_fraction must lie in [0,1], got " + std::to_string(spec.test_fraction));
    }
    n_test_normal = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(normal_idx.size())));
    n_test_anomaly =
        static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(anomaly_idx.size())));
  } else {
    if (spec.test_normal > normal_idx.size()) {
      throw DataError("split: requested " + std::to_string(spec.test_normal) + " normal test traces but only " +
                      std::to_string(normal_idx.size()) + " normal traces are available");
    }
    if (spec.test_anomaly > anomaly_idx.size()) {
      throw DataError("split: requested " + std::to_string(spec.test_anomaly) + " anomaly test traces but only " +
                      std::to_string(anomaly_idx.size()) + " anomaly traces are available");
    }
    n_test_normal = spec.test_normal;
    n_test_anomaly = spec.test_anomaly;
  }

  Rng rng(spec.seed);
  std::vector<bool> in_test(ds.traces.size(), false);
  auto pick = [&](std::vector<std::size_t>& idx, std::size_t n) {
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t k = 0; k < n; ++k) in_test[idx[k]] = true;
  };
  pick(normal_idx, n_test_normal);
  pick(anomaly_idx, n_test_anomaly);

  Split out;
  for (std::size_t i = 0; i < ds.traces.size(); ++i) {
    (in_test[i] ? out.test : out.train).traces.push_back(ds.traces[i]);
  }
  return out;
}

std::vector<TraceSequence> select_template(const Dataset& train, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> normals;
  for (std::size_t i = 0; i < train.traces.size(); ++i) {
    if (train.traces[i].label == Label::Normal) normals.push_back(i);
  }
  if (count > normals.size()) {
    throw DataError("select_template: requested " + std::to_string(count) + " templates but only " +
                    std::to_string(normals.size()) + " normal traces are available");
  }
  Rng rng(seed);
  rng.shuffle(normals.begin(), normals.end());
  std::vector<TraceSequence> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(train.traces[normals[k]]);
  return out;
}

std::size_t required_generation_count(const Dataset& train) {
  const auto n = train.normal_count(), a = train.anomaly_count();
  return n > a ? n - a : 0;
}

namespace {

// Sparse first-order chain: each state lists successors with cumulative
// weights.
struct MarkovChain {
  struct Row {
    std::vector<std::uint8_t> next;
    std::vector<double> cumulative;
  };
  std::vector<Row> rows = std::vector<Row>(256);
  std::vector<std::uint8_t> starts;

  std::uint8_t step(std::uint8_t s, Rng& rng) const {
    const auto& r = rows[s];
    const double u = rng.uniform() * r.cumulative.back();
    const auto it = std::upper_bound(r.cumulative.begin(), r.cumulative.end(), u);
    return r.next[static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - r.cumulative.begin(),
                                                                    static_cast<std::ptrdiff_t>(r.next.size()) - 1))];
  }
};

std::vector<std::uint8_t> draw_codes(Rng& rng, std::size_t n, unsigned lo, unsigned hi) {
  std::vector<std::uint8_t> pool;
  for (unsigned v = lo; v < hi; ++v) pool.push_back(static_cast<std::uint8_t>(v));
  rng.shuffle(pool.begin(), pool.end());
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

void add_edge(MarkovChain::Row& row, std::uint8_t to, double w) {
  row.next.push_back(to);
  row.cumulative.push_back((row.cumulative.empty() ? 0.0 : row.cumulative.back()) + w);
}

// Class structure constants for the synthetic corpus. Normal behaviour is a
// chain over 48 codes in [40,220). Anomalous traces follow the same chain but
// may divert into a burst chain over 24 codes below 40 during their first
// kBurstWindow calls. The per-step entry probability is drawn per trace from
// [0, 2 * kBurstEntry], so evidence strength varies from trace to trace, and
// one entry at a random step inside the window is always taken. Once in a
// burst the trace stays with probability kBurstStay.
constexpr std::size_t kNormalCodes = 48;
constexpr std::size_t kBurstCodes = 24;
constexpr std::size_t kSuccessors = 4;
constexpr std::size_t kBurstWindow = 128;
constexpr double kBurstEntry = 0.05;
constexpr double kBurstStay = 0.9;

struct Structure {
  MarkovChain normal;
  MarkovChain burst;
  std::array<std::uint8_t, 256> burst_entry{};  // per normal code
  std::array<bool, 256> is_burst{};
};

Structure build_structure(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "synth-structure"));
  const auto normal_codes = draw_codes(rng, kNormalCodes, 40, 220);
  const auto burst_codes = draw_codes(rng, kBurstCodes, 0, 40);

  Structure st;
  st.normal.starts = normal_codes;
  for (const auto s : normal_codes) {
    MarkovChain::Row row;
    for (std::size_t k = 0; k < kSuccessors; ++k) {
      add_edge(row, normal_codes[rng.uniform_index(normal_codes.size())], 0.2 + rng.uniform());
    }
    st.normal.rows[s] = row;
    st.burst_entry[s] = burst_codes[rng.uniform_index(burst_codes.size())];
  }
  for (const auto s : burst_codes) {
    MarkovChain::Row row;
    std::vector<double> w(kSuccessors);
    double sum = 0;
    for (auto& x : w) sum += (x = 0.2 + rng.uniform());
    for (std::size_t k = 0; k < kSuccessors; ++k) {
      add_edge(row, burst_codes[rng.uniform_index(burst_codes.size())], kBurstStay * w[k] / sum);
    }
    add_edge(row, normal_codes[rng.uniform_index(normal_codes.size())], 1.0 - kBurstStay);
    st.burst.rows[s] = row;
    st.is_burst[s] = true;
  }
  return st;
}

// `entry` is the burst entry probability inside the window and `forced` a
// position where a burst always starts; forced 0 gives a normal trace.
TraceSequence sample_trace(const Structure& st, double entry, std::size_t forced, std::size_t length, Rng& rng) {
  TraceSequence t;
  t.values.reserve(length);
  std::uint8_t s = st.normal.starts[rng.uniform_index(st.normal.starts.size())];
  t.values.push_back(s);
  while (t.values.size() < length) {
    const std::size_t pos = t.values.size();
    if (st.is_burst[s]) {
      s = st.burst.step(s, rng);
    } else if (forced > 0 && pos < kBurstWindow && (pos == forced || rng.uniform() < entry)) {
      s = st.burst_entry[s];
    } else {
      s = st.normal.step(s, rng);
    }
    t.values.push_back(s);
  }
  return t;
}

}  // namespace

Dataset synth_dataset(std::size_t n_normal, std::size_t n_anomaly, std::pair<std::size_t, std::size_t> length_range,
                      std::uint64_t seed) {
  const auto [lo, hi] = length_range;
  if (lo < 1 || lo > hi || hi > kMaxTraceLength) {
    throw DataError("synth_dataset: length range must satisfy 1 <= min <= max <= 1024");
  }
  const auto st = build_structure(seed);
  Rng rng(derive_seed(seed, "synth-traces"));
  Dataset ds;
  ds.traces.reserve(n_normal + n_anomaly);
  char id[48];
  auto emit = [&](Label label, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = lo + rng.uniform_index(hi - lo + 1);
      const bool anomalous = label == Label::Anomaly;
      const double entry = anomalous ? 2.0 * kBurstEntry * rng.uniform() : 0.0;
      const std::size_t span = std::min(kBurstWindow, len);
      const std::size_t forced = anomalous && span > 1 ? 1 + rng.uniform_index(span - 1) : 0;
      TraceSequence t = sample_trace(st, entry, forced, len, rng);
      t.label = label;
      std::snprintf(id, sizeof id, "synth/%s/%06zu", label == Label::Normal ? "normal" : "anomaly", i);
      t.source_id = id;
      ds.traces.push_back(std::move(t));
    }
  };
  emit(Label::Normal, n_normal);
  emit(Label::Anomaly, n_anomaly);
  return ds;
}

}  // namespace anogen
