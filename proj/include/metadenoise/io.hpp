#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "metadenoise/errors.hpp"
#include "metadenoise/evaluation.hpp"
#include "metadenoise/experiment.hpp"
#include "metadenoise/network.hpp"
#include "metadenoise/tensor.hpp"
#include "metadenoise/training.hpp"

namespace metadenoise {

namespace fs = std::filesystem;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Whole-field decimal real; false on junk, trailing characters or non-finite.
inline bool parse_real(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Signals: one comma-separated record per line.

inline std::vector<Tensor> parse_signal_dataset(std::string_view text) {
  std::vector<Tensor> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = detail::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> values;
    std::size_t field = 0;
    while (true) {
      const std::size_t comma = line.find(',', field);
      const std::string_view tok = line.substr(field, comma == std::string_view::npos ? line.npos : comma - field);
      double v = 0.0;
      if (!detail::parse_real(tok, v)) {
        throw ParseError("malformed number '" + std::string(detail::trim(tok)) + "'", line_no);
      }
      values.push_back(v);
      if (comma == std::string_view::npos) break;
      field = comma + 1;
    }
    out.push_back(Tensor::vector(std::move(values)));
  }
  if (out.empty()) throw ArgumentError("signal dataset has no records");
  return out;
}

inline std::vector<Tensor> load_signal_dataset(const fs::path& path) {
  try {
    return parse_signal_dataset(detail::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.line());
  } catch (const ArgumentError& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
}

inline void save_signal_dataset(const std::vector<Tensor>& signals, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  for (const auto& s : signals) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Binary PGM (P5), 8- or 16-bit.

inline Tensor parse_pgm(std::string_view bytes, const std::string& name) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> FormatError { return FormatError(name + ": " + why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::uint64_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(bytes[pos] - '0');
      if (v > 1'000'000'000) throw fail(std::string("header ") + what + " is too large");
      ++pos;
    }
    if (pos == start) throw fail(std::string("header lacks ") + what);
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("not a binary PGM (P5) file");
  pos = 2;
  const std::uint64_t width = number("width");
  const std::uint64_t height = number("height");
  const std::uint64_t maxval = number("maxval");
  if (width == 0 || height == 0) throw fail("zero image extent");
  if (maxval == 0 || maxval > 65535) throw fail("maxval must be in 1..65535");
  if (pos >= bytes.size() || !(bytes[pos] == ' ' || bytes[pos] == '\n' || bytes[pos] == '\r' || bytes[pos] == '\t')) {
    throw fail("header must end with one whitespace byte");
  }
  ++pos;
  const std::size_t depth = maxval < 256 ? 1 : 2;
  const std::uint64_t need = width * height * depth;
  if (bytes.size() - pos < need) throw fail("truncated pixel data");

  std::vector<double> v(width * height);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::uint32_t raw = depth == 1 ? p[i] : (std::uint32_t{p[2 * i]} << 8) | p[2 * i + 1];
    if (raw > maxval) throw fail("sample exceeds maxval");
    v[i] = static_cast<double>(raw) / static_cast<double>(maxval);
  }
  return Tensor({height, width}, std::move(v));
}

inline Tensor load_pgm(const fs::path& path) { return parse_pgm(detail::read_file(path), path.string()); }

/// Writes a [H, W] tensor with values clamped to [0, 1].
inline void save_pgm(const Tensor& image, const fs::path& path, std::uint32_t maxval = 255) {
  if (image.shape().size() != 2) throw DimensionError("PGM needs a 2-D tensor, got " + shape_string(image.shape()));
  if (maxval == 0 || maxval > 65535) throw ArgumentError("PGM maxval must be in 1..65535");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << image.shape()[1] << ' ' << image.shape()[0] << '\n' << maxval << '\n';
  for (double x : image.values()) {
    const auto q = static_cast<std::uint32_t>(std::lround(std::clamp(x, 0.0, 1.0) * maxval));
    if (maxval > 255) out.put(static_cast<char>(q >> 8));
    out.put(static_cast<char>(q & 0xff));
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Every regular file in `dir`, in filename order.
inline std::vector<Tensor> load_image_dataset(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("image dataset '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  if (files.empty()) throw ArgumentError("image dataset '" + dir.string() + "' is empty");
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  std::vector<Tensor> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_pgm(f));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints:
//   "MDNZ1" | version u8 | descriptor length u32 LE | descriptor UTF-8 |
//   count u64 LE | count x f64 LE

inline constexpr char kCheckpointMagic[5] = {'M', 'D', 'N', 'Z', '1'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::string_view in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const DenoiserModel& model) {
  const std::string desc = model.spec().descriptor();
  const ParamVector params = model.get_params();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(desc.size()));
  out += desc;
  detail::put_le<std::uint64_t>(out, params.size());
  for (double v : params.values()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline DenoiserModel decode_checkpoint(std::string_view in, const std::string& name = "checkpoint") {
  auto fail = [&](const std::string& why) { return FormatError(name + ": " + why); };
  if (in.size() < sizeof kCheckpointMagic || std::memcmp(in.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw fail("bad magic");
  }
  std::size_t pos = sizeof kCheckpointMagic;
  if (in.size() < pos + 1) throw fail("missing version byte");
  const auto version = static_cast<std::uint8_t>(in[pos++]);
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
  if (in.size() < pos + 4) throw fail("truncated descriptor length");
  const auto desc_len = detail::get_le<std::uint32_t>(in, pos);
  pos += 4;
  if (in.size() - pos < desc_len) throw fail("truncated descriptor");
  const NetworkSpec spec = NetworkSpec::parse(in.substr(pos, desc_len));
  pos += desc_len;
  if (in.size() - pos < 8) throw fail("truncated parameter count");
  const auto count = detail::get_le<std::uint64_t>(in, pos);
  pos += 8;
  // Check the payload length before allocating anything sized by `count`.
  if (count != spec.param_count()) {
    throw fail("parameter count " + std::to_string(count) + " does not match the network (" +
               std::to_string(spec.param_count()) + ")");
  }
  if ((in.size() - pos) / 8 != count || (in.size() - pos) % 8 != 0) {
    throw fail("parameter count mismatch: header declares " + std::to_string(count) + ", payload holds " +
               std::to_string((in.size() - pos) / 8));
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, pos + 8 * i));
  try {
    return DenoiserModel(spec, ParamVector(spec.layout(), std::move(values)));
  } catch (const ArgumentError& e) {
    throw fail(e.what());
  }
}

inline void save_checkpoint(const DenoiserModel& model, const fs::path& path) {
  const std::string bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline DenoiserModel load_checkpoint(const fs::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Reports.

/// 12 significant digits; "exact" for the zero-residual sentinel.
inline std::string format_db(double v) {
  if (is_exact(v)) return "exact";
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline constexpr std::string_view kReportHeader = "method,n_tasks,k,seed,metric_mean_db,metric_sd_db,n_test";

inline std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << kReportHeader << '\n';
  for (const auto& r : report.rows) {
    os << r.method << ',' << r.n_tasks << ',' << r.k << ',' << r.seed << ',' << format_db(r.metric.mean) << ','
       << format_db(r.metric.sd) << ',' << r.metric.count() << '\n';
  }
  return os.str();
}

inline std::string ttest_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "method_a,method_b,n_tasks,t,df,p,direction,degenerate\n" << std::setprecision(12);
  for (const auto& t : report.ttests) {
    os << t.method_a << ',' << t.method_b << ',' << t.n_tasks << ',' << t.result.t << ',' << t.result.df << ','
       << t.result.p << ',' << t.result.direction << ',' << (t.result.degenerate ? 1 : 0) << '\n';
  }
  return os.str();
}

/// Table: Initial Noise first, then one line per (method, n_tasks) with the
/// mean and sd over seeds of the per-seed means.
inline std::string report_table(const EvalReport& report) {
  std::ostringstream os;
  const std::string unit = to_string(report.metric) == "psnr" ? "PSNR (dB)" : "SNR (dB)";
  os << std::left << std::setw(16) << "Method" << std::setw(9) << "Tasks" << std::setw(7) << "Seeds" << unit << '\n';
  auto line = [&](const std::string& name, const std::string& tasks, const std::vector<double>& means) {
    const MetricResult m = MetricResult::from(means);
    std::ostringstream v;
    if (is_exact(m.mean)) {
      v << "exact";
    } else {
      v << std::fixed << std::setprecision(2) << m.mean << " +/- " << m.sd;
    }
    os << std::left << std::setw(16) << name << std::setw(9) << tasks << std::setw(7) << means.size() << v.str()
       << '\n';
  };
  if (!report.initial_noise.empty()) {
    std::vector<double> m;
    for (const auto& r : report.initial_noise) m.push_back(r.metric.mean);
    line("Initial Noise", "-", m);
  }
  std::vector<std::pair<std::string, std::size_t>> keys;
  for (const auto& r : report.rows) {
    const std::pair<std::string, std::size_t> key{r.method, r.n_tasks};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [method, n] : keys) {
    std::vector<double> m;
    for (const auto& r : report.rows) {
      if (r.method == method && r.n_tasks == n) m.push_back(r.metric.mean);
    }
    line(method, std::to_string(n), m);
  }
  if (!report.ttests.empty()) {
    os << "\nOne-tailed paired t-tests (alternative: a > b)\n";
    for (const auto& t : report.ttests) {
      os << "  " << t.method_a << " vs " << t.method_b << " @ " << t.n_tasks << " tasks: t = " << std::setprecision(4)
         << t.result.t << ", df = " << t.result.df << ", p = " << std::setprecision(3) << t.result.p
         << (t.result.degenerate ? " (degenerate)" : "") << '\n';
    }
  }
  return os.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// report.csv, report.txt, ttest.csv and streams.log in `dir`.
inline void emit_report(const EvalReport& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
  write_text(dir / "report.csv", report_csv(report));
  write_text(dir / "report.txt", report_table(report));
  write_text(dir / "ttest.csv", ttest_csv(report));
  std::string log;
  for (const auto& s : report.stream_log) log += s + '\n';
  write_text(dir / "streams.log", log);
}

struct ParsedReportRow {
  std::string method;
  std::size_t n_tasks = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  double mean_db = 0.0;
  double sd_db = 0.0;
  std::size_t n_test = 0;
};

/// Reads report.csv back.
inline std::vector<ParsedReportRow> parse_report_csv(std::string_view text) {
  std::vector<ParsedReportRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != kReportHeader) throw ParseError("unexpected report header", 1);
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ParseError("expected 7 fields", line_no);
    auto db = [&](const std::string& s) {
      if (s == "exact") return kExactMatch;
      double v = 0.0;
      if (!detail::parse_real(s, v)) throw ParseError("bad number '" + s + "'", line_no);
      return v;
    };
    try {
      rows.push_back({f[0], std::stoull(f[1]), std::stoull(f[2]), std::stoull(f[3]), db(f[4]), db(f[5]),
                      std::stoull(f[6])});
    } catch (const std::logic_error&) {
      throw ParseError("bad integer field", line_no);
    }
  }
  return rows;
}

inline std::string sweep_csv(const SweepTable& table) {
  std::ostringstream os;
  os << "method,n_tasks,k,n_seeds,metric_mean_db,metric_sd_db,metric_se_db\n";
  for (const auto& r : table.rows) {
    os << table.method << ',' << table.n_tasks << ',' << r.k << ',' << r.seed_means.size() << ','
       << format_db(r.mean) << ',' << format_db(r.sd) << ',' << format_db(r.standard_error()) << '\n';
  }
  return os.str();
}

inline std::string train_log_csv(const TrainLog& log) {
  std::ostringstream os;
  os << "iteration,mean_inner_loss,displacement_norm,wall_seconds\n" << std::setprecision(12);
  for (std::size_t i = 0; i < log.size(); ++i) {
    os << i << ',' << log.mean_inner_loss[i] << ',' << log.displacement_norm[i] << ',' << log.wall_seconds[i] << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

/// Exclusive claim on an output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
    path_ = dir / ".metadenoise.lock";
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw IoError("output directory '" + dir.string() + "' is locked by another run (" + path_.string() + ")");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

  const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

}  // namespace metadenoise
