#pragma once

// Dataset, checkpoint and report files.  Grammars are in docs/FORMATS.md.

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dataloops/dataset.hpp"
#include "dataloops/metrics.hpp"
#include "dataloops/mlp.hpp"
#include "dataloops/schedule.hpp"

namespace dataloops {

inline constexpr int kDatasetVersion = 1;
inline constexpr int kCheckpointVersion = 1;

// Shortest decimal form that parses back to the same double.
inline std::string lossless(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(where + ": expected a number, got '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s, const std::string& where) {
  long long v = 0;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError(where + ": expected an integer, got '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// ---- datasets -------------------------------------------------------------

inline void write_dataset(std::ostream& os, const NoisyDataset& d, const Schedule& schedule) {
  d.validate(schedule);
  os << "# dataloops-dataset " << kDatasetVersion << '\n'
     << "# dim " << d.dim << '\n'
     << "# count " << d.size() << '\n'
     << "# schedule " << to_string(schedule.kind()) << ' ' << lossless(schedule.sigma_min()) << ' '
     << lossless(schedule.sigma_max()) << '\n'
     << "# provenance " << d.provenance << '\n'
     << "# end\n";
  os << "t_anchor";
  for (Eigen::Index j = 0; j < d.dim; ++j) os << ",x" << j;
  os << ",has_ref";
  for (Eigen::Index j = 0; j < d.dim; ++j) os << ",ref" << j;
  os << '\n';
  for (const auto& s : d.samples) {
    os << lossless(s.t_anchor);
    for (Eigen::Index j = 0; j < d.dim; ++j) os << ',' << lossless(s.x[j]);
    os << ',' << (s.clean_ref ? 1 : 0);
    for (Eigen::Index j = 0; j < d.dim; ++j) os << ',' << (s.clean_ref ? lossless((*s.clean_ref)[j]) : std::string());
    os << '\n';
  }
}

struct DatasetFile {
  NoisyDataset dataset;
  Schedule schedule;
};

inline DatasetFile read_dataset(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next = [&](const char* what) {
    if (!std::getline(is, line)) throw FormatError("dataset: unexpected end of file, expected " + std::string(what));
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  auto where = [&] { return "dataset line " + std::to_string(line_no); };
  auto header = [&](const std::string& key) {
    next(("header '" + key + "'").c_str());
    const std::string prefix = "# " + key;
    if (line.rfind(prefix, 0) != 0) throw FormatError(where() + ": expected '" + prefix + " ...', got '" + line + "'");
    return trim(std::string_view(line).substr(prefix.size()));
  };

  const long long version = parse_int(header("dataloops-dataset"), where());
  if (version != kDatasetVersion)
    throw FormatError("dataset version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kDatasetVersion) + ")");
  DatasetFile f;
  f.dataset.dim = static_cast<Eigen::Index>(parse_int(header("dim"), where()));
  if (f.dataset.dim < 1) throw FormatError(where() + ": dim must be >= 1");
  const long long count = parse_int(header("count"), where());
  if (count < 0) throw FormatError(where() + ": count must be >= 0");
  {
    const auto parts = split(header("schedule"), ' ');
    if (parts.size() != 3) throw FormatError(where() + ": expected 'schedule KIND SIGMA_MIN SIGMA_MAX'");
    f.schedule = Schedule(parse_double(parts[1], where()), parse_double(parts[2], where()),
                          schedule_kind_from_string(parts[0]));
  }
  f.dataset.provenance = header("provenance");
  next("'# end'");
  if (line != "# end") throw FormatError(where() + ": expected '# end', got '" + line + "'");
  next("column header");
  const auto dim = static_cast<std::size_t>(f.dataset.dim);
  if (split(line, ',').size() != 2 + 2 * dim) throw FormatError(where() + ": column header does not match dim");

  for (long long r = 0; r < count; ++r) {
    if (!std::getline(is, line))
      throw FormatError("dataset: truncated at row " + std::to_string(r) + " (line " + std::to_string(line_no + 1) +
                        "), header promised " + std::to_string(count) + " rows");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string at = where() + " (row " + std::to_string(r) + ")";
    const auto cells = split(line, ',');
    if (cells.size() != 2 + 2 * dim)
      throw FormatError(at + ": expected " + std::to_string(2 + 2 * dim) + " fields, got " + std::to_string(cells.size()));
    NoisySample s;
    s.t_anchor = parse_double(cells[0], at);
    s.x.resize(f.dataset.dim);
    for (std::size_t j = 0; j < dim; ++j) s.x[static_cast<Eigen::Index>(j)] = parse_double(cells[1 + j], at);
    const long long has = parse_int(cells[1 + dim], at);
    if (has != 0 && has != 1) throw FormatError(at + ": has_ref must be 0 or 1");
    if (has) {
      Point ref(f.dataset.dim);
      for (std::size_t j = 0; j < dim; ++j) ref[static_cast<Eigen::Index>(j)] = parse_double(cells[2 + dim + j], at);
      s.clean_ref = ref;
    } else {
      for (std::size_t j = 0; j < dim; ++j)
        if (!trim(cells[2 + dim + j]).empty()) throw FormatError(at + ": reference given but has_ref is 0");
    }
    if (!(s.t_anchor >= 0.0) || s.t_anchor > f.schedule.horizon()) throw FormatError(at + ": t_anchor outside [0, T]");
    f.dataset.samples.push_back(std::move(s));
  }
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty()) throw FormatError(where() + ": more rows than the header's count");
  }
  return f;
}

// Plain point sets (clean or corrupted collections): one row per point.
inline void write_points(std::ostream& os, const SampleMatrix& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) os << (j ? "," : "") << 'x' << j;
  os << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) os << (j ? "," : "") << lossless(x(i, j));
    os << '\n';
  }
}

inline SampleMatrix read_points(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("points: empty file");
  const auto dim = split(trim(line), ',').size();
  std::vector<double> v;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    const std::string at = "points line " + std::to_string(line_no);
    if (cells.size() != dim) throw FormatError(at + ": expected " + std::to_string(dim) + " fields");
    for (auto c : cells) v.push_back(parse_double(c, at));
  }
  SampleMatrix x(static_cast<Eigen::Index>(v.size() / dim), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = v[static_cast<std::size_t>(i) * dim + static_cast<std::size_t>(j)];
  return x;
}

// ---- checkpoints ----------------------------------------------------------

namespace detail {

inline void put_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline bool get_le(std::istream& is, double& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  v = std::bit_cast<double>(bits);
  return true;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const MlpDenoiser& m) {
  const auto flat = m.params().flatten();
  os << "dataloops-checkpoint " << kCheckpointVersion << '\n' << "widths";
  for (int w : m.widths()) os << ' ' << w;
  os << '\n'
     << "activation " << to_string(Activation::silu) << '\n'
     << "output " << to_string(m.output()) << '\n'
     << "sigma_data " << lossless(m.sigma_data()) << '\n'
     << "schedule " << to_string(m.schedule().kind()) << ' ' << lossless(m.schedule().sigma_min()) << ' '
     << lossless(m.schedule().sigma_max()) << '\n'
     << "params " << flat.size() << '\n';
  for (double v : flat) detail::put_le(os, v);
}

inline MlpDenoiser read_checkpoint(std::istream& is) {
  std::string line;
  int line_no = 0;
  auto field = [&](const std::string& key) {
    if (!std::getline(is, line)) throw FormatError("checkpoint: unexpected end of header, expected '" + key + "'");
    ++line_no;
    if (line.rfind(key + ' ', 0) != 0)
      throw FormatError("checkpoint line " + std::to_string(line_no) + ": expected '" + key + " ...', got '" + line + "'");
    return line.substr(key.size() + 1);
  };
  auto where = [&] { return "checkpoint line " + std::to_string(line_no); };
  const long long version = parse_int(field("dataloops-checkpoint"), where());
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  std::vector<int> widths;
  for (auto w : split(field("widths"), ' ')) widths.push_back(static_cast<int>(parse_int(w, where())));
  activation_from_string(field("activation"));
  const Output output = output_from_string(field("output"));
  const double sigma_data = parse_double(field("sigma_data"), where());
  const auto sched = split(field("schedule"), ' ');
  if (sched.size() != 3) throw FormatError(where() + ": expected 'schedule KIND SIGMA_MIN SIGMA_MAX'");
  const Schedule schedule(parse_double(sched[1], where()), parse_double(sched[2], where()),
                          schedule_kind_from_string(sched[0]));
  const auto count = static_cast<std::size_t>(parse_int(field("params"), where()));
  MlpDenoiser m(widths, schedule, sigma_data, output);
  if (count != m.params().count())
    throw FormatError("checkpoint: header says " + std::to_string(count) + " parameters but widths need " +
                      std::to_string(m.params().count()));
  std::vector<double> flat(count);
  for (std::size_t i = 0; i < count; ++i)
    if (!detail::get_le(is, flat[i]))
      throw FormatError("checkpoint: truncated at parameter " + std::to_string(i) + " of " + std::to_string(count));
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after the parameters");
  m.params().assign(flat);
  return m;
}

// ---- loop reports ---------------------------------------------------------

// Inverse of write_report_csv.  Columns are checked by name and position so a
// consumer (the plotting scripts) can rely on the schema.
inline std::vector<LoopReport> read_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("report: empty file, expected a header row");
  const auto cols = split(trim(line), ',');
  std::vector<std::string> want{"loop", "sw2", "cond_mse", "cond_sw2"};
  std::size_t buckets = 0;
  while (4 + buckets < cols.size() && cols[4 + buckets].rfind("bucket_", 0) == 0) {
    want.push_back("bucket_" + std::to_string(buckets) + "_loss");
    ++buckets;
  }
  want.push_back("seed");
  want.push_back("seconds");
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= cols.size()) throw FormatError("report: missing column '" + want[i] + "'");
    if (cols[i] != want[i])
      throw FormatError("report: column " + std::to_string(i + 1) + " is '" + cols[i] + "', expected '" + want[i] + "'");
  }
  if (cols.size() > want.size()) throw FormatError("report: unexpected column '" + cols[want.size()] + "'");

  std::vector<LoopReport> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    const std::string at = "report line " + std::to_string(line_no);
    if (f.size() != want.size())
      throw FormatError(at + ": expected " + std::to_string(want.size()) + " fields, got " + std::to_string(f.size()));
    auto num = [&](std::size_t i) { return parse_double(f[i], at + " (" + want[i] + ")"); };
    LoopReport r;
    r.loop = static_cast<int>(parse_int(f[0], at + " (loop)"));
    r.sw2 = num(1);
    r.cond_mse = num(2);
    r.cond_sw2 = num(3);
    for (std::size_t b = 0; b < buckets; ++b) r.bucket_loss.push_back(num(4 + b));
    r.seed = static_cast<std::uint64_t>(parse_int(f[4 + buckets], at + " (seed)"));
    r.seconds = num(5 + buckets);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- file helpers ---------------------------------------------------------

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw FormatError("cannot open '" + path + "': file not found or unreadable");
  return f;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw FormatError("cannot write '" + path + "'");
  return f;
}

}  // namespace dataloops
