#include "hcmgan/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>

#include "hcmgan/errors.hpp"
#include "hcmgan/rng.hpp"

namespace hcmgan::data {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<unsigned char> read_maybe_gzip(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  std::unique_ptr<gzFile_s, int (*)(gzFile)> f(gzopen(path.c_str(), "rb"), gzclose);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char buf[1 << 16];
  for (;;) {
    const int n = gzread(f.get(), buf, sizeof buf);
    if (n < 0) throw IoError("read failed: " + path.string());
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
  if (off + 4 > b.size()) throw FormatError(what + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

double parse_number(const std::string& cell, std::size_t row, std::size_t col) {
  const auto t = trim(cell);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw FormatError("csv: non-numeric cell '" + t + "' at row " + std::to_string(row) + ", column " +
                      std::to_string(col));
  }
  return v;
}

}  // namespace

void Dataset::validate() const {
  if (!x.defined() || x.rank() != 2 || x.dim(0) == 0 || x.dim(1) == 0)
    throw FormatError("dataset is empty or not a matrix");
  for (double v : x.values()) {
    if (!(v >= -1.0 && v <= 1.0)) throw FormatError("dataset value outside [-1, 1]");
  }
  if (labels && labels->size() != x.dim(0)) throw FormatError("label count does not match example count");
  if ((image_h || image_w) && image_h * image_w != x.dim(1)) throw FormatError("image geometry does not match width");
}

void MixtureSpec::validate() const {
  if (modes.empty()) throw ConfigError("mixture: at least one mode required");
  const std::size_t d = modes.front().mean.size();
  if (d == 0) throw ConfigError("mixture: empty mean vector");
  for (const auto& m : modes) {
    if (m.mean.size() != d || m.stddev.size() != d) throw ConfigError("mixture: inconsistent mode dimensions");
    if (m.count < 1) throw ConfigError("mixture: mode counts must be >= 1");
    for (double s : m.stddev)
      if (!(s > 0.0)) throw ConfigError("mixture: standard deviations must be > 0");
  }
}

Dataset synth_mixture(const MixtureSpec& spec) {
  spec.validate();
  const std::size_t d = spec.modes.front().mean.size();
  std::size_t n = 0;
  for (const auto& m : spec.modes) n += m.count;

  Rng rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> values;
  values.reserve(n * d);
  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t k = 0; k < spec.modes.size(); ++k) {
    const auto& m = spec.modes[k];
    for (std::size_t i = 0; i < m.count; ++i) {
      for (std::size_t j = 0; j < d; ++j) values.push_back(std::tanh((m.mean[j] + m.stddev[j] * unit(rng)) / 3.0));
      labels.push_back(static_cast<int>(k));
    }
  }
  Dataset ds;
  ds.x = Tensor({n, d}, std::move(values));
  ds.labels = std::move(labels);
  ds.source = "synth:k=" + std::to_string(spec.modes.size()) + ",seed=" + std::to_string(spec.seed);
  return ds;
}

MixtureSpec circle_mixture(std::size_t k, double radius, double stddev, std::size_t count, std::uint64_t seed) {
  MixtureSpec spec;
  spec.seed = seed;
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double a = 2.0 * pi * static_cast<double>(i) / static_cast<double>(k);
    spec.modes.push_back({{radius * std::cos(a), radius * std::sin(a)}, {stddev, stddev}, count});
  }
  return spec;
}

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const auto img = read_maybe_gzip(images);
  const std::string what = images.filename().string();
  if (be32(img, 0, what) != kIdxImages) throw FormatError(what + ": bad IDX image magic");
  const std::size_t n = be32(img, 4, what);
  const std::size_t h = be32(img, 8, what);
  const std::size_t w = be32(img, 12, what);
  const std::size_t d = h * w;
  if (n == 0 || d == 0) throw FormatError(what + ": empty IDX image file");
  if (img.size() != 16 + n * d) throw FormatError(what + ": truncated or oversized IDX image payload");

  std::vector<double> values(n * d);
  for (std::size_t i = 0; i < n * d; ++i) values[i] = 2.0 * img[16 + i] / 255.0 - 1.0;

  Dataset ds;
  ds.x = Tensor({n, d}, std::move(values));
  ds.image_h = h;
  ds.image_w = w;
  ds.source = "idx:" + images.string();

  if (labels) {
    const auto lab = read_maybe_gzip(*labels);
    const std::string lw = labels->filename().string();
    if (be32(lab, 0, lw) != kIdxLabels) throw FormatError(lw + ": bad IDX label magic");
    const std::size_t nl = be32(lab, 4, lw);
    if (nl != n) throw FormatError(lw + ": " + std::to_string(nl) + " labels for " + std::to_string(n) + " images");
    if (lab.size() != 8 + n) throw FormatError(lw + ": truncated or oversized IDX label payload");
    ds.labels = std::vector<int>(lab.begin() + 8, lab.end());
  }
  return ds;
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gzip(path);
  if (bytes.size() >= 4 && be32(bytes, 0, path.string()) == kIdxLabels) {
    const std::size_t n = be32(bytes, 4, path.string());
    if (bytes.size() != 8 + n) throw FormatError(path.string() + ": truncated or oversized IDX label payload");
    return std::vector<int>(bytes.begin() + 8, bytes.end());
  }
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  std::vector<int> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    const double v = parse_number(cells.back(), ++row, cells.size() - 1);
    if (v != std::floor(v)) throw FormatError(path.string() + ": non-integer label at row " + std::to_string(row));
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "label\n";
  for (int l : labels) out << l << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  const std::size_t cols = split_row(line).size();
  const std::size_t d = opts.label_column ? cols - 1 : cols;
  if (d == 0) throw FormatError(path.string() + ": no data columns");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != cols)
      throw FormatError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(cols));
    for (std::size_t j = 0; j < d; ++j) values.push_back(parse_number(cells[j], row, j));
    if (opts.label_column) {
      const double l = parse_number(cells[d], row, d);
      if (l != std::floor(l)) throw FormatError(path.string() + ": non-integer label at row " + std::to_string(row));
      labels.push_back(static_cast<int>(l));
    }
  }
  if (row == 0) throw FormatError(path.string() + ": no data rows");

  if (opts.rescale) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double a = *lo, b = *hi;
    for (auto& v : values) v = b > a ? 2.0 * (v - a) / (b - a) - 1.0 : 0.0;
  }
  Dataset ds;
  ds.x = Tensor({row, d}, std::move(values));
  if (opts.label_column) ds.labels = std::move(labels);
  ds.source = "csv:" + path.string();
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < d.dim(); ++j) out << (j ? "," : "") << "x" << j;
  if (d.labels) out << ",label";
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j) out << (j ? "," : "") << d.x.at(i, j);
    if (d.labels) out << ',' << (*d.labels)[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace hcmgan::data
