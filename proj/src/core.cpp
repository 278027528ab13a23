#include "profmon/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "profmon/error.hpp"

namespace profmon {

ObservationBatch::ObservationBatch(std::int64_t time_index, std::size_t p,
                                   std::vector<double> predictors,
                                   std::vector<double> responses)
    : time_index_(time_index),
      p_(p),
      predictors_(std::move(predictors)),
      responses_(std::move(responses)) {
  require(p_ >= 1, ErrorKind::invalid_input, "batch needs at least one predictor");
  require(!responses_.empty(), ErrorKind::invalid_input, "batch needs at least one row");
  require(predictors_.size() == responses_.size() * p_, ErrorKind::invalid_input,
          "predictor matrix does not match response count");
  auto finite = [](double v) { return std::isfinite(v); };
  require(std::ranges::all_of(predictors_, finite) && std::ranges::all_of(responses_, finite),
          ErrorKind::invalid_input, "batch holds a non-finite value");
}

Ecdf::Ecdf(std::span<const double> values) : sorted_(values.begin(), values.end()) {
  require(!sorted_.empty(), ErrorKind::invalid_input, "ECDF of an empty sample");
  for (double v : sorted_)
    require(std::isfinite(v), ErrorKind::invalid_input, "non-finite residual");
  std::sort(sorted_.begin(), sorted_.end());
}

Ecdf Ecdf::from_sorted(std::vector<double> sorted_values) {
  require(!sorted_values.empty(), ErrorKind::invalid_input, "ECDF of an empty sample");
  require(std::is_sorted(sorted_values.begin(), sorted_values.end()),
          ErrorKind::invalid_input, "ECDF values are not sorted");
  for (double v : sorted_values)
    require(std::isfinite(v), ErrorKind::invalid_input, "non-finite residual");
  Ecdf e;
  e.sorted_ = std::move(sorted_values);
  return e;
}

double Ecdf::operator()(double z) const noexcept {
  if (sorted_.empty()) return 0.0;
  auto it = std::upper_bound(sorted_.begin(), sorted_.end(), z);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

Ecdf ecdf_build(const ResidualSample& residuals) { return Ecdf(residuals.residuals); }

double ecdf_eval(const Ecdf& ecdf, double z) noexcept { return ecdf(z); }

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    fail(ErrorKind::parse, where + ": bad number '" + std::string(s) + "'");
  return v;
}

struct CsvTable {
  bool has_time = false;
  std::size_t p = 0;
  std::vector<std::int64_t> times;
  std::vector<double> x;
  std::vector<double> y;
};

CsvTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  CsvTable table;
  bool header_seen = false;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (!header_seen) {
      header_seen = true;
      width = fields.size();
      table.has_time = !fields.empty() && fields.front() == "t";
      const std::size_t first_x = table.has_time ? 1 : 0;
      if (width < first_x + 2 || fields.back() != "y")
        fail(ErrorKind::parse, where + ": header must be [t,]x1,...,xp,y");
      table.p = width - first_x - 1;
      for (std::size_t k = 0; k < table.p; ++k)
        if (fields[first_x + k] != "x" + std::to_string(k + 1))
          fail(ErrorKind::parse, where + ": expected column x" + std::to_string(k + 1));
      continue;
    }
    if (fields.size() != width)
      fail(ErrorKind::parse, where + ": expected " + std::to_string(width) + " fields");
    std::size_t col = 0;
    if (table.has_time) {
      double t = parse_double(fields[col++], where);
      if (t != std::floor(t)) fail(ErrorKind::parse, where + ": t must be an integer");
      table.times.push_back(static_cast<std::int64_t>(t));
    }
    for (std::size_t k = 0; k < table.p; ++k) table.x.push_back(parse_double(fields[col++], where));
    table.y.push_back(parse_double(fields[col], where));
  }
  if (!header_seen) fail(ErrorKind::parse, path.string() + ": empty file");
  if (table.y.empty()) fail(ErrorKind::invalid_input, path.string() + ": no data rows");
  return table;
}

}  // namespace

ObservationBatch read_batch_csv(const std::filesystem::path& path, std::int64_t time_index) {
  auto table = read_table(path);
  if (table.has_time) {
    auto batches = read_stream_csv(path);
    if (batches.size() != 1)
      fail(ErrorKind::invalid_input, path.string() + ": file holds several monitoring times");
    return std::move(batches.front());
  }
  return ObservationBatch(time_index, table.p, std::move(table.x), std::move(table.y));
}

std::vector<ObservationBatch> read_stream_csv(const std::filesystem::path& path) {
  auto table = read_table(path);
  std::vector<ObservationBatch> out;
  if (!table.has_time) {
    out.emplace_back(0, table.p, std::move(table.x), std::move(table.y));
    return out;
  }
  std::size_t begin = 0;
  const std::size_t rows = table.y.size();
  while (begin < rows) {
    std::size_t end = begin;
    while (end < rows && table.times[end] == table.times[begin]) ++end;
    if (end < rows && table.times[end] < table.times[begin])
      fail(ErrorKind::parse, path.string() + ": t column must be non-decreasing");
    std::vector<double> x(table.x.begin() + static_cast<std::ptrdiff_t>(begin * table.p),
                          table.x.begin() + static_cast<std::ptrdiff_t>(end * table.p));
    std::vector<double> y(table.y.begin() + static_cast<std::ptrdiff_t>(begin),
                          table.y.begin() + static_cast<std::ptrdiff_t>(end));
    out.emplace_back(table.times[begin], table.p, std::move(x), std::move(y));
    begin = end;
  }
  return out;
}

void write_batch_csv(const std::filesystem::path& path, const ObservationBatch& batch) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  for (std::size_t k = 0; k < batch.p(); ++k) out << 'x' << (k + 1) << ',';
  out << "y\n";
  out.precision(17);
  for (std::size_t i = 0; i < batch.n(); ++i) {
    for (double v : batch.row(i)) out << v << ',';
    out << batch.responses()[i] << '\n';
  }
}

std::vector<std::filesystem::path> list_csv_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    fail(ErrorKind::invalid_input, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace profmon
