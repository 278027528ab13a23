#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace profmon {

/// One profile observed at one monitoring time: n rows of (x in R^p, y).
/// Predictors are stored row-major.
class ObservationBatch {
 public:
  ObservationBatch() = default;
  ObservationBatch(std::int64_t time_index, std::size_t p,
                   std::vector<double> predictors, std::vector<double> responses);

  std::int64_t time_index() const noexcept { return time_index_; }
  std::size_t n() const noexcept { return responses_.size(); }
  std::size_t p() const noexcept { return p_; }

  std::span<const double> row(std::size_t i) const noexcept {
    return {predictors_.data() + i * p_, p_};
  }
  std::span<const double> predictors() const noexcept { return predictors_; }
  std::span<const double> responses() const noexcept { return responses_; }

 private:
  std::int64_t time_index_ = 0;
  std::size_t p_ = 0;
  std::vector<double> predictors_;
  std::vector<double> responses_;
};

struct ResidualSample {
  std::int64_t time_index = 0;
  std::vector<double> residuals;
};

/// Empirical CDF of one residual sample. Values are kept sorted (ties
/// retained) so evaluation is a binary search.
class Ecdf {
 public:
  Ecdf() = default;
  explicit Ecdf(std::span<const double> values);

  static Ecdf from_sorted(std::vector<double> sorted_values);

  std::size_t n() const noexcept { return sorted_.size(); }
  std::span<const double> sorted_values() const noexcept { return sorted_; }

  /// Fraction of stored values <= z.
  double operator()(double z) const noexcept;

 private:
  std::vector<double> sorted_;
};

Ecdf ecdf_build(const ResidualSample& residuals);
double ecdf_eval(const Ecdf& ecdf, double z) noexcept;

// --- CSV batch files -------------------------------------------------------
//
// Single-time file: header `x1,...,xp,y`.
// Multi-time stream: header `t,x1,...,xp,y`; rows grouped by t in
// non-decreasing order.

ObservationBatch read_batch_csv(const std::filesystem::path& path,
                                std::int64_t time_index = 0);
std::vector<ObservationBatch> read_stream_csv(const std::filesystem::path& path);
void write_batch_csv(const std::filesystem::path& path, const ObservationBatch& batch);

/// Sorted list of `*.csv` files in a directory.
std::vector<std::filesystem::path> list_csv_files(const std::filesystem::path& dir);

}  // namespace profmon
