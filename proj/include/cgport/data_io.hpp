#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cgport/backtest.hpp"

namespace cgport {

/**
 * On-disk layout of a dataset directory:
 *
 *   universe_YYYYMMDD.csv  sedol,name,sector,beta,alpha,bench_weight,mcap_quintile
 *   cov_YYYYMMDD.csv       dense; header "sedol,<id...>", one row per id
 *   returns.csv            date,sedol,fourweek_return
 *
 * A returns.csv entry dated D is the return of the investment made 28 days
 * before D, so the realized returns for review date R are the entries dated
 * R + 28 days.
 */
inline constexpr int kPeriodDays = 28;

/// Parse and validate every dated snapshot in `dir`. Throws SchemaError,
/// AlignmentError or ValidationError. Asymmetries up to 1e-6 and eigenvalues
/// down to -1e-8 in a covariance file are repaired and logged.
Dataset parse_universe(const std::filesystem::path& dir);

/// Single-file readers used by parse_universe.
AssetUniverse read_universe_csv(const std::filesystem::path& file, Date date);
Matrix read_covariance_csv(const std::filesystem::path& file, const std::vector<std::string>& ids);

void write_dataset(const Dataset& data, const std::filesystem::path& dir);

Date parse_iso_date(const std::string& text);  // YYYY-MM-DD
std::string compact_date(Date d);              // YYYYMMDD

struct SyntheticSpec {
  int n_assets = 200;
  int n_sectors = 10;
  int n_factors = 3;
  int n_periods = 12;
  std::uint64_t seed = 1;
  double bench_concentration = 2.0;  // gamma shape of the benchmark draw
  // Per-period volatilities. At these levels a 200-asset universe admits
  // tracking errors inside [0.05, 0.1] under the default limits.
  double factor_vol = 0.15;  // loading scale
  double idio_vol_min = 0.10;
  double idio_vol_max = 0.25;
  double alpha_scale = 0.02;
  Date start = std::chrono::sys_days{std::chrono::year{2007} / 1 / 3};

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Factor-model market: Omega = B B^T + D, gamma-drawn benchmark, sectors
/// dealt evenly, quintiles by benchmark rank, realized log-returns drawn
/// around alpha with the same covariance. Fully determined by spec.seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace cgport
