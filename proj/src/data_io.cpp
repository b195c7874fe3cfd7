#include "cgport/data_io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cgport/errors.hpp"

namespace fs = std::filesystem;

namespace cgport {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

struct CsvFile {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_no;
};

CsvFile read_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw SchemaError("cannot open " + file.string());
  CsvFile csv;
  csv.name = file.filename().string();
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (csv.header.empty()) {
      csv.header = std::move(fields);
      continue;
    }
    if (fields.size() != csv.header.size()) {
      throw SchemaError(csv.name + ":" + std::to_string(no) + ": expected " + std::to_string(csv.header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    csv.rows.push_back(std::move(fields));
    csv.line_no.push_back(no);
  }
  if (csv.header.empty()) throw SchemaError(csv.name + ": empty file");
  return csv;
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
    throw SchemaError(where + ": not a number: '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& text, const std::string& where) {
  int v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw SchemaError(where + ": not an integer: '" + text + "'");
  }
  return v;
}

Date date_from_compact(const std::string& s) {
  const int y = std::stoi(s.substr(0, 4));
  const unsigned m = static_cast<unsigned>(std::stoi(s.substr(4, 2)));
  const unsigned d = static_cast<unsigned>(std::stoi(s.substr(6, 2)));
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw SchemaError("invalid date " + s);
  return std::chrono::sys_days{ymd};
}

const std::vector<std::string> kUniverseHeader = {"sedol", "name", "sector", "beta", "alpha", "bench_weight",
                                                  "mcap_quintile"};

}  // namespace

Date parse_iso_date(const std::string& text) {
  static const std::regex iso(R"((\d{4})-(\d{2})-(\d{2}))");
  std::smatch m;
  if (!std::regex_match(text, m, iso)) throw SchemaError("not an ISO-8601 date: '" + text + "'");
  return date_from_compact(m[1].str() + m[2].str() + m[3].str());
}

std::string compact_date(Date d) {
  std::string iso = format_date(d);
  iso.erase(std::remove(iso.begin(), iso.end(), '-'), iso.end());
  return iso;
}

AssetUniverse read_universe_csv(const fs::path& file, Date date) {
  const CsvFile csv = read_csv(file);
  if (csv.header != kUniverseHeader) {
    throw SchemaError(csv.name + ": header must be sedol,name,sector,beta,alpha,bench_weight,mcap_quintile");
  }
  AssetUniverse u;
  u.date = date;
  const auto n = static_cast<Eigen::Index>(csv.rows.size());
  u.alpha.resize(n);
  u.beta.resize(n);
  u.bench.resize(n);
  std::vector<std::string> sectors;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string where = csv.name + ":" + std::to_string(csv.line_no[r]);
    const auto k = static_cast<Eigen::Index>(r);
    if (row[0].empty()) throw SchemaError(where + ": empty sedol");
    if (!seen.insert(row[0]).second) throw ValidationError(where + ": duplicate sedol " + row[0]);
    u.ids.push_back(row[0]);
    u.names.push_back(row[1]);
    sectors.push_back(row[2]);
    u.beta[k] = parse_double(row[3], where);
    u.alpha[k] = parse_double(row[4], where);
    u.bench[k] = parse_double(row[5], where);
    const int q = parse_int(row[6], where);
    if (q < 1 || q > kNumQuintiles) throw ValidationError(where + ": mcap_quintile " + row[6] + " outside 1..5");
    if (u.bench[k] < 0.0) throw ValidationError(where + ": negative bench_weight " + row[5]);
    u.mcapq_of.push_back(q);
  }
  const std::set<std::string> distinct(sectors.begin(), sectors.end());
  u.sector_names.assign(distinct.begin(), distinct.end());
  for (const auto& s : sectors) {
    u.sector_of.push_back(static_cast<int>(
        std::lower_bound(u.sector_names.begin(), u.sector_names.end(), s) - u.sector_names.begin()));
  }
  return u;
}

Matrix read_covariance_csv(const fs::path& file, const std::vector<std::string>& ids) {
  const CsvFile csv = read_csv(file);
  const auto n = static_cast<Eigen::Index>(ids.size());
  std::map<std::string, Eigen::Index> pos;
  for (Eigen::Index i = 0; i < n; ++i) pos[ids[static_cast<std::size_t>(i)]] = i;

  if (csv.header.size() != ids.size() + 1) {
    throw SchemaError(csv.name + ": expected " + std::to_string(ids.size()) + " asset columns");
  }
  std::vector<Eigen::Index> col_pos;
  for (std::size_t c = 1; c < csv.header.size(); ++c) {
    const auto it = pos.find(csv.header[c]);
    if (it == pos.end()) throw SchemaError(csv.name + ": column " + csv.header[c] + " is not in the universe");
    col_pos.push_back(it->second);
  }
  if (csv.rows.size() != ids.size()) throw SchemaError(csv.name + ": expected " + std::to_string(ids.size()) + " rows");

  Matrix omega = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const std::string where = csv.name + ":" + std::to_string(csv.line_no[r]);
    const auto it = pos.find(row[0]);
    if (it == pos.end()) throw SchemaError(where + ": row " + row[0] + " is not in the universe");
    for (std::size_t c = 1; c < row.size(); ++c) omega(it->second, col_pos[c - 1]) = parse_double(row[c], where);
  }
  if (!omega.allFinite()) throw SchemaError(csv.name + ": missing or duplicated rows/columns");

  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double gap = std::abs(omega(i, j) - omega(j, i));
      if (gap > 1e-6) {
        throw ValidationError(csv.name + ": covariance asymmetric at (" + ids[static_cast<std::size_t>(i)] + ", " +
                              ids[static_cast<std::size_t>(j)] + "), |diff| = " + fmt_double(gap));
      }
      worst = std::max(worst, gap);
    }
  }
  if (worst > 0.0) spdlog::warn("{}: symmetrized covariance (max asymmetry {})", csv.name, worst);
  if (repair_psd(omega)) spdlog::warn("{}: clamped negative covariance eigenvalues to zero", csv.name);
  return omega;
}

Dataset parse_universe(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw SchemaError("not a directory: " + dir.string());
  static const std::regex universe_name(R"(universe_(\d{8})\.csv)");
  std::vector<std::pair<Date, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, universe_name)) files.emplace_back(date_from_compact(m[1].str()), entry.path());
  }
  if (files.empty()) throw SchemaError(dir.string() + ": no universe_YYYYMMDD.csv files");
  std::sort(files.begin(), files.end());

  Dataset data;
  for (const auto& [date, path] : files) {
    AssetUniverse u = read_universe_csv(path, date);
    const fs::path cov = dir / ("cov_" + compact_date(date) + ".csv");
    if (!fs::exists(cov)) throw AlignmentError("missing covariance file " + cov.filename().string());
    u.omega = read_covariance_csv(cov, u.ids);
    validate(u);
    data.universes.push_back(std::move(u));
  }

  const CsvFile rets = read_csv(dir / "returns.csv");
  if (rets.header != std::vector<std::string>{"date", "sedol", "fourweek_return"}) {
    throw SchemaError("returns.csv: header must be date,sedol,fourweek_return");
  }
  std::map<Date, ReturnsById> by_date;
  for (std::size_t r = 0; r < rets.rows.size(); ++r) {
    const auto& row = rets.rows[r];
    const std::string where = "returns.csv:" + std::to_string(rets.line_no[r]);
    const Date d = parse_iso_date(row[0]);
    if (!by_date[d].emplace(row[1], parse_double(row[2], where)).second) {
      throw ValidationError(where + ": duplicate return for " + row[1] + " on " + row[0]);
    }
  }

  std::set<Date> used;
  for (const auto& u : data.universes) {
    const Date due = u.date + std::chrono::days{kPeriodDays};
    const auto it = by_date.find(due);
    if (it == by_date.end()) {
      throw AlignmentError("returns.csv has no entries dated " + format_date(due) + " for the review on " +
                           format_date(u.date));
    }
    used.insert(due);
    int missing = 0;
    for (const auto& id : u.ids) missing += it->second.count(id) == 0 ? 1 : 0;
    if (missing > 0) {
      spdlog::warn("returns.csv: {} assets of {} have no return dated {}; treated as 0", missing, format_date(u.date),
                   format_date(due));
    }
    data.realized.push_back(it->second);
  }
  for (const auto& [d, _] : by_date) {
    if (!used.count(d)) {
      throw AlignmentError("returns.csv entries dated " + format_date(d) + " match no review date 28 days earlier");
    }
  }
  return data;
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  if (data.universes.size() != data.realized.size()) throw AlignmentError("write_dataset: misaligned dataset");
  fs::create_directories(dir);
  for (const auto& u : data.universes) {
    const std::string stamp = compact_date(u.date);
    std::ofstream uf(dir / ("universe_" + stamp + ".csv"), std::ios::binary);
    uf << "sedol,name,sector,beta,alpha,bench_weight,mcap_quintile\n";
    for (int i = 0; i < u.size(); ++i) {
      uf << csv_field(u.ids[i]) << ',' << csv_field(i < static_cast<int>(u.names.size()) ? u.names[i] : "") << ','
         << csv_field(u.sector_names[u.sector_of[i]]) << ',' << fmt_double(u.beta[i]) << ',' << fmt_double(u.alpha[i])
         << ',' << fmt_double(u.bench[i]) << ',' << u.mcapq_of[i] << '\n';
    }
    std::ofstream cf(dir / ("cov_" + stamp + ".csv"), std::ios::binary);
    cf << "sedol";
    for (const auto& id : u.ids) cf << ',' << csv_field(id);
    cf << '\n';
    for (int i = 0; i < u.size(); ++i) {
      cf << csv_field(u.ids[i]);
      for (int j = 0; j < u.size(); ++j) cf << ',' << fmt_double(u.omega(i, j));
      cf << '\n';
    }
    if (!uf || !cf) throw std::runtime_error("write_dataset: failed writing " + stamp);
  }
  std::ofstream rf(dir / "returns.csv", std::ios::binary);
  rf << "date,sedol,fourweek_return\n";
  for (std::size_t t = 0; t < data.universes.size(); ++t) {
    const std::string due = format_date(data.universes[t].date + std::chrono::days{kPeriodDays});
    for (const auto& [id, r] : data.realized[t]) rf << due << ',' << csv_field(id) << ',' << fmt_double(r) << '\n';
  }
  if (!rf) throw std::runtime_error("write_dataset: failed writing returns.csv");
}

void SyntheticSpec::validate() const {
  auto fail = [](const char* what) { throw std::invalid_argument(std::string("SyntheticSpec: ") + what); };
  if (n_assets < 1 || n_sectors < 1 || n_periods < 1) fail("n_assets, n_sectors and n_periods must be positive");
  if (n_factors < 0 || n_factors > n_assets) fail("need 0 <= n_factors <= n_assets");
  if (!(bench_concentration > 0.0)) fail("bench_concentration must be positive");
  if (!(factor_vol >= 0.0) || !(idio_vol_min > 0.0) || !(idio_vol_max >= idio_vol_min)) fail("bad volatility range");
  if (!(alpha_scale >= 0.0)) fail("alpha_scale must be >= 0");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.n_assets;
  const int k = spec.n_factors;

  AssetUniverse base;
  base.sector_names.resize(spec.n_sectors);
  for (int s = 0; s < spec.n_sectors; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "SEC%02d", s + 1);
    base.sector_names[s] = buf;
  }
  for (int i = 0; i < n; ++i) {
    char id[16], name[32];
    std::snprintf(id, sizeof id, "SY%05d", i + 1);
    std::snprintf(name, sizeof name, "Synthetic %05d", i + 1);
    base.ids.push_back(id);
    base.names.push_back(name);
  }
  std::vector<int> sectors(n);
  for (int i = 0; i < n; ++i) sectors[i] = i % spec.n_sectors;
  std::shuffle(sectors.begin(), sectors.end(), gen);
  base.sector_of = sectors;

  Vector bench(n);
  std::gamma_distribution<double> gamma(spec.bench_concentration, 1.0);
  for (int i = 0; i < n; ++i) bench[i] = gamma(gen);
  bench /= bench.sum();
  base.bench = bench;

  std::vector<int> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return bench[a] > bench[b]; });
  base.mcapq_of.assign(n, 0);
  for (int r = 0; r < n; ++r) base.mcapq_of[rank[r]] = 1 + (r * kNumQuintiles) / n;

  Matrix loadings(n, k);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < k; ++f) loadings(i, f) = spec.factor_vol * normal(gen);
  }
  Vector idio_var(n);
  for (int i = 0; i < n; ++i) {
    const double vol = spec.idio_vol_min + (spec.idio_vol_max - spec.idio_vol_min) * unit(gen);
    idio_var[i] = vol * vol;
  }
  base.omega = loadings * loadings.transpose();
  base.omega = 0.5 * (base.omega + base.omega.transpose()).eval();
  base.omega.diagonal() += idio_var;

  base.beta.resize(n);
  for (int i = 0; i < n; ++i) {
    const double z = (k > 0 && spec.factor_vol > 0.0) ? loadings(i, 0) / spec.factor_vol : normal(gen);
    base.beta[i] = 1.0 + 0.3 * z;
  }

  // Persistent alpha signal tilted towards the factor exposures so that
  // chasing alpha raises active risk.
  Vector premium(k);
  for (int f = 0; f < k; ++f) premium[f] = normal(gen);
  Vector signal(n);
  for (int i = 0; i < n; ++i) {
    const double tilt = k > 0 && spec.factor_vol > 0.0 ? loadings.row(i).dot(premium) / spec.factor_vol : 0.0;
    signal[i] = 0.6 * tilt / std::sqrt(std::max(k, 1)) + 0.8 * normal(gen);
  }

  Dataset data;
  for (int t = 0; t < spec.n_periods; ++t) {
    AssetUniverse u = base;
    u.date = spec.start + std::chrono::days{kPeriodDays * t};
    u.alpha.resize(n);
    for (int i = 0; i < n; ++i) {
      signal[i] = 0.9 * signal[i] + std::sqrt(1.0 - 0.81) * normal(gen);
      u.alpha[i] = spec.alpha_scale * signal[i];
    }
    Vector factors(k);
    for (int f = 0; f < k; ++f) factors[f] = normal(gen);
    const Vector common = loadings * factors;
    ReturnsById realized;
    for (int i = 0; i < n; ++i) {
      // Log-normal gross return keeps every asset above -100%.
      realized[u.ids[i]] = std::expm1(0.25 * u.alpha[i] + common[i] + std::sqrt(idio_var[i]) * normal(gen));
    }
    data.universes.push_back(std::move(u));
    data.realized.push_back(std::move(realized));
  }
  return data;
}

}  // namespace cgport
