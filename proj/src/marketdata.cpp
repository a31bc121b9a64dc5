#include "cvp/marketdata.hpp"

#include "cvp/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace cvp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t next = line.find(delim, pos);
    out.push_back(trim(line.substr(pos, next == std::string_view::npos ? next : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_digits(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
  }
  return true;
}

// YYYY-MM-DD[(T| )hh:mm[:ss[.fff]]][Z|±hh[:mm]]
bool parse_iso8601(std::string_view s, double& out) {
  int y, mo, d, h = 0, mi = 0, sec = 0;
  if (!parse_digits(s, 0, 4, y) || s.size() < 10 || s[4] != '-' || !parse_digits(s, 5, 2, mo) ||
      s[7] != '-' || !parse_digits(s, 8, 2, d))
    return false;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return false;
  std::size_t pos = 10;
  double frac = 0.0;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    if (!parse_digits(s, pos + 1, 2, h) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !parse_digits(s, pos + 4, 2, mi))
      return false;
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
      if (!parse_digits(s, pos + 1, 2, sec)) return false;
      pos += 3;
      if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
        std::size_t end = pos + 1;
        while (end < s.size() && s[end] >= '0' && s[end] <= '9') ++end;
        if (end == pos + 1) return false;
        std::string digits = "0.";
        digits.append(s.substr(pos + 1, end - pos - 1));
        if (!parse_number(digits, frac)) return false;
        pos = end;
      }
    }
    if (h > 23 || mi > 59 || sec > 60) return false;
  }
  int offset = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '+' ? 1 : -1;
      int oh = 0, om = 0;
      if (!parse_digits(s, pos + 1, 2, oh)) return false;
      std::size_t q = pos + 3;
      if (q < s.size() && s[q] == ':') ++q;
      if (q < s.size()) {
        if (!parse_digits(s, q, 2, om)) return false;
        q += 2;
      }
      if (q != s.size() || oh > 23 || om > 59) return false;
      offset = sign * (oh * 3600 + om * 60);
      pos = q;
    } else {
      return false;
    }
  }
  if (pos != s.size()) return false;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  out = static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + sec + frac - offset;
  return true;
}

// Neumaier-compensated sum.
struct Sum {
  double s = 0.0;
  double c = 0.0;
  void add(double x) {
    const double t = s + x;
    if (std::abs(s) >= std::abs(x)) c += (s - t) + x;
    else c += (x - t) + s;
    s = t;
  }
  [[nodiscard]] double value() const { return s + c; }
};

void put_number(std::ostream& out, double x) {
  if (std::isnan(x)) return;
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);  // shortest round-trip form
  out.write(buf, res.ptr - buf);
}

}  // namespace

double parse_timestamp(std::string_view text) {
  text = trim(text);
  double out = 0.0;
  if (parse_number(text, out)) return out;
  if (parse_iso8601(text, out)) return out;
  throw InvalidInput("unrecognized timestamp '" + std::string(text) + "'");
}

IngestReport ingest_transactions(std::istream& in) {
  IngestReport rep;
  std::string line;
  std::size_t line_no = 0;

  // Header: first non-blank line.
  std::string header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = line;
      break;
    }
  }
  if (header.empty()) throw InvalidInput("tick file is empty");
  if (header.size() >= 3 && static_cast<unsigned char>(header[0]) == 0xEF) header.erase(0, 3);

  char delim = ',';
  if (header.find(',') == std::string::npos) {
    if (header.find(';') != std::string::npos) delim = ';';
    else if (header.find('\t') != std::string::npos) delim = '\t';
  }
  const auto cols = split(header, delim);
  auto lower = [](std::string_view s) {
    std::string r(s);
    for (char& ch : r) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return r;
  };
  bool path_export = false;
  std::size_t it = 0, ic = 1, iv = 2, ipath = 0;
  if (cols.size() == 3 && lower(cols[0]) == "timestamp" && lower(cols[1]) == "value" &&
      lower(cols[2]) == "volume") {
    // tick table
  } else if (cols.size() >= 4 && lower(cols[0]) == "path" && lower(cols[1]) == "t") {
    path_export = true;
    ipath = 0;
    it = 1;
    ic = iv = cols.size();
    for (std::size_t k = 2; k < cols.size(); ++k) {
      if (cols[k] == "C") ic = k;
      if (cols[k] == "V") iv = k;
    }
    if (ic == cols.size() || iv == cols.size())
      throw InvalidInput("line 1: path export lacks C and V columns");
  } else {
    throw InvalidInput("line " + std::to_string(line_no) +
                       ": expected header 'timestamp,value,volume', got '" + std::string(trim(header)) +
                       "'");
  }

  double first_path = kNaN;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, delim);
    if (f.size() != cols.size()) {
      ++rep.data_rows;
      rep.malformed.push_back({line_no, "expected " + std::to_string(cols.size()) + " fields, got " +
                                            std::to_string(f.size())});
      continue;
    }
    if (path_export) {
      double pid = 0.0;
      if (!parse_number(f[ipath], pid)) {
        ++rep.data_rows;
        rep.malformed.push_back({line_no, "unparseable path index"});
        continue;
      }
      if (std::isnan(first_path)) first_path = pid;
      if (pid != first_path) continue;
    }
    ++rep.data_rows;
    TransactionRecord r;
    try {
      r.t = parse_timestamp(f[it]);
    } catch (const InvalidInput& e) {
      rep.malformed.push_back({line_no, e.what()});
      continue;
    }
    if (!parse_number(f[ic], r.c) || !parse_number(f[iv], r.v)) {
      rep.malformed.push_back({line_no, "unparseable value or volume"});
      continue;
    }
    if (!(r.v > 0.0) || !(r.c > 0.0)) {
      rep.rejected.push_back({line_no, !(r.v > 0.0) ? "volume must be > 0" : "value must be > 0"});
      continue;
    }
    rep.records.push_back(r);
  }

  if (rep.data_rows > 0 && 10 * rep.malformed.size() > rep.data_rows) {
    std::ostringstream msg;
    msg << rep.malformed.size() << " of " << rep.data_rows << " rows are malformed (limit 10%)";
    for (std::size_t k = 0; k < std::min<std::size_t>(rep.malformed.size(), 10); ++k)
      msg << "\n  line " << rep.malformed[k].line << ": " << rep.malformed[k].message;
    throw InvalidInput(msg.str());
  }
  if (rep.records.empty()) {
    std::ostringstream msg;
    msg << "tick file contains no valid records";
    for (const auto& issue : rep.rejected) msg << "\n  line " << issue.line << ": " << issue.message;
    throw InvalidInput(msg.str());
  }
  std::stable_sort(rep.records.begin(), rep.records.end(),
                   [](const TransactionRecord& a, const TransactionRecord& b) { return a.t < b.t; });
  return rep;
}

IngestReport ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open tick file '" + path + "'");
  return ingest_transactions(in);
}

AggregatedSeries aggregate_vwap(std::vector<TransactionRecord> records, const AggregationConfig& cfg) {
  if (!(cfg.t2 > 0.0) || !std::isfinite(cfg.t2)) throw InvalidInput("aggregation: t2 must be > 0");
  if (!std::isfinite(cfg.origin)) throw InvalidInput("aggregation: origin must be finite");
  if (records.empty()) throw InvalidInput("aggregation: no records");
  std::stable_sort(records.begin(), records.end(),
                   [](const TransactionRecord& a, const TransactionRecord& b) { return a.t < b.t; });

  auto window_of = [&](double t) -> long long {
    const double k = (t - cfg.origin) / cfg.t2;
    return static_cast<long long>(std::floor(k + 1e-9));
  };

  AggregatedSeries out;
  std::size_t first = 0;
  while (first < records.size() && window_of(records[first].t) < 0) ++first;
  out.dropped_before_origin = first;
  if (first == records.size()) return out;

  const long long k0 = window_of(records[first].t);
  const long long k1 = window_of(records.back().t);
  const auto count = static_cast<std::size_t>(k1 - k0 + 1);
  out.windows.resize(count);
  std::vector<Sum> sc(count), sv(count), sp(count);
  for (std::size_t w = 0; w < count; ++w) {
    const double k = static_cast<double>(k0 + static_cast<long long>(w));
    out.windows[w].start = cfg.origin + k * cfg.t2;
    out.windows[w].end = cfg.origin + (k + 1.0) * cfg.t2;
  }
  for (std::size_t i = first; i < records.size(); ++i) {
    const TransactionRecord& r = records[i];
    const auto w = static_cast<std::size_t>(window_of(r.t) - k0);
    Window& win = out.windows[w];
    const double price = r.c / r.v;
    sc[w].add(r.c);
    sv[w].add(r.v);
    sp[w].add(price);
    win.min_price = win.n_ticks == 0 ? price : std::min(win.min_price, price);
    win.max_price = win.n_ticks == 0 ? price : std::max(win.max_price, price);
    ++win.n_ticks;
  }
  for (std::size_t w = 0; w < count; ++w) {
    Window& win = out.windows[w];
    win.sum_c = sc[w].value();
    win.sum_v = sv[w].value();
    if (win.n_ticks == 0) {
      win.vwap = win.simple_avg = win.min_price = win.max_price = kNaN;
    } else {
      win.vwap = win.sum_c / win.sum_v;
      win.simple_avg = sp[w].value() / static_cast<double>(win.n_ticks);
    }
  }
  return out;
}

GapSummary vwap_gap(const AggregatedSeries& series) {
  if (series.windows.empty()) throw InvalidInput("vwap_gap: empty series");
  GapSummary g;
  std::size_t n = 0;
  double total = 0.0;
  for (const Window& w : series.windows) {
    if (w.gap()) {
      g.gap.push_back(kNaN);
      continue;
    }
    const double x = std::abs(w.vwap - w.simple_avg) / w.vwap;
    g.gap.push_back(x);
    g.max = std::max(g.max, x);
    total += x;
    ++n;
  }
  g.mean = n > 0 ? total / static_cast<double>(n) : 0.0;
  return g;
}

CalibrationResult calibrate_two_factor(const AggregatedSeries& series, double annualization) {
  if (!(annualization > 0.0) || !std::isfinite(annualization))
    throw InvalidInput("calibration: annualization must be > 0");
  const auto& ws = series.windows;
  std::size_t best_start = 0, best_len = 0;
  for (std::size_t i = 0; i < ws.size();) {
    if (ws[i].gap()) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < ws.size() && !ws[j].gap()) ++j;
    if (j - i > best_len) {
      best_len = j - i;
      best_start = i;
    }
    i = j;
  }
  if (best_len < 30) {
    std::ostringstream msg;
    msg << "calibration needs at least 30 consecutive non-empty windows; longest run has "
        << best_len;
    throw InsufficientData(msg.str());
  }

  const std::size_t n = best_len - 1;
  std::vector<double> xc(n), xv(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Window& a = ws[best_start + k];
    const Window& b = ws[best_start + k + 1];
    xc[k] = std::log(b.sum_c / a.sum_c);
    xv[k] = std::log(b.sum_v / a.sum_v);
  }
  auto mean = [n](const std::vector<double>& x) {
    Sum s;
    for (double v : x) s.add(v);
    return s.value() / static_cast<double>(n);
  };
  const double mc = mean(xc), mv = mean(xv);
  Sum scc, svv, scv;
  for (std::size_t k = 0; k < n; ++k) {
    const double dc = xc[k] - mc, dv = xv[k] - mv;
    scc.add(dc * dc);
    svv.add(dv * dv);
    scv.add(dc * dv);
  }
  const double denom = static_cast<double>(n - 1);
  const double var_c = scc.value() / denom, var_v = svv.value() / denom;

  CalibrationResult r;
  r.n_obs = n;
  r.run_start = best_start;
  r.run_length = best_len;
  r.sigma_c = std::sqrt(var_c * annualization);
  r.sigma_v = std::sqrt(var_v * annualization);
  r.mu_c = mc * annualization + 0.5 * r.sigma_c * r.sigma_c;
  r.mu_v = mv * annualization + 0.5 * r.sigma_v * r.sigma_v;
  if (var_c > 0.0 && var_v > 0.0) {
    double lam = scv.value() / denom / std::sqrt(var_c * var_v);
    if (std::abs(lam) > 1.0) {
      lam = std::clamp(lam, -1.0, 1.0);
      r.lambda_clipped = true;
    }
    r.lambda = lam;
  } else {
    r.lambda = 0.0;
    r.lambda_defined = false;
  }
  const double sn = std::sqrt(static_cast<double>(n));
  r.se.sigma_c = r.sigma_c / std::sqrt(2.0 * denom);
  r.se.sigma_v = r.sigma_v / std::sqrt(2.0 * denom);
  r.se.mu_c = r.sigma_c * std::sqrt(annualization) / sn;
  r.se.mu_v = r.sigma_v * std::sqrt(annualization) / sn;
  r.se.lambda = (1.0 - r.lambda * r.lambda) / sn;
  return r;
}

void write_ticks_csv(std::ostream& out, const std::vector<TransactionRecord>& records) {
  out << "timestamp,value,volume\n";
  for (const auto& r : records) {
    put_number(out, r.t);
    out << ',';
    put_number(out, r.c);
    out << ',';
    put_number(out, r.v);
    out << '\n';
  }
}

void write_series_csv(std::ostream& out, const AggregatedSeries& series) {
  out << "start,end,sum_value,sum_volume,vwap,simple_avg,n_ticks\n";
  for (const Window& w : series.windows) {
    put_number(out, w.start);
    out << ',';
    put_number(out, w.end);
    out << ',';
    put_number(out, w.sum_c);
    out << ',';
    put_number(out, w.sum_v);
    out << ',';
    put_number(out, w.vwap);
    out << ',';
    put_number(out, w.simple_avg);
    out << ',' << w.n_ticks << '\n';
  }
}

}  // namespace cvp
