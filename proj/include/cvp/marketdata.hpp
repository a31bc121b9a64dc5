#pragma once

// Tick ingestion, windowed VWAP aggregation and two-factor calibration.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cvp {

struct TransactionRecord {
  double t = 0.0;  ///< seconds (or any consistent time unit)
  double c = 0.0;  ///< value
  double v = 0.0;  ///< volume
};

struct IngestIssue {
  std::size_t line = 0;
  std::string message;
};

struct IngestReport {
  std::vector<TransactionRecord> records;  ///< sorted stably by t
  std::vector<IngestIssue> malformed;      ///< unparseable rows
  std::vector<IngestIssue> rejected;       ///< parseable rows with c <= 0 or v <= 0
  std::size_t data_rows = 0;
};

/// Parses epoch seconds ("1700000000.25") or ISO-8601 UTC
/// ("2024-01-02T03:04:05.5Z", optional ±hh:mm offset).
double parse_timestamp(std::string_view text);

/// Reads a tick table with header `timestamp,value,volume` (',', ';' or tab
/// separated). A path export with header `path,t,C,V,p` is also accepted;
/// its first path is used. Throws InvalidInput when the header is missing,
/// no valid rows remain, or more than 10% of the rows are malformed.
IngestReport ingest_transactions(std::istream& in);
IngestReport ingest_file(const std::string& path);

struct AggregationConfig {
  double t2 = 1.0;
  double origin = 0.0;
};

struct Window {
  double start = 0.0;
  double end = 0.0;
  double sum_c = 0.0;
  double sum_v = 0.0;
  double vwap = 0.0;        ///< NaN for an empty window
  double simple_avg = 0.0;  ///< NaN for an empty window
  std::size_t n_ticks = 0;
  double min_price = 0.0;
  double max_price = 0.0;

  [[nodiscard]] bool gap() const { return n_ticks == 0; }
};

struct AggregatedSeries {
  std::vector<Window> windows;
  std::size_t dropped_before_origin = 0;
};

/// Half-open windows [origin + k·t2, origin + (k+1)·t2). A tick within 1e-9
/// window lengths below a boundary is assigned to the later window, so
/// timestamps generated as k·t2 land where they were meant to.
AggregatedSeries aggregate_vwap(std::vector<TransactionRecord> records, const AggregationConfig& cfg);

struct GapSummary {
  std::vector<double> gap;  ///< |vwap − simple_avg| / vwap, NaN for empty windows
  double max = 0.0;
  double mean = 0.0;
};

GapSummary vwap_gap(const AggregatedSeries& series);

struct CalibrationResult {
  double mu_c = 0.0, sigma_c = 0.0, mu_v = 0.0, sigma_v = 0.0, lambda = 0.0;
  struct {
    double mu_c = 0.0, sigma_c = 0.0, mu_v = 0.0, sigma_v = 0.0, lambda = 0.0;
  } se;
  std::size_t n_obs = 0;       ///< increments used
  std::size_t run_start = 0;   ///< first window of the contiguous run
  std::size_t run_length = 0;  ///< windows in the run
  bool lambda_clipped = false;
  bool lambda_defined = true;  ///< false when a series has zero variance
};

/// Moment estimators on the log increments of sum_c and sum_v over the
/// longest run of consecutive non-empty windows (at least 30 windows).
CalibrationResult calibrate_two_factor(const AggregatedSeries& series, double annualization);

void write_ticks_csv(std::ostream& out, const std::vector<TransactionRecord>& records);
void write_series_csv(std::ostream& out, const AggregatedSeries& series);

}  // namespace cvp
