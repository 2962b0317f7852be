#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "diffrecon/tensor.hpp"
#include "diffrecon/timeutil.hpp"

namespace diffrecon {

struct BBox {
  double lat_min = 0.0, lat_max = 1.0;
  double lon_min = 0.0, lon_max = 1.0;
};

/// Geometry of a gridded region: I x J coarse cells, magnification N, and
/// the timestep length.
struct GridSpec {
  int rows = 8;          // I
  int cols = 8;          // J
  int magnification = 2; // N
  BBox bbox;
  std::int64_t interval_s = 3600;

  void validate() const;
};

enum class Granularity { coarse, fine };

/// Time-ordered stack of value maps, [T, rows, cols].
struct GridSeries {
  Tensor values;  // [T, rows, cols]
  GridSpec spec;
  UnixTime start_time = 0;
  Granularity granularity = Granularity::coarse;

  int steps() const { return values.dim(0); }
  int rows() const { return values.dim(1); }
  int cols() const { return values.dim(2); }
  UnixTime time_at(int step) const { return start_time + step * spec.interval_s; }
};

enum class SparseKind { fixed, random_per_step, large_scale };

struct SparsePatternSpec {
  SparseKind kind = SparseKind::fixed;
  double missing_ratio = 0.4;  // ignored for large_scale (structurally 0.25)
  std::uint64_t seed = 0;
};

/// Per-timestep binary observation maps C; 1 = observed.
struct MaskSequence {
  Tensor flags;  // [T, rows, cols], entries in {0,1}
  SparsePatternSpec pattern;

  int steps() const { return flags.dim(0); }
  int rows() const { return flags.dim(1); }
  int cols() const { return flags.dim(2); }
};

struct ExternalFeatureVector {
  int day_index = 0;    // day of month, 0..30
  int week_index = 0;   // Monday = 0
  int month_index = 0;  // 0..11
  int holiday = 0;
  std::map<std::string, double> extras;

  /// Fixed numeric encoding used by the embedding layers, indices scaled to [0,1].
  static constexpr int kEncodedDim = 4;
  std::array<double, kEncodedDim> encoded() const {
    return {day_index / 30.0, week_index / 6.0, month_index / 11.0, static_cast<double>(holiday)};
  }
};

struct PointRecord {
  UnixTime timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;
  double value = 0.0;
};

struct NormStats {
  double min = 0.0;
  double max = 1.0;
  bool degenerate = false;  // max == min; normalize maps everything to 0
};

using HolidayTable = std::set<std::string>;  // "YYYY-MM-DD" dates

// ---- operations ----

/// Bins point records into cells by equirectangular lat/lon lookup and
/// timestep; cell value is the arithmetic mean of the records in it.
/// Records outside the bbox are dropped; non-finite values and timestamps
/// outside [start, start + num_steps*interval) are rejected.
std::pair<GridSeries, MaskSequence> ingest_records(const std::vector<PointRecord>& records,
                                                   const GridSpec& spec, UnixTime start_time,
                                                   int num_steps);

/// Block mean over N x N fine blocks, every timestep.
GridSeries downsample(const GridSeries& fine);

/// Hadamard product of values and mask flags.
GridSeries apply_mask(const GridSeries& complete, const MaskSequence& mask);

MaskSequence generate_masks(const SparsePatternSpec& pattern, int steps, int rows, int cols);

ExternalFeatureVector calendar_features(UnixTime timestamp, const HolidayTable* holidays = nullptr);

/// Affine map from [min, max] to [-1, 1]. When stats are omitted they are
/// computed from the series itself (callers restrict this to the training
/// split).
std::pair<GridSeries, NormStats> normalize(const GridSeries& series,
                                           std::optional<NormStats> stats = std::nullopt);
GridSeries denormalize(const GridSeries& series, const NormStats& stats);

/// Nearest-neighbor expansion of a coarse map to fine resolution (each
/// coarse cell repeated over its N x N block).
GridSeries upsample_nearest(const GridSeries& coarse);

/// Bilinear magnification by spec.magnification; fine-cell centers are placed
/// at (f + 0.5) / n - 0.5 in coarse index coordinates, clamped at the edges.
GridSeries upsample_bilinear(const GridSeries& coarse);

/// Slice of [t0, t1) timesteps, sharing spec and adjusting start_time.
GridSeries slice_steps(const GridSeries& s, int t0, int t1);
MaskSequence slice_steps(const MaskSequence& m, int t0, int t1);

}  // namespace diffrecon
