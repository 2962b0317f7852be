#include "diffrecon/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "diffrecon/rng.hpp"

namespace diffrecon {

void GridSpec::validate() const {
  if (rows < 1 || cols < 1 || magnification < 1)
    throw std::invalid_argument("GridSpec: rows, cols and magnification must be >= 1");
  if (!(bbox.lat_min < bbox.lat_max) || !(bbox.lon_min < bbox.lon_max))
    throw std::invalid_argument("GridSpec: bbox must be well-ordered");
  if (interval_s < 1) throw std::invalid_argument("GridSpec: interval must be positive");
}

std::pair<GridSeries, MaskSequence> ingest_records(const std::vector<PointRecord>& records,
                                                   const GridSpec& spec, UnixTime start_time,
                                                   int num_steps) {
  spec.validate();
  if (num_steps < 1) throw std::invalid_argument("ingest_records: num_steps must be >= 1");
  const UnixTime end_time = start_time + static_cast<UnixTime>(num_steps) * spec.interval_s;

  Tensor sums({num_steps, spec.rows, spec.cols});
  Tensor counts({num_steps, spec.rows, spec.cols});
  const double lat_span = spec.bbox.lat_max - spec.bbox.lat_min;
  const double lon_span = spec.bbox.lon_max - spec.bbox.lon_min;

  for (const auto& rec : records) {
    if (!std::isfinite(rec.value))
      throw std::invalid_argument("ingest_records: non-finite record value");
    if (rec.timestamp < start_time || rec.timestamp >= end_time)
      throw std::invalid_argument("ingest_records: record timestamp outside series range");
    if (rec.lat < spec.bbox.lat_min || rec.lat >= spec.bbox.lat_max ||
        rec.lon < spec.bbox.lon_min || rec.lon >= spec.bbox.lon_max)
      continue;  // outside the region: dropped
    int step = static_cast<int>((rec.timestamp - start_time) / spec.interval_s);
    int r = std::min(spec.rows - 1,
                     static_cast<int>((rec.lat - spec.bbox.lat_min) / lat_span * spec.rows));
    int c = std::min(spec.cols - 1,
                     static_cast<int>((rec.lon - spec.bbox.lon_min) / lon_span * spec.cols));
    sums.at3(step, r, c) += rec.value;
    counts.at3(step, r, c) += 1.0;
  }

  GridSeries series;
  series.values = Tensor({num_steps, spec.rows, spec.cols});
  series.spec = spec;
  series.start_time = start_time;
  series.granularity = Granularity::coarse;
  MaskSequence mask;
  mask.flags = Tensor({num_steps, spec.rows, spec.cols});
  for (std::int64_t i = 0; i < sums.numel(); ++i) {
    if (counts[i] > 0.0) {
      series.values[i] = sums[i] / counts[i];
      mask.flags[i] = 1.0;
    }
  }
  return {std::move(series), std::move(mask)};
}

GridSeries downsample(const GridSeries& fine) {
  if (fine.granularity != Granularity::fine)
    throw std::invalid_argument("downsample: input must be fine-grained");
  const int n = fine.spec.magnification;
  if (fine.rows() % n || fine.cols() % n)
    throw std::invalid_argument("downsample: shape not divisible by magnification");
  const int ci = fine.rows() / n, cj = fine.cols() / n;
  GridSeries coarse;
  coarse.values = Tensor({fine.steps(), ci, cj});
  coarse.spec = fine.spec;
  coarse.spec.rows = ci;
  coarse.spec.cols = cj;
  coarse.start_time = fine.start_time;
  coarse.granularity = Granularity::coarse;
  const double inv = 1.0 / (n * n);
  for (int t = 0; t < fine.steps(); ++t)
    for (int i = 0; i < ci; ++i)
      for (int j = 0; j < cj; ++j) {
        double s = 0.0;
        for (int di = 0; di < n; ++di)
          for (int dj = 0; dj < n; ++dj) s += fine.values.at3(t, i * n + di, j * n + dj);
        coarse.values.at3(t, i, j) = s * inv;
      }
  return coarse;
}

GridSeries apply_mask(const GridSeries& complete, const MaskSequence& mask) {
  if (!complete.values.same_shape(mask.flags))
    throw std::invalid_argument("apply_mask: shape mismatch");
  GridSeries out = complete;
  for (std::int64_t i = 0; i < out.values.numel(); ++i) out.values[i] *= mask.flags[i];
  return out;
}

namespace {

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

void scatter_zeros(Tensor& flags, int t, int rows, int cols, const std::vector<int>& cells) {
  for (int cell : cells) flags.at3(t, cell / cols, cell % cols) = 0.0;
}

}  // namespace

MaskSequence generate_masks(const SparsePatternSpec& pattern, int steps, int rows, int cols) {
  if (steps < 1 || rows < 1 || cols < 1)
    throw std::invalid_argument("generate_masks: invalid shape");
  if (pattern.missing_ratio < 0.0 || pattern.missing_ratio > 1.0)
    throw std::invalid_argument("generate_masks: missing_ratio must be in [0,1]");

  MaskSequence mask;
  mask.flags = Tensor({steps, rows, cols}, 1.0);
  mask.pattern = pattern;
  Rng rng(pattern.seed);

  switch (pattern.kind) {
    case SparseKind::fixed: {
      int n_masked = round_half_up(pattern.missing_ratio * rows * cols);
      auto cells = rng.sample_without_replacement(rows * cols, n_masked);
      for (int t = 0; t < steps; ++t) scatter_zeros(mask.flags, t, rows, cols, cells);
      break;
    }
    case SparseKind::random_per_step: {
      int n_masked = round_half_up(pattern.missing_ratio * rows * cols);
      for (int t = 0; t < steps; ++t) {
        auto cells = rng.sample_without_replacement(rows * cols, n_masked);
        scatter_zeros(mask.flags, t, rows, cols, cells);
      }
      break;
    }
    case SparseKind::large_scale: {
      if (rows % 2 || cols % 2)
        throw std::invalid_argument("generate_masks: large_scale requires even rows and cols");
      for (int t = 0; t < steps; ++t)
        for (int i = rows / 2; i < rows; ++i)
          for (int j = cols / 2; j < cols; ++j) mask.flags.at3(t, i, j) = 0.0;
      break;
    }
  }
  return mask;
}

ExternalFeatureVector calendar_features(UnixTime timestamp, const HolidayTable* holidays) {
  CivilDate cd = civil_from_unix(timestamp);
  ExternalFeatureVector f;
  f.day_index = cd.day - 1;
  f.week_index = weekday_monday0(timestamp);
  f.month_index = cd.month - 1;
  if (holidays) {
    char key[16];
    std::snprintf(key, sizeof(key), "%04d-%02d-%02d", cd.year, cd.month, cd.day);
    f.holiday = holidays->count(key) ? 1 : 0;
  }
  return f;
}

std::pair<GridSeries, NormStats> normalize(const GridSeries& series, std::optional<NormStats> stats) {
  NormStats st;
  if (stats) {
    st = *stats;
  } else {
    st.min = st.max = series.values.numel() ? series.values[0] : 0.0;
    for (double v : series.values.vec()) {
      st.min = std::min(st.min, v);
      st.max = std::max(st.max, v);
    }
    st.degenerate = st.max == st.min;
  }
  GridSeries out = series;
  if (st.degenerate || st.max == st.min) {
    st.degenerate = true;
    out.values.fill(0.0);
  } else {
    const double scale = 2.0 / (st.max - st.min);
    for (auto& v : out.values.vec()) v = (v - st.min) * scale - 1.0;
  }
  return {std::move(out), st};
}

GridSeries denormalize(const GridSeries& series, const NormStats& stats) {
  GridSeries out = series;
  if (stats.degenerate) {
    for (auto& v : out.values.vec()) v = stats.min;
    return out;
  }
  const double scale = (stats.max - stats.min) / 2.0;
  for (auto& v : out.values.vec()) v = (v + 1.0) * scale + stats.min;
  return out;
}

GridSeries upsample_nearest(const GridSeries& coarse) {
  const int n = coarse.spec.magnification;
  GridSeries fine;
  fine.values = Tensor({coarse.steps(), coarse.rows() * n, coarse.cols() * n});
  fine.spec = coarse.spec;
  fine.spec.rows = coarse.spec.rows;
  fine.spec.cols = coarse.spec.cols;
  fine.start_time = coarse.start_time;
  fine.granularity = Granularity::fine;
  for (int t = 0; t < coarse.steps(); ++t)
    for (int i = 0; i < fine.values.dim(1); ++i)
      for (int j = 0; j < fine.values.dim(2); ++j)
        fine.values.at3(t, i, j) = coarse.values.at3(t, i / n, j / n);
  return fine;
}

GridSeries upsample_bilinear(const GridSeries& coarse) {
  const int n = coarse.spec.magnification;
  const int rows = coarse.rows(), cols = coarse.cols();
  GridSeries fine;
  fine.values = Tensor({coarse.steps(), rows * n, cols * n});
  fine.spec = coarse.spec;
  fine.start_time = coarse.start_time;
  fine.granularity = Granularity::fine;
  for (int t = 0; t < coarse.steps(); ++t)
    for (int fr = 0; fr < rows * n; ++fr)
      for (int fc = 0; fc < cols * n; ++fc) {
        double y = (fr + 0.5) / n - 0.5, x = (fc + 0.5) / n - 0.5;
        int r0 = static_cast<int>(std::floor(y)), c0 = static_cast<int>(std::floor(x));
        double wy = y - r0, wx = x - c0;
        int r0c = std::clamp(r0, 0, rows - 1), r1c = std::clamp(r0 + 1, 0, rows - 1);
        int c0c = std::clamp(c0, 0, cols - 1), c1c = std::clamp(c0 + 1, 0, cols - 1);
        fine.values.at3(t, fr, fc) =
            (1 - wy) * ((1 - wx) * coarse.values.at3(t, r0c, c0c) +
                        wx * coarse.values.at3(t, r0c, c1c)) +
            wy * ((1 - wx) * coarse.values.at3(t, r1c, c0c) +
                  wx * coarse.values.at3(t, r1c, c1c));
      }
  return fine;
}

GridSeries slice_steps(const GridSeries& s, int t0, int t1) {
  if (t0 < 0 || t1 > s.steps() || t0 >= t1) throw std::invalid_argument("slice_steps: bad range");
  GridSeries out = s;
  out.values = Tensor({t1 - t0, s.rows(), s.cols()});
  std::copy(s.values.data() + static_cast<std::size_t>(t0) * s.rows() * s.cols(),
            s.values.data() + static_cast<std::size_t>(t1) * s.rows() * s.cols(), out.values.data());
  out.start_time = s.time_at(t0);
  return out;
}

MaskSequence slice_steps(const MaskSequence& m, int t0, int t1) {
  if (t0 < 0 || t1 > m.steps() || t0 >= t1) throw std::invalid_argument("slice_steps: bad range");
  MaskSequence out = m;
  out.flags = Tensor({t1 - t0, m.rows(), m.cols()});
  std::copy(m.flags.data() + static_cast<std::size_t>(t0) * m.rows() * m.cols(),
            m.flags.data() + static_cast<std::size_t>(t1) * m.rows() * m.cols(), out.flags.data());
  return out;
}

}  // namespace diffrecon
