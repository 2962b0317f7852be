#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffrecon/grid.hpp"

namespace diffrecon::io {

/// Grid-series container: magic "STGR", version u32 LE, T/I/J u32 LE,
/// dtype tag u32 LE (1 = binary32 LE values, 2 = u8 mask flags), row-major
/// payload. A JSON sidecar `<path>.meta.json` carries GridSpec, start time,
/// granularity and optional normalization stats.
void write_grid_series(const std::filesystem::path& path, const GridSeries& series,
                       const NormStats* stats = nullptr);
GridSeries read_grid_series(const std::filesystem::path& path, NormStats* stats_out = nullptr);

void write_mask_sequence(const std::filesystem::path& path, const MaskSequence& mask);
MaskSequence read_mask_sequence(const std::filesystem::path& path);

/// Record CSV: header `timestamp,lat,lon,value`, ISO-8601 timestamps.
std::vector<PointRecord> read_point_records(const std::filesystem::path& path);
void write_point_records(const std::filesystem::path& path, const std::vector<PointRecord>& records);

/// Single-timestep grid values as CSV `row,col,value`, round-trip exact
/// (shortest-exact double formatting).
void write_grid_csv(const std::filesystem::path& path, const Tensor& map2d);
Tensor read_grid_csv(const std::filesystem::path& path);

/// Color-mapped raster of one timestep (binary PPM, viridis-like ramp).
void write_heatmap_ppm(const std::filesystem::path& path, const Tensor& map2d, int cell_px = 16);

std::string base64_encode(const void* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& s);

/// Atomic file write: temp file in the same directory, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace diffrecon::io
