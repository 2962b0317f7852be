#include "diffrecon/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace diffrecon::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kStgrVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;
constexpr std::uint32_t kDtypeU8 = 2;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

std::string stgr_payload(const Tensor& t, std::uint32_t dtype) {
  std::string out;
  out.reserve(16 + t.numel() * (dtype == kDtypeF32 ? 4 : 1));
  out += "STGR";
  put_u32(out, kStgrVersion);
  put_u32(out, static_cast<std::uint32_t>(t.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(t.dim(1)));
  put_u32(out, static_cast<std::uint32_t>(t.dim(2)));
  put_u32(out, dtype);
  if (dtype == kDtypeF32) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      float f = static_cast<float>(t[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  } else {
    for (std::int64_t i = 0; i < t.numel(); ++i)
      out.push_back(static_cast<char>(t[i] != 0.0 ? 1 : 0));
  }
  return out;
}

Tensor parse_stgr(const std::string& raw, const fs::path& path, std::uint32_t expected_dtype) {
  if (raw.size() < 24 || raw.compare(0, 4, "STGR") != 0)
    throw std::runtime_error("not an STGR file: " + path.string());
  std::uint32_t version = get_u32(raw, 4);
  if (version != kStgrVersion)
    throw std::runtime_error("unsupported STGR version in " + path.string());
  int t = static_cast<int>(get_u32(raw, 8));
  int i = static_cast<int>(get_u32(raw, 12));
  int j = static_cast<int>(get_u32(raw, 16));
  std::uint32_t dtype = get_u32(raw, 20);
  if (dtype != expected_dtype)
    throw std::runtime_error("unexpected STGR dtype in " + path.string());
  Tensor out({t, i, j});
  std::size_t need = static_cast<std::size_t>(out.numel()) * (dtype == kDtypeF32 ? 4 : 1);
  if (raw.size() != 24 + need) throw std::runtime_error("truncated STGR payload in " + path.string());
  if (dtype == kDtypeF32) {
    for (std::int64_t n = 0; n < out.numel(); ++n) {
      std::uint32_t bits = get_u32(raw, 24 + static_cast<std::size_t>(n) * 4);
      float f;
      std::memcpy(&f, &bits, 4);
      out[n] = f;
    }
  } else {
    for (std::int64_t n = 0; n < out.numel(); ++n)
      out[n] = static_cast<unsigned char>(raw[24 + static_cast<std::size_t>(n)]) ? 1.0 : 0.0;
  }
  return out;
}

json spec_to_json(const GridSpec& spec) {
  return json{{"rows", spec.rows},
              {"cols", spec.cols},
              {"magnification", spec.magnification},
              {"bbox", {{"lat_min", spec.bbox.lat_min},
                        {"lat_max", spec.bbox.lat_max},
                        {"lon_min", spec.bbox.lon_min},
                        {"lon_max", spec.bbox.lon_max}}},
              {"interval_s", spec.interval_s}};
}

GridSpec spec_from_json(const json& j) {
  GridSpec spec;
  spec.rows = j.at("rows").get<int>();
  spec.cols = j.at("cols").get<int>();
  spec.magnification = j.at("magnification").get<int>();
  spec.bbox.lat_min = j.at("bbox").at("lat_min").get<double>();
  spec.bbox.lat_max = j.at("bbox").at("lat_max").get<double>();
  spec.bbox.lon_min = j.at("bbox").at("lon_min").get<double>();
  spec.bbox.lon_max = j.at("bbox").at("lon_max").get<double>();
  spec.interval_s = j.at("interval_s").get<std::int64_t>();
  return spec;
}

fs::path meta_path(const fs::path& path) { return fs::path(path.string() + ".meta.json"); }

std::string format_double_exact(double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + tmp.string());
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_grid_series(const fs::path& path, const GridSeries& series, const NormStats* stats) {
  write_file_atomic(path, stgr_payload(series.values, kDtypeF32));
  json meta{{"spec", spec_to_json(series.spec)},
            {"start_time", format_iso8601(series.start_time)},
            {"granularity", series.granularity == Granularity::fine ? "fine" : "coarse"}};
  if (stats)
    meta["norm"] = {{"min", stats->min}, {"max", stats->max}, {"degenerate", stats->degenerate}};
  write_file_atomic(meta_path(path), meta.dump(2) + "\n");
}

GridSeries read_grid_series(const fs::path& path, NormStats* stats_out) {
  GridSeries s;
  s.values = parse_stgr(read_file(path), path, kDtypeF32);
  json meta = json::parse(read_file(meta_path(path)));
  s.spec = spec_from_json(meta.at("spec"));
  auto t = parse_iso8601(meta.at("start_time").get<std::string>());
  if (!t) throw std::runtime_error("bad start_time in " + meta_path(path).string());
  s.start_time = *t;
  s.granularity = meta.at("granularity").get<std::string>() == "fine" ? Granularity::fine
                                                                      : Granularity::coarse;
  if (stats_out) {
    if (meta.contains("norm")) {
      stats_out->min = meta["norm"].at("min").get<double>();
      stats_out->max = meta["norm"].at("max").get<double>();
      stats_out->degenerate = meta["norm"].at("degenerate").get<bool>();
    } else {
      *stats_out = NormStats{};
    }
  }
  return s;
}

void write_mask_sequence(const fs::path& path, const MaskSequence& mask) {
  write_file_atomic(path, stgr_payload(mask.flags, kDtypeU8));
  json meta{{"pattern",
             {{"kind", mask.pattern.kind == SparseKind::fixed            ? "fixed"
                       : mask.pattern.kind == SparseKind::random_per_step ? "random"
                                                                          : "large_scale"},
              {"missing_ratio", mask.pattern.missing_ratio},
              {"seed", mask.pattern.seed}}}};
  write_file_atomic(meta_path(path), meta.dump(2) + "\n");
}

MaskSequence read_mask_sequence(const fs::path& path) {
  MaskSequence m;
  m.flags = parse_stgr(read_file(path), path, kDtypeU8);
  json meta = json::parse(read_file(meta_path(path)));
  const auto& p = meta.at("pattern");
  std::string kind = p.at("kind").get<std::string>();
  m.pattern.kind = kind == "fixed"    ? SparseKind::fixed
                   : kind == "random" ? SparseKind::random_per_step
                                      : SparseKind::large_scale;
  m.pattern.missing_ratio = p.at("missing_ratio").get<double>();
  m.pattern.seed = p.at("seed").get<std::uint64_t>();
  return m;
}

std::vector<PointRecord> read_point_records(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty record CSV: " + path.string());
  std::vector<PointRecord> out;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string ts, lat, lon, val;
    if (!std::getline(ss, ts, ',') || !std::getline(ss, lat, ',') || !std::getline(ss, lon, ',') ||
        !std::getline(ss, val, ','))
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    PointRecord r;
    auto t = parse_iso8601(ts);
    if (!t)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
    r.timestamp = *t;
    try {
      r.lat = std::stod(lat);
      r.lon = std::stod(lon);
      r.value = std::stod(val);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad numeric field");
    }
    out.push_back(r);
  }
  return out;
}

void write_point_records(const fs::path& path, const std::vector<PointRecord>& records) {
  std::string out = "timestamp,lat,lon,value\n";
  for (const auto& r : records) {
    out += format_iso8601(r.timestamp);
    out += ',';
    out += format_double_exact(r.lat);
    out += ',';
    out += format_double_exact(r.lon);
    out += ',';
    out += format_double_exact(r.value);
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_grid_csv(const fs::path& path, const Tensor& map2d) {
  if (map2d.rank() != 2) throw std::invalid_argument("write_grid_csv: expected a 2-D map");
  std::string out = "row,col,value\n";
  for (int r = 0; r < map2d.dim(0); ++r)
    for (int c = 0; c < map2d.dim(1); ++c) {
      out += std::to_string(r);
      out += ',';
      out += std::to_string(c);
      out += ',';
      out += format_double_exact(map2d.at2(r, c));
      out += '\n';
    }
  write_file_atomic(path, out);
}

Tensor read_grid_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  std::getline(f, line);  // header
  std::vector<std::tuple<int, int, double>> cells;
  int max_r = -1, max_c = -1;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string r, c, v;
    std::getline(ss, r, ',');
    std::getline(ss, c, ',');
    std::getline(ss, v, ',');
    int ri = std::stoi(r), ci = std::stoi(c);
    double value;
    auto res = std::from_chars(v.data(), v.data() + v.size(), value);
    if (res.ec != std::errc{}) throw std::runtime_error("bad value in " + path.string());
    cells.emplace_back(ri, ci, value);
    max_r = std::max(max_r, ri);
    max_c = std::max(max_c, ci);
  }
  Tensor out({max_r + 1, max_c + 1});
  for (auto& [r, c, v] : cells) out.at2(r, c) = v;
  return out;
}

void write_heatmap_ppm(const fs::path& path, const Tensor& map2d, int cell_px) {
  if (map2d.rank() != 2) throw std::invalid_argument("write_heatmap_ppm: expected a 2-D map");
  double lo = map2d[0], hi = map2d[0];
  for (double v : map2d.vec()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const int h = map2d.dim(0) * cell_px, w = map2d.dim(1) * cell_px;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(h) * w * 3);
  // Simple dark-blue -> green -> yellow ramp.
  auto ramp = [](double u, unsigned char rgb[3]) {
    double r = std::clamp(2.0 * u - 0.8, 0.0, 1.0);
    double g = std::clamp(1.6 * u, 0.0, 1.0);
    double b = std::clamp(1.0 - 1.4 * u, 0.0, 1.0);
    rgb[0] = static_cast<unsigned char>(r * 255.0);
    rgb[1] = static_cast<unsigned char>(g * 255.0);
    rgb[2] = static_cast<unsigned char>(b * 255.0);
  };
  for (int py = 0; py < h; ++py)
    for (int px = 0; px < w; ++px) {
      double u = hi > lo ? (map2d.at2(py / cell_px, px / cell_px) - lo) / span : 0.5;
      unsigned char rgb[3];
      ramp(u, rgb);
      out.append(reinterpret_cast<char*>(rgb), 3);
    }
  write_file_atomic(path, out);
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    std::uint32_t v = static_cast<std::uint32_t>(p[i]) << 16;
    if (i + 1 < len) v |= static_cast<std::uint32_t>(p[i + 1]) << 8;
    if (i + 2 < len) v |= p[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  std::uint32_t buf = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=' || c == '\n') continue;
    int v = val(c);
    if (v < 0) throw std::runtime_error("base64_decode: invalid character");
    buf = (buf << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<unsigned char>((buf >> bits) & 0xFF));
    }
  }
  return out;
}

}  // namespace diffrecon::io
