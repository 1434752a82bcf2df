#ifndef PPSEG_IO_HPP
#define PPSEG_IO_HPP

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "color.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "raster.hpp"

namespace ppseg::io {

using Json = nlohmann::json;

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

// ---- RMSK: "RMSK", u32 height, u32 width, float32 values (all little-endian)

template <class Tag>
void write_rmsk(const std::filesystem::path& path, const Raster<double, Tag>& m) {
  auto out = detail::open_out(path);
  out.write("RMSK", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(m.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.width()));
  for (double v : m) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

template <class Tag = MaskTag>
Raster<double, Tag> read_rmsk(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "RMSK", 4) != 0)
    throw FormatError(path.string() + ": not an RMSK file");
  const auto h = detail::get_u32(in), w = detail::get_u32(in);
  if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) throw FormatError(path.string() + ": bad RMSK shape");
  Raster<double, Tag> m(static_cast<int>(h), static_cast<int>(w));
  for (auto& v : m) v = static_cast<double>(std::bit_cast<float>(detail::get_u32(in)));
  return m;
}

// ---- PNG

namespace detail {

struct PngImage {
  int height = 0, width = 0, channels = 0, depth = 8;
  std::vector<std::uint16_t> samples;  ///< row-major, interleaved channels
};

inline void write_png(const std::filesystem::path& path, const PngImage& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) throw FormatError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  const int type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               img.depth, type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_samples = static_cast<std::size_t>(img.width) * img.channels;
  std::vector<png_byte> row(row_samples * (img.depth / 8));
  for (int r = 0; r < img.height; ++r) {
    const std::uint16_t* src = &img.samples[static_cast<std::size_t>(r) * row_samples];
    for (std::size_t k = 0; k < row_samples; ++k) {
      if (img.depth == 8) {
        row[k] = static_cast<png_byte>(src[k]);
      } else {
        row[2 * k] = static_cast<png_byte>(src[k] >> 8);
        row[2 * k + 1] = static_cast<png_byte>(src[k] & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads any PNG, expanding palettes, stripping alpha, keeping bit depth
/// 8 or 16.
inline PngImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
  if (!fp) throw FormatError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(path.string() + ": not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("png read failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int type = png_get_color_type(png, info);
  const int bits = png_get_bit_depth(png, info);
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && bits < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  PngImage img;
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> row(rowbytes);
  const std::size_t row_samples = static_cast<std::size_t>(img.width) * img.channels;
  img.samples.resize(row_samples * img.height);
  for (int r = 0; r < img.height; ++r) {
    png_read_row(png, row.data(), nullptr);
    std::uint16_t* dst = &img.samples[static_cast<std::size_t>(r) * row_samples];
    for (std::size_t k = 0; k < row_samples; ++k)
      dst[k] = img.depth == 16 ? static_cast<std::uint16_t>((row[2 * k] << 8) | row[2 * k + 1]) : row[k];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::uint16_t quantize8(double v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

inline void write_image(const std::filesystem::path& path, const ImageRGB& image) {
  detail::PngImage p{image.height(), image.width(), 3, 8, {}};
  p.samples.reserve(image.size() * 3);
  for (const auto& px : image)
    for (double v : px) p.samples.push_back(detail::quantize8(v));
  detail::write_png(path, p);
}

/// Grayscale images load as equal channels; values are scaled to [0,1].
inline ImageRGB read_image(const std::filesystem::path& path) {
  const auto p = detail::read_png(path);
  const double scale = p.depth == 16 ? 65535.0 : 255.0;
  ImageRGB image(p.height, p.width);
  for (std::size_t i = 0; i < image.size(); ++i)
    for (int k = 0; k < 3; ++k)
      image[i][k] = p.samples[i * p.channels + (p.channels == 1 ? 0 : k)] / scale;
  return image;
}

inline void write_instances(const std::filesystem::path& path, const InstanceLabelMap& labels) {
  detail::PngImage p{labels.height(), labels.width(), 1, 16, {}};
  p.samples.reserve(labels.size());
  for (auto v : labels) {
    if (v < 0 || v > 65535) throw FormatError("instance id out of 16-bit range");
    p.samples.push_back(static_cast<std::uint16_t>(v));
  }
  detail::write_png(path, p);
}

inline InstanceLabelMap read_instances(const std::filesystem::path& path) {
  const auto p = detail::read_png(path);
  if (p.channels != 1) throw FormatError(path.string() + ": instance map must be grayscale");
  InstanceLabelMap labels(p.height, p.width);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = p.samples[i];
  return labels;
}

/// 0 = background, 128 = ignored, 255 = nucleus.
inline void write_trilabel(const std::filesystem::path& path, const TriStateLabelMap& label) {
  detail::PngImage p{label.height(), label.width(), 1, 8, {}};
  p.samples.reserve(label.size());
  for (auto v : label) p.samples.push_back(v == kNucleus ? 255 : v == kBackground ? 0 : 128);
  detail::write_png(path, p);
}

inline TriStateLabelMap read_trilabel(const std::filesystem::path& path) {
  const auto p = detail::read_png(path);
  if (p.channels != 1 || p.depth != 8) throw FormatError(path.string() + ": label map must be 8-bit grayscale");
  TriStateLabelMap label(p.height, p.width);
  for (std::size_t i = 0; i < label.size(); ++i) {
    const auto v = p.samples[i];
    if (v == 255) label[i] = kNucleus;
    else if (v == 0) label[i] = kBackground;
    else if (v == 128) label[i] = kIgnoreLabel;
    else throw FormatError(path.string() + ": unexpected label value " + std::to_string(v));
  }
  return label;
}

inline void write_binary(const std::filesystem::path& path, const BinaryMap& mask) {
  detail::PngImage p{mask.height(), mask.width(), 1, 8, {}};
  for (auto v : mask) p.samples.push_back(v ? 255 : 0);
  detail::write_png(path, p);
}

// ---- JSON

inline Json read_json(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

inline Json points_json(const PointSet& points) {
  Json arr = Json::array();
  for (const auto& p : points) arr.push_back({p.row, p.col});
  return arr;
}

inline PointSet points_from_json(const Json& arr) {
  if (!arr.is_array()) throw FormatError("points must be an array of [row, col]");
  PointSet out;
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) throw FormatError("points must be an array of [row, col]");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

/// {"points": [[row, col], ...]}, plus any extra named point lists.
inline void write_points(const std::filesystem::path& path, const PointSet& points,
                         const std::map<std::string, PointSet>& extra = {}) {
  Json j;
  j["points"] = points_json(points);
  for (const auto& [k, v] : extra) j[k] = points_json(v);
  write_json(path, j);
}

inline PointSet read_points(const std::filesystem::path& path, const std::string& key = "points") {
  const Json j = read_json(path);
  if (!j.contains(key)) throw FormatError(path.string() + ": missing \"" + key + "\"");
  try {
    return points_from_json(j.at(key));
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline Json color_stats_json(const ColorStats& s) {
  return Json{{"l_mean", s.mean[0]}, {"a_mean", s.mean[1]}, {"b_mean", s.mean[2]},
              {"l_std", s.stddev[0]}, {"a_std", s.stddev[1]}, {"b_std", s.stddev[2]}};
}

inline ColorStats color_stats_from_json(const Json& j) {
  ColorStats s;
  try {
    s.mean = {j.at("l_mean").get<double>(), j.at("a_mean").get<double>(), j.at("b_mean").get<double>()};
    s.stddev = {j.at("l_std").get<double>(), j.at("a_std").get<double>(), j.at("b_std").get<double>()};
  } catch (const Json::exception& e) {
    throw FormatError(std::string("color stats: ") + e.what());
  }
  for (double v : s.stddev)
    if (!(v > 0.0)) throw FormatError("color stats: standard deviations must be > 0");
  return s;
}

/// Weights are written with 17 significant digits, so they read back exactly.
inline std::string model_to_string(const PixelModel& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto list = [&](std::span<const double> v) {
    os << '[';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
    os << ']';
  };
  os << "{\n  \"inputs\": " << kFeatureCount << ",\n  \"hidden\": " << m.hidden()
     << ",\n  \"w1\": ";
  list(m.w1());
  os << ",\n  \"b1\": ";
  list(m.b1());
  os << ",\n  \"w2\": ";
  list(m.w2());
  os << ",\n  \"b2\": " << m.b2() << "\n}\n";
  return os.str();
}

inline PixelModel model_from_json(const Json& j) {
  try {
    if (j.at("inputs").get<int>() != kFeatureCount) throw FormatError("model: wrong input size");
    PixelModel m(j.at("hidden").get<int>());
    auto fill = [&](const char* key, std::span<double> dst) {
      const auto& a = j.at(key);
      if (!a.is_array() || a.size() != dst.size()) throw FormatError(std::string("model: bad ") + key);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a[i].get<double>();
    };
    fill("w1", m.w1());
    fill("b1", m.b1());
    fill("w2", m.w2());
    m.b2() = j.at("b2").get<double>();
    return m;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

inline void write_model(const std::filesystem::path& path, const PixelModel& m) {
  auto out = detail::open_out(path);
  out << model_to_string(m);
}

inline PixelModel read_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

inline Json report_json(const MetricsReport& r) {
  Json j = Json::object();
  for (const auto& [k, v] : r.fields())
    if (v) j[k] = *v;
  return j;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// One header row of metric names, then one row per named report. Absent
/// values are left empty.
inline void write_report_csv(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  auto out = detail::open_out(path);
  out << "image";
  for (const auto& [k, v] : MetricsReport{}.fields()) out << ',' << k;
  out << '\n';
  for (const auto& [name, r] : rows) {
    out << name;
    for (const auto& [k, v] : r.fields()) {
      out << ',';
      if (v) out << format_number(*v);
    }
    out << '\n';
  }
}

// ---- key = value config

using KeyValues = std::map<std::string, std::string>;

/// Lines of `key = value`; '#' starts a comment; blank lines are skipped.
inline KeyValues parse_key_values(std::istream& in, const std::string& source = "config") {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::kUsage, source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::kUsage, source + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kUsage, "cannot open config " + path.string());
  return parse_key_values(in, path.string());
}

}  // namespace ppseg::io

#endif  // PPSEG_IO_HPP
