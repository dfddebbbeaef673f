#pragma once

// Per-frame point payload readers: PLY (ascii / binary little / binary big)
// and raw little-endian f32 XYZ blobs.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "asyncdepth/binary_io.hpp"
#include "asyncdepth/errors.hpp"
#include "asyncdepth/geometry.hpp"

namespace asyncdepth {

namespace ply {

enum class Encoding { ascii, binary_little_endian, binary_big_endian };

enum class Scalar { i8, u8, i16, u16, i32, u32, f32, f64 };

inline Scalar parse_scalar(const std::string& name) {
  if (name == "char" || name == "int8") return Scalar::i8;
  if (name == "uchar" || name == "uint8") return Scalar::u8;
  if (name == "short" || name == "int16") return Scalar::i16;
  if (name == "ushort" || name == "uint16") return Scalar::u16;
  if (name == "int" || name == "int32") return Scalar::i32;
  if (name == "uint" || name == "uint32") return Scalar::u32;
  if (name == "float" || name == "float32") return Scalar::f32;
  if (name == "double" || name == "float64") return Scalar::f64;
  throw FormatError("ply: unknown property type '" + name + "'");
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::i8:
    case Scalar::u8: return 1;
    case Scalar::i16:
    case Scalar::u16: return 2;
    case Scalar::i32:
    case Scalar::u32:
    case Scalar::f32: return 4;
    case Scalar::f64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::f32;
  bool is_list = false;
  Scalar count_type = Scalar::u8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  Encoding encoding = Encoding::ascii;
  std::vector<Element> elements;
};

inline Header read_header(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.substr(0, 3) != "ply") throw FormatError("ply: bad magic");
  Header h;
  bool have_format = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") {
      if (!have_format) throw FormatError("ply: missing format line");
      return h;
    }
    if (kw == "format") {
      std::string enc;
      ls >> enc;
      if (enc == "ascii") h.encoding = Encoding::ascii;
      else if (enc == "binary_little_endian") h.encoding = Encoding::binary_little_endian;
      else if (enc == "binary_big_endian") h.encoding = Encoding::binary_big_endian;
      else throw FormatError("ply: unknown format '" + enc + "'");
      have_format = true;
    } else if (kw == "element") {
      Element e;
      ls >> e.name >> e.count;
      if (!ls) throw FormatError("ply: malformed element line");
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) throw FormatError("ply: property before element");
      Property p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = parse_scalar(ct);
        p.type = parse_scalar(it);
      } else {
        p.type = parse_scalar(t);
        ls >> p.name;
      }
      if (!ls) throw FormatError("ply: malformed property line");
      h.elements.back().properties.push_back(std::move(p));
    }
    // comment / obj_info lines are ignored
  }
  throw FormatError("ply: missing end_header");
}

inline double read_binary_scalar(std::istream& is, Scalar s, bool big_endian) {
  unsigned char buf[8];
  const std::size_t n = scalar_size(s);
  if (!is.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) {
    throw FormatError("ply: truncated binary body");
  }
  if (big_endian != (std::endian::native == std::endian::big)) std::reverse(buf, buf + n);
  switch (s) {
    case Scalar::i8: { std::int8_t v; std::memcpy(&v, buf, 1); return v; }
    case Scalar::u8: { std::uint8_t v; std::memcpy(&v, buf, 1); return v; }
    case Scalar::i16: { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
    case Scalar::u16: { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
    case Scalar::i32: { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
    case Scalar::u32: { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
    case Scalar::f32: { float v; std::memcpy(&v, buf, 4); return v; }
    case Scalar::f64: { double v; std::memcpy(&v, buf, 8); return v; }
  }
  return 0.0;
}

}  // namespace ply

/// Reads the x/y/z properties of the `vertex` element. Other elements and
/// properties are skipped.
inline PointCloud read_ply(std::istream& is) {
  const ply::Header header = ply::read_header(is);
  PointCloud cloud;
  const bool big = header.encoding == ply::Encoding::binary_big_endian;
  for (const auto& element : header.elements) {
    const bool is_vertex = element.name == "vertex";
    int ix = -1, iy = -1, iz = -1;
    for (int i = 0; i < static_cast<int>(element.properties.size()); ++i) {
      const auto& n = element.properties[i].name;
      if (n == "x") ix = i;
      else if (n == "y") iy = i;
      else if (n == "z") iz = i;
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) {
      throw FormatError("ply: vertex element lacks x/y/z");
    }
    if (is_vertex) cloud.points.reserve(element.count);
    std::vector<double> row(element.properties.size());
    for (std::size_t r = 0; r < element.count; ++r) {
      for (std::size_t p = 0; p < element.properties.size(); ++p) {
        const auto& prop = element.properties[p];
        if (header.encoding == ply::Encoding::ascii) {
          if (prop.is_list) {
            std::size_t n = 0;
            if (!(is >> n)) throw FormatError("ply: truncated ascii body");
            for (std::size_t k = 0; k < n; ++k) {
              double skip;
              if (!(is >> skip)) throw FormatError("ply: truncated ascii body");
            }
          } else if (!(is >> row[p])) {
            throw FormatError("ply: truncated ascii body");
          }
        } else if (prop.is_list) {
          const auto n = static_cast<std::size_t>(ply::read_binary_scalar(is, prop.count_type, big));
          for (std::size_t k = 0; k < n; ++k) ply::read_binary_scalar(is, prop.type, big);
        } else {
          row[p] = ply::read_binary_scalar(is, prop.type, big);
        }
      }
      if (is_vertex) {
        cloud.points.emplace_back(static_cast<float>(row[ix]), static_cast<float>(row[iy]),
                                  static_cast<float>(row[iz]));
      }
    }
  }
  return cloud;
}

inline PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_ply(in);
}

inline void write_ply(std::ostream& os, const PointCloud& cloud, bool binary = true) {
  os << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
     << "element vertex " << cloud.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\nend_header\n";
  if (binary) {
    for (const auto& p : cloud.points) {
      io::write_le(os, p.x());
      io::write_le(os, p.y());
      io::write_le(os, p.z());
    }
  } else {
    os << std::setprecision(9);
    for (const auto& p : cloud.points) os << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
}

inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
                      bool binary = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_ply(out, cloud, binary);
}

/// Raw blob: consecutive little-endian f32 triples, no header.
inline PointCloud read_xyz_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % 12 != 0) throw FormatError(path.string() + ": size is not a multiple of 12 bytes");
  in.seekg(0);
  std::vector<float> raw(bytes / 4);
  io::read_f32_array(in, raw);
  PointCloud cloud;
  cloud.points.reserve(raw.size() / 3);
  for (std::size_t i = 0; i < raw.size(); i += 3) {
    cloud.points.emplace_back(raw[i], raw[i + 1], raw[i + 2]);
  }
  return cloud;
}

inline void write_xyz_blob(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& p : cloud.points) {
    io::write_le(out, p.x());
    io::write_le(out, p.y());
    io::write_le(out, p.z());
  }
}

}  // namespace asyncdepth
