#pragma once

#include "carnet/binary_io.hpp"
#include "carnet/frame.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace carnet {

enum class PlyFormat { Ascii, BinaryLittleEndian };

namespace detail {

struct PlyProperty {
  std::string name;
  std::string type;
  std::size_t size = 0;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw Error("unsupported PLY property type '" + t + "'");
}

inline double ply_read_binary(ByteReader& in, const std::string& t) {
  if (t == "char" || t == "int8") return static_cast<std::int8_t>(in.u8());
  if (t == "uchar" || t == "uint8") return in.u8();
  if (t == "short" || t == "int16") return static_cast<std::int16_t>(in.u16());
  if (t == "ushort" || t == "uint16") return in.u16();
  if (t == "int" || t == "int32") return static_cast<std::int32_t>(in.u32());
  if (t == "uint" || t == "uint32") return in.u32();
  if (t == "float" || t == "float32") return in.f32();
  return in.f64();
}

}  // namespace detail

/// Parses a PLY point cloud (ascii or binary_little_endian) with vertex
/// properties x, y, z, red, green, blue; other properties are skipped.
/// Coordinates are rounded to the voxel grid.
inline PointCloudFrame parse_ply(const std::vector<char>& bytes, const std::string& source = {}) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const std::size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) throw Error("malformed PLY header: missing end_header");
    std::string line(bytes.data() + start, pos - start);
    ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "ply") throw Error("malformed PLY header: missing 'ply' magic");
  PlyFormat format = PlyFormat::Ascii;
  bool have_format = false;
  std::size_t vertex_count = 0;
  bool in_vertex = false, seen_vertex = false;
  std::vector<detail::PlyProperty> props;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      std::string f, ver;
      ls >> f >> ver;
      if (f == "ascii")
        format = PlyFormat::Ascii;
      else if (f == "binary_little_endian")
        format = PlyFormat::BinaryLittleEndian;
      else
        throw Error("unsupported PLY format '" + f + "'");
      have_format = true;
    } else if (kw == "element") {
      std::string name;
      long long n = -1;
      ls >> name >> n;
      if (n < 0) throw Error("malformed PLY element line: '" + line + "'");
      in_vertex = (name == "vertex");
      if (in_vertex) {
        vertex_count = static_cast<std::size_t>(n);
        seen_vertex = true;
      } else if (!seen_vertex) {
        throw Error("PLY elements before 'vertex' are not supported");
      }
    } else if (kw == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ls >> type;
      if (type == "list") throw Error("list properties on vertices are not supported");
      ls >> name;
      if (name.empty()) throw Error("malformed PLY property line: '" + line + "'");
      props.push_back({name, type, detail::ply_type_size(type)});
    } else {
      throw Error("malformed PLY header line: '" + line + "'");
    }
  }
  if (!have_format) throw Error("malformed PLY header: missing format line");
  if (!seen_vertex) throw Error("PLY file has no vertex element");

  auto find = [&](const std::string& name) {
    for (std::size_t p = 0; p < props.size(); ++p)
      if (props[p].name == name) return static_cast<int>(p);
    return -1;
  };
  // YUV frames carry luma/cb/cr in place of red/green/blue
  const bool yuv = find("red") < 0 && find("luma") >= 0;
  const std::array<std::string, 6> wanted = yuv ? std::array<std::string, 6>{"x", "y", "z", "luma", "cb", "cr"}
                                                : std::array<std::string, 6>{"x", "y", "z", "red", "green", "blue"};
  std::array<int, 6> slot{};
  for (std::size_t w = 0; w < wanted.size(); ++w) {
    slot[w] = find(wanted[w]);
    if (slot[w] < 0) throw Error("PLY vertex element lacks property '" + wanted[w] + "'");
  }

  std::vector<VoxelCoord> coords(vertex_count);
  Matrix attrs(static_cast<Eigen::Index>(vertex_count), 3);
  std::vector<double> row(props.size());
  auto store = [&](std::size_t v) {
    auto grid = [](double x) {
      const double r = std::round(x);
      if (std::abs(r) > 2147483647.0) throw Error("PLY coordinate out of range");
      return static_cast<std::int32_t>(r);
    };
    coords[v] = {grid(row[slot[0]]), grid(row[slot[1]]), grid(row[slot[2]])};
    for (int c = 0; c < 3; ++c) attrs(static_cast<Eigen::Index>(v), c) = row[slot[3 + c]];
  };

  if (format == PlyFormat::Ascii) {
    std::istringstream body(std::string(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()));
    for (std::size_t v = 0; v < vertex_count; ++v) {
      for (auto& x : row)
        if (!(body >> x)) throw Error("PLY body ends early at vertex " + std::to_string(v));
      store(v);
    }
  } else {
    ByteReader in(bytes.data() + pos, bytes.size() - pos);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      for (std::size_t p = 0; p < props.size(); ++p) row[p] = detail::ply_read_binary(in, props[p].type);
      store(v);
    }
  }
  return PointCloudFrame::make(std::move(coords), std::move(attrs), 8, yuv ? ColorSpace::YUV : ColorSpace::RGB, source);
}

inline PointCloudFrame read_ply(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::vector<char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return parse_ply(bytes, path);
}

/// Serializes coordinates as int and colors as rounded uchar. YUV frames are
/// written with luma/cb/cr properties.
inline std::vector<char> format_ply(const PointCloudFrame& frame, PlyFormat format = PlyFormat::BinaryLittleEndian) {
  if (frame.bitdepth != 8) throw Error("PLY output supports 8-bit color only");
  const bool yuv = frame.color_space == ColorSpace::YUV;
  std::ostringstream h;
  h << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
    << "element vertex " << frame.size() << "\n"
    << "property int x\nproperty int y\nproperty int z\n"
    << (yuv ? "property uchar luma\nproperty uchar cb\nproperty uchar cr\n"
            : "property uchar red\nproperty uchar green\nproperty uchar blue\n")
    << "end_header\n";
  const std::string header = h.str();
  auto color = [&](std::size_t i, int c) {
    return static_cast<int>(std::clamp(std::round(frame.attributes(static_cast<Eigen::Index>(i), c)), 0.0, 255.0));
  };
  if (format == PlyFormat::Ascii) {
    std::ostringstream b;
    b << header;
    for (std::size_t i = 0; i < frame.size(); ++i) {
      const auto& c = frame.coords[i];
      b << c.x << ' ' << c.y << ' ' << c.z << ' ' << color(i, 0) << ' ' << color(i, 1) << ' ' << color(i, 2) << '\n';
    }
    const std::string s = b.str();
    return {s.begin(), s.end()};
  }
  ByteWriter w;
  w.bytes(header);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const auto& c = frame.coords[i];
    w.u32(static_cast<std::uint32_t>(c.x));
    w.u32(static_cast<std::uint32_t>(c.y));
    w.u32(static_cast<std::uint32_t>(c.z));
    for (int ch = 0; ch < 3; ++ch) w.u8(static_cast<std::uint8_t>(color(i, ch)));
  }
  return w.take();
}

inline void write_ply(const PointCloudFrame& frame, const std::string& path,
                      PlyFormat format = PlyFormat::BinaryLittleEndian) {
  const auto bytes = format_ply(frame, format);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write to '" + path + "' failed");
}

}  // namespace carnet
