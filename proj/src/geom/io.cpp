// SPDX-License-Identifier: Apache-2.0

#include "diffcom/geom/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace diffcom::geom {

namespace {

struct PlyProperty {
  std::string type;
  std::string name;
};

int scalar_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return -1;
}

double decode_le(const unsigned char* p, const std::string& t) {
  if (t == "float" || t == "float32") {
    uint32_t u = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &u, 4);
    return static_cast<double>(f);
  }
  if (t == "double" || t == "float64") {
    uint64_t u = 0;
    for (int i = 7; i >= 0; --i) u = (u << 8) | p[i];
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }
  throw ParseError("ply: x/y/z property must be float or double, got " + t);
}

PointCloud load_ply(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (line.size() >= 1 && line.back() == '\r') line.pop_back();
  if (line != "ply") throw ParseError(path + ": missing ply magic");

  bool binary_le = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  int64_t vertex_count = -1;
  std::vector<PlyProperty> vprops;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary_le = false;
      } else if (fmt == "binary_little_endian") {
        binary_le = true;
      } else {
        throw ParseError(path + ": unsupported ply format " + fmt);
      }
    } else if (tok == "element") {
      std::string name;
      int64_t count = 0;
      ls >> name >> count;
      in_vertex = (name == "vertex");
      if (in_vertex) {
        seen_vertex = true;
        vertex_count = count;
      } else if (seen_vertex) {
        in_vertex = false;  // later elements are ignored entirely
      } else if (count > 0) {
        throw ParseError(path + ": non-vertex element before vertex data");
      }
    } else if (tok == "property") {
      if (!in_vertex) continue;
      std::string type;
      ls >> type;
      if (type == "list") throw ParseError(path + ": list property in vertex element");
      std::string name;
      ls >> name;
      vprops.push_back({type, name});
    } else if (tok == "end_header") {
      break;
    } else {
      throw ParseError(path + ": unknown header line '" + tok + "'");
    }
  }
  if (!seen_vertex || vertex_count < 0) throw ParseError(path + ": no vertex element");
  if (vertex_count == 0) throw EmptyCloudError(path + ": zero vertices");

  int xi = -1, yi = -1, zi = -1;
  for (size_t i = 0; i < vprops.size(); ++i) {
    if (vprops[i].name == "x") xi = static_cast<int>(i);
    if (vprops[i].name == "y") yi = static_cast<int>(i);
    if (vprops[i].name == "z") zi = static_cast<int>(i);
  }
  if (xi < 0 || yi < 0 || zi < 0) throw ParseError(path + ": vertex lacks x/y/z");

  PointCloud pc;
  pc.points().reserve(static_cast<size_t>(vertex_count));
  if (!binary_le) {
    std::string row;
    for (int64_t v = 0; v < vertex_count; ++v) {
      if (!std::getline(in, row)) throw ParseError(path + ": truncated vertex data");
      std::istringstream rs(row);
      Vec3 p;
      double val = 0.0;
      bool ok = true;
      for (size_t i = 0; i < vprops.size(); ++i) {
        if (!(rs >> val)) {
          ok = false;
          break;
        }
        if (static_cast<int>(i) == xi) p.x = val;
        if (static_cast<int>(i) == yi) p.y = val;
        if (static_cast<int>(i) == zi) p.z = val;
      }
      if (!ok) throw ParseError(path + ": malformed vertex row");
      pc.points().push_back(p);
    }
  } else {
    int64_t stride = 0;
    std::vector<int> offsets(vprops.size(), 0);
    for (size_t i = 0; i < vprops.size(); ++i) {
      const int s = scalar_size(vprops[i].type);
      if (s < 0) throw ParseError(path + ": unsupported property type " + vprops[i].type);
      offsets[i] = static_cast<int>(stride);
      stride += s;
    }
    std::vector<unsigned char> row(static_cast<size_t>(stride));
    for (int64_t v = 0; v < vertex_count; ++v) {
      in.read(reinterpret_cast<char*>(row.data()), stride);
      if (in.gcount() != stride) throw ParseError(path + ": truncated vertex data");
      Vec3 p;
      p.x = decode_le(row.data() + offsets[static_cast<size_t>(xi)], vprops[static_cast<size_t>(xi)].type);
      p.y = decode_le(row.data() + offsets[static_cast<size_t>(yi)], vprops[static_cast<size_t>(yi)].type);
      p.z = decode_le(row.data() + offsets[static_cast<size_t>(zi)], vprops[static_cast<size_t>(zi)].type);
      pc.points().push_back(p);
    }
  }
  return pc;
}

PointCloud load_xyz(std::istream& in, const std::string& path) {
  PointCloud pc;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y >> p.z)) throw ParseError(path + ": malformed xyz row");
    pc.points().push_back(p);
  }
  if (pc.empty()) throw EmptyCloudError(path + ": no points");
  return pc;
}

void encode_f32_le(std::string& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

}  // namespace

PointCloud load_point_cloud(const std::string& path, Format format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");
  if (format == Format::kAuto) {
    char magic[3] = {0, 0, 0};
    in.read(magic, 3);
    in.seekg(0);
    format = (magic[0] == 'p' && magic[1] == 'l' && magic[2] == 'y') ? Format::kPlyAscii
                                                                     : Format::kXyzText;
  }
  switch (format) {
    case Format::kPlyAscii:
    case Format::kPlyBinaryLE:
      return load_ply(in, path);  // the header states the actual encoding
    case Format::kXyzText:
      return load_xyz(in, path);
    default:
      throw ParseError("unreachable format");
  }
}

void save_point_cloud(const std::string& path, const PointCloud& pc, Format format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for write");
  if (format == Format::kXyzText) {
    std::ostringstream ss;
    ss.precision(9);
    for (const Vec3& p : pc.points()) ss << p.x << " " << p.y << " " << p.z << "\n";
    out << ss.str();
    return;
  }
  const bool binary = (format != Format::kPlyAscii);
  out << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << pc.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "end_header\n";
  if (binary) {
    std::string buf;
    buf.reserve(pc.size() * 12);
    for (const Vec3& p : pc.points()) {
      encode_f32_le(buf, static_cast<float>(p.x));
      encode_f32_le(buf, static_cast<float>(p.y));
      encode_f32_le(buf, static_cast<float>(p.z));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  } else {
    std::ostringstream ss;
    ss.precision(9);
    for (const Vec3& p : pc.points()) ss << p.x << " " << p.y << " " << p.z << "\n";
    out << ss.str();
  }
}

}  // namespace diffcom::geom
