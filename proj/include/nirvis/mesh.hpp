// Triangle meshes with per-vertex UVs, normals and tangents, plus a Wavefront
// OBJ reader/writer.
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "nirvis/core.hpp"

namespace nirvis {

struct Vec2 {
  double u = 0, v = 0;
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec2> uvs;
  std::vector<Vec3> normals;
  std::vector<Vec3> tangents;
  std::vector<double> bitangent_sign;  // +1 / -1 handedness of the UV frame

  std::size_t vertex_count() const { return vertices.size(); }

  void validate() const {
    const auto n = static_cast<int>(vertices.size());
    require(n > 0 && !triangles.empty(), "Mesh: empty");
    require(uvs.size() == vertices.size(), "Mesh: missing UVs");
    require(normals.size() == vertices.size() && tangents.size() == vertices.size(),
            "Mesh: per-vertex normals/tangents missing");
    for (const auto& t : triangles)
      for (int i : t) require(i >= 0 && i < n, "Mesh: triangle index out of range");
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      require(std::abs(length(normals[i]) - 1.0) <= 1e-4, "Mesh: non-unit normal");
      require(std::abs(length(tangents[i]) - 1.0) <= 1e-4, "Mesh: non-unit tangent");
    }
  }
};

inline double triangle_area(const Mesh& m, const std::array<int, 3>& t) {
  return 0.5 * length(cross(m.vertices[t[1]] - m.vertices[t[0]], m.vertices[t[2]] - m.vertices[t[0]]));
}

/// Area-weighted vertex normals from geometry.
inline void compute_vertex_normals(Mesh& m) {
  m.normals.assign(m.vertices.size(), Vec3{});
  for (const auto& t : m.triangles) {
    const Vec3 fn = cross(m.vertices[t[1]] - m.vertices[t[0]], m.vertices[t[2]] - m.vertices[t[0]]);
    for (int i : t) m.normals[i] += fn;
  }
  for (auto& n : m.normals) n = length(n) > 0 ? normalize(n) : Vec3{0, 0, 1};
}

inline Vec3 any_perpendicular(const Vec3& n) {
  const Vec3 a = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalize(cross(a, n));
}

/// Tangents from UV derivatives, Gram-Schmidt orthogonalized to the normal.
inline void compute_vertex_tangents(Mesh& m) {
  std::vector<Vec3> tan(m.vertices.size()), bit(m.vertices.size());
  for (const auto& t : m.triangles) {
    const Vec3 e1 = m.vertices[t[1]] - m.vertices[t[0]];
    const Vec3 e2 = m.vertices[t[2]] - m.vertices[t[0]];
    const double du1 = m.uvs[t[1]].u - m.uvs[t[0]].u, dv1 = m.uvs[t[1]].v - m.uvs[t[0]].v;
    const double du2 = m.uvs[t[2]].u - m.uvs[t[0]].u, dv2 = m.uvs[t[2]].v - m.uvs[t[0]].v;
    const double det = du1 * dv2 - du2 * dv1;
    if (std::abs(det) < 1e-20) continue;
    const double r = 1.0 / det;
    const Vec3 sdir = (e1 * dv2 - e2 * dv1) * r;
    const Vec3 tdir = (e2 * du1 - e1 * du2) * r;
    for (int i : t) {
      tan[i] += sdir;
      bit[i] += tdir;
    }
  }
  m.tangents.resize(m.vertices.size());
  m.bitangent_sign.resize(m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const Vec3& n = m.normals[i];
    Vec3 t = tan[i] - n * dot(n, tan[i]);
    t = length(t) > 1e-12 ? normalize(t) : any_perpendicular(n);
    m.tangents[i] = t;
    m.bitangent_sign[i] = dot(cross(n, t), bit[i]) < 0 ? -1.0 : 1.0;
  }
}

/// Parses an OBJ file. Polygons are fan-triangulated, zero-area triangles are
/// dropped, edges shared by more than two faces are reported as warnings.
inline Mesh load_mesh(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  require(in.good(), "load_mesh: cannot open " + path.string());

  std::vector<Vec3> pos, nrm;
  std::vector<Vec2> tex;
  using Key = std::tuple<int, int, int>;
  std::map<Key, int> remap;
  std::vector<int> position_of;  // mesh vertex -> OBJ position index
  Mesh m;
  bool have_normals = true;
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };

  auto resolve = [](int idx, std::size_t count) {
    return idx < 0 ? static_cast<int>(count) + idx : idx - 1;
  };

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      ls >> p.x >> p.y >> p.z;
      pos.push_back(p);
    } else if (tag == "vt") {
      Vec2 t;
      ls >> t.u >> t.v;
      tex.push_back(t);
    } else if (tag == "vn") {
      Vec3 n;
      ls >> n.x >> n.y >> n.z;
      nrm.push_back(n);
    } else if (tag == "f") {
      std::vector<int> face;
      std::string tok;
      while (ls >> tok) {
        int vi = 0, ti = 0, ni = 0;
        const auto s1 = tok.find('/');
        vi = std::stoi(tok.substr(0, s1));
        require(s1 != std::string::npos, "load_mesh: " + path.string() + ":" + std::to_string(line_no) +
                                             ": face vertex without UV index (UVs are required)");
        const auto s2 = tok.find('/', s1 + 1);
        const std::string ts = tok.substr(s1 + 1, s2 == std::string::npos ? std::string::npos : s2 - s1 - 1);
        require(!ts.empty(), "load_mesh: " + path.string() + ":" + std::to_string(line_no) +
                                 ": face vertex without UV index (UVs are required)");
        ti = std::stoi(ts);
        if (s2 != std::string::npos && s2 + 1 < tok.size()) ni = std::stoi(tok.substr(s2 + 1));
        const int v = resolve(vi, pos.size());
        const int t = resolve(ti, tex.size());
        const int n = ni == 0 ? -1 : resolve(ni, nrm.size());
        require(v >= 0 && v < static_cast<int>(pos.size()) && t >= 0 && t < static_cast<int>(tex.size()) &&
                    n < static_cast<int>(nrm.size()),
                "load_mesh: " + path.string() + ":" + std::to_string(line_no) + ": index out of range");
        if (n < 0) have_normals = false;
        const Key key{v, t, n};
        auto it = remap.find(key);
        if (it == remap.end()) {
          it = remap.emplace(key, static_cast<int>(m.vertices.size())).first;
          m.vertices.push_back(pos[v]);
          position_of.push_back(v);
          m.uvs.push_back(tex[t]);
          m.normals.push_back(n >= 0 ? normalize(nrm[n]) : Vec3{});
        }
        face.push_back(it->second);
      }
      require(face.size() >= 3, "load_mesh: " + path.string() + ":" + std::to_string(line_no) +
                                    ": face with fewer than 3 vertices");
      for (std::size_t i = 1; i + 1 < face.size(); ++i) m.triangles.push_back({face[0], face[i], face[i + 1]});
    }
  }
  require(!m.triangles.empty(), "load_mesh: " + path.string() + ": no faces");
  require(!tex.empty(), "load_mesh: " + path.string() + ": missing UVs");

  std::vector<std::array<int, 3>> kept;
  for (const auto& t : m.triangles)
    if (triangle_area(m, t) > 1e-14) kept.push_back(t);
  if (kept.size() != m.triangles.size())
    warn("dropped " + std::to_string(m.triangles.size() - kept.size()) + " degenerate triangles");
  m.triangles = std::move(kept);
  require(!m.triangles.empty(), "load_mesh: " + path.string() + ": only degenerate faces");

  // Non-manifold check on position-welded edges.
  std::map<std::pair<int, int>, int> edge_use;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      int a = position_of[t[e]], b = position_of[t[(e + 1) % 3]];
      if (a > b) std::swap(a, b);
      ++edge_use[{a, b}];
    }
  std::size_t nonmanifold = 0;
  for (const auto& [edge, count] : edge_use) nonmanifold += count > 2;
  if (nonmanifold > 0) warn("non-manifold input: " + std::to_string(nonmanifold) + " edges shared by >2 faces");

  if (!have_normals) compute_vertex_normals(m);
  compute_vertex_tangents(m);
  m.validate();
  return m;
}

inline void write_obj(const Mesh& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), "write_obj: cannot open " + path.string());
  out.precision(17);
  for (const auto& v : m.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : m.uvs) out << "vt " << t.u << ' ' << t.v << '\n';
  for (const auto& n : m.normals) out << "vn " << n.x << ' ' << n.y << ' ' << n.z << '\n';
  for (const auto& t : m.triangles) {
    out << 'f';
    for (int i : t) out << ' ' << i + 1 << '/' << i + 1 << '/' << i + 1;
    out << '\n';
  }
  require(out.good(), "write_obj: write failure on " + path.string());
}

/// Latitude-longitude sphere (radii per axis) with an equirectangular UV layout.
inline Mesh make_uv_ellipsoid(Vec3 radii, int segments, int rings) {
  require(segments >= 3 && rings >= 2, "make_uv_ellipsoid: too few subdivisions");
  Mesh m;
  for (int r = 0; r <= rings; ++r) {
    const double theta = kPi * r / rings;
    for (int s = 0; s <= segments; ++s) {
      const double phi = 2.0 * kPi * s / segments;
      // u = 0.5 faces +z.
      const Vec3 d{-std::sin(theta) * std::sin(phi), std::cos(theta), -std::sin(theta) * std::cos(phi)};
      m.vertices.push_back({d.x * radii.x, d.y * radii.y, d.z * radii.z});
      m.uvs.push_back({static_cast<double>(s) / segments, 1.0 - static_cast<double>(r) / rings});
    }
  }
  const int stride = segments + 1;
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      const int a = r * stride + s, b = a + 1, c = a + stride, d = c + 1;
      if (r != 0) m.triangles.push_back({a, c, b});
      if (r != rings - 1) m.triangles.push_back({b, c, d});
    }
  // Analytic ellipsoid normals: gradient of x²/a² + y²/b² + z²/c².
  m.normals.resize(m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const Vec3& p = m.vertices[i];
    m.normals[i] = normalize(Vec3{p.x / (radii.x * radii.x), p.y / (radii.y * radii.y), p.z / (radii.z * radii.z)});
  }
  compute_vertex_tangents(m);
  m.validate();
  return m;
}

inline Mesh make_uv_sphere(double radius, int segments, int rings) {
  return make_uv_ellipsoid({radius, radius, radius}, segments, rings);
}

}  // namespace nirvis
