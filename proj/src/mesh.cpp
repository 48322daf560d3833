// SPDX-License-Identifier: BSD-3-Clause

#include "scout/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace scout {

#include "mc_tables.inc"

const Eigen::Vector3i kMcCorner[8] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

const int kMcEdgeCorner[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

void write_ply(const TriangleMesh& mesh, const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw std::runtime_error("write_ply: cannot open " + path);
    }
    std::fprintf(f,
                 "ply\nformat ascii 1.0\nelement vertex %zu\n"
                 "property float x\nproperty float y\nproperty float z\n"
                 "element face %zu\nproperty list uchar int vertex_indices\nend_header\n",
                 mesh.vertices.size(), mesh.triangles.size());
    for (const auto& v : mesh.vertices) {
        std::fprintf(f, "%.6f %.6f %.6f\n", v.x(), v.y(), v.z());
    }
    for (const auto& t : mesh.triangles) {
        std::fprintf(f, "3 %u %u %u\n", t[0], t[1], t[2]);
    }
    std::fclose(f);
}

TriangleMesh read_ply(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("read_ply: cannot open " + path);
    }
    std::string line;
    std::size_t n_vertices = 0;
    std::size_t n_faces = 0;
    bool ascii = false;
    if (!std::getline(in, line) || line != "ply") {
        throw std::runtime_error("read_ply: not a PLY file: " + path);
    }
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "format") {
            ss >> tok;
            ascii = (tok == "ascii");
        } else if (tok == "element") {
            std::string what;
            std::size_t n = 0;
            ss >> what >> n;
            if (what == "vertex") {
                n_vertices = n;
            } else if (what == "face") {
                n_faces = n;
            }
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!ascii) {
        throw std::runtime_error("read_ply: only ASCII PLY is supported: " + path);
    }
    TriangleMesh mesh;
    mesh.vertices.reserve(n_vertices);
    for (std::size_t i = 0; i < n_vertices; ++i) {
        double x, y, z;
        if (!(in >> x >> y >> z)) {
            throw std::runtime_error("read_ply: truncated vertex list: " + path);
        }
        std::getline(in, line); // drop any extra per-vertex properties
        mesh.vertices.emplace_back(x, y, z);
    }
    for (std::size_t i = 0; i < n_faces; ++i) {
        int n, a, b, c;
        if (!(in >> n >> a >> b >> c) || n != 3) {
            throw std::runtime_error("read_ply: only triangle faces are supported: " + path);
        }
        mesh.triangles.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                                  static_cast<std::uint32_t>(c)});
    }
    return mesh;
}

} // namespace scout
