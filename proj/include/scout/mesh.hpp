// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_MESH_HPP
#define SCOUT_MESH_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace scout {

struct TriangleMesh {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    bool empty() const { return triangles.empty(); }
};

/** Standard marching-cubes lookup tables. */
extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];

/** Corner offsets of a marching-cubes cell, table corner order. */
extern const Eigen::Vector3i kMcCorner[8];

/** Endpoint corner indices of the 12 cell edges. */
extern const int kMcEdgeCorner[12][2];

/** Write an ASCII PLY mesh. */
void write_ply(const TriangleMesh& mesh, const std::string& path);

/** Read an ASCII PLY mesh written by write_ply (vertex xyz + face lists). */
TriangleMesh read_ply(const std::string& path);

} // namespace scout

#endif
