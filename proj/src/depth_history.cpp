// SPDX-License-Identifier: BSD-3-Clause

#include "scout/depth_history.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace scout {

DepthHistory::DepthHistory(const Eigen::AlignedBox3d& bounds, double cell_size,
                           PanoramaModel panorama, bool dilate)
    : bounds_(bounds), cell_(cell_size), pano_(panorama), dilate_(dilate),
      all_ones_(panorama.width, panorama.height, std::uint8_t{1})
{
    pano_.validate();
    if (!(cell_ > 0.0)) {
        throw std::invalid_argument("history cell size must be positive");
    }
    if (bounds_.isEmpty()) {
        throw std::invalid_argument("history bounds must be non-empty");
    }
}

std::array<int, 3> DepthHistory::cell_of(const Eigen::Vector3d& p) const
{
    const Eigen::Vector3d rel = (p - bounds_.min()) / cell_;
    return {static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
            static_cast<int>(std::floor(rel.z()))};
}

std::size_t DepthHistory::record(const DepthImage& depth, const RigidTransform& T_WC,
                                 const CameraModel& cam)
{
    cam.validate();
    if (depth.width() != cam.width || depth.height() != cam.height) {
        throw std::invalid_argument("depth image does not match the camera");
    }
    if (!T_WC.is_rigid(1e-6)) {
        throw std::invalid_argument("camera pose is not a rigid transform");
    }
    if (!bounds_.contains(T_WC.t)) {
        ++warnings_;
        return 0;
    }

    BinaryImage* mask = nullptr; // created on the first invalid pixel
    std::size_t zeroed = 0;
    auto clear_bin = [&](int col, int row) {
        if (row < 0 || row >= mask->height()) {
            return;
        }
        col = ((col % mask->width()) + mask->width()) % mask->width();
        if ((*mask)(col, row)) {
            (*mask)(col, row) = 0;
            ++zeroed;
        }
    };

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const float d = depth(x, y);
            if (std::isfinite(d) && d > 0.0f) {
                continue;
            }
            if (!mask) {
                auto [it, inserted] = cells_.try_emplace(cell_of(T_WC.t), all_ones_);
                (void)inserted;
                mask = &it->second;
            }
            const Eigen::Vector3d dir_w =
                T_WC.R * cam.ray_direction(Eigen::Vector2d(x + 0.5, y + 0.5));
            if (auto px = pano_.project(dir_w)) {
                clear_bin(px->x(), px->y());
                if (dilate_) {
                    for (int dr = -1; dr <= 1; ++dr) {
                        for (int dc = -1; dc <= 1; ++dc) {
                            if (dr != 0 || dc != 0) {
                                clear_bin(px->x() + dc, px->y() + dr);
                            }
                        }
                    }
                }
            }
        }
    }
    return zeroed;
}

const BinaryImage& DepthHistory::mask_at(const Eigen::Vector3d& position) const
{
    if (!bounds_.contains(position)) {
        ++warnings_;
        return all_ones_;
    }
    auto it = cells_.find(cell_of(position));
    return it == cells_.end() ? all_ones_ : it->second;
}

bool DepthHistory::has_record(const Eigen::Vector3d& position) const
{
    return cells_.count(cell_of(position)) > 0;
}

void DepthHistory::dump_pgm(const std::string& directory) const
{
    std::filesystem::create_directories(directory);
    for (const auto& [idx, mask] : cells_) {
        std::ofstream out(directory + "/history_" + std::to_string(idx[0]) + "_"
                          + std::to_string(idx[1]) + "_" + std::to_string(idx[2]) + ".pgm");
        out << "P2\n" << mask.width() << " " << mask.height() << "\n255\n";
        for (int y = 0; y < mask.height(); ++y) {
            for (int x = 0; x < mask.width(); ++x) {
                out << (mask(x, y) ? 255 : 0) << (x + 1 == mask.width() ? '\n' : ' ');
            }
        }
    }
}

} // namespace scout
