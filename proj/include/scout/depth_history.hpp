// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_DEPTH_HISTORY_HPP
#define SCOUT_DEPTH_HISTORY_HPP

#include "scout/geometry.hpp"
#include "scout/image.hpp"

#include <Eigen/Geometry>
#include <array>
#include <atomic>
#include <cstddef>
#include <map>
#include <string>

namespace scout {

/** Remembers, per coarse position cell, the panoramic directions in which
 *  depth measurements have come back invalid. Planning multiplies these masks
 *  into its gain images so views that already failed to return depth are not
 *  proposed again from nearby positions.
 *
 *  Each cell owns one binary panorama, lazily created all-ones; recording an
 *  invalid pixel clears its direction bin and bins never recover (the record
 *  only grows). Cells without a record report an all-ones mask (fail open). */
class DepthHistory {
public:
    /** `dilate` additionally clears the 8 neighbouring bins (cyclic in
     *  azimuth, clipped in elevation) of every recorded direction. */
    DepthHistory(const Eigen::AlignedBox3d& bounds, double cell_size, PanoramaModel panorama,
                 bool dilate = false);

    const PanoramaModel& panorama() const { return pano_; }
    double cell_size() const { return cell_; }
    std::size_t cell_count() const { return cells_.size(); }

    /** Clear the direction bins of every invalid pixel in a frame, in the
     *  panorama of the cell containing the camera centre. Returns how many
     *  bins newly flipped to 0. A camera outside the tracked bounds records
     *  nothing, returns 0 and bumps the warning counter. */
    std::size_t record(const DepthImage& depth, const RigidTransform& T_WC,
                       const CameraModel& cam);

    /** Mask of the cell containing `position`: 1 where depth has always been
     *  valid (or never observed), 0 where an invalid return was seen. An
     *  out-of-bounds position yields the all-ones mask (fail open) and bumps
     *  the warning counter. The reference stays valid while the history lives
     *  and no record() call runs concurrently. */
    const BinaryImage& mask_at(const Eigen::Vector3d& position) const;

    /** True iff the cell containing `position` has a record. */
    bool has_record(const Eigen::Vector3d& position) const;

    /** Out-of-bounds record/mask requests seen so far. */
    std::size_t warning_count() const { return warnings_.load(); }

    /** Write every cell's mask as an ASCII PGM named
     *  history_<ix>_<iy>_<iz>.pgm (0 = invalid seen, 255 = clean). */
    void dump_pgm(const std::string& directory) const;

private:
    std::array<int, 3> cell_of(const Eigen::Vector3d& p) const;

    Eigen::AlignedBox3d bounds_;
    double cell_;
    PanoramaModel pano_;
    bool dilate_;
    BinaryImage all_ones_;
    std::map<std::array<int, 3>, BinaryImage> cells_;
    mutable std::atomic<std::size_t> warnings_{0};
};

} // namespace scout

#endif
