// SPDX-License-Identifier: BSD-3-Clause

#ifndef SCOUT_IMAGE_HPP
#define SCOUT_IMAGE_HPP

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace scout {

struct Rgb8 {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    bool operator==(const Rgb8&) const = default;
};

/** Dense row-major 2D grid. Pixel (x, y) with x in [0, width), y in [0, height). */
template <typename T>
class Image {
public:
    Image() = default;

    Image(int width, int height, const T& fill = T())
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill)
    {
        if (width <= 0 || height <= 0) {
            throw std::invalid_argument("Image: dimensions must be positive");
        }
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    bool contains(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

    T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    T& at(int x, int y)
    {
        if (!contains(x, y)) {
            throw std::out_of_range("Image::at: pixel outside image");
        }
        return (*this)(x, y);
    }
    const T& at(int x, int y) const
    {
        if (!contains(x, y)) {
            throw std::out_of_range("Image::at: pixel outside image");
        }
        return (*this)(x, y);
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    void fill(const T& value) { data_.assign(data_.size(), value); }

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using DepthImage = Image<float>;
using ColourImage = Image<Rgb8>;
using BinaryImage = Image<std::uint8_t>;
using GainImage = Image<double>;

/** Number of set pixels in a binary image. */
inline std::size_t count_nonzero(const BinaryImage& m)
{
    std::size_t n = 0;
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            n += (m(x, y) != 0);
        }
    }
    return n;
}

} // namespace scout

#endif
