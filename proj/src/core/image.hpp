/*
 * Copyright 2026 The matedit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace matedit {

/// Row-major interleaved raster. Row 0 is the top of an image, or v = 0
/// for a UV texture.
template <class T>
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, int channels = 1, T fill = T{})
        : width_(width), height_(height), channels_(channels) {
        require(width >= 0 && height >= 0 && channels >= 1, "raster: bad dimensions");
        data_.assign(static_cast<size_t>(width) * height * channels, fill);
    }

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    size_t pixel_count() const { return static_cast<size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    T& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    const T& at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    bool same_shape(int w, int h) const { return width_ == w && height_ == h; }
    template <class U>
    bool same_shape(const Raster<U>& o) const { return width_ == o.width() && height_ == o.height(); }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    size_t index(int x, int y, int c) const {
        return (static_cast<size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0, height_ = 0, channels_ = 1;
    std::vector<T> data_;
};

using Image = Raster<double>;
using Mask = Raster<std::uint8_t>;
using LabelImage = Raster<std::uint16_t>;

inline constexpr std::uint16_t kUnlabeled = 0xFFFF;

inline Vec3 rgb_at(const Image& img, int x, int y) {
    return {img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)};
}
inline void set_rgb(Image& img, int x, int y, const Vec3& v) {
    img.at(x, y, 0) = v.x;
    img.at(x, y, 1) = v.y;
    img.at(x, y, 2) = v.z;
}

size_t popcount(const Mask& m);
Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);
Mask mask_minus(const Mask& a, const Mask& b);
Mask mask_not(const Mask& a);
double mask_iou(const Mask& a, const Mask& b);
Mask threshold(const Image& img, double level, int channel = 0);

// File formats. Float images use PFM (little-endian, bottom row first),
// 8-bit previews use binary PPM/PGM, label ids use 16-bit PGM.
void write_pfm(const std::filesystem::path& path, const Image& img);
Image read_pfm(const std::filesystem::path& path);
void write_ppm8(const std::filesystem::path& path, const Image& img);
Image read_pnm(const std::filesystem::path& path);
void write_pgm16(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_pgm16(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& m);
Mask read_mask(const std::filesystem::path& path);

/// Writes by extension: .pfm float, .ppm/.pgm 8-bit.
void write_image(const std::filesystem::path& path, const Image& img);
Image read_image(const std::filesystem::path& path);

std::string encode_pfm(const Image& img);
Image decode_pfm(const std::string& bytes);
std::string encode_pnm8(const Image& img);
std::string encode_pgm_mask(const Mask& m);
Mask decode_pgm_mask(const std::string& bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace matedit
