#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace measground {

/// Row-major single-channel plane.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

/// Row-major interleaved image, `channels` samples per pixel.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, std::size_t channels, T fill = T{})
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }

  T& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * width_ + x) * channels_ + c]; }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }
  T& at(std::size_t pixel, std::size_t c) { return data_[pixel * channels_ + c]; }
  const T& at(std::size_t pixel, std::size_t c) const { return data_[pixel * channels_ + c]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

using Image3d = Image<double>;

}  // namespace measground
