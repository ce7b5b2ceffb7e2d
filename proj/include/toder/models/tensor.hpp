#pragma once

#include <algorithm>
#include <new>
#include <string>
#include <vector>

#include "toder/core/error.hpp"

namespace toder::nn {

/// NCHW shape. Vectors and scalars use trailing ones.
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  [[nodiscard]] size_t size() const { return static_cast<size_t>(n) * c * h * w; }
  [[nodiscard]] size_t plane() const { return static_cast<size_t>(h) * w; }
  [[nodiscard]] size_t sample() const { return static_cast<size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;

  [[nodiscard]] std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Cache-line aligned storage. Vectorized kernels split work by pointer alignment, so a
/// fixed alignment keeps results bit-identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

struct Tensor {
  Shape shape;
  FloatBuffer data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f) : shape(s), data(s.size(), fill) {}

  static Tensor scalar(float v) { return Tensor(Shape{}, v); }

  [[nodiscard]] size_t size() const { return data.size(); }
  [[nodiscard]] bool empty() const { return data.empty(); }
  float* sample(int n) { return data.data() + n * shape.sample(); }
  [[nodiscard]] const float* sample(int n) const { return data.data() + n * shape.sample(); }
  float* channel(int n, int c) { return sample(n) + c * shape.plane(); }
  [[nodiscard]] const float* channel(int n, int c) const { return sample(n) + c * shape.plane(); }
  float& at(int n, int c, int y, int x) { return channel(n, c)[static_cast<size_t>(y) * shape.w + x]; }
  [[nodiscard]] float at(int n, int c, int y, int x) const { return channel(n, c)[static_cast<size_t>(y) * shape.w + x]; }
  [[nodiscard]] float item() const {
    require(data.size() == 1, "tensor: item() needs a single element");
    return data[0];
  }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }

  /// Samples [begin, end) along the batch axis.
  [[nodiscard]] Tensor slice(int begin, int end) const {
    require(begin >= 0 && end <= shape.n && begin < end, "tensor: slice out of range");
    Shape s = shape;
    s.n = end - begin;
    Tensor out(s);
    std::copy(sample(begin), sample(begin) + s.size(), out.data.begin());
    return out;
  }
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ValidationError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

/// Stacks samples along the batch axis.
inline Tensor stack(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "stack: no tensors");
  Shape s = parts[0].shape;
  int n = 0;
  for (const auto& p : parts) {
    require(p.shape.c == s.c && p.shape.h == s.h && p.shape.w == s.w, "stack: sample shapes differ");
    n += p.shape.n;
  }
  s.n = n;
  Tensor out(s);
  auto it = out.data.begin();
  for (const auto& p : parts) it = std::copy(p.data.begin(), p.data.end(), it);
  return out;
}

}  // namespace toder::nn
