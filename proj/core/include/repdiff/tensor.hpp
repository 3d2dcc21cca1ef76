#pragma once

#include <cstddef>
#include <cstdlib>
#include <initializer_list>
#include <new>
#include <unordered_map>
#include <string>
#include <vector>

namespace repdiff {

namespace detail {

/// Thread-local recycling pool for aligned blocks. Graph evaluation allocates
/// and frees many identically-sized buffers per batch; reusing them keeps the
/// kernels out of the page-fault path. Blocks freed on a different thread
/// simply join that thread's pool.
class BlockPool {
 public:
  static constexpr std::size_t alignment = 64;
  static constexpr std::size_t max_pooled_bytes = std::size_t(1) << 26;  // 64 MiB
  static constexpr std::size_t max_per_bucket = 64;

  void* get(std::size_t bytes) {
    auto it = buckets_.find(bytes);
    if (it != buckets_.end() && !it->second.empty()) {
      void* p = it->second.back();
      it->second.pop_back();
      return p;
    }
    void* p = std::aligned_alloc(alignment, bytes);
    if (p == nullptr) throw std::bad_alloc();
    return p;
  }

  void put(void* p, std::size_t bytes) noexcept {
    if (bytes > max_pooled_bytes) {
      std::free(p);
      return;
    }
    auto& bucket = buckets_[bytes];
    if (bucket.size() >= max_per_bucket) {
      std::free(p);
      return;
    }
    bucket.push_back(p);
  }

  ~BlockPool() {
    for (auto& [size, bucket] : buckets_)
      for (void* p : bucket) std::free(p);
  }

 private:
  std::unordered_map<std::size_t, std::vector<void*>> buckets_;
};

inline BlockPool& thread_pool() {
  thread_local BlockPool pool;
  return pool;
}

}  // namespace detail

/// 64-byte-aligned pooling allocator; the matmul kernels rely on aligned rows
/// for full-width vector loads.
template <class T>
struct AlignedAlloc {
  using value_type = T;

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

  static std::size_t rounded(std::size_t n) {
    constexpr std::size_t a = detail::BlockPool::alignment;
    return (n * sizeof(T) + a - 1) / a * a;
  }

  T* allocate(std::size_t n) {
    return static_cast<T*>(detail::thread_pool().get(rounded(n)));
  }
  void deallocate(T* p, std::size_t n) noexcept { detail::thread_pool().put(p, rounded(n)); }

  template <class U>
  bool operator==(const AlignedAlloc<U>&) const noexcept {
    return true;
  }
};

using DVec = std::vector<double, AlignedAlloc<double>>;

/// Dense row-major array of doubles, rank 0 (scalar), 1 (vector) or 2 (matrix).
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor zeros(std::size_t n);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor zeros_like(const Tensor& other);
  static Tensor full(std::size_t rows, std::size_t cols, double v);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  DVec& raw() { return data_; }
  const DVec& raw() const { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

  /// Scalar access; throws unless size() == 1.
  double item() const;

  Tensor reshaped(std::vector<std::size_t> shape) const;

 private:
  std::vector<std::size_t> shape_;
  DVec data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace repdiff
