#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace disa {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using Index3 = std::array<int, 3>;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported input data (files, shapes, geometry).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical precondition failed at evaluation time ("no overlap", non-finite values).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Caller asked for something the component does not provide (e.g. a gradient of LC2).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Allocator placing storage on 64-byte cache-line boundaries, so a 16-float descriptor row
/// never straddles two lines.
template <class T>
struct CacheLineAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  CacheLineAllocator() = default;
  template <class U>
  CacheLineAllocator(const CacheLineAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const CacheLineAllocator<U>&) const noexcept { return true; }
};

template <class T>
using AlignedVector = std::vector<T, CacheLineAllocator<T>>;

inline std::size_t product(const Index3& dims) {
  return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
         static_cast<std::size_t>(dims[2]);
}

}  // namespace disa
