#pragma once

// Sobol low-discrepancy sequence in up to 64 dimensions, built from Joe-Kuo
// primitive polynomials and initial direction numbers with the Gray-code
// update. Point index 0 is the all-zeros point and is never emitted; the
// stream starts at index 1.

#include <cstdint>
#include <vector>

#include "apx/common.hpp"
#include "apx/detail/sobol_joe_kuo.hpp"

namespace apx {

class SobolGenerator {
 public:
  static constexpr int kBits = 32;

  explicit SobolGenerator(int dim, std::uint64_t start_index = 1)
      : dim_(dim), index_(0) {
    require(dim >= 1 && dim <= detail::kSobolMaxDim,
            "Sobol dimension must be in [1, " +
                std::to_string(detail::kSobolMaxDim) + "], got " + std::to_string(dim));
    require(start_index >= 1, "Sobol start index begins at 1");
    v_.assign(static_cast<std::size_t>(dim) * (kBits + 1), 0);
    for (int j = 0; j < dim; ++j) init_dimension(j);
    state_.assign(dim, 0);
    skip_to(start_index - 1);
  }

  int dim() const { return dim_; }
  std::uint64_t index() const { return index_; }

  // Writes the next point into out[0..dim). Coordinates lie in (0, 1): every
  // direction vector has its lowest set bit unique to its column, so no
  // partial XOR can cancel to zero once the zero point is skipped.
  void next_point(double* out) {
    // Gray-code step: flip by the direction vector of the lowest zero bit
    // of the previous index.
    unsigned c = 1;
    std::uint64_t value = index_;
    while (value & 1ull) {
      value >>= 1;
      ++c;
    }
    ++index_;
    for (int j = 0; j < dim_; ++j) {
      state_[j] ^= dir(j, c);
      out[j] = static_cast<double>(state_[j]) * 0x1.0p-32;
    }
  }

  // Row-major count x dim block of consecutive points.
  std::vector<double> next_points(std::size_t count) {
    std::vector<double> pts(count * static_cast<std::size_t>(dim_));
    for (std::size_t i = 0; i < count; ++i) {
      next_point(pts.data() + i * static_cast<std::size_t>(dim_));
    }
    return pts;
  }

 private:
  std::uint32_t dir(int j, unsigned bit) const {
    return v_[static_cast<std::size_t>(j) * (kBits + 1) + bit];
  }

  std::uint32_t& dir(int j, unsigned bit) {
    return v_[static_cast<std::size_t>(j) * (kBits + 1) + bit];
  }

  void init_dimension(int j) {
    if (j == 0) {
      for (int i = 1; i <= kBits; ++i) {
        dir(0, static_cast<unsigned>(i)) = 1u << (kBits - i);
      }
      return;
    }
    const std::uint32_t poly = detail::kSobolPoly[j];
    int deg = 0;
    for (std::uint32_t p = poly; p > 1; p >>= 1) ++deg;
    for (int i = 1; i <= deg && i <= kBits; ++i) {
      dir(j, static_cast<unsigned>(i)) = detail::kSobolVinit[j][i - 1]
                                         << (kBits - i);
    }
    for (int i = deg + 1; i <= kBits; ++i) {
      std::uint32_t v = dir(j, static_cast<unsigned>(i - deg));
      v ^= v >> deg;
      for (int k = 1; k < deg; ++k) {
        if ((poly >> (deg - k)) & 1u) {
          v ^= dir(j, static_cast<unsigned>(i - k));
        }
      }
      dir(j, static_cast<unsigned>(i)) = v;
    }
  }

  // Jumps the state to just after emitting `index` points: the state for
  // point i is the XOR of direction vectors selected by gray(i).
  void skip_to(std::uint64_t index) {
    index_ = index;
    const std::uint64_t gray = index ^ (index >> 1);
    for (int j = 0; j < dim_; ++j) {
      std::uint32_t x = 0;
      for (unsigned b = 0; b < kBits; ++b) {
        if ((gray >> b) & 1ull) x ^= dir(j, b + 1);
      }
      state_[j] = x;
    }
  }

  int dim_;
  std::uint64_t index_;
  std::vector<std::uint32_t> v_;
  std::vector<std::uint32_t> state_;
};

}  // namespace apx
