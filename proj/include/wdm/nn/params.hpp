#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wdm/rng.hpp"
#include "wdm/tensor.hpp"

namespace wdm::nn {

/// Location of one weight tensor inside the flat parameter vector.
struct ParamSlot {
  Eigen::Index offset = 0;
  int rows = 0;
  int cols = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
};

enum class Init { kZero, kOne, kFanIn, kZeroOutput };

struct ParamEntry {
  std::string name;
  ParamSlot slot;
  Init init;
  int fan_in;
};

/// Registry of every weight tensor. All parameters live in one contiguous
/// vector so optimiser state, EMA and serialisation are plain vector ops.
class ParamLayout {
 public:
  ParamSlot add(std::string name, int rows, int cols, Init init, int fan_in = 1) {
    ParamSlot slot{total_, rows, cols};
    entries_.push_back({std::move(name), slot, init, fan_in});
    total_ += slot.size();
    return slot;
  }

  Eigen::Index total() const { return total_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  /// Variance-scaling normal init (std = 1/sqrt(fan_in)) for weights,
  /// zeros for biases, ones for norm gains. Output-layer weights are zero
  /// unless `zero_output` is false.
  template <typename Scalar>
  Vec<Scalar> initialize(Rng& rng, bool zero_output = true) const {
    Vec<Scalar> p = Vec<Scalar>::Zero(total_);
    for (const auto& e : entries_) {
      auto block = p.segment(e.slot.offset, e.slot.size());
      switch (e.init) {
        case Init::kZero:
          break;
        case Init::kOne:
          block.setOnes();
          break;
        case Init::kZeroOutput:
          if (zero_output) break;
          [[fallthrough]];
        case Init::kFanIn: {
          const double sd = 1.0 / std::sqrt(static_cast<double>(std::max(1, e.fan_in)));
          for (Eigen::Index i = 0; i < block.size(); ++i) block[i] = static_cast<Scalar>(sd * rng.normal());
          break;
        }
      }
    }
    return p;
  }

 private:
  std::vector<ParamEntry> entries_;
  Eigen::Index total_ = 0;
};

template <typename Scalar>
Eigen::Map<const Mat<Scalar>> view(const Vec<Scalar>& p, const ParamSlot& s) {
  return Eigen::Map<const Mat<Scalar>>(p.data() + s.offset, s.rows, s.cols);
}

template <typename Scalar>
Eigen::Map<Mat<Scalar>> view(Vec<Scalar>& p, const ParamSlot& s) {
  return Eigen::Map<Mat<Scalar>>(p.data() + s.offset, s.rows, s.cols);
}

}  // namespace wdm::nn
