#pragma once

#include <cmath>
#include <limits>

namespace clab {

/// Running log Σ exp(x_k) with a moving shift; −∞ until the first finite term.
class LogSum {
 public:
  void add(double log_term) {
    if (log_term == -std::numeric_limits<double>::infinity()) return;
    if (log_term <= shift_) {
      sum_ += std::exp(log_term - shift_);
    } else {
      sum_ = sum_ * std::exp(shift_ - log_term) + 1.0;
      shift_ = log_term;
    }
  }
  double value() const {
    return sum_ > 0.0 ? shift_ + std::log(sum_) : -std::numeric_limits<double>::infinity();
  }

 private:
  double shift_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

inline double log_add(double a, double b) {
  LogSum s;
  s.add(a);
  s.add(b);
  return s.value();
}

}  // namespace clab
