#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lifefuse {

// Per-sensor life-probability time series with binary ground truth.
struct ProbabilityStream {
  std::vector<double> timestamps;
  std::vector<double> probs;
  std::vector<int> labels;

  std::size_t size() const { return probs.size(); }

  void validate() const {
    if (timestamps.size() != probs.size() || probs.size() != labels.size()) {
      throw std::invalid_argument("ProbabilityStream: sequences differ in length");
    }
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) {
        throw std::invalid_argument("ProbabilityStream: probability out of [0,1] at step " +
                                    std::to_string(i));
      }
      if (labels[i] != 0 && labels[i] != 1) {
        throw std::invalid_argument("ProbabilityStream: label not in {0,1} at step " +
                                    std::to_string(i));
      }
    }
  }
};

}  // namespace lifefuse
