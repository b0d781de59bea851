#pragma once

#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lifefuse {

// Dense row-major tensor of doubles with a dynamic shape.
// Rank 0 is permitted and holds exactly one value.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() : values(1, 0.0) {}

  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)) {
    values.assign(element_count(shape), fill);
  }

  Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != element_count(shape)) {
      throw std::invalid_argument("Tensor: " + std::to_string(values.size()) +
                                  " values do not fill shape " + shape_string());
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t dim(std::size_t axis) const {
    if (axis >= shape.size()) {
      throw std::invalid_argument("Tensor: axis " + std::to_string(axis) + " out of range for shape " +
                                  shape_string());
    }
    return shape[axis];
  }

  double& operator[](std::size_t flat) { return values[flat]; }
  double operator[](std::size_t flat) const { return values[flat]; }

  double& at(std::size_t i) { return values.at(check_rank(1) + i); }
  double at(std::size_t i) const { return values.at(check_rank(1) + i); }

  double& at(std::size_t i, std::size_t j) { return values.at(check_rank(2) + i * shape[1] + j); }
  double at(std::size_t i, std::size_t j) const { return values.at(check_rank(2) + i * shape[1] + j); }

  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return values.at(check_rank(3) + (i * shape[1] + j) * shape[2] + k);
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values.at(check_rank(3) + (i * shape[1] + j) * shape[2] + k);
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  std::string shape_string() const {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
    out << "]";
    return out.str();
  }

 private:
  // Returns 0 so it can be folded into the index expression above.
  std::size_t check_rank(std::size_t expected) const {
    if (shape.size() != expected) {
      throw std::invalid_argument("Tensor: rank " + std::to_string(shape.size()) + " access with " +
                                  std::to_string(expected) + " indices");
    }
    return 0;
  }
};

}  // namespace lifefuse
