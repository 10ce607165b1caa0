#ifndef BDSDE_ERRORS_HPP
#define BDSDE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bdsde {

// Requested sample cloud would exceed the configured memory cap.
class CapacityError : public std::runtime_error {
public:
  CapacityError(const std::string& what, std::size_t cap_bytes)
      : std::runtime_error(what), cap_bytes_(cap_bytes) {}
  std::size_t cap_bytes() const noexcept { return cap_bytes_; }

private:
  std::size_t cap_bytes_;
};

// A NaN (or infinity) showed up in the backward sweep.
class NumericalDivergence : public std::runtime_error {
public:
  NumericalDivergence(const std::string& what, std::size_t outer, std::size_t node)
      : std::runtime_error(what), outer_(outer), node_(node) {}
  std::size_t outer() const noexcept { return outer_; }
  std::size_t node() const noexcept { return node_; }

private:
  std::size_t outer_;
  std::size_t node_;
};

// A payoff or generator produced a non-finite value for a given sample.
class EvaluationError : public std::runtime_error {
public:
  EvaluationError(const std::string& what, std::size_t outer, std::size_t inner)
      : std::runtime_error(what), outer_(outer), inner_(inner) {}
  std::size_t outer() const noexcept { return outer_; }
  std::size_t inner() const noexcept { return inner_; }

private:
  std::size_t outer_;
  std::size_t inner_;
};

} // namespace bdsde

#endif // BDSDE_ERRORS_HPP
