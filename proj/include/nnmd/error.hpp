#pragma once

#include <stdexcept>
#include <string>

namespace nnmd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a per-atom neighbor count exceeds the model capacity.
class CapacityError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace nnmd
