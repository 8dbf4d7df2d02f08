#pragma once

#include <stdexcept>
#include <string>

namespace protomil {

// Malformed input data, unreadable files, or a training run that cannot
// proceed (non-finite loss, single-class training set).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent configuration: bad hyperparameters, incompatible shapes
// between a checkpoint and a dataset, unknown preset names.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace protomil
