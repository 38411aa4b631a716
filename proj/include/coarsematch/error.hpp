// Copyright 2026 The coarsematch Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace coarsematch {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Requested capacity b is incompatible with the population size.
class InvalidCapacityError : public Error {
 public:
  using Error::Error;
};

// A quantity that is a ratio (NMAE, competitive ratio, ...) has a zero
// denominator.
class UndefinedError : public Error {
 public:
  using Error::Error;
};

// Plan, clustering and instance do not describe the same world.
class PlanMismatchError : public Error {
 public:
  using Error::Error;
};

class LpIterationLimitError : public Error {
 public:
  LpIterationLimitError(const std::string& what, double best_objective,
                        double best_bound)
      : Error(what), best_objective_(best_objective), best_bound_(best_bound) {}

  double best_objective() const noexcept { return best_objective_; }
  double best_bound() const noexcept { return best_bound_; }
  double gap() const noexcept { return best_bound_ - best_objective_; }

 private:
  double best_objective_;
  double best_bound_;
};

}  // namespace coarsematch
