// Copyright 2026, The qarma authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace qarma {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
class IngestError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters or precondition violations on an API call.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A metric that has no value for the given rule (zero denominator).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Transport or protocol failure in distributed execution.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace qarma
