// Copyright 2026 The csvol Authors
//
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

#ifndef CSVOL_ERROR_HPP
#define CSVOL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace csvol {

enum class ErrorKind {
  kInputShape,
  kCorruptStream,
  kEncodability,
  kConfiguration,
  kIngestion,
  kCapacity,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInputShape: return "input-shape";
    case ErrorKind::kCorruptStream: return "corrupt-stream";
    case ErrorKind::kEncodability: return "encodability";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kIngestion: return "ingestion";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace csvol

#endif  // CSVOL_ERROR_HPP
