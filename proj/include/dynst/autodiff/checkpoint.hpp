/*
 * Copyright 2026 The DynST Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Portable text checkpoint format.
//
//   dynst-checkpoint 1
//   header <one-line JSON object>
//   param <name> <rank> <extent_0> ... <extent_{rank-1}>
//   <row-major values, space separated, shortest round-trip decimal>
//   ... (one param/value line pair per tensor)
//   end
//
// Values are printed with std::to_chars, so loading reproduces every double
// bit for bit.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "dynst/autodiff/tensor.hpp"

namespace dynst::ad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct StoredArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json header;
  std::vector<StoredArray> arrays;

  const StoredArray& find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const nlohmann::json& header,
                      const std::vector<NamedTensor>& tensors);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path,
                     const nlohmann::json& header,
                     const std::vector<NamedTensor>& tensors);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies stored values into same-named parameters, checking shapes.
void restore_parameters(const Checkpoint& checkpoint,
                        const std::vector<NamedTensor>& tensors);

}  // namespace dynst::ad
