// Copyright (c) 2026 The ammnet Authors. All Rights Reserved.
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

#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ammnet/nn.hpp"

namespace ammnet {

// Checkpoint container (.ammc):
//   bytes 0..3  magic "AMMC"
//   byte  4     format version, currently 1
//   bytes 5..7  reserved, zero
//   bytes 8..15 little-endian uint64 manifest length in bytes
//   manifest    UTF-8 JSON: {"meta": {...}, "params": [{"name", "shape",
//               "offset", "count"}, ...]}, offsets counted in elements from
//               the start of the payload
//   payload     little-endian float32 values
// Values are stored in float32; loading promotes back to double.

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> params;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const ParamList& params,
                     const nlohmann::json& meta);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into every parameter in the list, matching by
// name and validating shapes. Missing names and shape mismatches throw.
void load_into(const Checkpoint& ckpt, const ParamList& params);

}  // namespace ammnet
