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
#include <vector>

#include "ammnet/training.hpp"

namespace ammnet {

inline constexpr char kVersion[] = "1.0.0";

// Entry point behind main(): parses argv, dispatches one subcommand, and
// maps failures to exit codes (0 success, 2 usage error, 1 runtime error).
int run_cli(int argc, char** argv);

// Named ablation rows: fusion/adversary combinations, progressive modulation
// sites, perturbation-kind selections, and the beta / erase / shuffle
// sweeps. Unknown names throw.
TrainConfig ablate_config(const std::string& name);
std::vector<std::string> ablate_preset_names();

// Minimal standalone line chart of per-epoch mean IoU, one polyline per
// split present in the curves.
std::string render_curves_svg(const std::vector<CurvePoint>& curves);

}  // namespace ammnet
