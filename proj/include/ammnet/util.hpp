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

#include <cstdint>
#include <functional>
#include <string>

namespace ammnet {

// Number of worker threads to use, honoring the AMM_THREADS environment
// variable (values < 1 clamp to 1). Defaults to the hardware concurrency.
int worker_thread_count();

// Runs fn(begin..end) split into contiguous chunks across worker threads.
// With one worker (or a tiny range) the call runs inline on the caller
// thread. Chunk boundaries depend only on (end - begin) and the worker
// count, so any reduction that keeps per-chunk partials ordered stays
// deterministic for a fixed AMM_THREADS.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

// Formats a double with enough digits to round-trip, for deterministic
// text output (CSV, JSON reports).
std::string format_double(double v);

}  // namespace ammnet
