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

#include "ammnet/util.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <thread>
#include <vector>

#include "ammnet/error.hpp"

namespace ammnet {

const char* err_code_name(ErrCode code) {
  switch (code) {
    case ErrCode::kInvalidArgument: return "invalid_argument";
    case ErrCode::kShapeMismatch: return "shape_mismatch";
    case ErrCode::kBadConfig: return "bad_config";
    case ErrCode::kBadMagic: return "bad_magic";
    case ErrCode::kBadVersion: return "bad_version";
    case ErrCode::kBadDtype: return "bad_dtype";
    case ErrCode::kTruncatedFile: return "truncated_file";
    case ErrCode::kIoFailure: return "io_failure";
    case ErrCode::kMissingParam: return "missing_param";
    case ErrCode::kBadLabel: return "bad_label";
    case ErrCode::kBadSimplex: return "bad_simplex";
    case ErrCode::kEmptyMask: return "empty_mask";
    case ErrCode::kDiverged: return "diverged";
    case ErrCode::kInternal: return "internal";
  }
  return "unknown";
}

int worker_thread_count() {
  static const int cached = [] {
    if (const char* env = std::getenv("AMM_THREADS")) {
      int n = std::atoi(env);
      return std::max(1, n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return cached;
}

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  AMM_CHECK(begin <= end, ErrCode::kInvalidArgument,
            "parallel_for range is inverted: [" << begin << ", " << end << ")");
  const std::int64_t n = end - begin;
  if (n == 0) return;

  const int workers = worker_thread_count();
  // Thread spawn overhead dwarfs small ranges; run those inline.
  if (workers <= 1 || n < 1024) {
    fn(begin, end);
    return;
  }

  const int chunks = static_cast<int>(std::min<std::int64_t>(workers, n));
  const std::int64_t step = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(chunks));
  for (int c = 0; c < chunks; ++c) {
    const std::int64_t lo = begin + c * step;
    const std::int64_t hi = std::min(end, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Shorter representations that still round-trip keep the files readable.
  for (int prec = 1; prec < 17; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::strtod(probe, nullptr) == v) return probe;
  }
  return buf;
}

}  // namespace ammnet
