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

#include "ammnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ammnet/error.hpp"

namespace ammnet {

namespace {

constexpr std::uint8_t kCheckpointVersion = 1;

void put_u64le(std::uint8_t* dst, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64le(const std::uint8_t* src) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(src[i]) << (8 * i);
  return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const ParamList& params,
                     const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  manifest["params"] = nlohmann::json::array();

  std::uint64_t offset = 0;
  for (const ParamRef& p : params) {
    nlohmann::json entry;
    entry["name"] = p.name;
    entry["shape"] = p.value->shape();
    entry["offset"] = offset;
    entry["count"] = p.value->size();
    manifest["params"].push_back(std::move(entry));
    offset += static_cast<std::uint64_t>(p.value->size());
  }

  const std::string manifest_text = manifest.dump();
  std::uint8_t header[16] = {'A', 'M', 'M', 'C', kCheckpointVersion, 0, 0, 0};
  put_u64le(header + 8, manifest_text.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "cannot open " << path << " for writing");
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));

  std::vector<float> buffer;
  for (const ParamRef& p : params) {
    buffer.resize(static_cast<std::size_t>(p.value->size()));
    const double* src = p.value->data();
    for (std::int64_t i = 0; i < p.value->size(); ++i) {
      buffer[static_cast<std::size_t>(i)] = static_cast<float>(src[i]);
    }
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  }
  out.flush();
  AMM_CHECK(out.good(), ErrCode::kIoFailure, "write to " << path << " failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  AMM_CHECK(in.good(), ErrCode::kIoFailure, "cannot open " << path << " for reading");

  std::uint8_t header[16];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  AMM_CHECK(in.gcount() == static_cast<std::streamsize>(sizeof(header)), ErrCode::kTruncatedFile,
            path << " is shorter than the checkpoint header");
  AMM_CHECK(std::memcmp(header, "AMMC", 4) == 0, ErrCode::kBadMagic,
            path << " does not start with the AMMC magic");
  AMM_CHECK(header[4] == kCheckpointVersion, ErrCode::kBadVersion,
            path << " has checkpoint version " << int(header[4]) << ", expected "
                 << int(kCheckpointVersion));

  const std::uint64_t manifest_len = get_u64le(header + 8);
  AMM_CHECK(manifest_len > 0 && manifest_len < (1ull << 30), ErrCode::kTruncatedFile,
            path << " has implausible manifest length " << manifest_len);
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  AMM_CHECK(in.gcount() == static_cast<std::streamsize>(manifest_len), ErrCode::kTruncatedFile,
            path << " manifest is short");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw AmmError(ErrCode::kBadConfig, path + " manifest is not valid JSON: " + e.what());
  }

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());

  std::uint64_t total = 0;
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset;
    std::uint64_t count;
  };
  std::vector<Entry> entries;
  for (const auto& e : manifest.at("params")) {
    Entry entry;
    entry.name = e.at("name").get<std::string>();
    entry.shape = e.at("shape").get<std::vector<int>>();
    entry.offset = e.at("offset").get<std::uint64_t>();
    entry.count = e.at("count").get<std::uint64_t>();
    AMM_CHECK(static_cast<std::uint64_t>(Tensor::numel(entry.shape)) == entry.count,
              ErrCode::kShapeMismatch,
              path << " entry " << entry.name << " shape does not match its count");
    AMM_CHECK(entry.offset == total, ErrCode::kTruncatedFile,
              path << " entry " << entry.name << " has non-contiguous offset");
    total += entry.count;
    entries.push_back(std::move(entry));
  }

  std::vector<float> payload(total);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(total * sizeof(float)));
  AMM_CHECK(in.gcount() == static_cast<std::streamsize>(total * sizeof(float)),
            ErrCode::kTruncatedFile, path << " payload is short");

  for (const Entry& entry : entries) {
    Tensor t(entry.shape);
    double* dst = t.data();
    const float* src = payload.data() + entry.offset;
    for (std::uint64_t i = 0; i < entry.count; ++i) dst[i] = src[i];
    ckpt.params.emplace_back(entry.name, std::move(t));
  }
  return ckpt;
}

void load_into(const Checkpoint& ckpt, const ParamList& params) {
  for (const ParamRef& p : params) {
    const Tensor* stored = ckpt.find(p.name);
    AMM_CHECK(stored != nullptr, ErrCode::kMissingParam,
              "checkpoint has no parameter named " << p.name);
    AMM_CHECK(stored->same_shape(*p.value), ErrCode::kShapeMismatch,
              "checkpoint parameter " << p.name << " has shape " << stored->shape_str()
                                      << ", expected " << p.value->shape_str());
    *p.value = *stored;
  }
}

}  // namespace ammnet
