/* Copyright 2026 The vqrephrase Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Checkpoint directories hold two files:
//
//   tensors.bin    binary tensor archive
//   manifest.json  metadata, tensor table and SHA-256 digests
//
// Archive layout (all integers little-endian u32, values little-endian
// IEEE-754 binary64):
//
//   "VQRT" | version | tensor count
//   per tensor: name length | name bytes | rows | cols | rows*cols values
//
// Values are stored row-major.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqr/autograd.hpp"

namespace vqr::checkpoint {

using NamedTensor = std::pair<std::string, ad::Matrix>;

inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr int kManifestFormatVersion = 1;

std::string sha256_hex(std::span<const unsigned char> bytes);

std::vector<unsigned char> encode_archive(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_archive(std::span<const unsigned char> bytes);

// Digest over names, shapes and values of the given parameters, in order.
std::string parameter_digest(std::span<const ad::Parameter* const> params);

struct Contents {
  nlohmann::json manifest;
  std::vector<NamedTensor> tensors;
};

// Writes tensors.bin and manifest.json under `dir` (created if needed). The
// manifest gains "format_version", "archive_sha256" and "tensors" fields.
void save(const std::filesystem::path& dir, nlohmann::json manifest,
          const std::vector<NamedTensor>& tensors);

// Reads and verifies a checkpoint directory. Throws CorruptionError when the
// archive digest does not match the manifest.
Contents load(const std::filesystem::path& dir);

// Copies values of matching names into `params`; throws IntegrityError on a
// missing name or shape mismatch.
void assign(std::span<ad::Parameter* const> params, const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> snapshot(std::span<const ad::Parameter* const> params);

}  // namespace vqr::checkpoint
