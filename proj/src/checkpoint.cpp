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

#include "vqr/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "vqr/error.hpp"

namespace vqr::checkpoint {

namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CorruptionError("tensor archive truncated");
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptionError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

std::vector<unsigned char> encode_archive(const std::vector<NamedTensor>& tensors) {
  std::vector<unsigned char> out{'V', 'Q', 'R', 'T'};
  put_u32(out, kArchiveVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  }
  return out;
}

std::vector<NamedTensor> decode_archive(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  if (r.str(4) != "VQRT") throw CorruptionError("bad tensor archive magic");
  if (r.u32() != kArchiveVersion) throw CorruptionError("unsupported tensor archive version");
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    out.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw CorruptionError("trailing bytes in tensor archive");
  return out;
}

std::vector<NamedTensor> snapshot(std::span<const ad::Parameter* const> params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const ad::Parameter* p : params) out.emplace_back(p->name, p->value);
  return out;
}

std::string parameter_digest(std::span<const ad::Parameter* const> params) {
  return sha256_hex(encode_archive(snapshot(params)));
}

void save(const fs::path& dir, nlohmann::json manifest, const std::vector<NamedTensor>& tensors) {
  fs::create_directories(dir);
  const auto bytes = encode_archive(tensors);
  {
    std::ofstream out(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + (dir / "tensors.bin").string());
  }
  manifest["format_version"] = kManifestFormatVersion;
  manifest["archive_sha256"] = sha256_hex(bytes);
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, m] : tensors) table.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
  manifest["tensors"] = std::move(table);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
  if (!out) throw Error("failed writing " + (dir / "manifest.json").string());
}

Contents load(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) {
    throw ConfigError("no checkpoint at " + dir.string());
  }
  Contents c;
  {
    std::ifstream in(dir / "manifest.json");
    try {
      c.manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError("manifest unreadable: " + std::string(e.what()));
    }
  }
  const auto bytes = read_file(dir / "tensors.bin");
  const std::string digest = sha256_hex(bytes);
  if (c.manifest.value("archive_sha256", std::string{}) != digest) {
    throw CorruptionError("archive digest mismatch in " + dir.string());
  }
  c.tensors = decode_archive(bytes);
  return c;
}

void assign(std::span<ad::Parameter* const> params, const std::vector<NamedTensor>& tensors) {
  for (ad::Parameter* p : params) {
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [&](const NamedTensor& t) { return t.first == p->name; });
    if (it == tensors.end()) throw IntegrityError("checkpoint lacks tensor '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw IntegrityError("shape mismatch for tensor '" + p->name + "'");
    }
    p->value = it->second;
    p->zero_grad();
  }
}

}  // namespace vqr::checkpoint
