// Copyright 2026 The ACNN Triage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "acnn/error.hpp"
#include "acnn/hash.hpp"

// Layout shared by embedding and model files:
//
//   <magic>\n
//   <one-line JSON header>\n
//   <count little-endian IEEE-754 doubles>
//
// The header always carries "values" (the double count) and "checksum", the
// FNV-1a digest of the little-endian payload bytes in hex.

namespace acnn {

struct HeaderedBlob {
  nlohmann::json header;
  std::vector<double> values;
};

namespace detail {

inline void AppendLittleEndian(std::string& out, double value) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double ReadLittleEndian(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  return std::bit_cast<double>(bits);
}

inline std::uint64_t PayloadChecksum(const std::string& payload) {
  return Fnv1a().Update(std::string_view(payload)).Digest();
}

}  // namespace detail

inline std::string EncodeBlob(const std::string& magic, nlohmann::json header,
                              std::span<const double> values) {
  std::string payload;
  payload.reserve(values.size() * 8);
  for (double v : values) detail::AppendLittleEndian(payload, v);
  header["values"] = values.size();
  header["checksum"] = HexDigest(detail::PayloadChecksum(payload));
  return magic + "\n" + header.dump() + "\n" + payload;
}

inline void WriteBlob(const std::string& path, const std::string& magic,
                      nlohmann::json header, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << EncodeBlob(magic, std::move(header), values);
  Require(out.good(), ErrorCode::kIo, "write failed for " + path);
}

inline HeaderedBlob DecodeBlob(const std::string& bytes, const std::string& magic) {
  const std::size_t first = bytes.find('\n');
  Require(first != std::string::npos && bytes.compare(0, first, magic) == 0,
          ErrorCode::kChecksum, "bad magic, expected " + magic);
  const std::size_t second = bytes.find('\n', first + 1);
  Require(second != std::string::npos, ErrorCode::kChecksum, "truncated header");
  HeaderedBlob blob;
  try {
    blob.header = nlohmann::json::parse(bytes.substr(first + 1, second - first - 1));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kChecksum, std::string("corrupt header: ") + e.what());
  }
  Require(blob.header.contains("values") && blob.header.contains("checksum"),
          ErrorCode::kChecksum, "header lacks values/checksum");
  const std::size_t count = blob.header["values"].get<std::size_t>();
  const std::string payload = bytes.substr(second + 1);
  Require(payload.size() == count * 8, ErrorCode::kChecksum,
          "payload has " + std::to_string(payload.size()) + " bytes, expected " +
              std::to_string(count * 8));
  Require(HexDigest(detail::PayloadChecksum(payload)) ==
              blob.header["checksum"].get<std::string>(),
          ErrorCode::kChecksum, "payload checksum mismatch");
  blob.values.resize(count);
  const auto* raw = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < count; ++i) blob.values[i] = detail::ReadLittleEndian(raw + 8 * i);
  return blob;
}

inline std::string ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorCode::kIo, "cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline HeaderedBlob ReadBlob(const std::string& path, const std::string& magic) {
  return DecodeBlob(ReadFileBytes(path), magic);
}

}  // namespace acnn
