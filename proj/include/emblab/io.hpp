/*
 * Copyright 2026 The Emblab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace emblab {

// Little-endian primitives. All binary file formats in this project are
// little-endian regardless of host order.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
double read_f64(std::istream& in);

// Length-prefixed UTF-8 string (u32 length + bytes).
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);

// Incremental FNV-1a 64-bit content hash.
class Fnv1a64 {
 public:
  void update(const void* data, std::size_t len);
  void update_file(const std::filesystem::path& path);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string file_hash_hex(const std::filesystem::path& path);

// Formats a double with 17 significant digits (%.17g): round-trips exactly
// and is byte-stable across runs, which the CSV reproducibility contract
// relies on.
std::string fmt_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);

}  // namespace emblab
