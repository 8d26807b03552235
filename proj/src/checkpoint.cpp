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

#include "emblab/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "emblab/common.hpp"
#include "emblab/io.hpp"

namespace emblab {

namespace {

std::string table_file_name(std::size_t index) {
  return "table_" + std::to_string(index) + ".bin";
}

std::map<std::string, std::string> parse_manifest(
    const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::istringstream lines(read_text_file(path));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

void check_blob(const std::filesystem::path& dir,
                const std::map<std::string, std::string>& manifest,
                const std::string& file_key, const std::string& sum_key) {
  const auto file_it = manifest.find(file_key);
  const auto sum_it = manifest.find(sum_key);
  if (file_it == manifest.end() || sum_it == manifest.end())
    throw DataError("checkpoint manifest is missing " + file_key);
  const std::string actual = file_hash_hex(dir / file_it->second);
  if (actual != sum_it->second)
    throw DataError("checkpoint blob " + file_it->second +
                    " checksum mismatch: manifest " + sum_it->second +
                    ", actual " + actual);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ToyModel& model) {
  std::filesystem::create_directories(dir);

  std::ostringstream manifest;
  manifest << "format = emblab-checkpoint\n";
  manifest << "version = 1\n";
  manifest << "tables = " << model.tables().size() << "\n";

  for (std::size_t i = 0; i < model.tables().size(); ++i) {
    const EmbeddingTable& table = model.tables()[i];
    const std::string file = table_file_name(i);
    {
      std::ofstream out(dir / file, std::ios::binary);
      if (!out) throw DataError("cannot create checkpoint blob: " + file);
      write_string(out, table.spec().feature_name);
      write_u32(out, static_cast<std::uint32_t>(table.spec().bits));
      write_u32(out, table.dim());
      for (double w : table.raw_weights())
        write_f32(out, static_cast<float>(w));
      for (std::uint32_t c : table.freq()) write_u32(out, c);
      if (!out) throw DataError("short write on checkpoint blob: " + file);
    }
    manifest << "table." << i << ".name = " << table.spec().feature_name
             << "\n";
    manifest << "table." << i << ".bits = " << table.spec().bits << "\n";
    manifest << "table." << i << ".dim = " << table.dim() << "\n";
    manifest << "table." << i << ".file = " << file << "\n";
    manifest << "table." << i << ".checksum = " << file_hash_hex(dir / file)
             << "\n";
  }

  {
    std::ofstream out(dir / "dense.bin", std::ios::binary);
    if (!out) throw DataError("cannot create checkpoint blob: dense.bin");
    const auto blocks = model.dense_blocks();
    const auto names = model.dense_block_names();
    write_u32(out, static_cast<std::uint32_t>(blocks.size()));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      write_string(out, names[i]);
      write_u64(out, blocks[i]->size());
      for (double v : *blocks[i]) write_f64(out, v);
    }
    if (!out) throw DataError("short write on checkpoint blob: dense.bin");
  }
  manifest << "dense.file = dense.bin\n";
  manifest << "dense.checksum = " << file_hash_hex(dir / "dense.bin") << "\n";

  write_text_file(dir / "manifest.txt", manifest.str());
}

void load_checkpoint(const std::filesystem::path& dir, ToyModel& model) {
  const auto manifest = parse_manifest(dir / "manifest.txt");
  const auto tables_it = manifest.find("tables");
  if (tables_it == manifest.end())
    throw DataError("checkpoint manifest has no table count");
  if (std::stoull(tables_it->second) != model.tables().size())
    throw DataError("checkpoint table count does not match model");

  for (std::size_t i = 0; i < model.tables().size(); ++i) {
    const std::string prefix = "table." + std::to_string(i);
    check_blob(dir, manifest, prefix + ".file", prefix + ".checksum");
    const std::filesystem::path path = dir / manifest.at(prefix + ".file");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint blob: " + path.string());

    EmbeddingTable& table = model.tables()[i];
    const std::string name = read_string(in);
    const std::uint32_t bits = read_u32(in);
    const std::uint32_t dim = read_u32(in);
    if (name != table.spec().feature_name ||
        bits != static_cast<std::uint32_t>(table.spec().bits) ||
        dim != table.dim())
      throw DataError("checkpoint table " + name +
                      " does not match the model's table shape");
    std::vector<float> weights(static_cast<std::size_t>(table.rows()) * dim);
    for (float& w : weights) w = read_f32(in);
    std::vector<std::uint32_t> counters(table.rows());
    for (std::uint32_t& c : counters) c = read_u32(in);
    table.set_weights_f32(weights);
    table.set_freq(std::move(counters));
  }

  check_blob(dir, manifest, "dense.file", "dense.checksum");
  std::ifstream in(dir / "dense.bin", std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint blob: dense.bin");
  auto blocks = model.dense_blocks();
  const auto names = model.dense_block_names();
  const std::uint32_t count = read_u32(in);
  if (count != blocks.size())
    throw DataError("checkpoint dense block count does not match model");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string name = read_string(in);
    const std::uint64_t n = read_u64(in);
    if (name != names[i] || n != blocks[i]->size())
      throw DataError("checkpoint dense block " + name +
                      " does not match the model");
    for (double& v : *blocks[i]) v = read_f64(in);
  }
}

std::vector<CheckpointTable> read_checkpoint_tables(
    const std::filesystem::path& dir) {
  const auto manifest = parse_manifest(dir / "manifest.txt");
  const auto tables_it = manifest.find("tables");
  if (tables_it == manifest.end())
    throw DataError("checkpoint manifest has no table count");
  const std::size_t n_tables = std::stoull(tables_it->second);

  std::vector<CheckpointTable> out;
  for (std::size_t i = 0; i < n_tables; ++i) {
    const std::string prefix = "table." + std::to_string(i);
    check_blob(dir, manifest, prefix + ".file", prefix + ".checksum");
    const std::filesystem::path path = dir / manifest.at(prefix + ".file");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint blob: " + path.string());

    CheckpointTable t;
    t.name = read_string(in);
    t.bits = static_cast<int>(read_u32(in));
    t.dim = read_u32(in);
    if (t.bits < 1 || t.bits > 31)
      throw DataError("checkpoint table bits out of range");
    const std::size_t rows = static_cast<std::size_t>(1) << t.bits;
    t.weights.resize(rows * t.dim);
    for (float& w : t.weights) w = read_f32(in);
    t.counters.resize(rows);
    for (std::uint32_t& c : t.counters) c = read_u32(in);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace emblab
