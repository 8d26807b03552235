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

#include "emblab/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "emblab/common.hpp"
#include "emblab/io.hpp"

namespace emblab {

void DatasetSchema::validate() const {
  if (features.empty()) throw ConfigError("at least one feature is required");
  for (const auto& f : features) f.validate();
  validate_tasks(tasks);
  if (!(densest_rate > 0.0 && densest_rate < 1.0))
    throw ConfigError("densest task rate must be in (0, 1)");
  if (!(signal_scale >= 0.0) || !std::isfinite(signal_scale))
    throw ConfigError("signal_scale must be nonnegative and finite");
  if (!(logit_noise >= 0.0) || !std::isfinite(logit_noise))
    throw ConfigError("logit_noise must be nonnegative and finite");
  if (!std::isfinite(drift_per_day))
    throw ConfigError("drift_per_day must be finite");
  if (days == 0) throw ConfigError("dataset needs at least one day");
  if (examples_per_day == 0)
    throw ConfigError("examples_per_day must be > 0");
}

const DayPartition& SyntheticDataset::day(std::uint32_t day_index) const {
  for (const auto& d : days)
    if (d.day_index == day_index) return d;
  throw DataError("missing day partition: day " + std::to_string(day_index));
}

bool SyntheticDataset::has_day(std::uint32_t day_index) const {
  for (const auto& d : days)
    if (d.day_index == day_index) return true;
  return false;
}

std::string day_file_name(std::uint32_t day_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "day_%04u.bin", day_index);
  return std::string(buf);
}

void write_day_file(const std::filesystem::path& path, const DayPartition& day,
                    const DatasetSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create day file: " + path.string());

  const std::size_t n_feat = schema.features.size();
  const std::size_t n_tasks = schema.tasks.size();

  out.write(kDayFileMagic, 4);
  write_u32(out, kDayFileVersion);
  write_u32(out, day.day_index);
  write_u32(out, static_cast<std::uint32_t>(n_feat));
  write_u32(out, schema.continuous_dim);
  write_u32(out, static_cast<std::uint32_t>(n_tasks));
  write_u64(out, day.num_examples);

  for (std::uint64_t e = 0; e < day.num_examples; ++e) {
    write_u32(out, day.day_index);
    for (std::size_t f = 0; f < n_feat; ++f) write_u32(out, day.ids[f][e]);
    for (std::uint32_t k = 0; k < schema.continuous_dim; ++k)
      write_f32(out, day.continuous[e * schema.continuous_dim + k]);
    for (std::size_t t = 0; t < n_tasks; ++t)
      out.put(static_cast<char>(day.labels[t][e]));
  }
  if (!out) throw DataError("short write: " + path.string());
}

DayPartition read_day_file(const std::filesystem::path& path,
                           const DatasetSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open day file: " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kDayFileMagic, 4))
    throw DataError("bad magic in day file: " + path.string());
  const std::uint32_t version = read_u32(in);
  if (version != kDayFileVersion)
    throw DataError("unsupported day file version " + std::to_string(version));

  DayPartition day;
  day.day_index = read_u32(in);
  const std::uint32_t n_feat = read_u32(in);
  const std::uint32_t n_cont = read_u32(in);
  const std::uint32_t n_tasks = read_u32(in);
  day.num_examples = read_u64(in);

  if (n_feat != schema.features.size() || n_cont != schema.continuous_dim ||
      n_tasks != schema.tasks.size())
    throw DataError("day file field counts do not match the schema: " +
                    path.string());

  day.ids.assign(n_feat, std::vector<std::uint32_t>(day.num_examples));
  day.continuous.resize(day.num_examples * n_cont);
  day.labels.assign(n_tasks, std::vector<std::uint8_t>(day.num_examples));

  for (std::uint64_t e = 0; e < day.num_examples; ++e) {
    const std::uint32_t rec_day = read_u32(in);
    if (rec_day != day.day_index)
      throw DataError("record day mismatch in " + path.string());
    for (std::uint32_t f = 0; f < n_feat; ++f) day.ids[f][e] = read_u32(in);
    for (std::uint32_t k = 0; k < n_cont; ++k)
      day.continuous[e * n_cont + k] = read_f32(in);
    for (std::uint32_t t = 0; t < n_tasks; ++t) {
      const int c = in.get();
      if (c < 0) throw DataError("unexpected end of day file");
      day.labels[t][e] = static_cast<std::uint8_t>(c);
    }
  }
  return day;
}

std::string schema_sidecar_text(const DatasetSchema& schema,
                                const std::string& dataset_hash) {
  std::ostringstream s;
  s << "format = EMB1\n";
  s << "version = " << kDayFileVersion << "\n";
  s << "days = " << schema.days << "\n";
  s << "examples_per_day = " << schema.examples_per_day << "\n";
  s << "continuous_dim = " << schema.continuous_dim << "\n";
  s << "densest_rate = " << fmt_double(schema.densest_rate) << "\n";
  s << "signal_scale = " << fmt_double(schema.signal_scale) << "\n";
  s << "logit_noise = " << fmt_double(schema.logit_noise) << "\n";
  s << "drift_per_day = " << fmt_double(schema.drift_per_day) << "\n";
  s << "seed = " << schema.seed << "\n";
  s << "num_features = " << schema.features.size() << "\n";
  for (std::size_t i = 0; i < schema.features.size(); ++i) {
    const auto& f = schema.features[i];
    s << "feature." << i << ".name = " << f.feature_name << "\n";
    s << "feature." << i << ".num_ids = " << f.num_ids << "\n";
    s << "feature." << i << ".exponent = " << fmt_double(f.exponent) << "\n";
    s << "feature." << i << ".seed = " << f.seed << "\n";
  }
  s << "num_tasks = " << schema.tasks.size() << "\n";
  for (std::size_t i = 0; i < schema.tasks.size(); ++i) {
    const auto& t = schema.tasks[i];
    s << "task." << i << ".name = " << t.name << "\n";
    s << "task." << i << ".relative_density = " << fmt_double(t.relative_density)
      << "\n";
    if (t.condition)
      s << "task." << i << ".condition = " << t.condition->parent << "="
        << static_cast<int>(t.condition->value) << "\n";
  }
  s << "dataset_hash = " << dataset_hash << "\n";
  return s.str();
}

void write_schema_sidecar(const std::filesystem::path& path,
                          const DatasetSchema& schema,
                          const std::string& dataset_hash) {
  write_text_file(path, schema_sidecar_text(schema, dataset_hash));
}

std::string dataset_content_hash(const std::filesystem::path& dir,
                                 std::uint32_t days) {
  Fnv1a64 h;
  for (std::uint32_t d = 0; d < days; ++d)
    h.update_file(dir / day_file_name(d));
  return h.hex();
}

void write_dataset(const std::filesystem::path& dir,
                   const SyntheticDataset& ds) {
  std::filesystem::create_directories(dir);
  for (const auto& day : ds.days)
    write_day_file(dir / day_file_name(day.day_index), day, ds.schema);
  const std::string hash = dataset_content_hash(dir, ds.schema.days);
  write_schema_sidecar(dir / "schema.txt", ds.schema, hash);
}

SyntheticDataset read_dataset(const std::filesystem::path& dir,
                              const DatasetSchema& schema) {
  SyntheticDataset ds;
  ds.schema = schema;
  ds.days.reserve(schema.days);
  for (std::uint32_t d = 0; d < schema.days; ++d)
    ds.days.push_back(read_day_file(dir / day_file_name(d), schema));
  return ds;
}

std::string verify_dataset_hash(const std::filesystem::path& dir,
                                const DatasetSchema& schema) {
  const std::filesystem::path sidecar = dir / "schema.txt";
  const std::string text = read_text_file(sidecar);
  std::string recorded;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const std::string key = "dataset_hash = ";
    if (line.rfind(key, 0) == 0) recorded = line.substr(key.size());
  }
  if (recorded.empty())
    throw DataError("sidecar has no dataset_hash: " + sidecar.string());
  const std::string actual = dataset_content_hash(dir, schema.days);
  if (actual != recorded)
    throw DataError("dataset hash mismatch: sidecar records " + recorded +
                    " but files hash to " + actual);
  return actual;
}

}  // namespace emblab
