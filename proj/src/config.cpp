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

#include "emblab/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "emblab/common.hpp"
#include "emblab/io.hpp"

namespace emblab {

namespace {

constexpr std::uint64_t kTagFeatureSeed = 0xFEA7;
constexpr std::uint64_t kTagHashSalt = 0x5A17;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void bad_value(const std::string& where, const std::string& what) {
  throw ConfigError("config: " + where + ": " + what);
}

double parse_double(const std::string& where, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad_value(where, "expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& where, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad_value(where, "expected a nonnegative integer, got '" + v + "'");
  }
}

std::uint32_t parse_u32(const std::string& where, const std::string& v) {
  const std::uint64_t x = parse_u64(where, v);
  if (x > 0xffffffffULL) bad_value(where, "value out of 32-bit range");
  return static_cast<std::uint32_t>(x);
}

bool parse_bool(const std::string& where, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(where, "expected true/false, got '" + v + "'");
}

// Tracks which keys a section consumed, so leftovers are rejected.
class SectionReader {
 public:
  SectionReader(const IniSection& section, std::string where)
      : section_(section), where_(std::move(where)) {}

  bool has(const std::string& key) const {
    return std::any_of(section_.entries.begin(), section_.entries.end(),
                       [&](const IniEntry& e) { return e.key == key; });
  }

  std::string get(const std::string& key) {
    consumed_.insert(key);
    const IniEntry* found = nullptr;
    for (const IniEntry& e : section_.entries)
      if (e.key == key) {
        if (found) bad_value(where_, "duplicate key '" + key + "'");
        found = &e;
      }
    if (!found) bad_value(where_, "missing required key '" + key + "'");
    return found->value;
  }

  std::string get_or(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    if (!has(key)) return fallback;
    return get(key);
  }

  void finish() {
    for (const IniEntry& e : section_.entries)
      if (!consumed_.count(e.key))
        bad_value(where_, "unknown key '" + e.key + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const IniSection& section_;
  std::string where_;
  std::set<std::string> consumed_;
};

}  // namespace

IniDocument IniDocument::parse(const std::string& text) {
  IniDocument doc;
  std::istringstream lines(text);
  std::string line;
  IniSection* current = nullptr;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated section header");
      const auto parts = split_ws(t.substr(1, t.size() - 2));
      if (parts.empty() || parts.size() > 2)
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": section header must be [kind] or [kind label]");
      doc.sections.push_back(
          {parts[0], parts.size() == 2 ? parts[1] : "", {}});
      current = &doc.sections.back();
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    if (!current)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": key outside any section");
    current->entries.push_back(
        {trim(t.substr(0, eq)), trim(t.substr(eq + 1))});
  }
  return doc;
}

std::string IniDocument::serialize() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const IniSection& s = sections[i];
    if (i) out << "\n";
    out << "[" << s.kind;
    if (!s.label.empty()) out << " " << s.label;
    out << "]\n";
    for (const IniEntry& e : s.entries) out << e.key << " = " << e.value << "\n";
  }
  return out.str();
}

ToyModelConfig ExperimentConfig::model_config() const {
  ToyModelConfig mc;
  for (const ZipfIdSpace& f : dataset.features) {
    TableConfig tc;
    tc.hash.feature_name = f.feature_name;
    tc.hash.bits = bits;
    tc.hash.salt = derive_seed(f.seed, kTagHashSalt);
    tc.dim = dim;
    mc.tables.push_back(tc);
  }
  mc.continuous_dim = dataset.continuous_dim;
  mc.trunk_layers = trunk;
  for (const TaskSpec& t : dataset.tasks) {
    mc.task_names.push_back(t.name);
    mc.loss_weights.push_back(t.loss_weight);
  }
  mc.init_seed = model_seed;
  return mc;
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  const IniDocument doc = IniDocument::parse(text);
  ExperimentConfig cfg;

  const IniSection* dataset_sec = nullptr;
  const IniSection* model_sec = nullptr;
  const IniSection* optimizer_sec = nullptr;
  const IniSection* plan_sec = nullptr;
  const IniSection* output_sec = nullptr;
  std::vector<const IniSection*> feature_secs;
  std::vector<const IniSection*> task_secs;
  std::vector<const IniSection*> arm_secs;

  auto assign_singleton = [](const IniSection*& slot, const IniSection& s) {
    if (slot) throw ConfigError("config: duplicate [" + s.kind + "] section");
    if (!s.label.empty())
      throw ConfigError("config: [" + s.kind + "] takes no label");
    slot = &s;
  };

  for (const IniSection& s : doc.sections) {
    if (s.kind == "dataset") {
      assign_singleton(dataset_sec, s);
    } else if (s.kind == "model") {
      assign_singleton(model_sec, s);
    } else if (s.kind == "optimizer") {
      assign_singleton(optimizer_sec, s);
    } else if (s.kind == "plan") {
      assign_singleton(plan_sec, s);
    } else if (s.kind == "output") {
      assign_singleton(output_sec, s);
    } else if (s.kind == "feature") {
      if (s.label.empty()) throw ConfigError("config: [feature] needs a name");
      feature_secs.push_back(&s);
    } else if (s.kind == "task") {
      if (s.label.empty()) throw ConfigError("config: [task] needs a name");
      task_secs.push_back(&s);
    } else if (s.kind == "arm") {
      if (s.label.empty()) throw ConfigError("config: [arm] needs a name");
      arm_secs.push_back(&s);
    } else {
      throw ConfigError("config: unknown section [" + s.kind + "]");
    }
  }
  if (!dataset_sec) throw ConfigError("config: missing [dataset] section");
  if (feature_secs.empty()) throw ConfigError("config: no [feature] sections");
  if (task_secs.empty()) throw ConfigError("config: no [task] sections");
  if (!output_sec) throw ConfigError("config: missing [output] section");

  // [model] first: the default id universe size is 4x the hash row space.
  if (model_sec) {
    SectionReader r(*model_sec, "[model]");
    cfg.bits = static_cast<int>(parse_u32("[model] bits", r.get_or("bits", "16")));
    cfg.dim = parse_u32("[model] dim", r.get_or("dim", "32"));
    cfg.trunk.clear();
    for (const std::string& tok : split_ws(r.get_or("trunk", "64 32")))
      cfg.trunk.push_back(parse_u32("[model] trunk", tok));
    cfg.model_seed = parse_u64("[model] seed", r.get_or("seed", "1"));
    r.finish();
  }

  {
    SectionReader r(*dataset_sec, "[dataset]");
    cfg.dataset.days = parse_u32("[dataset] days", r.get("days"));
    cfg.dataset.examples_per_day =
        parse_u64("[dataset] examples_per_day", r.get("examples_per_day"));
    cfg.dataset.seed = parse_u64("[dataset] seed", r.get_or("seed", "1"));
    cfg.dataset.densest_rate = parse_double("[dataset] densest_rate",
                                            r.get_or("densest_rate", "0.2"));
    cfg.dataset.continuous_dim =
        parse_u32("[dataset] continuous_dim", r.get_or("continuous_dim", "4"));
    cfg.dataset.signal_scale = parse_double("[dataset] signal_scale",
                                            r.get_or("signal_scale", "1.5"));
    cfg.dataset.logit_noise =
        parse_double("[dataset] logit_noise", r.get_or("logit_noise", "0"));
    cfg.dataset.drift_per_day = parse_double(
        "[dataset] drift_per_day", r.get_or("drift_per_day", "0"));
    r.finish();
  }

  for (std::size_t i = 0; i < feature_secs.size(); ++i) {
    const IniSection& s = *feature_secs[i];
    SectionReader r(s, "[feature " + s.label + "]");
    ZipfIdSpace space;
    space.feature_name = s.label;
    const std::uint64_t default_ids =
        std::min<std::uint64_t>(4ull << cfg.bits, 0xffffffffULL);
    space.num_ids = parse_u32(r.where() + " num_ids",
                              r.get_or("num_ids", std::to_string(default_ids)));
    const bool has_exp = r.has("zipf_exponent");
    const bool has_cov = r.has("zipf_coverage");
    if (has_exp && has_cov)
      bad_value(r.where(), "give zipf_exponent or zipf_coverage, not both");
    if (!has_exp && !has_cov)
      bad_value(r.where(), "one of zipf_exponent / zipf_coverage is required");
    if (has_exp) {
      space.exponent =
          parse_double(r.where() + " zipf_exponent", r.get("zipf_exponent"));
    } else {
      const auto parts = split_ws(r.get("zipf_coverage"));
      if (parts.size() != 2)
        bad_value(r.where(), "zipf_coverage wants '<fraction> <mass>'");
      const double fraction =
          parse_double(r.where() + " zipf_coverage", parts[0]);
      const double mass = parse_double(r.where() + " zipf_coverage", parts[1]);
      space.exponent = calibrate_zipf(space.num_ids, fraction, mass);
    }
    const std::string seed_str = r.get_or("seed", "");
    space.seed = seed_str.empty()
                     ? derive_seed(cfg.dataset.seed, kTagFeatureSeed + i)
                     : parse_u64(r.where() + " seed", seed_str);
    r.finish();
    cfg.dataset.features.push_back(space);
  }

  for (const IniSection* sp : task_secs) {
    SectionReader r(*sp, "[task " + sp->label + "]");
    TaskSpec task;
    task.name = sp->label;
    task.relative_density = parse_double(r.where() + " relative_density",
                                         r.get("relative_density"));
    task.loss_weight =
        parse_double(r.where() + " loss_weight", r.get_or("loss_weight", "1"));
    const std::string cond = r.get_or("condition", "");
    if (!cond.empty()) {
      TaskCondition c;
      const auto eq = cond.find('=');
      if (eq == std::string::npos) {
        c.parent = cond;
        c.value = 1;
      } else {
        c.parent = trim(cond.substr(0, eq));
        const std::string v = trim(cond.substr(eq + 1));
        if (v != "0" && v != "1")
          bad_value(r.where(), "condition value must be 0 or 1");
        c.value = static_cast<std::uint8_t>(v == "1");
      }
      task.condition = c;
    }
    r.finish();
    cfg.dataset.tasks.push_back(task);
  }

  if (optimizer_sec) {
    SectionReader r(*optimizer_sec, "[optimizer]");
    cfg.adam.base_lr =
        parse_double("[optimizer] base_lr", r.get_or("base_lr", "0.00015"));
    cfg.adam.beta1 = parse_double("[optimizer] beta1", r.get_or("beta1", "0.9"));
    cfg.adam.beta2 =
        parse_double("[optimizer] beta2", r.get_or("beta2", "0.999"));
    cfg.adam.epsilon =
        parse_double("[optimizer] epsilon", r.get_or("epsilon", "1e-5"));
    cfg.plan.batch_size =
        parse_u32("[optimizer] batch_size", r.get_or("batch_size", "2000"));
    const std::string clip = r.get_or("clip_norm", "off");
    if (clip != "off")
      cfg.adam.clip_norm = parse_double("[optimizer] clip_norm", clip);
    r.finish();
  }

  if (!plan_sec) throw ConfigError("config: missing [plan] section");
  {
    SectionReader r(*plan_sec, "[plan]");
    cfg.plan.epochs = parse_u32("[plan] epochs", r.get_or("epochs", "1"));
    const auto batch_days = split_ws(r.get("batch_days"));
    if (batch_days.size() != 2)
      bad_value("[plan]", "batch_days wants '<first> <last>'");
    cfg.plan.batch_day_begin = parse_u32("[plan] batch_days", batch_days[0]);
    cfg.plan.batch_day_end = parse_u32("[plan] batch_days", batch_days[1]);
    const std::string continual = r.get_or("continual_days", "none");
    if (continual != "none") {
      const auto parts = split_ws(continual);
      if (parts.size() != 2)
        bad_value("[plan]", "continual_days wants '<first> <last>' or 'none'");
      cfg.plan.has_continual = true;
      cfg.plan.continual_day_begin = parse_u32("[plan] continual_days", parts[0]);
      cfg.plan.continual_day_end = parse_u32("[plan] continual_days", parts[1]);
    }
    cfg.plan.shuffle_seed =
        parse_u64("[plan] shuffle_seed", r.get_or("shuffle_seed", "1"));
    cfg.plan.eval_cadence =
        parse_u32("[plan] eval_cadence", r.get_or("eval_cadence", "20"));
    cfg.plan.eval_cap =
        parse_u64("[plan] eval_cap", r.get_or("eval_cap", "100000"));
    cfg.plan.reset_freq_at_continual = parse_bool(
        "[plan] reset_freq_at_continual",
        r.get_or("reset_freq_at_continual", "false"));
    cfg.plan.reset_moments_at_continual = parse_bool(
        "[plan] reset_moments_at_continual",
        r.get_or("reset_moments_at_continual", "false"));
    r.finish();
  }

  if (arm_secs.empty())
    throw ConfigError("config: at least one [arm] section is required");
  std::set<std::string> arm_names;
  for (const IniSection* sp : arm_secs) {
    SectionReader r(*sp, "[arm " + sp->label + "]");
    ArmSpec arm;
    arm.name = sp->label;
    if (!arm_names.insert(arm.name).second)
      throw ConfigError("config: duplicate arm '" + arm.name + "'");
    const std::string mode = r.get_or("fal", "off");
    if (mode == "off")
      arm.fal.mode = FalMode::kOff;
    else if (mode == "log")
      arm.fal.mode = FalMode::kLog;
    else if (mode == "linear")
      arm.fal.mode = FalMode::kLinear;
    else
      bad_value(r.where(), "fal must be off/log/linear");
    const std::string app = r.get_or("fal_application", "scale_update");
    if (app == "scale_update")
      arm.fal.application = FalApplication::kScaleUpdate;
    else if (app == "scale_gradient")
      arm.fal.application = FalApplication::kScaleGradient;
    else
      bad_value(r.where(), "fal_application must be scale_update/scale_gradient");
    arm.fal.excluded_tables = split_ws(r.get_or("fal_exclude", ""));
    arm.meda = parse_bool(r.where() + " meda", r.get_or("meda", "false"));
    arm.sparse.embedding_lr_multiplier =
        parse_double(r.where() + " embedding_lr_multiplier",
                     r.get_or("embedding_lr_multiplier", "50"));
    r.finish();
    cfg.plan.arms.push_back(arm);
  }

  {
    SectionReader r(*output_sec, "[output]");
    cfg.out_dir = r.get("dir");
    r.finish();
  }

  // Structural validation beyond per-key parsing.
  cfg.dataset.validate();
  if (cfg.bits < 1 || cfg.bits > 31)
    throw ConfigError("config: [model] bits must be in [1, 31]");
  if (cfg.dim == 0) throw ConfigError("config: [model] dim must be > 0");
  for (const TaskSpec& t : cfg.dataset.tasks)
    if (t.name == "_total" || t.name.front() == '_')
      throw ConfigError("config: task names must not start with '_'");
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(
    const std::filesystem::path& path) {
  return from_text(read_text_file(path));
}

std::string ExperimentConfig::to_text() const {
  IniDocument doc;

  IniSection dataset{"dataset", "", {}};
  dataset.entries = {
      {"days", std::to_string(this->dataset.days)},
      {"examples_per_day", std::to_string(this->dataset.examples_per_day)},
      {"seed", std::to_string(this->dataset.seed)},
      {"densest_rate", fmt_double(this->dataset.densest_rate)},
      {"continuous_dim", std::to_string(this->dataset.continuous_dim)},
      {"signal_scale", fmt_double(this->dataset.signal_scale)},
      {"logit_noise", fmt_double(this->dataset.logit_noise)},
      {"drift_per_day", fmt_double(this->dataset.drift_per_day)},
  };
  doc.sections.push_back(dataset);

  for (const ZipfIdSpace& f : this->dataset.features) {
    IniSection s{"feature", f.feature_name, {}};
    s.entries = {
        {"num_ids", std::to_string(f.num_ids)},
        {"zipf_exponent", fmt_double(f.exponent)},
        {"seed", std::to_string(f.seed)},
    };
    doc.sections.push_back(s);
  }

  for (const TaskSpec& t : this->dataset.tasks) {
    IniSection s{"task", t.name, {}};
    s.entries.push_back({"relative_density", fmt_double(t.relative_density)});
    s.entries.push_back({"loss_weight", fmt_double(t.loss_weight)});
    if (t.condition)
      s.entries.push_back(
          {"condition",
           t.condition->parent + "=" + std::to_string(t.condition->value)});
    doc.sections.push_back(s);
  }

  IniSection model{"model", "", {}};
  std::string trunk_str;
  for (std::size_t i = 0; i < trunk.size(); ++i) {
    if (i) trunk_str += " ";
    trunk_str += std::to_string(trunk[i]);
  }
  model.entries = {
      {"bits", std::to_string(bits)},
      {"dim", std::to_string(dim)},
      {"trunk", trunk_str},
      {"seed", std::to_string(model_seed)},
  };
  doc.sections.push_back(model);

  IniSection optimizer{"optimizer", "", {}};
  optimizer.entries = {
      {"base_lr", fmt_double(adam.base_lr)},
      {"beta1", fmt_double(adam.beta1)},
      {"beta2", fmt_double(adam.beta2)},
      {"epsilon", fmt_double(adam.epsilon)},
      {"batch_size", std::to_string(plan.batch_size)},
      {"clip_norm", adam.clip_norm ? fmt_double(*adam.clip_norm) : "off"},
  };
  doc.sections.push_back(optimizer);

  IniSection plan_sec{"plan", "", {}};
  plan_sec.entries.push_back({"epochs", std::to_string(plan.epochs)});
  plan_sec.entries.push_back(
      {"batch_days", std::to_string(plan.batch_day_begin) + " " +
                         std::to_string(plan.batch_day_end)});
  plan_sec.entries.push_back(
      {"continual_days",
       plan.has_continual ? std::to_string(plan.continual_day_begin) + " " +
                                std::to_string(plan.continual_day_end)
                          : "none"});
  plan_sec.entries.push_back(
      {"shuffle_seed", std::to_string(plan.shuffle_seed)});
  plan_sec.entries.push_back(
      {"eval_cadence", std::to_string(plan.eval_cadence)});
  plan_sec.entries.push_back({"eval_cap", std::to_string(plan.eval_cap)});
  plan_sec.entries.push_back({"reset_freq_at_continual",
                              plan.reset_freq_at_continual ? "true" : "false"});
  plan_sec.entries.push_back(
      {"reset_moments_at_continual",
       plan.reset_moments_at_continual ? "true" : "false"});
  doc.sections.push_back(plan_sec);

  for (const ArmSpec& arm : plan.arms) {
    IniSection s{"arm", arm.name, {}};
    const char* mode = arm.fal.mode == FalMode::kOff     ? "off"
                       : arm.fal.mode == FalMode::kLog   ? "log"
                                                         : "linear";
    const char* app = arm.fal.application == FalApplication::kScaleUpdate
                          ? "scale_update"
                          : "scale_gradient";
    s.entries.push_back({"fal", mode});
    s.entries.push_back({"fal_application", app});
    if (!arm.fal.excluded_tables.empty()) {
      std::string joined;
      for (std::size_t i = 0; i < arm.fal.excluded_tables.size(); ++i) {
        if (i) joined += " ";
        joined += arm.fal.excluded_tables[i];
      }
      s.entries.push_back({"fal_exclude", joined});
    }
    s.entries.push_back({"meda", arm.meda ? "true" : "false"});
    s.entries.push_back({"embedding_lr_multiplier",
                         fmt_double(arm.sparse.embedding_lr_multiplier)});
    doc.sections.push_back(s);
  }

  IniSection output{"output", "", {}};
  output.entries = {{"dir", out_dir}};
  doc.sections.push_back(output);

  return doc.serialize();
}

std::string ExperimentConfig::config_hash() const {
  const std::string text = to_text();
  Fnv1a64 h;
  h.update(text.data(), text.size());
  return h.hex();
}

}  // namespace emblab
