// Copyright 2026 The npgfisher Authors.
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

#include "npg/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

namespace npg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}

std::int64_t to_int(const std::string& key, std::string v, bool allow_steps_unit) {
  if (allow_steps_unit) {
    const std::string unit = " steps";
    if (v.size() > unit.size() && v.compare(v.size() - unit.size(), unit.size(), unit) == 0) {
      v = trim(v.substr(0, v.size() - unit.size()));
    }
  }
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

template <typename F>
auto wrap(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

KeyValues parse_key_values(std::istream& is) {
  KeyValues out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

bool apply_trainer_key(TrainerConfig& c, const std::string& key, const std::string& v) {
  if (key == "env") c.env = v;
  else if (key == "backend") c.backend = wrap(key, [&] { return parse_backend(v); });
  else if (key == "damping") c.damping = to_double(key, v);
  else if (key == "kl_limit") c.kl_limit = to_double(key, v);
  else if (key == "step_mode") c.step_mode = wrap(key, [&] { return parse_step_mode(v); });
  else if (key == "max_lr") c.max_lr = to_double(key, v);
  else if (key == "batch_size") c.batch_size = static_cast<int>(to_int(key, v, true));
  else if (key == "gamma") c.gamma = to_double(key, v);
  else if (key == "lambda_gae") c.lambda_gae = to_double(key, v);
  else if (key == "normalize_advantages") c.normalize_advantages = to_bool(key, v);
  else if (key == "critic_mode") c.critic_mode = wrap(key, [&] { return parse_critic_mode(v); });
  else if (key == "critic_lr") c.critic_lr = to_double(key, v);
  else if (key == "critic_damping") c.critic_damping = to_double(key, v);
  else if (key == "critic_minibatch") c.critic_minibatch = static_cast<int>(to_int(key, v, true));
  else if (key == "total_env_steps") c.total_env_steps = to_int(key, v, true);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, v, false));
  else if (key == "hidden") {
    c.hidden.clear();
    for (const auto& h : split_list(v)) c.hidden.push_back(static_cast<int>(to_int(key, h, false)));
  }
  else if (key == "init_log_std") c.init_log_std = to_double(key, v);
  else if (key == "diagonal_decay") c.backend_options.diagonal_decay = to_double(key, v);
  else if (key == "kronecker_decay") c.backend_options.kronecker_decay = to_double(key, v);
  else if (key == "refresh_interval") c.backend_options.refresh_interval = static_cast<int>(to_int(key, v, false));
  else if (key == "cg_iters") c.backend_options.cg_iters = static_cast<int>(to_int(key, v, false));
  else if (key == "cg_tol") c.backend_options.cg_tol = to_double(key, v);
  else if (key == "record_wallclock") c.record_wallclock = to_bool(key, v);
  else if (key == "eval_episodes") c.eval_episodes = static_cast<int>(to_int(key, v, false));
  else return false;
  return true;
}

std::string canonical_text(const TrainerConfig& c) {
  std::ostringstream os;
  os << "env = " << c.env << '\n'
     << "backend = " << to_string(c.backend) << '\n'
     << "damping = " << fmt(c.damping) << '\n'
     << "kl_limit = " << fmt(c.kl_limit) << '\n'
     << "step_mode = " << to_string(c.step_mode) << '\n'
     << "max_lr = " << fmt(c.max_lr) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "gamma = " << fmt(c.gamma) << '\n'
     << "lambda_gae = " << fmt(c.lambda_gae) << '\n'
     << "normalize_advantages = " << (c.normalize_advantages ? "true" : "false") << '\n'
     << "critic_mode = " << to_string(c.critic_mode) << '\n'
     << "critic_lr = " << fmt(c.critic_lr) << '\n'
     << "critic_damping = " << fmt(c.critic_damping) << '\n'
     << "critic_minibatch = " << c.critic_minibatch << '\n'
     << "total_env_steps = " << c.total_env_steps << '\n'
     << "seed = " << c.seed << '\n';
  os << "hidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? ", " : "") << c.hidden[i];
  os << '\n'
     << "init_log_std = " << fmt(c.init_log_std) << '\n'
     << "diagonal_decay = " << fmt(c.backend_options.diagonal_decay) << '\n'
     << "kronecker_decay = " << fmt(c.backend_options.kronecker_decay) << '\n'
     << "refresh_interval = " << c.backend_options.refresh_interval << '\n'
     << "cg_iters = " << c.backend_options.cg_iters << '\n'
     << "cg_tol = " << fmt(c.backend_options.cg_tol) << '\n'
     << "record_wallclock = " << (c.record_wallclock ? "true" : "false") << '\n'
     << "eval_episodes = " << c.eval_episodes << '\n';
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const TrainerConfig& config) { return fnv1a_hex(canonical_text(config)); }

namespace {

bool apply_experiment_key(ExperimentConfig& e, const std::string& key, const std::string& v) {
  if (key == "envs") {
    e.envs = split_list(v);
  } else if (key == "seeds") {
    e.seeds.clear();
    for (const auto& s : split_list(v)) e.seeds.push_back(static_cast<std::uint64_t>(to_int(key, s, false)));
  } else if (key == "output_dir") {
    e.output_dir = v;
  } else if (key == "label") {
    e.label = v;
  } else if (key == "timing_window_steps") {
    e.timing_window_steps = to_int(key, v, true);
  } else {
    return apply_trainer_key(e.trainer, key, v);
  }
  return true;
}

void validate_experiment(ExperimentConfig& e) {
  if (e.envs.empty()) throw ConfigError("envs", "at least one environment is required");
  if (e.seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  if (e.label.empty()) throw ConfigError("label", "must not be empty");
  if (e.label.find('/') != std::string::npos) throw ConfigError("label", "must not contain '/'");
  if (e.timing_window_steps < 1) throw ConfigError("timing_window_steps", "must be >= 1");
  for (const auto& env : e.envs) {
    try {
      make_env(env);
    } catch (const std::exception& ex) {
      throw ConfigError("envs", ex.what());
    }
  }
  e.trainer.env = e.envs.front();
  try {
    e.trainer.validate();
  } catch (const std::invalid_argument& ex) {
    const std::string msg = ex.what();
    const auto colon = msg.find(':');
    throw ConfigError(colon == std::string::npos ? "config" : msg.substr(0, colon),
                      colon == std::string::npos ? msg : trim(msg.substr(colon + 1)));
  }
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("path", "cannot open '" + path + "'");
  return in;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::istream& is) {
  ExperimentConfig e;
  for (const auto& [key, value] : parse_key_values(is)) {
    if (key == "env") throw ConfigError(key, "use 'envs' in experiment configs");
    if (!apply_experiment_key(e, key, value)) throw ConfigError(key, "unknown key");
  }
  validate_experiment(e);
  return e;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_experiment_config(in);
}

GridSpec parse_grid_spec(std::istream& is) {
  GridSpec g;
  bool have_envs = false;
  for (const auto& [key, value] : parse_key_values(is)) {
    if (key == "tuning_env") {
      g.tuning_env = value;
      continue;
    }
    const std::string prefix = "grid.";
    if (key.rfind(prefix, 0) == 0) {
      const std::string axis = key.substr(prefix.size());
      const auto items = split_list(value);
      if (items.empty()) throw ConfigError(key, "axis has no values");
      for (const auto& item : items) {
        if (axis == "backend") g.backends.push_back(wrap(key, [&] { return parse_backend(item); }));
        else if (axis == "damping") g.damping.push_back(to_double(key, item));
        else if (axis == "critic_lr") g.critic_lr.push_back(to_double(key, item));
        else if (axis == "step_mode") g.step_mode.push_back(wrap(key, [&] { return parse_step_mode(item); }));
        else if (axis == "max_lr") g.max_lr.push_back(to_double(key, item));
        else if (axis == "batch_size") g.batch_size.push_back(static_cast<int>(to_int(key, item, true)));
        else if (axis == "critic_mode") g.critic_mode.push_back(wrap(key, [&] { return parse_critic_mode(item); }));
        else if (axis == "critic_damping") g.critic_damping.push_back(to_double(key, item));
        else throw ConfigError(key, "unknown grid axis");
      }
      continue;
    }
    if (key == "env") throw ConfigError(key, "use 'tuning_env' in grid specs");
    if (key == "envs") have_envs = true;
    if (!apply_experiment_key(g.base, key, value)) throw ConfigError(key, "unknown key");
  }
  if (!have_envs) g.base.envs = {g.tuning_env};
  validate_experiment(g.base);
  try {
    make_env(g.tuning_env);
  } catch (const std::exception& ex) {
    throw ConfigError("tuning_env", ex.what());
  }
  const TrainerConfig& b = g.base.trainer;
  if (g.backends.empty()) g.backends = {b.backend};
  if (g.damping.empty()) g.damping = {b.damping};
  if (g.critic_lr.empty()) g.critic_lr = {b.critic_lr};
  if (g.step_mode.empty()) g.step_mode = {b.step_mode};
  if (g.max_lr.empty()) g.max_lr = {b.max_lr};
  if (g.batch_size.empty()) g.batch_size = {b.batch_size};
  if (g.critic_mode.empty()) g.critic_mode = {b.critic_mode};
  if (g.critic_damping.empty()) g.critic_damping = {b.critic_damping};
  return g;
}

GridSpec load_grid_spec(const std::string& path) {
  auto in = open_or_throw(path);
  return parse_grid_spec(in);
}

std::vector<TrainerConfig> expand_grid(const GridSpec& g) {
  std::vector<TrainerConfig> out;
  for (auto backend : g.backends)
    for (double damping : g.damping)
      for (double critic_lr : g.critic_lr)
        for (auto mode : g.step_mode) {
          const std::vector<double> lrs =
              mode == StepMode::kClip ? g.max_lr : std::vector<double>{g.base.trainer.max_lr};
          for (double lr : lrs)
            for (int batch : g.batch_size)
              for (const auto& critic : g.critic_mode)
                for (double critic_damping : g.critic_damping) {
                  TrainerConfig c = g.base.trainer;
                  c.env = g.tuning_env;
                  c.backend = backend;
                  c.damping = damping;
                  c.critic_lr = critic_lr;
                  c.step_mode = mode;
                  c.max_lr = lr;
                  c.batch_size = batch;
                  c.critic_mode = critic;
                  c.critic_damping = critic_damping;
                  c.validate();
                  out.push_back(std::move(c));
                }
        }
  if (out.empty()) throw ConfigError("grid", "grid is empty");
  return out;
}

}  // namespace npg
