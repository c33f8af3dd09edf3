/*
 * Copyright 2026 The SCCM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SCCM_TOOLS_RUN_CONFIG_HPP
#define SCCM_TOOLS_RUN_CONFIG_HPP

// Declarative experiment description for `sccm train`, read from a JSON file
// with `section.key=value` overrides. Unknown keys are rejected.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sccm.hpp"

namespace sccm::cli {

struct FileSource {
  std::string images;
  std::string texts;
};

struct SynthSource {
  SynthSpec spec;
  double hard_fraction = 0.0;  // 0 = plain synth_generate
};

struct EvalSettings {
  Cutoff cutoff = Cutoff::all();
  APMode mode = APMode::by_relevant;
};

struct RunConfig {
  std::optional<FileSource> files;
  std::optional<SynthSource> synth;
  SplitSpec split;
  TrainConfig train;
  EvalSettings eval;
  std::string output_dir = "sccm_out";
};

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_error(const std::string& msg) {
  throw Error(ErrorCode::ConfigInvalid, msg);
}

template <typename T>
T get_as(const json& value, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) config_error(key + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!value.is_number_integer() || (value.is_number_integer() && value.get<long long>() < 0))
        config_error(key + " must be a nonnegative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) config_error(key + " must be a number");
    } else {
      if (!value.is_string()) config_error(key + " must be a string");
    }
    return value.get<T>();
  } catch (const json::exception& e) {
    config_error(key + ": " + e.what());
  }
}

using Setter = std::function<void(const json&)>;
using SetterMap = std::map<std::string, Setter>;

inline void apply_section(const json& section, const std::string& name,
                          const SetterMap& setters) {
  if (!section.is_object()) config_error(name + " must be an object");
  for (const auto& [key, value] : section.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) config_error("unknown key " + name + "." + key);
    it->second(value);
  }
}

template <typename T>
Setter field(T& target, const std::string& key) {
  return [&target, key](const json& v) { target = get_as<T>(v, key); };
}

inline json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

}  // namespace detail

/// Applies "a.b=value" to a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    detail::config_error("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot - start);
    if (part.empty()) detail::config_error("bad override key '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[part] = detail::parse_override_value(assignment.substr(eq + 1));
      return;
    }
    if (!node->contains(part)) (*node)[part] = nlohmann::json::object();
    node = &(*node)[part];
    if (!node->is_object()) detail::config_error("override path '" + path + "' crosses a value");
    start = dot + 1;
  }
}

/// Builds and validates a RunConfig. Relative paths resolve against `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = {}) {
  using detail::field;
  using nlohmann::json;
  if (!doc.is_object()) detail::config_error("config must be a JSON object");

  RunConfig rc;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
  };

  for (const auto& [key, value] : doc.items()) {
    if (key == "data") {
      FileSource files;
      detail::apply_section(value, "data", detail::SetterMap{{"images", field(files.images, "data.images")},
                                            {"texts", field(files.texts, "data.texts")}});
      if (files.images.empty() || files.texts.empty())
        detail::config_error("data needs both images and texts");
      files.images = resolve(files.images);
      files.texts = resolve(files.texts);
      rc.files = files;
    } else if (key == "synth") {
      SynthSource s;
      detail::apply_section(value, "synth",
                            {{"n", field(s.spec.n, "synth.n")},
                             {"p", field(s.spec.image_dim, "synth.p")},
                             {"q", field(s.spec.text_dim, "synth.q")},
                             {"latent", field(s.spec.latent, "synth.latent")},
                             {"noise", field(s.spec.noise, "synth.noise")},
                             {"seed", field(s.spec.seed, "synth.seed")},
                             {"hard_fraction", field(s.hard_fraction, "synth.hard_fraction")}});
      s.spec.validate();
      if (!(s.hard_fraction >= 0.0 && s.hard_fraction < 1.0))
        detail::config_error("synth.hard_fraction must be in [0, 1)");
      rc.synth = s;
    } else if (key == "split") {
      auto& sp = rc.split;
      detail::apply_section(value, "split", {{"train", field(sp.train, "split.train")},
                                             {"validation", field(sp.validation, "split.validation")},
                                             {"test", field(sp.test, "split.test")},
                                             {"seed", field(sp.seed, "split.seed")}});
    } else if (key == "train") {
      auto& t = rc.train;
      detail::apply_section(
          value, "train",
          {{"embedding_dim", field(t.embedding_dim, "train.embedding_dim")},
           {"margin", field(t.margin, "train.margin")},
           {"init_fraction", field(t.init_fraction, "train.init_fraction")},
           {"lambda0", field(t.lambda0, "train.lambda0")},
           {"gamma_ratio", field(t.gamma_ratio, "train.gamma_ratio")},
           {"mu_lambda", field(t.mu_lambda, "train.mu_lambda")},
           {"mu_gamma", field(t.mu_gamma, "train.mu_gamma")},
           {"max_outer_iters", field(t.max_outer_iters, "train.max_outer_iters")},
           {"max_inner_steps", field(t.max_inner_steps, "train.max_inner_steps")},
           {"initial_step", field(t.initial_step, "train.initial_step")},
           {"shrink", field(t.shrink, "train.shrink")},
           {"armijo_c", field(t.armijo_c, "train.armijo_c")},
           {"max_backtracks", field(t.max_backtracks, "train.max_backtracks")},
           {"rel_tol", field(t.rel_tol, "train.rel_tol")},
           {"seed", field(t.seed, "train.seed")},
           {"negatives", field(t.negatives, "train.negatives")},
           {"symmetric_tetrads", field(t.symmetric_tetrads, "train.symmetric_tetrads")},
           {"normalized_similarity", field(t.normalized_similarity, "train.normalized_similarity")},
           {"early_stop_patience", field(t.early_stop_patience, "train.early_stop_patience")}});
    } else if (key == "eval") {
      std::string r = "all";
      std::string mode = "by_relevant";
      detail::apply_section(value, "eval",
                            detail::SetterMap{{"r",
                              detail::Setter([&r](const json& v) {
                                r = v.is_number_integer() ? std::to_string(v.get<long long>())
                                                          : detail::get_as<std::string>(v, "eval.r");
                              })},
                             {"mode", field(mode, "eval.mode")}});
      rc.eval.cutoff = parse_cutoff(r);
      rc.eval.mode = parse_ap_mode(mode);
    } else if (key == "output_dir") {
      rc.output_dir = resolve(detail::get_as<std::string>(value, "output_dir"));
    } else {
      detail::config_error("unknown key " + key);
    }
  }

  if (rc.files.has_value() == rc.synth.has_value())
    detail::config_error("config needs exactly one of 'data' or 'synth'");
  rc.split.validate();
  rc.train.validate();
  return rc;
}

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) detail::config_error("cannot open config " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    detail::config_error(path + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_run_config(doc, std::filesystem::path(path).parent_path());
}

/// The dataset a RunConfig describes.
inline Dataset materialize(const RunConfig& rc) {
  if (rc.files) return load_dataset(rc.files->images, rc.files->texts);
  if (rc.synth->hard_fraction > 0.0)
    return skewed_synth(rc.synth->spec, rc.synth->hard_fraction);
  return synth_generate(rc.synth->spec);
}

}  // namespace sccm::cli

#endif  // SCCM_TOOLS_RUN_CONFIG_HPP
