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

// sccm: train, evaluate and query cross-modal ranking embeddings.
//
// Exit codes: 0 ok, 1 configuration or input error, 2 runtime error,
// 3 gradient check failed.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "sccm.hpp"

namespace {

namespace fs = std::filesystem;
using namespace sccm;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitCheckFailed = 3;

unsigned resolve_threads(int flag) {
  if (flag > 0) return static_cast<unsigned>(flag);
  if (const char* env = std::getenv("SCCM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides, int threads_flag) {
  const cli::RunConfig rc = cli::load_run_config(config_path, overrides);
  const unsigned threads = resolve_threads(threads_flag);
  const Dataset data = cli::materialize(rc);
  const SplitResult parts = split(data, rc.split);

  fs::create_directories(rc.output_dir);
  const fs::path out(rc.output_dir);

  TrainOptions options;
  options.validation = &parts.validation;
  options.threads = threads;
  const TrainResult result = train(parts.train, rc.train, options);

  Checkpoint ck;
  ck.params = result.params;
  ck.config = rc.train;
  ck.seed = rc.train.seed;
  ck.iteration = result.iterations;
  save_checkpoint((out / "checkpoint.sccm").string(), ck);

  std::ostringstream history;
  write_history_csv(history, result.history);
  write_text(out / "history.csv", history.str());

  std::ostringstream manifest;
  write_split_manifest(manifest, parts);
  write_text(out / "split.txt", manifest.str());

  const SimilarityMode sim = rc.train.similarity_mode();
  nlohmann::ordered_json summary;
  summary["iterations"] = result.iterations;
  summary["n_train"] = parts.train.size();
  summary["n_validation"] = parts.validation.size();
  summary["n_test"] = parts.test.size();
  summary["final_objective"] =
      result.history.records.empty() ? 0.0 : result.history.records.back().objective;
  summary["r"] = rc.eval.cutoff.str();
  summary["mode"] = to_string(rc.eval.mode);
  for (Direction dir : {Direction::image_to_text, Direction::text_to_image}) {
    const std::string tag = to_string(dir);
    summary["validation_map_" + tag] =
        mean_ap(result.params, parts.validation, dir, rc.eval.cutoff, rc.eval.mode, sim, threads).map;
    summary["test_map_" + tag] =
        mean_ap(result.params, parts.test, dir, rc.eval.cutoff, rc.eval.mode, sim, threads).map;
  }
  write_text(out / "summary.json", summary.dump(2) + "\n");

  std::cout << "trained " << result.iterations << " iterations; test mAP i2t="
            << fmt17(summary["test_map_i2t"].get<double>())
            << " t2i=" << fmt17(summary["test_map_t2i"].get<double>()) << '\n'
            << "wrote " << out.string() << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& images,
             const std::string& texts, const std::string& direction,
             const std::string& r, const std::string& mode,
             const std::string& out_path, int threads_flag) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(images, texts);
  const EvalResult result =
      mean_ap(ck.params, data, parse_direction(direction), parse_cutoff(r),
              parse_ap_mode(mode), ck.config.similarity_mode(),
              resolve_threads(threads_flag));
  std::printf("%.4f\n", result.map);
  if (!out_path.empty()) write_eval_result(out_path, result, data.ids());
  return kExitOk;
}

std::vector<std::string> read_ids(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<std::string> ids;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ids.push_back(line);
  return ids;
}

int cmd_retrieve(const std::string& checkpoint, const std::string& query_path,
                 const std::string& corpus_path, const std::string& direction,
                 std::size_t top_k, const std::string& ids_path) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Matrix queries = load_features(query_path);
  const Matrix corpus = load_features(corpus_path);
  std::vector<std::string> ids;
  if (!ids_path.empty()) {
    ids = read_ids(ids_path);
    if (ids.size() != static_cast<std::size_t>(corpus.rows()))
      throw Error(ErrorCode::ShapeMismatch, "id count does not match corpus rows");
  }
  const Direction dir = parse_direction(direction);
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const RankedList ranked = retrieve(ck.params, queries.row(i).transpose(), corpus,
                                       dir, top_k, ck.config.similarity_mode());
    if (queries.rows() > 1) std::cout << "# query " << i << '\n';
    for (std::size_t r = 0; r < ranked.items.size(); ++r) {
      const std::size_t item = ranked.items[r];
      std::cout << (ids.empty() ? std::to_string(item) : ids[item]) << ' '
                << fmt17(ranked.scores[r]) << '\n';
    }
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t instances, bool cosine,
                  bool corrupt) {
  GradCheckOptions opt;
  opt.mode = cosine ? SimilarityMode::cosine : SimilarityMode::inner_product;
  if (corrupt) opt.corrupt = 1e-2;
  const GradCheckReport report = gradient_check(seed, instances, opt);
  std::printf("%.6e\n", report.max_relative_error);
  return report.max_relative_error < 1e-5 ? kExitOk : kExitCheckFailed;
}

int cmd_synth(const SynthSpec& spec, double hard_fraction, const std::string& out_dir) {
  const Dataset data =
      hard_fraction > 0.0 ? skewed_synth(spec, hard_fraction) : synth_generate(spec);
  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  save_features((out / "images.txt").string(), data.images());
  save_features((out / "texts.txt").string(), data.texts());
  std::string ids;
  for (const auto& id : data.ids()) ids += id + '\n';
  write_text(out / "ids.txt", ids);

  nlohmann::ordered_json manifest;
  manifest["n"] = spec.n;
  manifest["p"] = spec.image_dim;
  manifest["q"] = spec.text_dim;
  manifest["latent"] = spec.latent;
  manifest["noise"] = spec.noise;
  manifest["seed"] = spec.seed;
  manifest["hard_fraction"] = hard_fraction;
  manifest["images"] = "images.txt";
  manifest["texts"] = "texts.txt";
  manifest["ids"] = "ids.txt";
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << spec.n << " pairs to " << out.string() << '\n';
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteObjective:
      return kExitRuntime;
    default:
      return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-paced cross-modal ranking with diversity regularization"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads,
                 "Worker threads (default: SCCM_THREADS or all cores); results do not depend on it");

  auto* train = app.add_subcommand("train", "Train an embedding from a config file");
  std::string config_path;
  std::vector<std::string> overrides;
  train->add_option("--config", config_path, "JSON run config")->required();
  train->add_option("--set", overrides, "Override a config value, e.g. train.margin=0.2");

  auto* eval = app.add_subcommand("eval", "Mean average precision of a checkpoint");
  std::string ckpt, images, texts, direction = "i2t", r = "all", mode = "by_relevant", eval_out;
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--images", images)->required();
  eval->add_option("--texts", texts)->required();
  eval->add_option("--direction", direction)->check(CLI::IsMember({"i2t", "t2i"}));
  eval->add_option("--r", r, "Cutoff: a positive integer or 'all'");
  eval->add_option("--mode", mode)->check(CLI::IsMember({"by_relevant", "by_r"}));
  eval->add_option("--out", eval_out, "Per-query AP file");

  auto* ret = app.add_subcommand("retrieve", "Rank a corpus against query features");
  std::string query_path, corpus_path, ids_path, ret_direction = "i2t";
  std::size_t top_k = 10;
  ret->add_option("--checkpoint", ckpt)->required();
  ret->add_option("--query", query_path, "Feature file, one query per row")->required();
  ret->add_option("--corpus", corpus_path, "Feature file of the other modality")->required();
  ret->add_option("--direction", ret_direction)->check(CLI::IsMember({"i2t", "t2i"}));
  ret->add_option("--top-k", top_k, "Items to print per query (0 = all)");
  ret->add_option("--ids", ids_path, "One corpus item id per line");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::uint64_t seed = 1;
  std::size_t instances = 20;
  bool cosine = false;
  bool corrupt = false;
  grad->add_option("--seed", seed);
  grad->add_option("--instances", instances);
  grad->add_flag("--cosine", cosine, "Check the normalized-similarity gradient");
  grad->add_flag("--corrupt-gradient", corrupt, "Perturb the analytic gradient (negative control)")
      ->group("");

  auto* syn = app.add_subcommand("synth", "Write a synthetic paired dataset");
  SynthSpec spec;
  double hard_fraction = 0.0;
  std::string synth_out;
  syn->add_option("--n", spec.n)->required();
  syn->add_option("--p", spec.image_dim)->required();
  syn->add_option("--q", spec.text_dim)->required();
  syn->add_option("--latent", spec.latent)->required();
  syn->add_option("--noise", spec.noise)->required();
  syn->add_option("--seed", spec.seed);
  syn->add_option("--hard-fraction", hard_fraction, "Share of pairs with 5x noise");
  syn->add_option("--out", synth_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, threads);
    if (*eval) return cmd_eval(ckpt, images, texts, direction, r, mode, eval_out, threads);
    if (*ret) return cmd_retrieve(ckpt, query_path, corpus_path, ret_direction, top_k, ids_path);
    if (*grad) return cmd_gradcheck(seed, instances, cosine, corrupt);
    if (*syn) return cmd_synth(spec, hard_fraction, synth_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
