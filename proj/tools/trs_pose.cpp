// Copyright 2026 The trspose Authors.
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

// trs_pose: dataset generation, training, evaluation and augmentation preview.
//
// Exit status: 0 success, 2 usage or configuration error, 3 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trs/checkpoint.hpp"
#include "trs/config.hpp"
#include "trs/datagen.hpp"
#include "trs/preview.hpp"
#include "trs/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Data {
  trs::DatasetSplit split;
  std::vector<trs::Sample> validation;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f << text;
}

/// Synthetic validation parameters recorded by gen-data in index.json.
std::optional<std::tuple<std::uint64_t, int, int>> synthetic_origin(const std::string& info_json) {
  const json info = json::parse(info_json, nullptr, false);
  if (!info.is_object() || info.value("generator", "") != "stick_figure") return std::nullopt;
  return std::make_tuple(info.at("seed").get<std::uint64_t>(), info.at("labeled").get<int>(),
                         info.at("unlabeled").get<int>());
}

trs::LoadedDataset load_dir(const fs::path& dir, const trs::RunConfig& cfg) {
  trs::LoadedDataset d = trs::load_coco_subset(dir / "index.json", dir, cfg.arch.input_width, cfg.arch.input_height);
  for (const auto& e : d.report.errors) std::cerr << "warning: " << dir.string() << ": " << e << "\n";
  if (!d.joint_names.empty() && static_cast<int>(d.joint_names.size()) != cfg.arch.joints)
    throw trs::ConfigError("dataset has " + std::to_string(d.joint_names.size()) + " joints but arch.joints = " +
                           std::to_string(cfg.arch.joints));
  return d;
}

Data load_data(const trs::RunConfig& cfg, bool need_training) {
  Data data;
  const trs::SkeletonConfig skeleton = cfg.skeleton();
  std::uint64_t vseed = cfg.data_seed;
  int vl = cfg.n_labeled;
  int vu = cfg.n_unlabeled;
  if (cfg.data_dir.empty()) {
    if (need_training) data.split = trs::build_split(cfg.data_seed, cfg.n_labeled, cfg.n_unlabeled, skeleton);
  } else {
    trs::LoadedDataset d = load_dir(cfg.data_dir, cfg);
    if (auto origin = synthetic_origin(d.info_json)) std::tie(vseed, vl, vu) = *origin;
    data.split = std::move(d.split);
    if (need_training && data.split.labeled.empty()) throw trs::ConfigError("need at least one labeled sample");
  }
  if (!cfg.validation_dir.empty()) {
    data.validation = load_dir(cfg.validation_dir, cfg).split.labeled;
    if (data.validation.empty()) throw trs::ConfigError("validation set has no labeled samples");
  } else {
    data.validation = trs::build_validation(vseed, vl, vu, cfg.n_validation, skeleton);
  }
  return data;
}

json final_report(const trs::Network<float>& net, const trs::NetworkEnsemble<float>& e,
                  const std::vector<trs::Sample>& validation, const trs::RunConfig& cfg,
                  const std::vector<trs::Which>& which) {
  json out = json::object();
  for (trs::Which w : which) {
    out[trs::which_name(w)] =
        trs::pck_to_json(trs::evaluate(net, e, validation, w, cfg.training.pck_threshold, cfg.pck_reference()));
  }
  return out;
}

const std::vector<trs::Which> kAllWhich{trs::Which::g, trs::Which::f, trs::Which::r1, trs::Which::r2,
                                        trs::Which::mean_gf};

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  std::uint64_t seed = 0;
  int labeled = 200;
  int unlabeled = 2000;
  int width = 64;
  int height = 64;
  std::string out;
};

int cmd_gen_data(const GenArgs& a) {
  if (a.labeled < 1) throw trs::ConfigError("need at least one labeled sample");
  if (a.unlabeled < 0) throw trs::ConfigError("--unlabeled must be nonnegative");
  const trs::SkeletonConfig skeleton = trs::SkeletonConfig::stick_figure(a.width, a.height);
  skeleton.validate();
  const trs::DatasetSplit split = trs::build_split(a.seed, a.labeled, a.unlabeled, skeleton);
  const json info = {{"generator", "stick_figure"}, {"seed", a.seed},   {"labeled", a.labeled},
                     {"unlabeled", a.unlabeled},    {"width", a.width}, {"height", a.height}};
  try {
    trs::save_dataset(a.out, split, skeleton.joint_names, info.dump());
  } catch (const std::exception& e) {
    throw RuntimeFailure(e.what());
  }
  std::cout << "wrote " << split.labeled.size() + split.unlabeled.size() << " images to " << a.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::string> ablations;
};

trs::RunConfig resolve_config(const Overrides& o, const std::vector<std::pair<std::string, std::string>>& flags) {
  trs::RunConfig cfg;
  if (!o.config_path.empty()) cfg = trs::load_run_config(o.config_path);
  for (const std::string& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw trs::ConfigError("--set expects key=value, got '" + s + "'");
    trs::set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  for (const std::string& s : o.ablations) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw trs::ConfigError("--ablation expects name=on|off, got '" + s + "'");
    const std::string name = s.substr(0, eq);
    if (name != "mfl" && name != "km" && name != "reviewer")
      throw trs::ConfigError("unknown ablation '" + name + "' (expected mfl, km or reviewer)");
    trs::set_config_value(cfg, "train." + name, s.substr(eq + 1));
  }
  for (const auto& [key, value] : flags) trs::set_config_value(cfg, key, value);
  cfg.validate();
  return cfg;
}

int cmd_train(const trs::RunConfig& cfg, const std::string& resume_path) {
  const trs::Network<float> net(cfg.arch);
  std::optional<trs::TrainState<float>> resume;
  if (!resume_path.empty()) {
    if (!fs::exists(resume_path)) throw trs::ConfigError("checkpoint not found: " + resume_path);
    trs::Checkpoint ck = trs::load_checkpoint(resume_path);
    if (trs::Network<float>(ck.arch).layout()->fingerprint != net.layout()->fingerprint)
      throw trs::ConfigError("checkpoint " + resume_path + " does not match the configured architecture");
    resume = std::move(ck.state);
  }
  const Data data = load_data(cfg, true);
  const fs::path out = cfg.out_dir;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw RuntimeFailure("cannot create output directory " + out.string() + ": " + ec.message());

  const fs::path metrics_path = out / "metrics.csv";
  const bool append = resume.has_value() && fs::exists(metrics_path) && fs::file_size(metrics_path) > 0;
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw RuntimeFailure("cannot write " + metrics_path.string());
  if (!append) metrics << trs::metrics_csv_header() << "\n" << std::flush;

  const json config_json = trs::to_json(cfg);
  const fs::path ckpt_path = out / "checkpoint.trsc";
  auto save = [&](const trs::TrainState<float>& st, const fs::path& path) {
    trs::save_checkpoint(path, {cfg.arch, st, config_json, trs::version_string()});
  };

  trs::TrainHooks<float> hooks;
  hooks.on_metrics = [&](const trs::MetricsRow& row) {
    metrics << trs::metrics_csv_line(row) << "\n" << std::flush;
    std::fprintf(stderr, "iter %6lld  loss %.5f (sup %.5f un1 %.5f un2 %.5f)  pck g %.3f f %.3f\n",
                 static_cast<long long>(row.iteration), row.loss_total, row.loss_sup, row.loss_un1, row.loss_un2,
                 row.pck_g, row.pck_f);
  };
  hooks.on_checkpoint = [&](const trs::TrainState<float>& st) { save(st, ckpt_path); };
  hooks.checkpoint_interval = cfg.checkpoint_interval;
  const fs::path abort_path = out / "abort.trsc";
  hooks.on_abort = [&](const trs::TrainState<float>& st) { save(st, abort_path); };

  trs::TrainResult<float> result;
  try {
    result = trs::train(net, data.split, data.validation, cfg.training, cfg.pck_reference(), std::move(resume), hooks);
  } catch (const trs::TrainingAborted& e) {
    throw RuntimeFailure(std::string(e.what()) + "; last good state saved to " + abort_path.string());
  }

  const trs::NetworkEnsemble<float>& e = result.state.ensemble;
  json hashes = json::object();
  for (trs::Role r : trs::kAllRoles) hashes[trs::role_name(r)] = trs::value_hash(e[r]);
  const json summary = {
      {"version", trs::version_string()},
      {"mode", trs::mode_name(cfg.training.mode)},
      {"iteration", e.iteration},
      {"fingerprint", e.g().fingerprint()},
      {"value_hash", hashes},
      {"checkpoint", ckpt_path.string()},
      {"validation_samples", data.validation.size()},
      {"final_pck", final_report(net, e, data.validation, cfg, kAllWhich)},
      {"config", config_json},
  };
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary["final_pck"].dump(2) << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string config_path;
  std::string data;
  std::vector<std::string> which;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) throw trs::ConfigError("checkpoint not found: " + a.checkpoint);
  const trs::Checkpoint ck = trs::load_checkpoint(a.checkpoint);
  trs::RunConfig cfg = trs::run_config_from_json(ck.run_config);
  if (!a.config_path.empty()) {
    const trs::RunConfig other = trs::load_run_config(a.config_path);
    const std::string want = trs::Network<float>(other.arch).layout()->fingerprint;
    if (want != trs::Network<float>(ck.arch).layout()->fingerprint)
      throw trs::ConfigError("fingerprint mismatch between checkpoint " + a.checkpoint + " and config " +
                             a.config_path);
    cfg = other;
  }
  cfg.arch = ck.arch;
  const trs::Network<float> net(cfg.arch);
  std::vector<trs::Sample> samples;
  if (!a.data.empty()) {
    samples = load_dir(a.data, cfg).split.labeled;
  } else {
    samples = load_data(cfg, false).validation;
  }
  if (samples.empty()) throw trs::ConfigError("no labeled samples to evaluate");
  std::vector<trs::Which> which;
  for (const std::string& w : a.which) which.push_back(trs::parse_which(w));
  if (which.empty()) which = kAllWhich;
  const json report = {{"checkpoint", a.checkpoint},
                       {"iteration", ck.state.ensemble.iteration},
                       {"samples", samples.size()},
                       {"pck", final_report(net, ck.state.ensemble, samples, cfg, which)}};
  std::cout << report.dump(2) << "\n";
  if (!a.out.empty()) write_text(a.out, report.dump(2) + "\n");
  return kExitOk;
}

// ----------------------------------------------------------------- preview

struct PreviewArgs {
  std::string data;
  std::uint64_t data_seed = 0;
  int index = 0;
  bool unlabeled = false;
  std::string checkpoint;
  std::string out = "preview";
  trs::PreviewOptions options;
};

int cmd_preview(const PreviewArgs& a) {
  trs::ArchConfig arch;
  std::optional<trs::Checkpoint> ck;
  if (!a.checkpoint.empty()) {
    if (!fs::exists(a.checkpoint)) throw trs::ConfigError("checkpoint not found: " + a.checkpoint);
    ck = trs::load_checkpoint(a.checkpoint);
    arch = ck->arch;
  }
  if (a.index < 0) throw trs::ConfigError("--index must be nonnegative");
  trs::Sample sample;
  if (!a.data.empty()) {
    trs::RunConfig cfg;
    cfg.arch = arch;
    const trs::LoadedDataset d = load_dir(a.data, cfg);
    const auto& pool = a.unlabeled ? d.split.unlabeled : d.split.labeled;
    if (static_cast<std::size_t>(a.index) >= pool.size())
      throw trs::ConfigError("--index " + std::to_string(a.index) + " out of range (" + std::to_string(pool.size()) +
                             " samples)");
    sample = pool[static_cast<std::size_t>(a.index)];
  } else {
    const trs::SkeletonConfig skeleton = trs::SkeletonConfig::stick_figure(arch.input_width, arch.input_height);
    sample = trs::generate_samples(a.data_seed, a.index, 1, skeleton, !a.unlabeled).front();
  }
  const trs::PreviewResult r =
      trs::write_preview(a.out, sample, arch, a.options, ck ? &ck->state.ensemble.g() : nullptr);
  std::cout << "wrote " << r.files.size() << " files to " << a.out << "\n";
  return kExitOk;
}

std::string keys_footer() {
  std::string s = "\nConfig keys (file sections [train], [arch], [data], [run]; defaults shown):\n";
  for (const trs::ConfigKey& k : trs::config_keys()) {
    s += "  " + k.name + " = " + k.default_text + "\n      " + k.help + "\n";
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised keypoint heatmap training with dual networks and EMA reviewers"};
  app.set_version_flag("--version", trs::version_string());
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic stick-figure dataset (PNGs + index.json)");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  gen_cmd->add_option("--labeled", gen.labeled, "Labeled samples")->capture_default_str();
  gen_cmd->add_option("--unlabeled", gen.unlabeled, "Unlabeled samples")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "Image width")->capture_default_str();
  gen_cmd->add_option("--height", gen.height, "Image height")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  const trs::RunConfig defaults;
  Overrides over;
  std::string resume;
  std::string mode;
  std::uint64_t seed = 0;
  std::int64_t iterations = 0;
  double lambda = 0, alpha = 0, beta = 0, eta = 0, lr = 0;
  int k_mix = 0;
  std::string out_dir, data_dir;
  auto* train_cmd = app.add_subcommand("train", "Train the ensemble; writes metrics.csv, checkpoints, summary.json");
  train_cmd->add_option("--config", over.config_path, "Config file (key = value with [section] headers)");
  train_cmd->add_option("--set", over.sets, "Override any config key: section.key=value (repeatable)");
  train_cmd->add_option("--ablation", over.ablations, "Switch a component: mfl|km|reviewer=on|off (repeatable)");
  auto* o_mode = train_cmd->add_option("--mode", mode, "trs | baseline | supervised")->default_str("trs");
  auto* o_seed = train_cmd->add_option("--seed", seed, "Training seed")->default_str("0");
  auto* o_iter = train_cmd->add_option("--iterations", iterations, "Iterations E")
                     ->default_str(std::to_string(defaults.training.max_iterations));
  auto* o_lambda = train_cmd->add_option("--lambda", lambda, "Supervised loss weight")->default_str("0.5");
  auto* o_k = train_cmd->add_option("--k-mix", k_mix, "Keypoint-Mix K")->default_str("5");
  auto* o_alpha = train_cmd->add_option("--alpha", alpha, "EMA momentum of R1")->default_str("0.999");
  auto* o_beta = train_cmd->add_option("--beta", beta, "EMA momentum of R2")->default_str("0.999");
  auto* o_eta = train_cmd->add_option("--eta", eta, "Mean-teacher momentum (baseline mode)")->default_str("0.999");
  auto* o_lr = train_cmd->add_option("--lr", lr, "Initial learning rate")->default_str("0.001");
  auto* o_out = train_cmd->add_option("--out", out_dir, "Output directory")->default_str(defaults.out_dir);
  auto* o_data = train_cmd->add_option("--data", data_dir, "Dataset directory (default: synthetic in memory)");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint; metrics.csv is appended");
  train_cmd->footer(keys_footer());

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "PCK of a checkpoint's networks");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", ev.config_path, "Config file; its architecture must match the checkpoint");
  eval_cmd->add_option("--data", ev.data, "Labeled dataset directory (default: the run's validation slice)");
  eval_cmd->add_option("--which", ev.which, "g | f | r1 | r2 | mean_gf (repeatable; default all)");
  eval_cmd->add_option("--out", ev.out, "Write the report JSON here");

  PreviewArgs pv;
  auto* preview_cmd = app.add_subcommand("preview", "Write augmentation and heatmap PNGs for one sample");
  preview_cmd->add_option("--data", pv.data, "Dataset directory (default: synthetic)");
  preview_cmd->add_option("--data-seed", pv.data_seed, "Synthetic dataset seed")->capture_default_str();
  preview_cmd->add_option("--index", pv.index, "Sample index")->capture_default_str();
  preview_cmd->add_flag("--unlabeled", pv.unlabeled, "Pick from the unlabeled subset");
  preview_cmd->add_option("--checkpoint", pv.checkpoint, "Show network G's predictions");
  preview_cmd->add_option("--seed", pv.options.seed, "Augmentation seed")->capture_default_str();
  preview_cmd->add_option("--km-k", pv.options.k_mix, "Keypoints mixed")->capture_default_str();
  preview_cmd->add_option("--patch-half", pv.options.patch_half, "Patch half-size, 0 = 2*sigma*stride")
      ->capture_default_str();
  preview_cmd->add_option("--out", pv.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) {
      std::vector<std::pair<std::string, std::string>> flags;
      auto flag = [&](CLI::Option* o, const char* key) {
        if (o->count() > 0) flags.emplace_back(key, o->as<std::string>());
      };
      flag(o_mode, "train.mode");
      flag(o_seed, "train.seed");
      flag(o_iter, "train.max_iterations");
      flag(o_lambda, "train.lambda");
      flag(o_k, "train.k_mix");
      flag(o_alpha, "train.alpha");
      flag(o_beta, "train.beta");
      flag(o_eta, "train.eta");
      flag(o_lr, "train.learning_rate");
      flag(o_out, "run.out_dir");
      flag(o_data, "data.dir");
      return cmd_train(resolve_config(over, flags), resume);
    }
    if (*eval_cmd) return cmd_eval(ev);
    if (*preview_cmd) return cmd_preview(pv);
  } catch (const trs::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const trs::LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const trs::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
