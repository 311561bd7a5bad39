#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pernn/app/commands.hpp"
#include "pernn/app/provenance.hpp"
#include "pernn/errors.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kNumeric = 2;

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("pernn");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("PERNN_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

struct Options {
  std::string config;
  std::string model;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

pernn::app::RunConfig resolve(const Options& o) {
  auto cfg = pernn::app::load_config(o.config);
  if (o.out) cfg.out_dir = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

std::string model_path(const Options& o, const pernn::app::RunConfig& cfg) {
  if (!o.model.empty()) return o.model;
  return (std::filesystem::path(cfg.out_dir) / pernn::app::files::model(cfg.variant)).string();
}

void print_written(const std::vector<std::string>& paths) {
  for (const auto& p : paths) std::printf("wrote %s\n", p.c_str());
}

int gradcheck(const Options& o) {
  const auto rows = pernn::app::run_gradcheck(o.seed.value_or(0));
  bool all = true;
  std::printf("%-28s %14s %8s  %s\n", "case", "max_rel_error", "coords", "result");
  for (const auto& r : rows) {
    all = all && r.pass;
    std::printf("%-28s %14.3e %8zu  %s\n", r.name.c_str(), r.max_rel_error, r.coordinates, r.pass ? "pass" : "FAIL");
  }
  if (o.out) {
    std::filesystem::create_directories(*o.out);
    const auto path = (std::filesystem::path(*o.out) / "gradcheck.json").string();
    pernn::app::write_json(path, pernn::app::to_json(rows));
    std::printf("wrote %s\n", path.c_str());
  }
  return all ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Physics-enhanced residual networks: data generation, training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "INI run configuration");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides [run] out)");
    sub->add_option("--seed", o.seed, "root seed (overrides [run] seed)");
  };
  auto* gen = app.add_subcommand("gen-data", "write the dataset and its manifest");
  add_common(gen, true);
  auto* trn = app.add_subcommand("train", "train the configured variant");
  add_common(trn, true);
  auto* eval = app.add_subcommand("evaluate", "write the evaluation report for a model");
  add_common(eval, true);
  eval->add_option("--model", o.model, "model file, or 'expert' for the scripted driver");
  auto* gap = app.add_subcommand("gapfill", "fill artificial gaps at four time scales (nee)");
  add_common(gap, true);
  gap->add_option("--model", o.model, "model file");
  auto* grad = app.add_subcommand("gradcheck", "compare gradients against finite differences");
  add_common(grad, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (grad->parsed()) return gradcheck(o);
    const auto cfg = resolve(o);
    if (gen->parsed()) print_written(pernn::app::cmd_gen_data(cfg));
    if (trn->parsed()) print_written(pernn::app::cmd_train(cfg));
    if (eval->parsed()) print_written(pernn::app::cmd_evaluate(cfg, model_path(o, cfg)));
    if (gap->parsed()) print_written(pernn::app::cmd_gapfill(cfg, model_path(o, cfg)));
    return kOk;
  } catch (const pernn::NumericError& e) {
    spdlog::error("{}", e.what());
    return kNumeric;
  } catch (const pernn::ValidationError& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kValidation;
  }
}
