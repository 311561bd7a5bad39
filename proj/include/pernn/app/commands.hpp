#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "pernn/app/config.hpp"
#include "pernn/autodiff/gradcheck.hpp"

namespace pernn::app {

// File names inside the output directory.
namespace files {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kTrainDemos = "demos_train.csv";
inline constexpr const char* kTestDemos = "demos_test.csv";
inline constexpr const char* kFlux = "flux.csv";
std::string model(blocks::Variant v);
std::string history(blocks::Variant v);
std::string train_manifest(blocks::Variant v);
std::string report(const std::string& name);
std::string gapfill_report(blocks::Variant v);
std::string filled(blocks::Variant v, nee::GapScale s);
}  // namespace files

// Reserved --model value that evaluates the scripted driver.
inline constexpr const char* kExpertModel = "expert";

// Every command writes into cfg.out_dir and returns the paths it wrote.
std::vector<std::string> cmd_gen_data(const RunConfig& cfg);
std::vector<std::string> cmd_train(const RunConfig& cfg);
std::vector<std::string> cmd_evaluate(const RunConfig& cfg, const std::string& model_path);
std::vector<std::string> cmd_gapfill(const RunConfig& cfg, const std::string& model_path);

struct GradcheckRow {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool pass = false;
};

inline constexpr double kGradcheckTolerance = 1e-4;

// Each node kind plus both physics blocks, with the intermediates as the
// differentiated quantities.
std::vector<ad::GradcheckCase> physics_gradcheck_cases(std::uint64_t seed);
std::vector<GradcheckRow> run_gradcheck(std::uint64_t seed);
nlohmann::json to_json(const std::vector<GradcheckRow>& rows);

}  // namespace pernn::app
