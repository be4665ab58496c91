// scenario runner: parses one scenario JSON, executes the requested check,
// and emits a deterministic report document. Process exit code mirrors the
// report verdict (0 pass, 2 verdict failure, 3 non-convergence, 4 input error).
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "entroscope/parallel.hpp"
#include "entroscope/scenario.hpp"
#include "entroscope/version.hpp"

namespace {

int emit(const nlohmann::ordered_json& doc, const std::string& out_path, int code) {
  std::string text = entroscope::dump_report(doc);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot write report to " << out_path << "\n";
      return entroscope::kExitInputError;
    }
    out << text;
  }
  return code;
}

nlohmann::ordered_json error_document(const nlohmann::ordered_json& scenario,
                                      const std::string& message) {
  nlohmann::ordered_json doc;
  doc["scenario"] = scenario;
  doc["results"] = nlohmann::ordered_json::object();
  doc["diagnostics"] = nlohmann::ordered_json::object();
  doc["verdicts"] = nlohmann::ordered_json{
      {"pass", false}, {"error", message}, {"exit_code", entroscope::kExitInputError}};
  doc["version"] = entroscope::kVersion;
  doc["schema_version"] = entroscope::kSchemaVersion;
  return doc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"information-probe scenario runner"};
  app.set_version_flag("--version", std::string(entroscope::kVersion));

  std::string command, scenario_path, out_path;
  std::uint64_t seed = 0;
  int workers = 1;
  app.add_option("command", command,
                 "check to run: coeff, joint, gram, chart, product, pushforward, "
                 "submanifold, rank, stability, rigidity, or diagnostics")
      ->required();
  app.add_option("--scenario", scenario_path, "scenario JSON file")->required();
  app.add_option("--out", out_path, "write the report to this file instead of stdout");
  auto* seed_flag = app.add_option("--seed", seed, "override the scenario's Monte Carlo seed");
  app.add_option("--workers", workers, "worker threads (never affects results)")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : entroscope::kExitInputError;
  }

  entroscope::set_worker_count(workers);

  nlohmann::ordered_json scenario;
  try {
    scenario = entroscope::load_scenario_file(scenario_path);
  } catch (const std::exception& e) {
    return emit(error_document(nlohmann::ordered_json::object(), e.what()), out_path,
                entroscope::kExitInputError);
  }

  std::string declared =
      scenario.contains("command") && scenario.at("command").is_string()
          ? scenario.at("command").get<std::string>()
          : std::string();
  if (declared != command)
    return emit(error_document(scenario, "command-line command '" + command +
                                             "' does not match the scenario's command '" +
                                             declared + "'"),
                out_path, entroscope::kExitInputError);

  std::optional<std::uint64_t> seed_override;
  if (seed_flag->count() > 0) seed_override = seed;

  try {
    entroscope::ReportDocument report = entroscope::run_scenario(scenario, seed_override);
    return emit(report.doc, out_path, report.exit_code);
  } catch (const std::exception& e) {
    return emit(error_document(scenario, e.what()), out_path, entroscope::kExitInputError);
  }
}
