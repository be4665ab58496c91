#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

namespace entroscope {

// Exit contract: input errors dominate non-convergence, which dominates a
// failed verdict; 0 only when every requested check passed.
inline constexpr int kExitPass = 0;
inline constexpr int kExitVerdictFailure = 2;
inline constexpr int kExitNonConvergence = 3;
inline constexpr int kExitInputError = 4;

struct ReportDocument {
  nlohmann::ordered_json doc;
  int exit_code = kExitPass;
};

// Executes one scenario object and assembles the full report document
// (scenario echo, results, diagnostics, verdicts, version, schema_version).
// Construction and validation problems are captured into an error report
// with exit code 4 rather than thrown. seed_override, when present, replaces
// the scenario's "seed" for every Monte Carlo rule.
ReportDocument run_scenario(const nlohmann::ordered_json& scenario,
                            std::optional<std::uint64_t> seed_override = std::nullopt);

// Reads and parses a scenario file; malformed JSON raises InputError.
nlohmann::ordered_json load_scenario_file(const std::string& path);

// Deterministic serialization: insertion-ordered keys, two-space indent,
// every float with 17 significant digits, non-finite values as null,
// primitive-only arrays on one line, trailing newline. Contains no clock or
// host state, so identical documents serialize to identical bytes.
std::string dump_report(const nlohmann::ordered_json& j);

}  // namespace entroscope
