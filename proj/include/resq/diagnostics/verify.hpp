#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace resq {

/// Outcome of one named property check.
struct CheckResult {
  std::string name;
  bool passed = false;
  nlohmann::json measured = nlohmann::json::object();
  std::vector<std::string> lines;  // human-readable measured-vs-bound summary
  std::vector<std::string> table_header;
  std::vector<std::vector<double>> table;  // optional per-instance rows
};

struct VerifyOptions {
  std::uint64_t seed = 2024;
};

/// Subspace-vs-exact softmax gap against the closed-form bound over random
/// tables, plus evaluation counts of both operators.
CheckResult verify_thm1(const VerifyOptions& options = {});
/// RES loss gradient against (λ+1) × the gradient of the mixed-target squared error.
CheckResult verify_thm2(const VerifyOptions& options = {});
/// Bias ordering of the QMIX, RE and RES target operators.
CheckResult verify_thm3(const VerifyOptions& options = {});
/// E[max of K^n uniforms] against K^n / (K^n + 1).
CheckResult verify_uniform(const VerifyOptions& options = {});
/// Central-difference gradient checks of every network component and the
/// sign of the mixer partials.
CheckResult verify_gradcheck(const VerifyOptions& options = {});
/// IGM greedy value against the exhaustive joint maximum on random models.
CheckResult verify_igm(const VerifyOptions& options = {});

const std::vector<std::string>& suite_names();  // thm1 ... igm, all
/// Runs one suite or all of them. Throws ConfigError for an unknown name.
std::vector<CheckResult> run_suite(const std::string& name, const VerifyOptions& options = {});

nlohmann::json theorems_json(const std::vector<CheckResult>& results);

}  // namespace resq
