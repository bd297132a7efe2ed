#pragma once

#include "cmbpo/mlp.hpp"
#include "vendor_json.hpp"

namespace cmbpo {

// Versioned JSON serialization for parameter bundles. nlohmann/json
// emits shortest round-trip decimal for doubles, so round-trips are
// bit-exact.

nlohmann::json mlp_to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

nlohmann::json adam_to_json(const AdamState& s);
AdamState adam_from_json(const nlohmann::json& j, const MlpParams& p);

nlohmann::json ensemble_to_json(const Ensemble& e);
Ensemble ensemble_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vec& v);
Vec vector_from_json(const nlohmann::json& j);

/// Write a file atomically (temp file in the same directory + rename).
void atomic_write(const std::string& path, const std::string& contents);

}  // namespace cmbpo
