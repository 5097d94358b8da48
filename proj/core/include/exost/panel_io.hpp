#pragma once

// Panel file format.
//
// A comma-separated table with a header `node_id,timestamp,<var_1>,...,<var_F>`
// and one row per (node, timestamp). Empty fields, `nan` and `NA` mark missing
// entries. Every node must carry the same strictly increasing timestamps.
//
// The sidecar schema is JSON:
//
//   { "variables": { "<var>": "target" | "past" | "future", ... },
//     "metadata": { ... optional, passed through ... } }

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exost/data.hpp"

namespace exost {

struct PanelSchema {
  std::vector<Variable> variables;
  nlohmann::json metadata = nlohmann::json::object();
};

PanelSchema load_schema(const std::filesystem::path& path);
void save_schema(const PanelSchema& schema, const std::filesystem::path& path);
nlohmann::json schema_to_json(const PanelSchema& schema);
PanelSchema schema_from_json(const nlohmann::json& j);

/// Parses the panel table, applies declared roles, validates, and fills
/// missing entries (mask retained).
Panel load_panel(const std::filesystem::path& path, const PanelSchema& schema);
Panel parse_panel(const std::string& text, const PanelSchema& schema);

void save_panel(const Panel& panel, const std::filesystem::path& path);
std::string format_panel(const Panel& panel);

}  // namespace exost
