#include "exost/panel_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace exost {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
      field.remove_suffix(1);
    }
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_missing(std::string_view field) {
  return field.empty() || field == "nan" || field == "NaN" || field == "NA";
}

double parse_number(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": malformed value '" +
                    std::string(field) + "'");
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

nlohmann::json schema_to_json(const PanelSchema& schema) {
  nlohmann::json vars = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& v : schema.variables) {
    vars[v.name] = std::string(to_string(v.role));
    order.push_back(v.name);
  }
  return {{"variables", vars}, {"order", order}, {"metadata", schema.metadata}};
}

PanelSchema schema_from_json(const nlohmann::json& j) {
  if (!j.contains("variables") || !j["variables"].is_object()) {
    throw DataError("schema: missing 'variables' object");
  }
  PanelSchema schema;
  const auto& vars = j["variables"];
  std::vector<std::string> names;
  if (j.contains("order")) {
    for (const auto& n : j["order"]) names.push_back(n.get<std::string>());
  } else {
    for (auto it = vars.begin(); it != vars.end(); ++it) names.push_back(it.key());
  }
  for (const auto& name : names) {
    if (!vars.contains(name)) throw DataError("schema: '" + name + "' has no role");
    schema.variables.push_back({name, parse_role(vars[name].get<std::string>())});
  }
  if (j.contains("metadata")) schema.metadata = j["metadata"];
  return schema;
}

PanelSchema load_schema(const std::filesystem::path& path) {
  try {
    return schema_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("schema " + path.string() + ": " + e.what());
  }
}

void save_schema(const PanelSchema& schema, const std::filesystem::path& path) {
  write_file(path, schema_to_json(schema).dump(2) + "\n");
}

Panel parse_panel(const std::string& text, const PanelSchema& schema) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError("panel file is empty");
  ++line_no;
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "node_id" || header[1] != "timestamp") {
    throw DataError("panel header must start with node_id,timestamp and name variables");
  }

  std::map<std::string, VariableRole, std::less<>> roles;
  for (const auto& v : schema.variables) roles.emplace(v.name, v.role);

  Panel panel;
  for (std::size_t c = 2; c < header.size(); ++c) {
    auto it = roles.find(header[c]);
    if (it == roles.end()) {
      throw DataError("variable '" + std::string(header[c]) + "' has no declared role");
    }
    panel.variables.push_back({std::string(header[c]), it->second});
  }
  if (panel.variables.size() != schema.variables.size()) {
    throw DataError("schema declares variables that the panel file does not contain");
  }

  struct NodeRows {
    std::vector<Timestamp> times;
    std::vector<double> values;
    std::vector<std::uint8_t> missing;
  };
  std::vector<NodeRows> rows;
  std::map<std::string, std::size_t, std::less<>> node_index;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    auto [it, inserted] = node_index.try_emplace(std::string(fields[0]), rows.size());
    if (inserted) {
      rows.emplace_back();
      panel.nodes.emplace_back(fields[0]);
    }
    NodeRows& node = rows[it->second];
    const Timestamp ts = parse_timestamp(fields[1]);
    if (!node.times.empty() && ts <= node.times.back()) {
      throw DataError("line " + std::to_string(line_no) + ": non-monotone timestamp " +
                      std::string(fields[1]) + " for node " + std::string(fields[0]));
    }
    node.times.push_back(ts);
    for (std::size_t c = 2; c < fields.size(); ++c) {
      if (is_missing(fields[c])) {
        node.values.push_back(0.0);
        node.missing.push_back(1);
      } else {
        node.values.push_back(parse_number(fields[c], line_no));
        node.missing.push_back(0);
      }
    }
  }
  if (rows.empty()) throw DataError("panel file has no data rows");

  panel.timestamps = rows.front().times;
  for (std::size_t n = 0; n < rows.size(); ++n) {
    if (rows[n].times != panel.timestamps) {
      throw DataError("node " + panel.nodes[n] + " has a different timestamp set");
    }
    panel.data.insert(panel.data.end(), rows[n].values.begin(), rows[n].values.end());
    panel.missing.insert(panel.missing.end(), rows[n].missing.begin(), rows[n].missing.end());
  }
  panel.validate();
  fill_missing(panel);
  return panel;
}

Panel load_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  return parse_panel(read_file(path), schema);
}

std::string format_panel(const Panel& panel) {
  std::string out = "node_id,timestamp";
  for (const auto& v : panel.variables) out += "," + v.name;
  out += "\n";
  char buf[64];
  for (std::size_t n = 0; n < panel.num_nodes(); ++n) {
    for (std::size_t t = 0; t < panel.num_steps(); ++t) {
      out += panel.nodes[n];
      out += ",";
      out += format_timestamp(panel.timestamps[t]);
      for (std::size_t v = 0; v < panel.num_variables(); ++v) {
        out += ",";
        const std::size_t i = panel.index(n, t, v);
        if (!panel.missing.empty() && panel.missing[i]) continue;
        // Shortest round-trip representation.
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), panel.data[i]);
        out.append(buf, ptr);
      }
      out += "\n";
    }
  }
  return out;
}

void save_panel(const Panel& panel, const std::filesystem::path& path) {
  write_file(path, format_panel(panel));
}

}  // namespace exost
