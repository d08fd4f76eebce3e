#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "asterenv/design.hpp"
#include "asterenv/graph.hpp"

namespace asterenv {

using Json = nlohmann::ordered_json;

// Graph config: {"nodes": [{"id", "predecessor", "family", "group"?}], "fitness_nodes": [...]}.
// "predecessor" is a string, or an array when a node lists several (rejected by validate()).
GraphConfig graph_config_from_json(const Json& j);
Json to_json(const GraphConfig& config);

// Model config: {"covariates", "quadratic", "nuisance": [{"name", "nodes"}], "interest_nodes", "offset": {node: a}}.
ModelConfig model_config_from_json(const Json& j);
Json to_json(const ModelConfig& config);

Json read_json(const std::filesystem::path& path);
/// Two-space indented, trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);

GraphConfig load_graph_config(const std::filesystem::path& path);
void save_graph_config(const std::filesystem::path& path, const GraphConfig& config);
ModelConfig load_model_config(const std::filesystem::path& path);
void save_model_config(const std::filesystem::path& path, const ModelConfig& config);

/// Shortest decimal string that reads back to the same double.
std::string format_double(double x);

/// Minimal CSV: comma separated, no quoting, header row mandatory.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  std::size_t column(const std::string& name) const;  // throws ValidationError if absent
};

CsvTable read_csv(std::istream& in, const std::string& source = "<stream>");
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Long-format data: columns `id,node,value,<covariates...>`, one row per
/// (individual, node). Individuals keep their order of first appearance.
/// Rows are checked against the graph (every node once per individual,
/// constant covariates within an individual, no positive child below a zero
/// parent) and failures name the offending line.
Dataset dataset_from_csv(const CsvTable& table, const Graph& graph);
Dataset read_dataset(const std::filesystem::path& path, const Graph& graph);
CsvTable dataset_to_csv(const Dataset& data, const Graph& graph);
void write_dataset(const std::filesystem::path& path, const Dataset& data, const Graph& graph);

/// Profiles file: header of covariate names, one row per hypothetical
/// individual. Returned columns follow `covariates`; extra columns are ignored.
Eigen::MatrixXd read_profiles(const std::filesystem::path& path, const std::vector<std::string>& covariates);
void write_profiles(const std::filesystem::path& path, const std::vector<std::string>& covariates,
                    const Eigen::MatrixXd& profiles);

/// Matrix with a name column followed by one column per `names` entry.
CsvTable matrix_table(const std::vector<std::string>& names, const Eigen::MatrixXd& m);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// meta.json: tool version, seed and a hash of the canonical config dump.
Json make_meta(std::uint64_t seed, const Json& config);

}  // namespace asterenv
