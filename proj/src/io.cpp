#include "asterenv/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "asterenv/error.hpp"

#ifndef ASTERENV_VERSION
#define ASTERENV_VERSION "0.0.0"
#endif

namespace asterenv {

namespace {

template <typename T>
T get_field(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field \"" + key + "\" has the wrong type");
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) throw ValidationError(where + ": not a number: \"" + s + "\"");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

GraphConfig graph_config_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("graph config must be a JSON object");
  GraphConfig config;
  const auto nodes = get_field<Json>(j, "nodes", "graph config");
  if (!nodes.is_array()) throw ValidationError("graph config: \"nodes\" must be an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Json& n = nodes[i];
    const std::string where = "graph config node " + std::to_string(i);
    NodeConfig node;
    node.id = get_field<std::string>(n, "id", where);
    const auto pred = get_field<Json>(n, "predecessor", where);
    if (pred.is_string()) {
      node.predecessors = {pred.get<std::string>()};
    } else if (pred.is_array()) {
      node.predecessors = get_field<std::vector<std::string>>(n, "predecessor", where);
    } else {
      throw ValidationError(where + ": \"predecessor\" must be a string or an array of strings");
    }
    node.family = get_field<std::string>(n, "family", where);
    if (n.contains("group")) node.group = get_field<std::string>(n, "group", where);
    config.nodes.push_back(std::move(node));
  }
  config.fitness_nodes = get_field<std::vector<std::string>>(j, "fitness_nodes", "graph config");
  return config;
}

Json to_json(const GraphConfig& config) {
  Json nodes = Json::array();
  for (const auto& n : config.nodes) {
    Json e;
    e["id"] = n.id;
    if (n.predecessors.size() == 1) {
      e["predecessor"] = n.predecessors.front();
    } else {
      e["predecessor"] = n.predecessors;
    }
    e["family"] = n.family;
    if (n.group) e["group"] = *n.group;
    nodes.push_back(std::move(e));
  }
  Json j;
  j["nodes"] = std::move(nodes);
  j["fitness_nodes"] = config.fitness_nodes;
  return j;
}

ModelConfig model_config_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  const std::string where = "model config";
  ModelConfig config;
  config.covariates = get_field<std::vector<std::string>>(j, "covariates", where);
  if (j.contains("quadratic")) config.quadratic = get_field<bool>(j, "quadratic", where);
  if (j.contains("nuisance")) {
    for (const auto& b : get_field<Json>(j, "nuisance", where)) {
      ModelConfig::Block block;
      block.name = get_field<std::string>(b, "name", where + " nuisance block");
      block.nodes = get_field<std::vector<std::string>>(b, "nodes", where + " nuisance block " + block.name);
      config.nuisance.push_back(std::move(block));
    }
  }
  config.interest_nodes = get_field<std::vector<std::string>>(j, "interest_nodes", where);
  if (j.contains("offset")) config.offset = get_field<std::map<std::string, double>>(j, "offset", where);
  return config;
}

Json to_json(const ModelConfig& config) {
  Json j;
  j["covariates"] = config.covariates;
  j["quadratic"] = config.quadratic;
  Json blocks = Json::array();
  for (const auto& b : config.nuisance) blocks.push_back({{"name", b.name}, {"nodes", b.nodes}});
  j["nuisance"] = std::move(blocks);
  j["interest_nodes"] = config.interest_nodes;
  Json offset = Json::object();
  for (const auto& [node, a] : config.offset) offset[node] = a;
  j["offset"] = std::move(offset);
  return j;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

GraphConfig load_graph_config(const std::filesystem::path& path) { return graph_config_from_json(read_json(path)); }
void save_graph_config(const std::filesystem::path& path, const GraphConfig& config) {
  write_json(path, to_json(config));
}
ModelConfig load_model_config(const std::filesystem::path& path) { return model_config_from_json(read_json(path)); }
void save_model_config(const std::filesystem::path& path, const ModelConfig& config) {
  write_json(path, to_json(config));
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw ValidationError("CSV has no column \"" + name + "\"");
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ValidationError(source + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw ValidationError(source + ": missing header row");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return read_csv(in, path.string());
}

void write_csv(std::ostream& out, const CsvTable& table) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << cells[c];
    out << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  auto out = open_out(path);
  write_csv(out, table);
}

Dataset dataset_from_csv(const CsvTable& table, const Graph& graph) {
  const std::size_t id_col = table.column("id");
  const std::size_t node_col = table.column("node");
  const std::size_t value_col = table.column("value");
  if (id_col != 0 || node_col != 1 || value_col != 2) {
    throw ValidationError("data CSV columns must start with id,node,value");
  }
  const std::size_t N = graph.size();
  Dataset data;
  data.covariate_names.assign(table.header.begin() + 3, table.header.end());
  const std::size_t C = data.covariate_names.size();

  std::unordered_map<std::string, std::size_t> individual;
  std::vector<std::vector<double>> cov;
  std::vector<std::vector<double>> y;
  std::vector<std::vector<std::size_t>> line_of;  // individual x node, 0 = unseen

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "data line " + std::to_string(table.line_numbers[r]);
    const auto node = graph.index_of(row[node_col]);
    if (!node) throw ValidationError(where + ": unknown node \"" + row[node_col] + "\"");
    auto [it, fresh] = individual.try_emplace(row[id_col], data.ids.size());
    const std::size_t i = it->second;
    std::vector<double> z(C);
    for (std::size_t c = 0; c < C; ++c) z[c] = parse_double(row[3 + c], where);
    if (fresh) {
      data.ids.push_back(row[id_col]);
      cov.push_back(z);
      y.emplace_back(N, 0.0);
      line_of.emplace_back(N, 0);
    } else if (z != cov[i]) {
      throw ValidationError(where + ": covariates of individual " + row[id_col] + " differ from line " +
                            std::to_string(line_of[i][0] ? line_of[i][0] : table.line_numbers[r]));
    }
    if (line_of[i][*node]) {
      throw ValidationError(where + ": node " + row[node_col] + " of individual " + row[id_col] +
                            " already given on line " + std::to_string(line_of[i][*node]));
    }
    const double v = parse_double(row[value_col], where);
    if (!(v >= 0.0) || v != std::floor(v)) {
      throw ValidationError(where + ": response must be a nonnegative integer, got " + row[value_col]);
    }
    y[i][*node] = v;
    line_of[i][*node] = table.line_numbers[r];
  }

  const std::size_t n = data.ids.size();
  if (n == 0) throw ValidationError("data CSV has no rows");
  data.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(C));
  data.y.resize(static_cast<Eigen::Index>(n * N));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < C; ++c)
      data.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = cov[i][c];
    for (std::size_t j = 0; j < N; ++j) {
      if (!line_of[i][j]) throw ValidationError("individual " + data.ids[i] + " has no row for node " + graph.id(j));
      const int p = graph.predecessor(j);
      if (p >= 0 && y[i][j] > 0.0 && y[i][static_cast<std::size_t>(p)] == 0.0) {
        throw ValidationError("data line " + std::to_string(line_of[i][j]) + ": node " + graph.id(j) +
                              " is positive while its predecessor " + graph.id(static_cast<std::size_t>(p)) +
                              " (line " + std::to_string(line_of[i][static_cast<std::size_t>(p)]) + ") is zero");
      }
      if (graph.family(j) == Family::Bernoulli && p >= 0 && y[i][j] > y[i][static_cast<std::size_t>(p)]) {
        throw ValidationError("data line " + std::to_string(line_of[i][j]) + ": Bernoulli node " + graph.id(j) +
                              " exceeds its predecessor");
      }
      if (graph.family(j) == Family::Bernoulli && p < 0 && y[i][j] > 1.0) {
        throw ValidationError("data line " + std::to_string(line_of[i][j]) + ": Bernoulli node " + graph.id(j) +
                              " exceeds 1");
      }
      data.y[static_cast<Eigen::Index>(i * N + j)] = y[i][j];
    }
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path, const Graph& graph) {
  return dataset_from_csv(read_csv(path), graph);
}

CsvTable dataset_to_csv(const Dataset& data, const Graph& graph) {
  CsvTable t;
  t.header = {"id", "node", "value"};
  t.header.insert(t.header.end(), data.covariate_names.begin(), data.covariate_names.end());
  const std::size_t N = graph.size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      std::vector<std::string> row{data.ids[i], graph.id(j),
                                   format_double(data.y[static_cast<Eigen::Index>(i * N + j)])};
      for (Eigen::Index c = 0; c < data.covariates.cols(); ++c)
        row.push_back(format_double(data.covariates(static_cast<Eigen::Index>(i), c)));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data, const Graph& graph) {
  write_csv(path, dataset_to_csv(data, graph));
}

Eigen::MatrixXd read_profiles(const std::filesystem::path& path, const std::vector<std::string>& covariates) {
  const CsvTable t = read_csv(path);
  std::vector<std::size_t> cols;
  for (const auto& name : covariates) cols.push_back(t.column(name));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + " line " + std::to_string(t.line_numbers[r]);
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(t.rows[r][cols[c]], where);
  }
  if (out.rows() == 0) throw ValidationError(path.string() + ": no profiles");
  return out;
}

void write_profiles(const std::filesystem::path& path, const std::vector<std::string>& covariates,
                    const Eigen::MatrixXd& profiles) {
  CsvTable t;
  t.header = covariates;
  for (Eigen::Index r = 0; r < profiles.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < profiles.cols(); ++c) row.push_back(format_double(profiles(r, c)));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

CsvTable matrix_table(const std::vector<std::string>& names, const Eigen::MatrixXd& m) {
  CsvTable t;
  t.header = {"name"};
  t.header.insert(t.header.end(), names.begin(), names.end());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<std::string> row{names[static_cast<std::size_t>(r)]};
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(format_double(m(r, c)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json make_meta(std::uint64_t seed, const Json& config) {
  Json j;
  j["tool"] = "asterenv";
  j["version"] = ASTERENV_VERSION;
  j["seed"] = seed;
  j["config_hash"] = hex64(fnv1a(config.dump()));
  j["config"] = config;
  return j;
}

}  // namespace asterenv
