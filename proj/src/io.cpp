#include "gpinet/io.hpp"

#include "gpinet/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace gpinet::io {

namespace {

constexpr const char* kCsvHeader = "xs,ys,zs,xt,yt,zt,label";

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_real(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": '" + s + "' is not a number");
  }
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open '" + path.string() + "' for reading");
  return is;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open '" + path.string() + "' for writing");
  return os;
}

}  // namespace

void write_correspondences_csv(std::ostream& os, const CorrespondenceSet& c) {
  c.validate();
  os << kCsvHeader << '\n';
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 3; ++k) os << format_real(c.source(r, k)) << ',';
    for (int k = 0; k < 3; ++k) os << format_real(c.target(r, k)) << ',';
    if (c.labels) os << ((*c.labels)[i] ? '1' : '0');
    os << '\n';
  }
}

void save_correspondences_csv(const std::filesystem::path& path, const CorrespondenceSet& c) {
  auto os = open_out(path);
  write_correspondences_csv(os, c);
}

CorrespondenceSet read_correspondences_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kCsvHeader) {
    throw ParseError(std::string("correspondence CSV must start with header '") + kCsvHeader + "'");
  }
  std::vector<std::array<double, 6>> rows;
  std::vector<int> labels;  // -1 unlabeled
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 7) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 7 fields, got " +
                       std::to_string(fields.size()));
    }
    std::array<double, 6> row{};
    for (std::size_t k = 0; k < 6; ++k) row[k] = parse_real(trim(fields[k]), line_no);
    rows.push_back(row);
    const std::string label = trim(fields[6]);
    if (label.empty()) {
      labels.push_back(-1);
    } else if (label == "1" || label == "0") {
      labels.push_back(label == "1" ? 1 : 0);
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": label must be 0, 1 or empty");
    }
  }
  if (rows.empty()) throw ParseError("correspondence CSV contains no rows");

  CorrespondenceSet c;
  const auto n = static_cast<Eigen::Index>(rows.size());
  c.source.resize(n, 3);
  c.target.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (int k = 0; k < 3; ++k) {
      c.source(i, k) = row[static_cast<std::size_t>(k)];
      c.target(i, k) = row[static_cast<std::size_t>(k + 3)];
    }
  }
  const bool any_labeled = std::any_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
  const bool all_labeled = std::all_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
  if (any_labeled && !all_labeled) throw ParseError("correspondence CSV mixes labeled and unlabeled rows");
  if (all_labeled) {
    std::vector<bool> flags;
    for (int l : labels) flags.push_back(l == 1);
    c.labels = std::move(flags);
  }
  c.validate();
  return c;
}

CorrespondenceSet load_correspondences_csv(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_correspondences_csv(is);
}

nlohmann::json transform_to_json(const RigidTransform& t) {
  nlohmann::json j;
  std::vector<double> rot;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  }
  j["rotation"] = rot;
  j["translation"] = {t.translation[0], t.translation[1], t.translation[2]};
  return j;
}

RigidTransform transform_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rotation") || !j.contains("translation")) {
    throw ParseError("transform JSON needs 'rotation' and 'translation'");
  }
  const auto& rot = j.at("rotation");
  const auto& tr = j.at("translation");
  if (!rot.is_array() || rot.size() != 9 || !tr.is_array() || tr.size() != 3) {
    throw ParseError("transform JSON: rotation needs 9 values and translation 3");
  }
  RigidTransform t;
  try {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot.at(static_cast<std::size_t>(3 * r + c)).get<double>();
      t.translation[r] = tr.at(static_cast<std::size_t>(r)).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("transform JSON: ") + e.what());
  }
  if (!t.is_valid(1e-6)) throw ContractError("transform JSON: rotation is not a proper rotation");
  return t;
}

void save_transform_json(const std::filesystem::path& path, const RigidTransform& t) {
  auto os = open_out(path);
  os << transform_to_json(t).dump(2) << '\n';
}

RigidTransform load_transform_json(const std::filesystem::path& path) {
  auto is = open_in(path);
  try {
    return transform_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Points read_ply_points(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != "ply") throw ParseError("PLY: missing magic line");
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<std::string> vertex_props;
  std::size_t elements_before_vertex_lines = 0;
  bool ascii = false;
  while (std::getline(is, line)) {
    std::istringstream ss(trim(line));
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      in_vertex = name == "vertex";
      if (in_vertex) {
        vertex_count = count;
        seen_vertex = true;
      } else if (!seen_vertex) {
        elements_before_vertex_lines += count;
      }
    } else if (word == "property") {
      if (in_vertex) {
        std::string type, name;
        ss >> type;
        if (type == "list") throw ParseError("PLY: list properties on vertices are not supported");
        ss >> name;
        vertex_props.push_back(name);
      }
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw ParseError("PLY: only ASCII format is supported");
  if (!seen_vertex) throw ParseError("PLY: no vertex element");
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t k = 0; k < vertex_props.size(); ++k) {
    if (vertex_props[k] == "x") ix = static_cast<int>(k);
    if (vertex_props[k] == "y") iy = static_cast<int>(k);
    if (vertex_props[k] == "z") iz = static_cast<int>(k);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError("PLY: vertex element lacks x/y/z");
  for (std::size_t k = 0; k < elements_before_vertex_lines; ++k) std::getline(is, line);

  Points pts(static_cast<Eigen::Index>(vertex_count), 3);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(is, line)) throw ParseError("PLY: truncated vertex list");
    std::istringstream ss(line);
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (values.size() < vertex_props.size()) {
      throw ParseError("PLY: vertex " + std::to_string(i) + " has too few values");
    }
    const auto r = static_cast<Eigen::Index>(i);
    pts(r, 0) = values[static_cast<std::size_t>(ix)];
    pts(r, 1) = values[static_cast<std::size_t>(iy)];
    pts(r, 2) = values[static_cast<std::size_t>(iz)];
  }
  return pts;
}

Points load_ply_points(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_ply_points(is);
}

CorrespondenceSet correspondences_from_ply(const std::filesystem::path& source,
                                           const std::filesystem::path& target) {
  CorrespondenceSet c;
  c.source = load_ply_points(source);
  c.target = load_ply_points(target);
  c.validate();
  return c;
}

}  // namespace gpinet::io
