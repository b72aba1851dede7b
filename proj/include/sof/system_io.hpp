#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sof/errors.hpp"
#include "sof/model.hpp"

namespace sof {

// System spec files are JSON objects with fields A, B, C, Q, R, X0, each a
// row-major nested array of numbers; dimensions are inferred.

inline MatrixXd parse_matrix(const nlohmann::json& j,
                             const std::string& field) {
  if (!j.contains(field))
    throw StructuralError("missing field '" + field + "'");
  const auto& arr = j.at(field);
  if (!arr.is_array() || arr.empty() || !arr.front().is_array())
    throw StructuralError("field '" + field +
                          "' must be a non-empty array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(arr.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(arr.front().size());
  MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = arr.at(static_cast<size_t>(i));
    if (!row.is_array() ||
        static_cast<Eigen::Index>(row.size()) != cols)
      throw StructuralError("field '" + field + "' row " + std::to_string(i) +
                            " has inconsistent length");
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto& v = row.at(static_cast<size_t>(k));
      if (!v.is_number())
        throw StructuralError("field '" + field + "' entry (" +
                              std::to_string(i) + "," + std::to_string(k) +
                              ") is not a number");
      M(i, k) = v.get<double>();
    }
  }
  return M;
}

inline LtiSystem parse_system(const nlohmann::json& j) {
  return LtiSystem(parse_matrix(j, "A"), parse_matrix(j, "B"),
                   parse_matrix(j, "C"), parse_matrix(j, "Q"),
                   parse_matrix(j, "R"), parse_matrix(j, "X0"));
}

inline LtiSystem load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open system file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw StructuralError("cannot parse '" + path + "': " + e.what());
  }
  return parse_system(j);
}

inline nlohmann::json matrix_to_json(const MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json system_to_json(const LtiSystem& sys) {
  return nlohmann::json{{"A", matrix_to_json(sys.A)},
                        {"B", matrix_to_json(sys.B)},
                        {"C", matrix_to_json(sys.C)},
                        {"Q", matrix_to_json(sys.Q)},
                        {"R", matrix_to_json(sys.R)},
                        {"X0", matrix_to_json(sys.X0)}};
}

// Gains on the command line: rows separated by ';', entries by ','.
// "9" is a 1x1 gain; "0,-1;0,-2" is 2x2.
inline MatrixXd parse_gain(const std::string& text, Eigen::Index m,
                           Eigen::Index d) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row_text;
  while (std::getline(ss, row_text, ';')) {
    std::vector<double> row;
    std::stringstream rs(row_text);
    std::string cell;
    while (std::getline(rs, cell, ',')) {
      size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw StructuralError("gain entry '" + cell + "' is not a number");
      }
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
      if (pos != cell.size())
        throw StructuralError("gain entry '" + cell + "' is not a number");
      row.push_back(v);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (static_cast<Eigen::Index>(rows.size()) != m)
    throw StructuralError("gain has " + std::to_string(rows.size()) +
                          " rows, system needs " + std::to_string(m));
  MatrixXd K(m, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<size_t>(i)].size()) != d)
      throw StructuralError("gain row " + std::to_string(i) + " has " +
                            std::to_string(rows[static_cast<size_t>(i)].size()) +
                            " entries, system needs " + std::to_string(d));
    for (Eigen::Index k = 0; k < d; ++k)
      K(i, k) = rows[static_cast<size_t>(i)][static_cast<size_t>(k)];
  }
  return K;
}

}  // namespace sof
