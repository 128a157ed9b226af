#pragma once

// File formats: the TLMX matrix binary and the plain CSV tables.

#include "excursion/crd.hpp"
#include "excursion/field.hpp"
#include "excursion/tlr.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace excursion {

// "TLMX", u64 rows, u64 cols (little-endian), row-major little-endian f64.
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

void write_geometry_csv(const std::filesystem::path& path, const Geometry& g);
Geometry read_geometry_csv(const std::filesystem::path& path);

// x,y,value
void write_field_csv(const std::filesystem::path& path, const Geometry& g,
                     const Eigen::VectorXd& values);
// Reads x,y,value; fills the geometry and returns the values.
Eigen::VectorXd read_field_csv(const std::filesystem::path& path, Geometry& g);

// One column named `header`.
void write_vector_csv(const std::filesystem::path& path, const std::string& header,
                      const Eigen::VectorXd& v);
Eigen::VectorXd read_vector_csv(const std::filesystem::path& path);

void write_rank_csv(const std::filesystem::path& path, const RankStats& s);
void write_confidence_csv(const std::filesystem::path& path, const Geometry& g,
                          const ConfidenceFunction& f);
void write_region_csv(const std::filesystem::path& path, const Geometry& g,
                      const ExcursionRegion& r);

// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv_line(const std::string& line);

} // namespace excursion
