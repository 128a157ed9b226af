#include "excursion/io.hpp"

#include "excursion/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>

namespace excursion {

namespace {

static_assert(std::endian::native == std::endian::little,
              "matrix I/O assumes a little-endian host");

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out)
        throw IoError("cannot open " + path.string() + " for writing");
    out.precision(17);
    return out;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in)
        throw IoError("cannot open " + path.string());
    return in;
}

void finish(std::ostream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out)
        throw IoError("write failed: " + path.string());
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    while (used < s.size() && (s[used] == ' ' || s[used] == '\r'))
        ++used;
    if (used == 0 || used != s.size())
        throw IoError(path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
    return v;
}

// Rows of numbers below a header; checks the column count.
std::vector<std::vector<double>> read_table(const std::filesystem::path& path,
                                            std::size_t columns) {
    auto in = open_in(path);
    std::string line;
    if (!std::getline(in, line))
        throw IoError(path.string() + ": empty file");
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != columns)
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(columns) + " columns");
        std::vector<double> row;
        for (const auto& c : cells)
            row.push_back(parse_double(c, path, lineno));
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    const std::string_view body =
        !line.empty() && line.back() == '\r' ? std::string_view(line).substr(0, line.size() - 1)
                                             : std::string_view(line);
    std::istringstream ss{std::string(body)};
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    if (!body.empty() && body.back() == ',')
        out.emplace_back();
    return out;
}

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    auto out = open_out(path, true);
    out.write("TLMX", 4);
    const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()),
                                   static_cast<std::uint64_t>(m.cols())};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.write(reinterpret_cast<const char*>(rm.data()),
              static_cast<std::streamsize>(rm.size() * sizeof(double)));
    finish(out, path);
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
    auto in = open_in(path, true);
    char magic[4];
    std::uint64_t dims[2];
    if (!in.read(magic, 4) || std::memcmp(magic, "TLMX", 4) != 0)
        throw IoError(path.string() + ": missing TLMX header");
    if (!in.read(reinterpret_cast<char*>(dims), sizeof dims))
        throw IoError(path.string() + ": truncated header");
    const auto size = std::filesystem::file_size(path);
    if (dims[0] > 0 && dims[1] > (size / 8) / dims[0])
        throw IoError(path.string() + ": dimensions exceed file size");
    if (size != 20 + dims[0] * dims[1] * 8)
        throw IoError(path.string() + ": size does not match " + std::to_string(dims[0]) + "x" +
                      std::to_string(dims[1]));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
        static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
    if (!in.read(reinterpret_cast<char*>(rm.data()),
                 static_cast<std::streamsize>(rm.size() * sizeof(double))))
        throw IoError(path.string() + ": truncated data");
    return rm;
}

void write_geometry_csv(const std::filesystem::path& path, const Geometry& g) {
    auto out = open_out(path);
    out << "x,y\n";
    for (const auto& p : g.points)
        out << p.x << ',' << p.y << '\n';
    finish(out, path);
}

Geometry read_geometry_csv(const std::filesystem::path& path) {
    Geometry g;
    for (const auto& r : read_table(path, 2))
        g.points.push_back({r[0], r[1]});
    return g;
}

void write_field_csv(const std::filesystem::path& path, const Geometry& g,
                     const Eigen::VectorXd& values) {
    if (static_cast<std::size_t>(values.size()) != g.size())
        throw ShapeError("write_field_csv: value count differs from geometry");
    auto out = open_out(path);
    out << "x,y,value\n";
    for (std::size_t i = 0; i < g.size(); ++i)
        out << g.points[i].x << ',' << g.points[i].y << ','
            << values(static_cast<Eigen::Index>(i)) << '\n';
    finish(out, path);
}

Eigen::VectorXd read_field_csv(const std::filesystem::path& path, Geometry& g) {
    const auto rows = read_table(path, 3);
    g.points.clear();
    Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        g.points.push_back({rows[i][0], rows[i][1]});
        v(static_cast<Eigen::Index>(i)) = rows[i][2];
    }
    return v;
}

void write_vector_csv(const std::filesystem::path& path, const std::string& header,
                      const Eigen::VectorXd& v) {
    auto out = open_out(path);
    out << header << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out << v(i) << '\n';
    finish(out, path);
}

Eigen::VectorXd read_vector_csv(const std::filesystem::path& path) {
    const auto rows = read_table(path, 1);
    Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = rows[i][0];
    return v;
}

void write_rank_csv(const std::filesystem::path& path, const RankStats& s) {
    auto out = open_out(path);
    out << "i,j,rank\n";
    for (const auto& t : s.tiles)
        out << t.i << ',' << t.j << ',' << t.rank << '\n';
    finish(out, path);
}

void write_confidence_csv(const std::filesystem::path& path, const Geometry& g,
                          const ConfidenceFunction& f) {
    if (static_cast<std::size_t>(f.f.size()) != g.size())
        throw ShapeError("write_confidence_csv: length differs from geometry");
    auto out = open_out(path);
    out << "x,y,marginal_p,f\n";
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << g.points[i].x << ',' << g.points[i].y << ',' << f.marginal(k) << ',' << f.f(k)
            << '\n';
    }
    finish(out, path);
}

void write_region_csv(const std::filesystem::path& path, const Geometry& g,
                      const ExcursionRegion& r) {
    if (r.mask.size() != g.size())
        throw ShapeError("write_region_csv: mask length differs from geometry");
    auto out = open_out(path);
    out << "x,y,in_region\n";
    for (std::size_t i = 0; i < g.size(); ++i)
        out << g.points[i].x << ',' << g.points[i].y << ',' << int(r.mask[i]) << '\n';
    finish(out, path);
}

} // namespace excursion
