#include "chemolb/io.hpp"

#include <fmt/format.h>
#include <fstream>

#include "chemolb/errors.hpp"

namespace chemolb {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

void write_fields_csv(const std::string& path, const Grid& grid, const std::vector<std::string>& names,
                      const std::vector<double>& fields) {
  const int N = grid.nodes();
  if (fields.size() != names.size() * static_cast<std::size_t>(N)) throw InternalError("field array size mismatch");
  auto out = open_out(path);
  out << "x,y";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (int node = 0; node < N; ++node) {
    out << format_double(grid.x(node)) << ',' << format_double(grid.y(node));
    for (std::size_t j = 0; j < names.size(); ++j) out << ',' << format_double(fields[j * N + node]);
    out << '\n';
  }
}

void write_fields_vtk(const std::string& path, const Grid& grid, const std::vector<std::string>& names,
                      const std::vector<double>& fields, const std::string& title) {
  const int N = grid.nodes();
  if (fields.size() != names.size() * static_cast<std::size_t>(N)) throw InternalError("field array size mismatch");
  auto out = open_out(path);
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET STRUCTURED_POINTS\n";
  out << fmt::format("DIMENSIONS {} {} 1\n", grid.nx, grid.ny);
  out << fmt::format("ORIGIN {} {} 0\n", format_double(0.5 * grid.h), format_double(0.5 * grid.h));
  out << fmt::format("SPACING {} {} 1\n", format_double(grid.h), format_double(grid.h));
  out << fmt::format("POINT_DATA {}\n", N);
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << "SCALARS " << names[j] << " double 1\nLOOKUP_TABLE default\n";
    for (int node = 0; node < N; ++node) out << format_double(fields[j * N + node]) << '\n';
  }
}

std::string iteration_csv_header() { return "k,J,grad_l2,grad_inf,step"; }

std::string iteration_csv_row(const IterationRecord& r) {
  return fmt::format("{},{},{},{},{}", r.k, format_double(r.J), format_double(r.grad_l2), format_double(r.grad_inf),
                     format_double(r.step));
}

void write_iterations_csv(const std::string& path, const std::vector<IterationRecord>& records) {
  auto out = open_out(path);
  out << iteration_csv_header() << '\n';
  for (const auto& r : records) out << iteration_csv_row(r) << '\n';
}

void write_controls_csv(const std::string& path, const ControlVector& f) {
  auto out = open_out(path);
  out << "slot,level,node,value\n";
  for (const auto& d : f.slots) {
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      int level = -1, node = -1;
      switch (d.support) {
        case Support::SpaceTime:
          level = static_cast<int>(i) / d.nodes;
          node = static_cast<int>(i) % d.nodes;
          break;
        case Support::Space: node = static_cast<int>(i); break;
        case Support::Time: level = static_cast<int>(i); break;
        case Support::Constant: break;
      }
      out << d.name << ',' << level << ',' << node << ',' << format_double(d.values[i]) << '\n';
    }
  }
}

}  // namespace chemolb
