#pragma once

#include <string>
#include <vector>

#include "chemolb/lattice.hpp"
#include "chemolb/model.hpp"
#include "chemolb/optimizer.hpp"

namespace chemolb {

// Columns x,y then one per field; fields are SoA (fields[j * nodes + node]).
void write_fields_csv(const std::string& path, const Grid& grid, const std::vector<std::string>& names,
                      const std::vector<double>& fields);
// Legacy VTK STRUCTURED_POINTS, one SCALARS block per field.
void write_fields_vtk(const std::string& path, const Grid& grid, const std::vector<std::string>& names,
                      const std::vector<double>& fields, const std::string& title = "chemolb fields");
// Columns k,J,grad_l2,grad_inf,step.
void write_iterations_csv(const std::string& path, const std::vector<IterationRecord>& records);
std::string iteration_csv_header();
std::string iteration_csv_row(const IterationRecord& r);
// Columns slot,level,node,value; levels/nodes are -1 where the support is reduced.
void write_controls_csv(const std::string& path, const ControlVector& f);

std::string format_double(double v);

}  // namespace chemolb
