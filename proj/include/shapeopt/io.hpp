#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shapeopt/mesh.hpp"
#include "shapeopt/optimize.hpp"

namespace shapeopt {

/// Mesh text format: header "shapeopt-mesh v1", then "NV NT", NV lines "x y",
/// NT lines "i j k flag". Round-trips doubles exactly.
void write_mesh_text(std::ostream& os, const Mesh& mesh);
Mesh read_mesh_text(std::istream& is);
void write_mesh_text_file(const std::string& path, const Mesh& mesh);
Mesh read_mesh_text_file(const std::string& path);

/// VTK legacy ASCII export with the in_omega cell scalar and optional nodal
/// point data.
void write_vtk(const std::string& path, const Mesh& mesh,
               const std::vector<std::pair<std::string, const std::vector<double>*>>&
                   point_scalars = {});

void write_energy_csv(const std::string& path, const History& history);

/// Minimal polyline chart of the energy history, offset by `offset` when given
/// (the known minimiser energy) and by the smallest attained value otherwise.
void write_energy_svg(const std::string& path, const History& history,
                      std::optional<double> offset);

}  // namespace shapeopt
