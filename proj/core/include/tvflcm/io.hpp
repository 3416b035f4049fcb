#pragma once

// Wide functional-data files, grid sidecars and fitted-model persistence.
//
// Data file: header "id,time,delta", then scalar covariate names, then
// z_0001..z_J. One subject per line.

#include "tvflcm/functional.hpp"
#include "tvflcm/routes.hpp"
#include "tvflcm/survival_core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace tvflcm {

struct FunctionalDataset {
  std::vector<SurvivalRecord> records;
  FunctionalPredictor z;
  std::vector<std::string> scalar_names;
};

struct GridDefinition {
  std::vector<double> grid;
  std::vector<double> weights;
};

/// "uniform:J" -> midpoints of (0, 1] with weight 1/J. Anything else is a
/// sidecar path: one abscissa per line, optionally "u,w"; a non-numeric first
/// line is treated as a header.
GridDefinition resolve_grid(const std::string& option);
GridDefinition read_grid_sidecar(std::istream& in, const std::string& source);

FunctionalDataset read_functional_csv(std::istream& in, const GridDefinition& grid, const std::string& source);
FunctionalDataset read_functional_file(const std::string& path, const GridDefinition& grid);
void write_functional_csv(std::ostream& out, const FunctionalDataset& data);
void write_grid_sidecar(std::ostream& out, const GridDefinition& grid);

void save_model(std::ostream& out, const RouteFit& fit);
RouteFit load_model(std::istream& in);

}  // namespace tvflcm
