#pragma once

// Stacked landmark dataset: one row per (landmark s_l, subject alive and
// uncensored at s_l), administratively censored at s_l + w_l.

#include "tvflcm/functional.hpp"
#include "tvflcm/survival_core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tvflcm {

struct LandmarkGrid {
  std::vector<double> s;   // nondecreasing, >= 0
  std::vector<double> w;   // > 0, may be +inf

  std::size_t size() const { return s.size(); }
  void validate() const;

  /// s = start, start + step, ..., count points, all with window `window`.
  static LandmarkGrid partition(double start, double step, int count, double window);
};

struct StackedLandmarkData {
  std::vector<std::int64_t> id;
  std::vector<int> subject;          // index into the input records
  std::vector<double> capped_time;   // min(y, s_l + w_l)
  std::vector<int> d;
  std::vector<double> svec;
  std::vector<int> stratum;          // index into landmarks
  Eigen::MatrixXd x;                 // rows x p
  std::vector<double> umat;          // shared functional grid (J)
  Eigen::MatrixXd zmat;              // rows x J
  Eigen::MatrixXd lmat;              // rows x J
  Eigen::MatrixXd zlmat;             // zmat .* lmat

  std::vector<double> landmarks;     // kept landmark times
  std::vector<double> windows;
  std::vector<int> stratum_start;    // row offsets per kept landmark, size L + 1
  Eigen::MatrixXd z_means;           // L x J, filled by center_by_landmark
  bool centered = false;
  std::vector<std::string> warnings;

  std::size_t rows() const { return id.size(); }
  int strata() const { return static_cast<int>(landmarks.size()); }
  Eigen::MatrixXd smat() const;      // rows x J, every entry of row r equal to svec[r]
};

StackedLandmarkData build_landmark_dataset(std::span<const SurvivalRecord> records, const FunctionalPredictor& z,
                                           const LandmarkGrid& grid);

/// Subtracts the per-landmark column means of zmat and recomputes zlmat.
StackedLandmarkData center_by_landmark(StackedLandmarkData data);

/// Flat text: id,time,d,svec,x_1..x_p,u_1..u_J,z_1..z_J,l_1..l_J.
void write_stacked(std::ostream& out, const StackedLandmarkData& data);
StackedLandmarkData read_stacked(std::istream& in);

/// The two-subject illustration used in documentation.
struct LandmarkExample {
  std::vector<SurvivalRecord> records;
  FunctionalPredictor z;
  LandmarkGrid grid;
};
LandmarkExample two_subject_example();

/// All Table-layout columns (ID,T,d,X,svec,umat,zmat,smat,lmat,zlmat), rows
/// ordered by subject then landmark.
void write_table_layout(std::ostream& out, const StackedLandmarkData& data);

}  // namespace tvflcm
