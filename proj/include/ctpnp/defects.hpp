#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "ctpnp/simulator.hpp"
#include "ctpnp/types.hpp"

namespace ctpnp {

/// Foreground (value >= threshold) plus every enclosed hole: the complement
/// of the below-threshold region 6-connected to the volume border.
std::vector<unsigned char> body_mask(const Volume& vol, double threshold);

struct Component {
  std::vector<std::size_t> voxels;  // flat indices, ascending
  Vec3 centroid{};                  // voxel index coordinates (i, j, k)
  double equivalent_diameter_mm = 0.0;
};

double equivalent_diameter(std::size_t voxel_count, double voxel_size_mm);

/// 26-connected components of {value < threshold} inside the mask, ordered
/// by their smallest flat index.
std::vector<Component> extract_defects(const Volume& vol, double threshold, const std::vector<unsigned char>& mask);

struct GroundTruthPore {
  Vec3 center_voxel{};
  double diameter_mm = 0.0;
  std::vector<std::size_t> voxels;  // flat indices, ascending
};

std::vector<GroundTruthPore> ground_truth_pores(const std::vector<Defect>& defects, Dims3 dims,
                                                double voxel_size_mm);

struct MatchRule {
  /// Extra requirement on top of sharing one voxel; 0 disables it.
  double min_iou = 0.0;
};

struct DiameterBin {
  double lo_mm = 0.0, hi_mm = 0.0;  // [lo, hi)
  std::size_t n_gt = 0, n_gt_found = 0;
  std::size_t n_det = 0, n_det_true = 0;
  std::optional<double> recall;     // undefined when n_gt == 0
  std::optional<double> precision;  // undefined when n_det == 0
};

struct Match {
  std::size_t gt = 0;
  std::size_t component = 0;
};

struct DefectReport {
  std::vector<GroundTruthPore> ground_truth;
  std::vector<Component> detected;
  std::vector<Match> matches;
  std::vector<double> bin_edges_mm;
  std::vector<DiameterBin> bins;
  std::optional<double> recall;  // over all pores
  std::optional<double> precision;
};

DefectReport recall_precision(std::vector<GroundTruthPore> gt, std::vector<Component> detected,
                              const std::vector<double>& bin_edges_mm, const MatchRule& rule = {});

/// Otsu threshold, body mask, extraction and scoring in one call.
DefectReport detect_and_score(const Volume& recon, const std::vector<Defect>& truth,
                              const std::vector<double>& bin_edges_mm, const MatchRule& rule = {});

/// Edges at multiples of the voxel size: 1, 2, 3, 4, 6, 8, 12 voxels.
std::vector<double> default_bin_edges(double voxel_size_mm);

}  // namespace ctpnp
