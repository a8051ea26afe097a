#include "ctpnp/defects.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "ctpnp/errors.hpp"
#include "ctpnp/metrics.hpp"

namespace ctpnp {

std::vector<unsigned char> body_mask(const Volume& vol, double threshold) {
  const Dims3 d = vol.dims;
  std::vector<unsigned char> outside(d.count(), 0);
  std::deque<std::size_t> q;
  auto seed = [&](std::size_t i, std::size_t j, std::size_t k) {
    const std::size_t idx = vol.index(i, j, k);
    if (!outside[idx] && vol.data[idx] < threshold) {
      outside[idx] = 1;
      q.push_back(idx);
    }
  };
  for (std::size_t k = 0; k < d.nz; ++k)
    for (std::size_t j = 0; j < d.ny; ++j)
      for (std::size_t i = 0; i < d.nx; ++i)
        if (i == 0 || j == 0 || k == 0 || i + 1 == d.nx || j + 1 == d.ny || k + 1 == d.nz) seed(i, j, k);
  while (!q.empty()) {
    const std::size_t idx = q.front();
    q.pop_front();
    const std::size_t i = idx % d.nx, j = (idx / d.nx) % d.ny, k = idx / d.slice_count();
    if (i > 0) seed(i - 1, j, k);
    if (i + 1 < d.nx) seed(i + 1, j, k);
    if (j > 0) seed(i, j - 1, k);
    if (j + 1 < d.ny) seed(i, j + 1, k);
    if (k > 0) seed(i, j, k - 1);
    if (k + 1 < d.nz) seed(i, j, k + 1);
  }
  for (auto& v : outside) v = v ? 0 : 1;
  return outside;
}

double equivalent_diameter(std::size_t voxel_count, double voxel_size_mm) {
  return 2.0 * std::cbrt(3.0 * static_cast<double>(voxel_count) / (4.0 * std::numbers::pi)) * voxel_size_mm;
}

std::vector<Component> extract_defects(const Volume& vol, double threshold, const std::vector<unsigned char>& mask) {
  const Dims3 d = vol.dims;
  if (mask.size() != d.count()) throw ShapeError("mask does not match the volume");
  std::vector<unsigned char> seen(d.count(), 0);
  std::vector<Component> out;
  auto candidate = [&](std::size_t idx) { return mask[idx] && vol.data[idx] < threshold && !seen[idx]; };
  for (std::size_t start = 0; start < d.count(); ++start) {
    if (!candidate(start)) continue;
    Component c;
    std::deque<std::size_t> q{start};
    seen[start] = 1;
    while (!q.empty()) {
      const std::size_t idx = q.front();
      q.pop_front();
      c.voxels.push_back(idx);
      const long i = static_cast<long>(idx % d.nx), j = static_cast<long>((idx / d.nx) % d.ny),
                 k = static_cast<long>(idx / d.slice_count());
      for (long dk = -1; dk <= 1; ++dk)
        for (long dj = -1; dj <= 1; ++dj)
          for (long di = -1; di <= 1; ++di) {
            const long a = i + di, b = j + dj, e = k + dk;
            if (a < 0 || b < 0 || e < 0 || a >= static_cast<long>(d.nx) || b >= static_cast<long>(d.ny) ||
                e >= static_cast<long>(d.nz))
              continue;
            const std::size_t n = vol.index(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                            static_cast<std::size_t>(e));
            if (candidate(n)) {
              seen[n] = 1;
              q.push_back(n);
            }
          }
    }
    std::sort(c.voxels.begin(), c.voxels.end());
    for (std::size_t idx : c.voxels) {
      c.centroid[0] += static_cast<double>(idx % d.nx);
      c.centroid[1] += static_cast<double>((idx / d.nx) % d.ny);
      c.centroid[2] += static_cast<double>(idx / d.slice_count());
    }
    for (double& v : c.centroid) v /= static_cast<double>(c.voxels.size());
    c.equivalent_diameter_mm = equivalent_diameter(c.voxels.size(), vol.voxel_size_mm);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<GroundTruthPore> ground_truth_pores(const std::vector<Defect>& defects, Dims3 dims,
                                                double voxel_size_mm) {
  std::vector<GroundTruthPore> out;
  for (const Defect& df : defects) {
    GroundTruthPore p{df.center_voxel, df.diameter_mm, defect_voxels(df, dims, voxel_size_mm)};
    std::sort(p.voxels.begin(), p.voxels.end());
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::size_t overlap(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t n = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

std::optional<std::size_t> bin_of(const std::vector<double>& edges, double v) {
  for (std::size_t b = 0; b + 1 < edges.size(); ++b)
    if (v >= edges[b] && v < edges[b + 1]) return b;
  return std::nullopt;
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

DefectReport recall_precision(std::vector<GroundTruthPore> gt, std::vector<Component> detected,
                              const std::vector<double>& bin_edges_mm, const MatchRule& rule) {
  if (bin_edges_mm.size() < 2) throw ParamError("need at least two bin edges");
  for (std::size_t i = 1; i < bin_edges_mm.size(); ++i)
    if (!(bin_edges_mm[i] > bin_edges_mm[i - 1])) throw ParamError("bin edges must be strictly increasing");
  for (auto& g : gt) std::sort(g.voxels.begin(), g.voxels.end());
  for (auto& c : detected) std::sort(c.voxels.begin(), c.voxels.end());

  DefectReport r;
  std::vector<char> gt_found(gt.size(), 0), det_true(detected.size(), 0);
  for (std::size_t g = 0; g < gt.size(); ++g)
    for (std::size_t c = 0; c < detected.size(); ++c) {
      const std::size_t shared = overlap(gt[g].voxels, detected[c].voxels);
      if (shared == 0) continue;
      if (rule.min_iou > 0.0) {
        const double uni = static_cast<double>(gt[g].voxels.size() + detected[c].voxels.size() - shared);
        if (static_cast<double>(shared) / uni < rule.min_iou) continue;
      }
      gt_found[g] = 1;
      det_true[c] = 1;
      r.matches.push_back({g, c});
    }

  r.bin_edges_mm = bin_edges_mm;
  r.bins.resize(bin_edges_mm.size() - 1);
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    r.bins[b].lo_mm = bin_edges_mm[b];
    r.bins[b].hi_mm = bin_edges_mm[b + 1];
  }
  for (std::size_t g = 0; g < gt.size(); ++g)
    if (auto b = bin_of(bin_edges_mm, gt[g].diameter_mm)) {
      r.bins[*b].n_gt += 1;
      r.bins[*b].n_gt_found += gt_found[g];
    }
  for (std::size_t c = 0; c < detected.size(); ++c)
    if (auto b = bin_of(bin_edges_mm, detected[c].equivalent_diameter_mm)) {
      r.bins[*b].n_det += 1;
      r.bins[*b].n_det_true += det_true[c];
    }
  for (auto& bin : r.bins) {
    bin.recall = ratio(bin.n_gt_found, bin.n_gt);
    bin.precision = ratio(bin.n_det_true, bin.n_det);
  }
  r.recall = ratio(static_cast<std::size_t>(std::count(gt_found.begin(), gt_found.end(), 1)), gt.size());
  r.precision =
      ratio(static_cast<std::size_t>(std::count(det_true.begin(), det_true.end(), 1)), detected.size());
  r.ground_truth = std::move(gt);
  r.detected = std::move(detected);
  return r;
}

DefectReport detect_and_score(const Volume& recon, const std::vector<Defect>& truth,
                              const std::vector<double>& bin_edges_mm, const MatchRule& rule) {
  const double t = otsu_threshold(recon);
  const auto mask = body_mask(recon, t);
  return recall_precision(ground_truth_pores(truth, recon.dims, recon.voxel_size_mm),
                          extract_defects(recon, t, mask), bin_edges_mm, rule);
}

std::vector<double> default_bin_edges(double voxel_size_mm) {
  std::vector<double> e;
  for (double m : {1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0}) e.push_back(m * voxel_size_mm);
  return e;
}

}  // namespace ctpnp
