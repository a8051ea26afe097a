// Thin numpy bindings. Geometries and configs cross the boundary as JSON
// text; the Python package wraps them as dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctpnp/config.hpp"
#include "ctpnp/defects.hpp"
#include "ctpnp/errors.hpp"
#include "ctpnp/io.hpp"
#include "ctpnp/metrics.hpp"
#include "ctpnp/parallel.hpp"
#include "ctpnp/pnp.hpp"
#include "ctpnp/projector.hpp"

namespace py = pybind11;
using namespace ctpnp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Volume to_volume(const Array& a, double voxel_size_mm) {
  if (a.ndim() != 3) throw ShapeError("volume arrays are (nz, ny, nx)");
  Volume v(Dims3{static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(1)),
                 static_cast<std::size_t>(a.shape(0))},
           voxel_size_mm);
  std::copy_n(a.data(), v.data.size(), v.data.begin());
  return v;
}

Array from_volume(const Volume& v) {
  Array a({v.dims.nz, v.dims.ny, v.dims.nx});
  std::copy(v.data.begin(), v.data.end(), a.mutable_data());
  return a;
}

ProjectionSet to_projections(const Array& a, const ConeBeamGeometry& g) {
  if (a.ndim() != 3) throw ShapeError("projection arrays are (views, rows, cols)");
  ProjectionSet p(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                  static_cast<std::size_t>(a.shape(2)), g.angles_deg);
  if (p.n_views != g.n_views() || p.det_rows != g.det_rows || p.det_cols != g.det_cols)
    throw ShapeError("projection array does not match the geometry");
  std::copy_n(a.data(), p.data.size(), p.data.begin());
  return p;
}

Array from_projections(const ProjectionSet& p) {
  Array a({p.n_views, p.det_rows, p.det_cols});
  std::copy(p.data.begin(), p.data.end(), a.mutable_data());
  return a;
}

ConeBeamGeometry geometry(const std::string& text) { return geometry_from_json(json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_ctpnp, m) {
  m.doc() = "Cone-beam CT reconstruction with a learned plug-and-play prior";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<SpecError>(m, "SpecError", base.ptr());

  m.def("set_thread_count", &set_thread_count);

  m.def("default_config", [] { return config_to_json(RunConfig{}).dump(); });
  m.def("with_views", [](const std::string& g, const std::string& kind, std::size_t n) {
    return geometry_to_json(with_views(geometry(g), parse_scan_kind(kind), n), true).dump();
  });

  m.def("forward_project", [](const Array& vol, const std::string& g) {
    const ConeBeamGeometry geom = geometry(g);
    return from_projections(forward_project(to_volume(vol, geom.voxel_size_mm), geom));
  });
  m.def("back_project", [](const Array& proj, const std::string& g) {
    const ConeBeamGeometry geom = geometry(g);
    return from_volume(back_project(to_projections(proj, geom), geom));
  });
  m.def("fdk", [](const Array& proj, const std::string& g, const std::string& window) {
    const ConeBeamGeometry geom = geometry(g);
    return from_volume(fdk_reconstruct(to_projections(proj, geom), geom, FilterSpec{parse_filter(window), 0}));
  });

  m.def("simulate", [](const std::string& cfg_text) {
    const RunConfig cfg = config_from_json(json::parse(cfg_text));
    const ScanPair p = simulate_pair(cfg.phantom, cfg.geometry, cfg.input_settings(), cfg.reference_settings(),
                                     cfg.noise.I0, cfg.noise.seed);
    py::list pores;
    for (const Defect& d : p.phantom.defects)
      pores.append(py::make_tuple(py::make_tuple(d.center_voxel[0], d.center_voxel[1], d.center_voxel[2]),
                                  d.diameter_mm));
    py::dict out;
    out["phantom"] = from_volume(p.phantom.volume);
    out["input"] = from_projections(p.input.projections);
    out["input_geometry"] = geometry_to_json(p.input.geom, true).dump();
    out["reference"] = from_projections(p.reference.projections);
    out["reference_geometry"] = geometry_to_json(p.reference.geom, true).dump();
    out["pores"] = pores;
    return out;
  });

  m.def("denoise", [](const Array& vol, const std::string& checkpoint) {
    return from_volume(denoise_volume(read_checkpoint(checkpoint), to_volume(vol, 1.0)));
  });
  m.def("pnp", [](const Array& proj, const std::string& g, const std::string& checkpoint, const std::string& cfg_text) {
    const ConeBeamGeometry geom = geometry(g);
    const RunConfig cfg = config_from_json(json::parse(cfg_text));
    const PnPResult r = pnp_reconstruct(to_projections(proj, geom), geom, read_checkpoint(checkpoint), cfg.pnp);
    py::list betas;
    for (const auto& it : r.trace.iterations) betas.append(it.beta);
    py::dict trace;
    trace["betas"] = betas;
    trace["denoiser_calls"] = r.trace.denoiser_calls;
    trace["selections"] = r.trace.selections;
    trace["cg_steps_total"] = r.trace.cg_steps_total;
    return py::make_tuple(from_volume(r.volume), trace);
  });

  m.def("nrmse", [](const Array& x, const Array& ref) { return nrmse(to_volume(x, 1.0), to_volume(ref, 1.0)); });
  m.def("ssim", [](const Array& x, const Array& ref) { return ssim(to_volume(x, 1.0), to_volume(ref, 1.0)); });
  m.def("otsu_threshold", [](const Array& x, std::size_t bins) { return otsu_threshold(to_volume(x, 1.0), bins); },
        py::arg("x"), py::arg("bins") = 256);
  m.def("otsu_split", &otsu_split);

  m.def("read_volume", [](const std::string& p) {
    const VolumeFile f = read_volume(p);
    return py::make_tuple(from_volume(f.volume), f.volume.voxel_size_mm);
  });
  m.def("write_volume", [](const std::string& p, const Array& vol, double voxel_size_mm) {
    write_volume(p, to_volume(vol, voxel_size_mm));
  });
}
