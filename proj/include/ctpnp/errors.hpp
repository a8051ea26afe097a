#pragma once

#include <stdexcept>
#include <string>

namespace ctpnp {

// Every failure raised by the library derives from Error. The CLI maps the
// concrete type onto an exit code (see tools/ctpnp.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CTPNP_DECLARE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    explicit Name(const std::string& what)   \
        : Error(#Name ": " + what) {}        \
  }

CTPNP_DECLARE_ERROR(GeometryError);
CTPNP_DECLARE_ERROR(ShapeError);
CTPNP_DECLARE_ERROR(RangeError);
CTPNP_DECLARE_ERROR(EmptyScan);
CTPNP_DECLARE_ERROR(NotShortScan);
CTPNP_DECLARE_ERROR(SpecError);
CTPNP_DECLARE_ERROR(ParamError);
CTPNP_DECLARE_ERROR(DataError);
CTPNP_DECLARE_ERROR(FormatError);
CTPNP_DECLARE_ERROR(MetricUndefined);
CTPNP_DECLARE_ERROR(DegenerateHistogram);
CTPNP_DECLARE_ERROR(NumericError);

#undef CTPNP_DECLARE_ERROR

}  // namespace ctpnp
