#include "ctpnp/errors.hpp"
