#pragma once

#include <httplib.h>

// <resolv.h>, pulled in by httplib, defines `_res` as a macro, which breaks
// Eigen's parameter names. httplib's own uses are already expanded here.
#ifdef _res
#undef _res
#endif
