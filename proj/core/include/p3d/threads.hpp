#pragma once

namespace p3d {

/// Caps the worker count used by slice-parallel loops. Values < 1 are ignored.
void set_max_threads(int n);
int max_threads();

}  // namespace p3d
