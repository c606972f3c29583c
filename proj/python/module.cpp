#include <pybind11/pybind11.h>
PYBIND11_MODULE(_pcattn, m) { m.doc() = "wip"; }
