"""cellscript: the small built-in cell language.

A brace-and-semicolon scripting language with functions, classes, and the
usual control flow, just big enough to exercise every cross-kernel feature
(calls, variables, instantiation, method dispatch, releases) without
depending on an external interpreter.  Kernels running cellscript are fully
in-process, which keeps the test suite hermetic.
"""

from .interp import CsError, CsObject, Interp, cs_format
from .syntax import CsSyntaxError, parse

__all__ = ["parse", "CsSyntaxError", "Interp", "CsError", "CsObject", "cs_format"]
