"""Prefix-scan sequence models.

Thin wrapper over the compiled extension: a generic prefix-scan engine with
bit-identical static (tree) and streaming (binary counter) evaluation, ten
affine recurrent layer kinds, and a chunked causal-attention model built on
the same scan machinery.
"""

try:
    from psm._psmcore import *  # noqa: F401,F403  (installed wheel layout)
    from psm._psmcore import __version__  # noqa: F401
except ImportError:  # cmake build tree: module sits on PYTHONPATH directly
    from _psmcore import *  # noqa: F401,F403
    from _psmcore import __version__  # noqa: F401
