"""Hot kernels (tree growing, elastic-net descent), compiled when available.

The Cython extensions are used when they import; otherwise the numpy twins
in :mod:`._pure` take over. Set ``CATCOUPON_PURE_PYTHON=1`` to force the
fallback.
"""
import os
from types import SimpleNamespace

from . import _pure

try:
    from . import _enet_core, _tree_core
except ImportError:  # extensions not built
    _compiled = None
else:
    _compiled = SimpleNamespace(
        build_tree=_tree_core.build_tree, build_hist_tree=_tree_core.build_hist_tree,
        apply_tree=_tree_core.apply_tree, enet_descent=_enet_core.enet_descent)

if _compiled is not None and os.environ.get("CATCOUPON_PURE_PYTHON", "") not in ("1", "true"):
    _backend = _compiled
    BACKEND = "compiled"
else:
    _backend = _pure
    BACKEND = "python"

build_tree = _backend.build_tree
build_hist_tree = _backend.build_hist_tree
apply_tree = _backend.apply_tree
enet_descent = _backend.enet_descent


def available_backends():
    names = {"python": _pure}
    if _compiled is not None:
        names["compiled"] = _compiled
    return names


def get_backend(name):
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available") from None
