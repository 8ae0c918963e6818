"""Hot-loop kernels: compiled extension when available, numpy fallback otherwise.

Set ``BLOCKCAST_PURE_PYTHON=1`` to force the fallback (useful for the
kernel equivalence tests and the comparison benchmark).
"""

import os

if os.environ.get("BLOCKCAST_PURE_PYTHON"):
    from . import _pykernels as impl

    COMPILED = False
else:
    try:
        from . import _ckernels as impl  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        from . import _pykernels as impl

        COMPILED = False

im2col = impl.im2col
col2im = impl.col2im
knn_mean_dists = impl.knn_mean_dists
dbscan_labels = impl.dbscan_labels
bev_scatter = impl.bev_scatter

__all__ = [
    "COMPILED",
    "im2col",
    "col2im",
    "knn_mean_dists",
    "dbscan_labels",
    "bev_scatter",
]
