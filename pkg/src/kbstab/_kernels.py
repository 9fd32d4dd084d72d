"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``KBSTAB_PURE_PYTHON=1``
to force the pure-Python reference implementation.
"""

import os

from . import _pykernels as python_backend

if os.environ.get("KBSTAB_PURE_PYTHON", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

lcs_length = _impl.lcs_length
edit_similarity = _impl.edit_similarity
unmatched_mask = _impl.unmatched_mask
ngram_counts = _impl.ngram_counts
gaussian_kde_sum = _impl.gaussian_kde_sum
unescape = _impl.unescape
parse_fact_rows = _impl.parse_fact_rows
