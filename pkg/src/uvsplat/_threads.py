"""Worker-count control via the GG_THREADS environment variable.

Must run before numba is first imported so the pool can be sized; later calls
only lower the active thread count. Results never depend on the count.
"""

import os
import warnings


def requested_threads():
    value = os.environ.get("GG_THREADS")
    if not value:
        return None
    n = int(value)
    if n < 1:
        raise ValueError("GG_THREADS must be a positive integer")
    return n


def configure_pool():
    # workqueue avoids probing an incompatible system TBB on import
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    n = requested_threads()
    if n is not None:
        os.environ.setdefault("NUMBA_NUM_THREADS", str(n))


def apply_thread_limit():
    import numba

    n = requested_threads()
    if n is not None:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
