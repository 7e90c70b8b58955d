"""Worker-count configuration shared by the compiled kernels and the FFTs."""
import os

_threads = None


def get_threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get("LIGHTRAY_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"LIGHTRAY_THREADS must be an integer, got {env!r}") from None
    return 1


def set_threads(n) -> int:
    """Set the worker count (None restores the environment default)."""
    global _threads
    _threads = None if n is None else max(1, int(n))
    k = get_threads()
    try:
        import numba
        numba.set_num_threads(min(k, numba.config.NUMBA_NUM_THREADS))
    except Exception:
        pass
    return k
