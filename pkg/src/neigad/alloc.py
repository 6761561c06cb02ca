"""Allocator tuning for long training loops.

Training allocates and frees several n-by-d arrays per epoch. With glibc's
default dynamic thresholds those blocks are repeatedly returned to the OS and
faulted back in, which costs about a fifth of the wall time at n=10k and makes
timings noisy. Pinning the thresholds keeps freed blocks in the heap.
"""
import ctypes
import ctypes.util

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3

_pinned = False


def pin_allocator(mmap_threshold: int = 64 << 20, trim_threshold: int = 256 << 20) -> bool:
    """Fix glibc's mmap and trim thresholds for this process. Returns False where unsupported.

    This is process-wide, so it is left to entry points (CLI, scripts, probes)
    rather than done on import.
    """
    global _pinned
    if _pinned:
        return True
    name = ctypes.util.find_library("c")
    if name is None:
        return False
    try:
        libc = ctypes.CDLL(name)
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    mallopt.argtypes = [ctypes.c_int, ctypes.c_int]
    mallopt.restype = ctypes.c_int
    ok = mallopt(_M_MMAP_THRESHOLD, mmap_threshold) == 1 and mallopt(_M_TRIM_THRESHOLD, trim_threshold) == 1
    _pinned = ok
    return ok
