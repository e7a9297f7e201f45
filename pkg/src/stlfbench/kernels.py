"""Pairwise similarity kernels.

One entry point, :func:`pairwise`, computes an N x N matrix over the rows of
a series block for one of the measures {euclidean, dtw, correntropy}.  The
reference implementation lives here in numpy; a native shared library with
the same contract can be loaded through :class:`NativeKernel` and is used
transparently when available (results must agree within 1e-9).
"""

from __future__ import annotations

import ctypes
import os
from pathlib import Path

import numpy as np

from .errors import DataError, KernelError

MEASURE_CODES = {"euclidean": 1, "dtw": 2, "correntropy": 3}

ABI_VERSION = 1
# Canonical description of the foreign-function contract; both sides hash it
# (FNV-1a 64) and the handshake refuses a mismatch.
ABI_SIGNATURE = (
    "stlf-kernel-abi-v1|desc{abi:u32,measure:u32,n:u64,t:u64,band:i64,sigma:f64}"
    "|pairwise(desc,data,out,err)->i32|codes{ok:0,nonfinite:1,measure:2,dims:3,band:4}"
)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


EXPECTED_ABI_HASH = fnv1a64(ABI_SIGNATURE)


# -- reference implementations ----------------------------------------------


def dtw_distance(a, b, band=None) -> float:
    """Classic dynamic-time-warping distance with absolute-difference cost.

    Steps are {match, insert, delete}; every visited cell contributes
    |a_i - b_j|.  ``band`` restricts the path to |i - j| <= band
    (Sakoe-Chiba); ``None`` leaves it unconstrained.  Computed over
    anti-diagonal wavefronts so each diagonal is one vector operation.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        raise DataError("dtw needs non-empty series")
    if band is not None and band < 0:
        raise DataError("dtw band must be >= 0")
    if band is not None and band < abs(la - lb):
        raise DataError(f"band {band} narrower than length gap {abs(la - lb)}")
    wide = la + lb  # effectively unbanded
    bw = wide if band is None else int(band)

    prev2 = prev1 = None
    lo2 = lo1 = 0
    for s in range(la + lb - 1):
        i_lo = max(0, s - lb + 1, (s - bw + 1) // 2)  # ceil((s-bw)/2)
        i_hi = min(s, la - 1, (s + bw) // 2)
        idx = np.arange(i_lo, i_hi + 1)
        cost = np.abs(a[idx] - b[s - idx])
        if s == 0:
            cur = cost
        else:
            best = _shifted(prev1, lo1, idx - 1)           # (i-1, j)
            np.minimum(best, _shifted(prev1, lo1, idx), best)   # (i, j-1)
            if prev2 is not None:
                np.minimum(best, _shifted(prev2, lo2, idx - 1), best)  # (i-1, j-1)
            cur = cost + best
        prev2, lo2 = prev1, lo1
        prev1, lo1 = cur, i_lo
    return float(prev1[-1])


def _shifted(vals, lo, wanted):
    out = np.full(wanted.shape, np.inf)
    mask = (wanted >= lo) & (wanted < lo + len(vals))
    out[mask] = vals[wanted[mask] - lo]
    return out


def reference_pairwise(series, measure, band=None, sigma=None) -> np.ndarray:
    """N x N pairwise matrix over the rows of ``series`` (shape N x T)."""
    series = np.ascontiguousarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[0] < 2 or series.shape[1] < 1:
        raise DataError(f"series block must be (N>=2, T>=1), got {series.shape}")
    if not np.isfinite(series).all():
        i, j = np.argwhere(~np.isfinite(series))[0]
        raise DataError(f"non-finite input at series {i}, step {j}")
    n = series.shape[0]
    out = np.zeros((n, n))
    if measure == "euclidean":
        for i in range(n - 1):
            diff = series[i + 1:] - series[i]
            out[i, i + 1:] = np.sqrt((diff * diff).sum(axis=1))
    elif measure == "dtw":
        for i in range(n - 1):
            for j in range(i + 1, n):
                out[i, j] = dtw_distance(series[i], series[j], band)
    elif measure == "correntropy":
        if sigma is None or sigma <= 0:
            raise DataError("correntropy requires sigma > 0")
        inv = 1.0 / (2.0 * sigma * sigma)
        for i in range(n - 1):
            diff = series[i + 1:] - series[i]
            out[i, i + 1:] = np.exp(-(diff * diff) * inv).mean(axis=1)
        np.fill_diagonal(out, 1.0)
    else:
        raise DataError(f"unknown measure {measure!r}")
    upper = np.triu(out, 1)
    out = upper + upper.T
    if measure == "correntropy":
        np.fill_diagonal(out, 1.0)
    return out


# -- native kernel -------------------------------------------------------------


class _JobDesc(ctypes.Structure):
    _fields_ = [
        ("abi_version", ctypes.c_uint32),
        ("measure", ctypes.c_uint32),
        ("n", ctypes.c_uint64),
        ("t", ctypes.c_uint64),
        ("band", ctypes.c_int64),
        ("sigma", ctypes.c_double),
    ]


class _ErrorInfo(ctypes.Structure):
    _fields_ = [
        ("code", ctypes.c_int32),
        ("row", ctypes.c_uint64),
        ("col", ctypes.c_uint64),
    ]


class NativeKernel:
    """ctypes wrapper around the optional native similarity kernel."""

    def __init__(self, path):
        self.path = str(path)
        lib = ctypes.CDLL(self.path)
        lib.stlf_kernel_version.restype = ctypes.c_char_p
        lib.stlf_kernel_abi_hash.restype = ctypes.c_uint64
        lib.stlf_pairwise.restype = ctypes.c_int32
        lib.stlf_pairwise.argtypes = [
            ctypes.POINTER(_JobDesc),
            ctypes.POINTER(ctypes.c_double),
            ctypes.POINTER(ctypes.c_double),
            ctypes.POINTER(_ErrorInfo),
        ]
        self._lib = lib
        got = int(lib.stlf_kernel_abi_hash())
        if got != EXPECTED_ABI_HASH:
            raise KernelError(
                f"kernel ABI hash mismatch: expected {EXPECTED_ABI_HASH:#x}, "
                f"got {got:#x} from {self.path}")

    def version(self) -> str:
        return self._lib.stlf_kernel_version().decode("ascii")

    def pairwise(self, series, measure, band=None, sigma=None) -> np.ndarray:
        series = np.ascontiguousarray(series, dtype=np.float64)
        n, t = series.shape
        out = np.zeros((n, n))
        desc = _JobDesc(
            abi_version=ABI_VERSION,
            measure=MEASURE_CODES[measure],
            n=n, t=t,
            band=-1 if band is None else int(band),
            sigma=0.0 if sigma is None else float(sigma),
        )
        err = _ErrorInfo()
        rc = self._lib.stlf_pairwise(
            ctypes.byref(desc),
            series.ctypes.data_as(ctypes.POINTER(ctypes.c_double)),
            out.ctypes.data_as(ctypes.POINTER(ctypes.c_double)),
            ctypes.byref(err),
        )
        if rc == 1:
            raise DataError(f"non-finite input at series {err.row}, step {err.col}")
        if rc != 0:
            raise KernelError(f"native kernel failed with code {rc}")
        return out


_NATIVE = None
_NATIVE_TRIED = False

ENV_KERNEL_PATH = "STLFBENCH_KERNEL"


def _default_kernel_paths():
    root = Path(__file__).resolve().parents[2]
    for profile in ("release", "debug"):
        yield root / "sim_kernel" / "target" / profile / "libsim_kernel.so"


def load_native(path=None, refresh=False):
    """Load (and cache) the native kernel; returns None when unavailable."""
    global _NATIVE, _NATIVE_TRIED
    if refresh:
        _NATIVE, _NATIVE_TRIED = None, False
    if _NATIVE_TRIED and path is None:
        return _NATIVE
    candidates = []
    if path is not None:
        candidates.append(Path(path))
    elif os.environ.get(ENV_KERNEL_PATH):
        candidates.append(Path(os.environ[ENV_KERNEL_PATH]))
    else:
        candidates.extend(_default_kernel_paths())
    for cand in candidates:
        if cand.is_file():
            kernel = NativeKernel(cand)  # raises KernelError on bad handshake
            if path is None:
                _NATIVE, _NATIVE_TRIED = kernel, True
            return kernel
    if path is not None:
        raise KernelError(f"no kernel library at {path}")
    _NATIVE, _NATIVE_TRIED = None, True
    return None


def pairwise(series, measure, band=None, sigma=None, prefer_native=True):
    """Dispatch to the native kernel when present, else the reference."""
    if measure not in MEASURE_CODES:
        raise DataError(f"unknown measure {measure!r}")
    kernel = load_native() if prefer_native else None
    if kernel is not None:
        return kernel.pairwise(series, measure, band=band, sigma=sigma)
    return reference_pairwise(series, measure, band=band, sigma=sigma)
