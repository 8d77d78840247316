"""Counter-based random streams.

Every random number in the package is addressed by ``(seed, index, stream,
position)``: a Philox generator keyed by ``(seed, index)`` with the stream tag
in the top counter word.  Any position can be fetched without generating the
preceding ones, so results never depend on how work is split across workers.
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53

# stream tags
MATRIX_REAL = 0
MATRIX_IMAG = 1
GP_THETA = 2
GP_Z = 3


def _key(seed: int, index: int) -> np.ndarray:
    return np.array([seed & _MASK64, index & _MASK64], dtype=np.uint64)


def uniforms(seed: int, index: int, start: int, count: int, stream: int = 0) -> np.ndarray:
    """Uniforms on the open interval (0, 1) at positions ``start .. start+count-1``."""
    if start < 0 or count < 0:
        raise ValueError("start and count must be nonnegative")
    block, offset = divmod(start, 4)
    counter = np.array([block, 0, 0, stream & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=_key(seed, index), counter=counter)
    raw = bitgen.random_raw(offset + count)[offset:]
    # (k + 1/2) 2^-53 never hits 0 or 1
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def normals(seed: int, index: int, start: int, count: int, stream: int = 0) -> np.ndarray:
    """Standard normals by inversion, one uniform per normal (position-addressable)."""
    return ndtri(uniforms(seed, index, start, count, stream))
