"""Plain-text covariance files.

Layout (whitespace separated, ``#`` starts a comment)::

    ncdoa-covariance 1
    kind sample
    K 2
    N 50
    M 2
    positions 0 0 6.5 0          (optional, relative sensor offsets)
    <re im re im>                (M rows, each with M real/imag pairs)
    <re im re im>
    M 2
    ...

Floats are written with ``repr`` so a save/load round trip is bit-exact.
"""
from __future__ import annotations

import numpy as np

from .geometry import ArrayGeometry, SubarrayGeometry
from .signals import CovarianceSet

__all__ = ["save_covariances", "load_covariances", "format_covariances", "parse_covariances"]

_MAGIC = "ncdoa-covariance"


def format_covariances(covset: CovarianceSet, array: ArrayGeometry | None = None) -> str:
    lines = [f"{_MAGIC} 1", f"kind {covset.kind}", f"K {len(covset)}",
             f"N {covset.n_snapshots if covset.n_snapshots is not None else 0}"]
    if array is not None and array.n_subarrays != len(covset):
        raise ValueError("geometry and covariance set disagree on K")
    for k, r in enumerate(covset.matrices):
        m = r.shape[0]
        lines.append(f"M {m}")
        if array is not None:
            pos = array.subarrays[k].relative_positions
            if pos.shape[0] != m:
                raise ValueError(f"subarray {k} size mismatch")
            lines.append("positions " + " ".join(repr(float(x)) for x in pos.ravel()))
        for row in r:
            lines.append(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
    return "\n".join(lines) + "\n"


def parse_covariances(text: str):
    """Parse file contents; returns ``(CovarianceSet, ArrayGeometry or None)``."""
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    it = iter(rows)

    def expect(key):
        try:
            tok = next(it)
        except StopIteration:
            raise ValueError(f"unexpected end of file, expected {key!r}") from None
        if tok[0] != key or len(tok) != 2:
            raise ValueError(f"expected '{key} <value>', got {' '.join(tok)!r}")
        return tok[1]

    if expect(_MAGIC) != "1":
        raise ValueError("unsupported covariance file version")
    kind = expect("kind")
    k = int(expect("K"))
    n = int(expect("N"))
    mats, positions = [], []
    for _ in range(k):
        m = int(expect("M"))
        tok = next(it, None)
        if tok is not None and tok[0] == "positions":
            vals = [float(x) for x in tok[1:]]
            if len(vals) != 2 * m:
                raise ValueError("positions line has the wrong length")
            positions.append(np.reshape(vals, (m, 2)))
            tok = next(it, None)
        r = np.empty((m, m), complex)
        for i in range(m):
            if tok is None:
                raise ValueError("unexpected end of file inside a matrix")
            vals = [float(x) for x in tok]
            if len(vals) != 2 * m:
                raise ValueError(f"matrix row has {len(vals)} numbers, expected {2 * m}")
            r[i] = np.asarray(vals[0::2]) + 1j * np.asarray(vals[1::2])
            tok = next(it, None) if i < m - 1 else None
        mats.append(r)
    if next(it, None) is not None:
        raise ValueError("trailing content after the last matrix")
    covset = CovarianceSet(mats, kind=kind, n_snapshots=n if n > 0 else None)
    array = None
    if positions:
        if len(positions) != k:
            raise ValueError("positions given for some subarrays only")
        array = ArrayGeometry(tuple(SubarrayGeometry(p) for p in positions))
    return covset, array


def save_covariances(path, covset: CovarianceSet, array: ArrayGeometry | None = None) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_covariances(covset, array))


def load_covariances(path):
    with open(path, encoding="ascii") as fh:
        return parse_covariances(fh.read())
