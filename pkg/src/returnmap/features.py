"""Multivariate monomial feature libraries.

A library collects every monomial in d variables up to a maximum total
degree, ordered graded-lexicographically: ascending total degree, and within
a degree descending lexicographic order on the exponent vectors, so that for
d = 2, D = 2 the columns read [1, x, y, x^2, x*y, y^2].  This ordering is the
wire order for model files and must not change.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from math import comb

import numpy as np


@dataclass(frozen=True)
class FeatureLibrary:
    """Ordered monomial basis in `dimension` variables up to `max_degree`."""

    dimension: int
    max_degree: int
    terms: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def size(self) -> int:
        return len(self.terms)


def _exponents_of_degree(d: int, total: int):
    """Exponent vectors of one total degree, descending lexicographic."""
    if d == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _exponents_of_degree(d - 1, total - head):
            yield (head,) + tail


def build_library(dimension: int, max_degree: int) -> FeatureLibrary:
    """Complete graded-lex monomial list; term count is C(d + D, D)."""
    if dimension < 1:
        raise ValueError("library dimension must be >= 1")
    if max_degree < 1:
        raise ValueError("library max_degree must be >= 1")
    terms = []
    for total in range(max_degree + 1):
        terms.extend(_exponents_of_degree(dimension, total))
    lib = FeatureLibrary(dimension, max_degree, tuple(terms))
    assert len(lib.terms) == comb(dimension + max_degree, max_degree)
    return lib


def evaluate_library(lib: FeatureLibrary, x: np.ndarray) -> np.ndarray:
    """Evaluate all library terms row-wise: (m, d) states -> (m, p) features.

    Powers are built by repeated multiplication so every evaluation path in
    the package produces bit-identical columns.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, d = x.shape
    if d != lib.dimension:
        raise ValueError(
            f"state dimension {d} does not match library dimension {lib.dimension}"
        )
    if not np.isfinite(x).all():
        raise ValueError("non-finite entries in library input")
    # powers[k][:, e] = x_k ** e for e = 0 .. max_degree
    powers = np.empty((d, m, lib.max_degree + 1))
    powers[:, :, 0] = 1.0
    for e in range(1, lib.max_degree + 1):
        powers[:, :, e] = powers[:, :, e - 1] * x.T
    theta = np.empty((m, len(lib.terms)))
    for j, exps in enumerate(lib.terms):
        col = None
        for k, e in enumerate(exps):
            if e == 0:
                continue
            col = powers[k, :, e] if col is None else col * powers[k, :, e]
        theta[:, j] = 1.0 if col is None else col
    return theta


def term_name(exponents, var_names) -> str:
    """Canonical text for one monomial, e.g. `1`, `x`, `x^2*y`."""
    if len(var_names) != len(exponents):
        raise ValueError("var_names length must match exponent vector length")
    parts = []
    for name, e in zip(var_names, exponents):
        if e == 0:
            continue
        parts.append(name if e == 1 else f"{name}^{e}")
    return "*".join(parts) if parts else "1"


def term_names(lib: FeatureLibrary, var_names) -> list[str]:
    return [term_name(t, var_names) for t in lib.terms]


def default_var_names(dimension: int) -> tuple[str, ...]:
    if dimension <= 3:
        return ("x", "y", "z")[:dimension]
    return tuple(f"x{i + 1}" for i in range(dimension))


def library_fingerprint(lib: FeatureLibrary) -> str:
    """Short hash binding coefficient matrices to a library layout."""
    payload = f"grlex|d={lib.dimension}|D={lib.max_degree}|" + ";".join(
        ",".join(str(e) for e in t) for t in lib.terms
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
