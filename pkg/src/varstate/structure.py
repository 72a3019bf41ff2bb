"""Structure parameters of nilpotent-Jordan state matrices.

A structure is described either by Jordan pairs ``[(r_g, l_g), ..., (r_1, l_1)]``
with strictly descending exponents ``r`` and sub-ranks ``l >= 1``, or by the
vector ``[d_1, ..., d_p]`` where ``d_i`` is the sub-rank attached to exponent
``i`` (zeros allowed, ``d_p > 0``).  The realized state matrix is the direct
sum of nilpotent Jordan blocks ``K(r, l) = J(0, r) (x) I_l`` in descending
exponent order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import StructureError


@dataclass(frozen=True)
class StructureParams:
    """Jordan structure of the state matrix, canonically stored as ``dvec``.

    ``dvec[i-1]`` is the sub-rank of exponent ``i``; the last entry must be
    positive.  Instances are immutable and hashable.
    """

    dvec: tuple[int, ...]

    def __post_init__(self):
        d = tuple(int(v) for v in self.dvec)
        if len(d) == 0:
            raise StructureError("dvec must be non-empty")
        if any(v < 0 for v in d):
            raise StructureError(f"dvec entries must be >= 0, got {d}")
        if d[-1] == 0:
            raise StructureError(f"dvec must end with a positive entry, got {d}")
        object.__setattr__(self, "dvec", d)

    @property
    def p(self) -> int:
        """Maximal exponent (the lag order of the realized model)."""
        return len(self.dvec)

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        """``[(r, d_r) for d_r > 0]`` in descending exponent order."""
        return tuple((i, d) for i, d in enumerate(self.dvec, start=1) if d > 0)[::-1]

    @property
    def lrank(self) -> int:
        """Total rank allocation: sum of all sub-ranks."""
        return sum(self.dvec)

    @property
    def n_min(self) -> int:
        """Dimension of the realized state matrix (McMillan degree)."""
        return sum(i * d for i, d in enumerate(self.dvec, start=1))

    def d(self, r: int) -> int:
        """Sub-rank of exponent ``r`` (0 when the block is absent)."""
        return self.dvec[r - 1] if 1 <= r <= self.p else 0

    def validate_for(self, k: int, m: int) -> None:
        """Raise unless the structure fits response/regressor dimensions."""
        h = min(k, m)
        if self.lrank > h:
            raise StructureError(
                f"total rank allocation {self.lrank} exceeds min(k, m) = {h}"
            )

    def __repr__(self):
        return f"StructureParams(pairs={list(map(list, self.pairs))})"


def structure_from_dvec(dvec) -> StructureParams:
    """Build a structure from the sub-rank vector ``[d_1, ..., d_p]``."""
    return StructureParams(tuple(int(v) for v in dvec))


def structure_from_pairs(pairs) -> StructureParams:
    """Build a structure from ``[(r, l), ...]`` pairs (any order, distinct r)."""
    pairs = [(int(r), int(l)) for r, l in pairs]
    if not pairs:
        raise StructureError("pairs must be non-empty")
    exps = [r for r, _ in pairs]
    if len(set(exps)) != len(exps):
        raise StructureError(f"duplicate exponents in {pairs}")
    if any(r < 1 or l < 1 for r, l in pairs):
        raise StructureError(f"exponents and sub-ranks must be >= 1, got {pairs}")
    p = max(exps)
    dvec = [0] * p
    for r, l in pairs:
        dvec[r - 1] = l
    return StructureParams(tuple(dvec))


def structure_to_json(structure: StructureParams) -> dict:
    """JSON form ``{"pairs": [[r, l], ...]}``."""
    return {"pairs": [list(pair) for pair in structure.pairs]}


def structure_from_json(obj) -> StructureParams:
    """Accept either ``{"pairs": ...}`` or ``{"dvec": ...}``."""
    if isinstance(obj, StructureParams):
        return obj
    if not isinstance(obj, dict):
        raise StructureError(f"structure JSON must be an object, got {type(obj)}")
    if "pairs" in obj:
        return structure_from_pairs(obj["pairs"])
    if "dvec" in obj:
        return structure_from_dvec(obj["dvec"])
    raise StructureError("structure JSON needs a 'pairs' or 'dvec' key")


class JordanSpec:
    """Realized block layout of a structure.

    Precomputes the row ranges of every sub-block so that the embedding,
    centralizer and LQ code can look them up cheaply.  State positions follow
    the Jordan matrix: within an exponent-``r`` group the coefficient
    sub-blocks run ``G_{r,r-1}, ..., G_{r,0}`` top-down, while the output-side
    sub-blocks (columns of ``H``, rows of the embedding) run
    ``H_{r,0}, ..., H_{r,r-1}``.
    """

    def __init__(self, structure: StructureParams):
        self.structure = structure
        self.blocks = structure.pairs  # (r, d_r), descending r
        self.n_min = structure.n_min
        self._offset = {}
        off = 0
        for r, d in self.blocks:
            self._offset[r] = off
            off += r * d
        g0 = []
        h0 = []
        for r, d in self.blocks:
            g0.extend(range(self._offset[r] + (r - 1) * d, self._offset[r] + r * d))
            h0.extend(range(self._offset[r], self._offset[r] + d))
        self.g0_rows = np.asarray(g0, dtype=int)
        self.h0_cols = np.asarray(h0, dtype=int)

    def g_slice(self, r: int, j: int) -> slice:
        """Rows of sub-block ``G_{r,j}`` (labels descend within a group)."""
        d = self.structure.d(r)
        if d == 0 or not 0 <= j < r:
            raise StructureError(f"no block ({r},{j}) in {self.structure}")
        start = self._offset[r] + (r - 1 - j) * d
        return slice(start, start + d)

    def k_slice(self, r: int, l: int) -> slice:
        """Rows of embedding block ``(r,l)``, equal to columns of ``H_{r,l}``."""
        d = self.structure.d(r)
        if d == 0 or not 0 <= l < r:
            raise StructureError(f"no block ({r},{l}) in {self.structure}")
        start = self._offset[r] + l * d
        return slice(start, start + d)


@lru_cache(maxsize=None)
def jordan_spec(structure: StructureParams) -> JordanSpec:
    return JordanSpec(structure)


def jordan_matrix(structure: StructureParams) -> np.ndarray:
    """Dense nilpotent Jordan matrix realizing the structure."""
    spec = jordan_spec(structure)
    n = spec.n_min
    F = np.zeros((n, n))
    for r, d in spec.blocks:
        off = spec._offset[r]
        for a in range(r - 1):
            rows = slice(off + a * d, off + (a + 1) * d)
            cols = slice(off + (a + 1) * d, off + (a + 2) * d)
            F[rows, cols] = np.eye(d)
    return F


def mcmillan_degree(structure: StructureParams) -> int:
    """Minimal state dimension ``sum_i r_i * l_i``."""
    return structure.n_min


def enumerate_structures(h: int, p: int) -> list[StructureParams]:
    """All structures with maximal exponent exactly ``p`` and rank sum <= ``h``.

    The list has exactly ``C(h + p - 1, p)`` entries, ordered by descending
    lexicographic comparison of ``(d_p, d_{p-1}, ..., d_1)`` so output is
    stable for tests and command-line diffs.
    """
    h = int(h)
    p = int(p)
    if h < 1 or p < 1:
        raise StructureError(f"h and p must be >= 1, got h={h}, p={p}")

    out: list[tuple[int, ...]] = []

    def extend(prefix, remaining, idx):
        if idx == p + 1:
            out.append(tuple(prefix))
            return
        lo = 1 if idx == p else 0
        for d in range(lo, remaining + 1):
            extend(prefix + [d], remaining - d, idx + 1)

    extend([], h, 1)
    out.sort(key=lambda dv: tuple(reversed(dv)), reverse=True)
    structures = [StructureParams(dv) for dv in out]
    assert len(structures) == math.comb(h + p - 1, p)
    return structures


def _tail_sums(structure: StructureParams) -> list[int]:
    """``[sum_{j>=i} d_j for i in 1..p]``."""
    d = structure.dvec
    tails = []
    acc = 0
    for v in reversed(d):
        acc += v
        tails.append(acc)
    return tails[::-1]


def param_reduction(structure: StructureParams, k: int, m: int) -> int:
    """Parameters saved versus an unrestricted lag-``p`` regression.

    Equals ``sum_i (k - t_i)(m - t_i)`` with ``t_i`` the tail sums of the
    sub-rank vector; counting free parameters of the factors and of the
    symmetry group gives the equivalent closed form
    ``p*m*k - (m+k) * sum_j j*d_j + sum_i t_i**2``.
    """
    structure.validate_for(k, m)
    return sum((k - t) * (m - t) for t in _tail_sums(structure))


def centralizer_dim(structure: StructureParams) -> int:
    """Parameter count of the invertible matrices commuting with the Jordan matrix."""
    return sum(t * t for t in _tail_sums(structure))
