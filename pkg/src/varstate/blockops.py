"""Block-structured operations on the stacked coefficient matrix G.

Provides the lag-banded embedding ``kappa``, the centralizer of the Jordan
matrix (stored by its free wall blocks), the generalized LQ normalization,
minimality rank checks, and the orthogonal (C, O) parameterization of
normalized coefficient matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import RankDeficiencyError, StructureError, VarstateError
from .structure import StructureParams, jordan_spec

DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True)
class BlockMatrixG:
    """Stacked coefficient matrix with its block row map.

    Rows are grouped by descending exponent; inside an exponent-``r`` group
    the sub-blocks run ``G_{r,r-1}, ..., G_{r,0}`` top-down, each of height
    ``d_r``.
    """

    data: np.ndarray
    structure: StructureParams

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        if arr.ndim != 2:
            raise StructureError(f"G must be 2-D, got shape {arr.shape}")
        n = self.structure.n_min
        if arr.shape[0] != n:
            raise StructureError(
                f"G has {arr.shape[0]} rows, structure {self.structure} needs {n}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def block(self, r: int, j: int) -> np.ndarray:
        """Sub-block ``G_{r,j}`` of shape ``(d_r, m)``."""
        return self.data[jordan_spec(self.structure).g_slice(r, j)]

    def g0(self) -> np.ndarray:
        """The stacked ``G_{r,0}`` rows in descending exponent order."""
        return self.data[jordan_spec(self.structure).g0_rows]


@dataclass(frozen=True)
class RankReport:
    """Numerical rank of a minimality-critical block versus its requirement."""

    name: str
    required: int
    rank: int
    singular_values: tuple[float, ...]
    tol: float

    @property
    def ok(self) -> bool:
        return self.rank == self.required


def _numerical_rank(M: np.ndarray, tol: float):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s > tol * s[0])), s


def check_minimality_G(G: BlockMatrixG, tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """Rank report for the stacked ``G_{r,0}`` rows (must equal the rank sum)."""
    rank, s = _numerical_rank(G.g0(), tol)
    return RankReport("G[:,0]", G.structure.lrank, rank, tuple(s), tol)


def check_minimality_H(
    H: np.ndarray, structure: StructureParams, tol: float = DEFAULT_RANK_TOL
) -> RankReport:
    """Rank report for the ``H_{r,0}`` column selection (must equal the rank sum)."""
    H = np.asarray(H, dtype=float)
    spec = jordan_spec(structure)
    if H.ndim != 2 or H.shape[1] != spec.n_min:
        raise StructureError(
            f"H must be k x {spec.n_min} for structure {structure}, got {H.shape}"
        )
    rank, s = _numerical_rank(H[:, spec.h0_cols], tol)
    return RankReport("H[:,0]", structure.lrank, rank, tuple(s), tol)


def kappa(G: BlockMatrixG) -> np.ndarray:
    """Lag-banded embedding of ``G`` into an ``n_min x (p*m)`` matrix.

    Row blocks are indexed ``(r, l)`` with ``r`` descending and ``l``
    ascending inside each group; column blocks run from lag ``p`` down to
    lag ``1``.  Block ``(r, l)`` of column ``i`` holds ``G_{r,r-l-i}`` when
    ``i <= r - l`` and zero otherwise, so multiplying the stacked lagged
    regressors on the right yields the regressor of each ``H`` sub-block.
    """
    st = G.structure
    spec = jordan_spec(st)
    p, m = st.p, G.m
    K = np.zeros((spec.n_min, p * m))
    for r, _ in spec.blocks:
        for l in range(r):
            rows = spec.k_slice(r, l)
            for i in range(1, r - l + 1):
                cols = slice((p - i) * m, (p - i + 1) * m)
                K[rows, cols] = G.data[spec.g_slice(r, r - l - i)]
    return K


def kappa_adjoint(M: np.ndarray, structure: StructureParams, m: int) -> np.ndarray:
    """Adjoint of the embedding: the unique map with ``<kappa(e), M> = <e, adj(M)>``.

    Accumulates every placement of each sub-block back onto its source rows.
    """
    spec = jordan_spec(structure)
    p = structure.p
    M = np.asarray(M, dtype=float)
    if M.shape != (spec.n_min, p * m):
        raise StructureError(f"expected shape {(spec.n_min, p * m)}, got {M.shape}")
    out = np.zeros((spec.n_min, m))
    for r, _ in spec.blocks:
        for l in range(r):
            rows = spec.k_slice(r, l)
            for i in range(1, r - l + 1):
                cols = slice((p - i) * m, (p - i + 1) * m)
                out[spec.g_slice(r, r - l - i)] += M[rows, cols]
    return out


def kappa_operator(structure: StructureParams, m: int) -> np.ndarray:
    """Dense matrix of the embedding acting on row-major vectorized ``G``.

    Shape ``(n_min * p * m, n_min * m)``; used to assemble Hessians.
    """
    spec = jordan_spec(structure)
    p, n = structure.p, spec.n_min
    op = np.zeros((n * p * m, n * m))
    cols_idx = np.arange(m)
    for r, d in spec.blocks:
        for l in range(r):
            krow = spec.k_slice(r, l).start
            for i in range(1, r - l + 1):
                grow = spec.g_slice(r, r - l - i).start
                coff = (p - i) * m
                for a in range(d):
                    op[(krow + a) * p * m + coff + cols_idx, (grow + a) * m + cols_idx] = 1.0
    return op


@dataclass(frozen=True)
class CentralizerElement:
    """Element of the commutant of the Jordan matrix, stored by wall blocks.

    The free parameters are the blocks ``S_{rho1, j; rho2, 0}`` with ``j``
    running over ``max(0, rho1 - rho2) .. rho1 - 1``; every other block is a
    diagonal slide of a wall block or zero.  ``walls[(rho1, rho2)][j]`` is a
    ``d_{rho1} x d_{rho2}`` array.
    """

    structure: StructureParams
    walls: dict

    def __post_init__(self):
        st = self.structure
        exps = [r for r, _ in st.pairs]
        frozen = {}
        for r1 in exps:
            for r2 in exps:
                lo = max(0, r1 - r2)
                stored = self.walls.get((r1, r2), {})
                blocks = {}
                for j in range(lo, r1):
                    blk = np.array(stored.get(j, np.zeros((st.d(r1), st.d(r2)))), dtype=float)
                    if blk.shape != (st.d(r1), st.d(r2)):
                        raise StructureError(
                            f"wall ({r1},{j};{r2},0) must be {(st.d(r1), st.d(r2))}, "
                            f"got {blk.shape}"
                        )
                    blk.flags.writeable = False
                    blocks[j] = blk
                frozen[(r1, r2)] = blocks
        object.__setattr__(self, "walls", frozen)

    @property
    def param_count(self) -> int:
        return sum(b.size for blocks in self.walls.values() for b in blocks.values())

    def wall(self, r1: int, r2: int, j: int) -> np.ndarray | None:
        return self.walls.get((r1, r2), {}).get(j)

    def realize(self) -> np.ndarray:
        return realize_centralizer(self)


def realize_centralizer(S: CentralizerElement) -> np.ndarray:
    """Dense matrix of a centralizer element in state layout.

    Blocks slide diagonally: ``S_{r1,j1;r2,j2} = S_{r1,j1-j2;r2,0}`` when
    ``j1 >= j2`` and the wall index is free, zero otherwise.  The result
    commutes with the Jordan matrix of the structure.
    """
    st = S.structure
    spec = jordan_spec(st)
    out = np.zeros((spec.n_min, spec.n_min))
    exps = [r for r, _ in st.pairs]
    for r1 in exps:
        for r2 in exps:
            blocks = S.walls[(r1, r2)]
            for j1 in range(r1):
                for j2 in range(r2):
                    blk = blocks.get(j1 - j2)
                    if blk is not None:
                        out[spec.g_slice(r1, j1), spec.g_slice(r2, j2)] = blk
    return out


def random_centralizer(
    structure: StructureParams, rng: np.random.Generator, scale: float = 1.0
) -> CentralizerElement:
    """Random element with standard-normal walls (invertible a.s.)."""
    walls = {}
    for r1, d1 in structure.pairs:
        for r2, d2 in structure.pairs:
            lo = max(0, r1 - r2)
            walls[(r1, r2)] = {
                j: scale * rng.standard_normal((d1, d2)) for j in range(lo, r1)
            }
    return CentralizerElement(structure, walls)


def lq_multi_lag(
    G: BlockMatrixG,
    sign_normalize: bool = False,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> tuple[CentralizerElement, BlockMatrixG]:
    """Normalize ``G`` by a centralizer element (generalized Gram-Schmidt).

    Returns ``(S, G_o)`` with ``G_o = realize(S) @ G`` such that the stacked
    ``G_o_{r,0}`` rows are orthonormal and ``G_o_{r,l} @ G_o_{r1,0}' = 0`` for
    ``l > max(0, r - r1 - 1)``.  The diagonal wall of ``S`` is the inverse of
    the lower-triangular factor from an unpivoted Householder LQ of the
    stacked ``G_{r,0}`` rows, which fixes the output deterministically; the
    remaining walls are the unique solution of the orthogonality constraints.

    With ``sign_normalize=True`` the rows of each ``G_o_{r,0}`` are flipped so
    their first nonzero entry is positive (a diagonal orthogonal symmetry of
    the normalized set), and ``S`` is adjusted accordingly.
    """
    st = G.structure
    lr = st.lrank
    G0 = G.g0()
    rank, _ = _numerical_rank(G0, rank_tol)
    if rank < lr:
        raise RankDeficiencyError(
            f"G[:,0] has numerical rank {rank}, needs {lr}", rank=rank, required=lr
        )

    # LQ of the stacked (r,0) rows: G0 = L @ W0 with orthonormal W0 rows.
    Q, R = np.linalg.qr(G0.T)
    L = R.T
    W0 = Q.T
    S00 = sla.solve_triangular(L, np.eye(lr), lower=True)

    exps = [r for r, _ in st.pairs]  # descending
    dsz = {r: st.d(r) for r in exps}
    # row offset of exponent r inside the stacked (r,0) block
    off = {}
    acc = 0
    for r in exps:
        off[r] = acc
        acc += dsz[r]

    def seg(r):
        return slice(off[r], off[r] + dsz[r])

    walls: dict = {(r1, r2): {} for r1 in exps for r2 in exps}
    for r1 in exps:
        for r2 in exps:
            if r1 <= r2:
                walls[(r1, r2)][0] = S00[seg(r1), seg(r2)]

    # Solve walls level by level; at level j the blocks S_{r,j;r2,0} for
    # r2 >= r - j are the only unknowns and the constraint matrix is the
    # leading block of L.
    for j in range(1, st.p):
        for rho in exps:
            if rho - 1 < j:
                continue
            V = [r2 for r2 in exps if r2 >= max(1, rho - j)]
            nv = sum(dsz[r2] for r2 in V)
            # contribution of already-solved blocks (diagonal slides)
            Rpart = np.zeros((dsz[rho], G.m))
            for r2 in exps:
                for j2 in range(1, min(j, r2 - 1) + 1):
                    blk = walls[(rho, r2)].get(j - j2)
                    if blk is not None:
                        Rpart += blk @ G.data[jordan_spec(st).g_slice(r2, j2)]
            C = L[:nv, :nv]
            rhs = -(Rpart @ W0[:nv].T)
            X = np.linalg.solve(C.T, rhs.T).T
            col = 0
            for r2 in V:
                walls[(rho, r2)][j] = X[:, col : col + dsz[r2]]
                col += dsz[r2]

    S = CentralizerElement(st, walls)
    Go = realize_centralizer(S) @ G.data

    if sign_normalize:
        spec = jordan_spec(st)
        signs = np.ones(spec.n_min)
        for r, d in st.pairs:
            rows = Go[spec.g_slice(r, 0)]
            s = np.ones(d)
            for i in range(d):
                nz = np.nonzero(np.abs(rows[i]) > 1e-14)[0]
                if nz.size and rows[i, nz[0]] < 0:
                    s[i] = -1.0
            for l in range(r):
                signs[spec.g_slice(r, l)] = s
        Go = signs[:, None] * Go
        flipped = {
            key: {
                j: np.sign(signs[jordan_spec(st).g_slice(key[0], 0)])[:, None] * blk
                for j, blk in blocks.items()
            }
            for key, blocks in S.walls.items()
        }
        S = CentralizerElement(st, flipped)
    return S, BlockMatrixG(Go, st)


@dataclass(frozen=True)
class OrthoParam:
    """Orthogonal-coordinate form of a normalized coefficient matrix.

    ``O`` is an ``m x m`` orthogonal matrix whose leading rows are the
    ``G_o_{r,0}`` blocks (descending exponent) followed by a deterministic
    completion; ``C[(r, l)]`` holds the coefficients of ``G_o_{r,l}`` in the
    basis formed by the rows of exponents ``r-l-1 .. 1`` plus the completion.
    """

    structure: StructureParams
    O: np.ndarray
    C: dict

    def __post_init__(self):
        O = np.array(self.O, dtype=float)
        O.flags.writeable = False
        object.__setattr__(self, "O", O)
        frozen = {}
        for key, val in self.C.items():
            arr = np.array(val, dtype=float)
            arr.flags.writeable = False
            frozen[key] = arr
        object.__setattr__(self, "C", frozen)

    @property
    def m(self) -> int:
        return self.O.shape[1]


def _complete_orthonormal(rows: np.ndarray, m: int) -> np.ndarray:
    """Extend orthonormal rows to a full basis of R^m.

    Canonical basis vectors are orthogonalized in index order (two modified
    Gram-Schmidt passes) and kept whenever the residual is non-negligible, so
    the completion is deterministic.
    """
    lr = rows.shape[0]
    basis = [rows[i] for i in range(lr)]
    added = []
    for i in range(m):
        if len(basis) == m:
            break
        v = np.zeros(m)
        v[i] = 1.0
        for _ in range(2):
            for b in basis:
                v = v - (b @ v) * b
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            v = v / nrm
            basis.append(v)
            added.append(v)
    if len(basis) != m:
        raise VarstateError("orthonormal completion failed")  # pragma: no cover
    return np.array(added).reshape(m - lr, m)


def _stack_rows(structure, O_blocks, O_perp, r, l):
    """Basis rows spanning the admissible space of block ``(r, l)``."""
    parts = [O_blocks[rho] for rho in range(r - l - 1, 0, -1) if rho in O_blocks]
    parts.append(O_perp)
    return np.concatenate(parts, axis=0) if parts else O_perp


def parameterize(G_o: BlockMatrixG, tol: float = 1e-8) -> OrthoParam:
    """Extract the (C, O) coordinates of a normalized coefficient matrix.

    Fails if the input violates the orthogonality relations beyond ``tol``.
    """
    st = G_o.structure
    spec = jordan_spec(st)
    m = G_o.m
    G0 = G_o.g0()
    if np.max(np.abs(G0 @ G0.T - np.eye(st.lrank))) > tol:
        raise VarstateError("G_o[:,0] rows are not orthonormal within tolerance")

    O_perp = _complete_orthonormal(G0, m)
    O = np.concatenate([G0, O_perp], axis=0)

    O_blocks = {r: G_o.data[spec.g_slice(r, 0)] for r, _ in st.pairs}
    C = {}
    for r, d in st.pairs:
        for l in range(1, r):
            basis = _stack_rows(st, O_blocks, O_perp, r, l)
            blk = G_o.data[spec.g_slice(r, l)]
            coef = blk @ basis.T
            resid = blk - coef @ basis
            if np.max(np.abs(resid), initial=0.0) > tol * (1.0 + np.max(np.abs(blk), initial=0.0)):
                raise VarstateError(
                    f"block ({r},{l}) violates the orthogonality relations"
                )
            C[(r, l)] = coef
    return OrthoParam(st, O, C)


def reconstruct(param: OrthoParam, tol: float = 1e-8) -> BlockMatrixG:
    """Rebuild the normalized coefficient matrix from (C, O) coordinates."""
    st = param.structure
    spec = jordan_spec(st)
    m = param.m
    O = param.O
    if np.max(np.abs(O @ O.T - np.eye(O.shape[0]))) > tol:
        raise VarstateError("O is not orthogonal within tolerance")
    lr = st.lrank
    O_blocks = {}
    off = 0
    for r, d in st.pairs:
        O_blocks[r] = O[off : off + d]
        off += d
    O_perp = O[lr:]

    out = np.zeros((spec.n_min, m))
    for r, d in st.pairs:
        out[spec.g_slice(r, 0)] = O_blocks[r]
        for l in range(1, r):
            basis = _stack_rows(st, O_blocks, O_perp, r, l)
            coef = param.C.get((r, l), np.zeros((d, basis.shape[0])))
            if coef.shape != (d, basis.shape[0]):
                raise StructureError(
                    f"C[{r},{l}] must be {(d, basis.shape[0])}, got {coef.shape}"
                )
            out[spec.g_slice(r, l)] = coef @ basis
    return BlockMatrixG(out, st)
