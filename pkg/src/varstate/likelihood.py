"""Concentrated determinant-ratio likelihood for lag-structured regression.

After profiling out the output map and the noise covariance, the negative
log-likelihood of the structured model is
``log det(kappa(G) A kappa(G)') - log det(kappa(G) B kappa(G)')`` where
``B`` is the Gram matrix of the stacked lagged regressors and ``A`` is its
residual after projecting on the responses.  This module builds the lagged
data and moment matrices and evaluates the objective, its gradient and
Hessian, the least-squares output map, residual covariance, coefficient
reconstruction, and the banded-polynomial (product-regression) variant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .blockops import BlockMatrixG, kappa, kappa_adjoint, kappa_operator
from .errors import (
    DataError,
    LikelihoodDomainError,
    RankDeficiencyError,
    SingularMomentError,
    StructureError,
)
from .structure import StructureParams, jordan_spec


@dataclass(frozen=True)
class LagDataset:
    """Response matrix and stacked lagged regressors.

    ``Y`` is ``k x T`` (the first ``p`` samples of the raw responses are
    dropped); ``X_lag`` is ``(p*m) x T`` stacking the lag-``p`` block on top
    down to the lag-``1`` block.
    """

    Y: np.ndarray
    X_lag: np.ndarray
    p: int
    k: int
    m: int
    T: int

    def __post_init__(self):
        for name in ("Y", "X_lag"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def build_lag_data(X_f: np.ndarray, Y_f: np.ndarray, p: int) -> LagDataset:
    """Slice raw series (columns = time) into the lagged regression layout.

    The lag-``i`` block of the regressors skips the last ``i`` and the first
    ``p - i`` samples of ``X_f``; the responses skip the first ``p`` samples
    of ``Y_f``.
    """
    X_f = np.asarray(X_f, dtype=float)
    Y_f = np.asarray(Y_f, dtype=float)
    if X_f.ndim != 2 or Y_f.ndim != 2:
        raise DataError("X_f and Y_f must be 2-D (rows = series, columns = time)")
    if X_f.shape[1] != Y_f.shape[1]:
        raise DataError(
            f"X_f has {X_f.shape[1]} samples but Y_f has {Y_f.shape[1]}"
        )
    p = int(p)
    if p < 1:
        raise DataError(f"p must be >= 1, got {p}")
    total = X_f.shape[1]
    T = total - p
    if T <= 0:
        raise DataError(f"need more than p={p} samples, got {total}")
    m = X_f.shape[0]
    k = Y_f.shape[0]
    X_lag = np.concatenate(
        [X_f[:, p - i : total - i] for i in range(p, 0, -1)], axis=0
    )
    return LagDataset(Y=Y_f[:, p:], X_lag=X_lag, p=p, k=k, m=m, T=T)


@dataclass(frozen=True)
class MomentMatrices:
    """Gram matrices of the concentrated objective.

    ``B`` is the regressor Gram matrix, ``A = B - YX' (YY')^{-1} YX`` its
    projection residual; both are ``(p*m) x (p*m)`` and symmetric with
    ``B - A`` positive semidefinite.
    """

    A: np.ndarray
    B: np.ndarray
    YY: np.ndarray
    YX: np.ndarray
    T: int
    p: int
    m: int

    def __post_init__(self):
        for name in ("A", "B", "YY", "YX"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.YY.shape[0]


def moment_matrices(data: LagDataset) -> MomentMatrices:
    """Single-pass Gram computation (no centering; the model has no intercept)."""
    Y, X = data.Y, data.X_lag
    YY = Y @ Y.T
    YX = Y @ X.T
    B = X @ X.T
    w_yy = np.linalg.eigvalsh(YY)
    if w_yy[0] <= 1e-12 * max(w_yy[-1], 1e-300):
        raise SingularMomentError(
            "Y Y' is singular: need T >= k and responses of full row rank"
        )
    w_b = np.linalg.eigvalsh(B)
    if w_b[0] <= 1e-12 * max(w_b[-1], 1e-300):
        raise SingularMomentError(
            f"regressor Gram matrix is singular (T={data.T}, p*m={data.p * data.m}); "
            "increase the sample count"
        )
    cyy = sla.cho_factor(YY)
    A = B - YX.T @ sla.cho_solve(cyy, YX)
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    return MomentMatrices(A=A, B=B, YY=YY, YX=YX, T=data.T, p=data.p, m=data.m)


class _PdFactor:
    """Cholesky (or rescued eigen) factorization with a log-determinant."""

    def __init__(self, P, label, domain_error):
        self.P = P
        try:
            self._cho = sla.cho_factor(P)
            self.logdet = 2.0 * np.sum(np.log(np.diag(self._cho[0])))
        except np.linalg.LinAlgError:
            w = np.linalg.eigvalsh(P)
            if w[0] <= max(1e-300, 1e-14 * abs(w[-1])):
                raise domain_error(label)
            self._cho = None
            self.logdet = float(np.sum(np.log(w)))

    def solve(self, M):
        if self._cho is not None:
            return sla.cho_solve(self._cho, M)
        return np.linalg.solve(self.P, M)


class _EvalContext:
    """Factorizations at one coefficient matrix.

    The denominator factorization is always needed; the numerator one is
    computed lazily so that the least-squares output map stays available
    even when the objective is -inf (noise-free data).
    """

    def __init__(self, model, G: BlockMatrixG):
        mom = model.moments
        self._A = mom.A
        self.K = kappa(G)
        self.KB = self.K @ mom.B
        self.fB = _PdFactor(
            self.KB @ self.K.T,
            "kappa(G) B kappa(G)' is not positive definite; "
            "G[:,0] is likely rank deficient",
            RankDeficiencyError,
        )
        self._KA = None
        self._fA = None
        self._MA = None
        self._MB = None
        self._hessian = None

    @property
    def KA(self):
        if self._KA is None:
            self._KA = self.K @ self._A
        return self._KA

    @property
    def fA(self):
        if self._fA is None:
            self._fA = _PdFactor(
                self.KA @ self.K.T,
                "kappa(G) A kappa(G)' is singular: the objective diverges to -inf "
                "(the model interpolates the responses)",
                LikelihoodDomainError,
            )
        return self._fA

    @property
    def value(self):
        return self.fA.logdet - self.fB.logdet

    @property
    def MA(self):
        if self._MA is None:
            self._MA = self.fA.solve(self.KA)
        return self._MA

    @property
    def MB(self):
        if self._MB is None:
            self._MB = self.fB.solve(self.KB)
        return self._MB

    def gradient(self, model, G):
        return kappa_adjoint(2.0 * (self.MA - self.MB), G.structure, G.m)

    def hessian_matrix(self, model, G):
        if self._hessian is None:
            self._hessian = _assemble_hessian(model, G, self)
        return self._hessian


@dataclass
class ConcentratedModel:
    """Determinant-ratio objective for a fixed structure and moment pair.

    Evaluation, gradient and Hessian at the same ``G`` share one set of
    factorizations; the cache holds the most recent coefficient matrix, so
    use one model instance per optimizer thread.
    """

    structure: StructureParams
    moments: MomentMatrices
    _cache_key: bytes | None = field(default=None, repr=False)
    _cache_ctx: _EvalContext | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.structure is not None and self.structure.p != self.moments.p:
            raise StructureError(
                f"structure has p={self.structure.p} but moments were built "
                f"with p={self.moments.p}"
            )

    def context(self, G: BlockMatrixG) -> _EvalContext:
        key = G.data.tobytes()
        if key != self._cache_key:
            self._cache_ctx = _EvalContext(self, G)
            self._cache_key = key
        return self._cache_ctx


def concentrated_model(structure: StructureParams, data: LagDataset) -> ConcentratedModel:
    """Convenience constructor from a lagged dataset."""
    structure.validate_for(data.k, data.m)
    return ConcentratedModel(structure, moment_matrices(data))


def neg_log_lik(model: ConcentratedModel, G: BlockMatrixG) -> float:
    """``log det(kappa(G) A kappa(G)') - log det(kappa(G) B kappa(G)')``.

    Always <= 0 up to roundoff since ``A`` precedes ``B`` in the Loewner
    order.  Raises ``LikelihoodDomainError`` when the numerator Gram matrix
    is singular (objective -inf) and ``RankDeficiencyError`` when the
    denominator is (rank failure upstream).
    """
    return model.context(G).value


def gradient(model: ConcentratedModel, G: BlockMatrixG) -> np.ndarray:
    """Matrix ``D`` with ``<D, eta> = d/dt neg_log_lik(G + t*eta)`` at 0."""
    ctx = model.context(G)
    return ctx.gradient(model, G)


def hessian_bilinear(model: ConcentratedModel, G: BlockMatrixG, psi, eta) -> float:
    """Second directional derivative of the objective along ``(psi, eta)``."""
    ctx = model.context(G)
    psi = psi.data if isinstance(psi, BlockMatrixG) else np.asarray(psi, dtype=float)
    eta = eta.data if isinstance(eta, BlockMatrixG) else np.asarray(eta, dtype=float)
    Keta = kappa(BlockMatrixG(eta, G.structure))
    Kpsi = kappa(BlockMatrixG(psi, G.structure))
    total = 0.0
    for sign, U, fac, M in (
        (1.0, model.moments.A, ctx.fA, ctx.MA),
        (-1.0, model.moments.B, ctx.fB, ctx.MB),
    ):
        KpsiU = Kpsi @ U
        T1 = KpsiU @ ctx.K.T
        Pdot = T1 + T1.T
        term = fac.solve(KpsiU) - fac.solve(Pdot) @ M
        total += sign * 2.0 * float(np.sum(Keta * term))
    return total


def hessian_matrix(model: ConcentratedModel, G: BlockMatrixG) -> np.ndarray:
    """Assembled symmetric Hessian on row-major vectorized ``G`` (lazy)."""
    return model.context(G).hessian_matrix(model, G)


def _assemble_hessian(model, G, ctx) -> np.ndarray:
    """Kronecker assembly of the Hessian through the embedding operator."""
    st, m = G.structure, G.m
    n = st.n_min
    pm = st.p * m
    Kop = kappa_operator(st, m)
    idx = np.arange(n * pm)
    sigma = (idx % pm) * n + idx // pm  # vec(Psi) -> vec(Psi') permutation
    In = np.eye(n)
    HK = np.zeros((n * pm, n * pm))
    for sign, U, fac, KU, M in (
        (1.0, model.moments.A, ctx.fA, ctx.KA, ctx.MA),
        (-1.0, model.moments.B, ctx.fB, ctx.KB, ctx.MB),
    ):
        Pinv = fac.solve(In)
        HK += sign * 2.0 * (
            np.kron(Pinv, U) - np.kron(Pinv, M.T @ KU) - np.kron(M, M.T)[:, sigma]
        )
    H = Kop.T @ HK @ Kop
    return 0.5 * (H + H.T)


def optimal_H(model: ConcentratedModel, G: BlockMatrixG) -> np.ndarray:
    """Least-squares output map given ``G``: regress Y on ``kappa(G) X_lag``.

    Column blocks follow the embedding row order
    ``[H_{p,0} ... H_{p,p-1} ... H_{1,0}]``.
    """
    ctx = model.context(G)
    return ctx.fB.solve((model.moments.YX @ ctx.K.T).T).T


def residual_covariance(model: ConcentratedModel, G: BlockMatrixG, H: np.ndarray) -> np.ndarray:
    """``(Y - H kappa(G) X_lag)(Y - H kappa(G) X_lag)' / T`` from the Gram matrices."""
    mom = model.moments
    HK = np.asarray(H, dtype=float) @ model.context(G).K
    cross = HK @ mom.YX.T
    omega = (mom.YY - cross - cross.T + HK @ mom.B @ HK.T) / mom.T
    return 0.5 * (omega + omega.T)


def phi_from_hfg(H: np.ndarray, structure: StructureParams, G) -> list[np.ndarray]:
    """Lag coefficients ``Phi_1 .. Phi_p`` from the factored form.

    Uses the block convolution ``Phi_i = sum_{r>=i} sum_a H_{r,a} G_{r,r-i-a}``,
    which agrees with ``H F^{i-1} G`` for the realized Jordan matrix.
    """
    Gd = G.data if isinstance(G, BlockMatrixG) else np.asarray(G, dtype=float)
    H = np.asarray(H, dtype=float)
    spec = jordan_spec(structure)
    k = H.shape[0]
    m = Gd.shape[1]
    phis = []
    for i in range(1, structure.p + 1):
        phi = np.zeros((k, m))
        for r, _ in structure.pairs:
            if r < i:
                continue
            for a in range(0, r - i + 1):
                phi += H[:, spec.k_slice(r, a)] @ Gd[spec.g_slice(r, r - i - a)]
        phis.append(phi)
    return phis


@dataclass(frozen=True)
class VrwCoefficients:
    """Coefficients of the polynomial-product regression variant.

    ``B_coeffs = (B_0, ..., B_{p2})`` are the inner ``d x m`` polynomial
    coefficients; ``A_coeffs`` (when present) are the fitted outer ``k x d``
    coefficients ``A_0 .. A_{p1}``.  The stacked ``[B_{p2} ... B_0]`` must
    have full row rank for the concentrated objective to apply.
    """

    B_coeffs: tuple
    p1: int
    A_coeffs: tuple | None = None

    def __post_init__(self):
        bs = tuple(np.array(b, dtype=float) for b in self.B_coeffs)
        if not bs:
            raise DataError("B_coeffs must be non-empty")
        if any(b.shape != bs[0].shape for b in bs):
            raise DataError("all B coefficients must share one d x m shape")
        for b in bs:
            b.flags.writeable = False
        object.__setattr__(self, "B_coeffs", bs)
        if self.p1 < 0:
            raise DataError(f"p1 must be >= 0, got {self.p1}")

    @property
    def p2(self) -> int:
        return len(self.B_coeffs) - 1

    @property
    def d(self) -> int:
        return self.B_coeffs[0].shape[0]

    @property
    def m(self) -> int:
        return self.B_coeffs[0].shape[1]

    @property
    def p(self) -> int:
        return self.p1 + self.p2 + 1


def vrw_upsilon(B_coeffs, p1: int, p2: int | None = None) -> np.ndarray:
    """Banded stack of the inner polynomial coefficients.

    Row block ``i`` of the ``(p1+1) x (p1+p2+1)`` block layout places
    ``[B_{p2} ... B_0]`` starting at column block ``i``; it equals the
    leading row blocks of the lag-banded embedding of the corresponding
    single-block structure.
    """
    bs = [np.asarray(b, dtype=float) for b in B_coeffs]
    if p2 is None:
        p2 = len(bs) - 1
    if len(bs) != p2 + 1:
        raise DataError(f"expected {p2 + 1} B coefficients, got {len(bs)}")
    d, m = bs[0].shape
    p = p1 + p2 + 1
    out = np.zeros(((p1 + 1) * d, p * m))
    for i in range(p1 + 1):
        for j, B in enumerate(reversed(bs)):  # B_{p2} first
            cols = slice((i + j) * m, (i + j + 1) * m)
            out[i * d : (i + 1) * d, cols] = B
    return out


@dataclass
class VrwModel:
    """Moment pair for the polynomial-product variant (degrees fixed by p1)."""

    moments: MomentMatrices
    p1: int


def _vrw_context(model: VrwModel, coeffs: VrwCoefficients):
    if coeffs.p1 != model.p1:
        raise DataError(f"coefficients have p1={coeffs.p1}, model has p1={model.p1}")
    if coeffs.p != model.moments.p:
        raise DataError(
            f"degrees give p={coeffs.p} but moments were built with p={model.moments.p}"
        )
    U = vrw_upsilon(coeffs.B_coeffs, coeffs.p1)
    UB = U @ model.moments.B
    fB = _PdFactor(
        UB @ U.T,
        "stacked [B_p2 ... B_0] is rank deficient",
        RankDeficiencyError,
    )
    UA = U @ model.moments.A
    fA = _PdFactor(
        UA @ U.T,
        "polynomial-product objective diverges to -inf",
        LikelihoodDomainError,
    )
    return U, fA, fB


def vrw_neg_log_lik(model: VrwModel, coeffs: VrwCoefficients) -> float:
    """Concentrated objective with the banded stack in place of the embedding."""
    _, fA, fB = _vrw_context(model, coeffs)
    return fA.logdet - fB.logdet


def vrw_optimal_A(model: VrwModel, coeffs: VrwCoefficients) -> np.ndarray:
    """Least-squares outer coefficients ``[A_0 ... A_{p1}]`` stacked columnwise."""
    U, _, fB = _vrw_context(model, coeffs)
    return fB.solve((model.moments.YX @ U.T).T).T
