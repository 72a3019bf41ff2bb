"""Random stable model generation and path simulation.

Models are drawn with i.i.d. normal factors, the coefficient matrix is
LQ-normalized (which makes the rank conditions hold almost surely), and the
output map is shrunk until the companion matrix of the realized lag
polynomial is stable.  Shrinking the output map scales every lag coefficient
equally, so the structure is preserved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blockops import BlockMatrixG, check_minimality_G, check_minimality_H, lq_multi_lag
from .errors import DataError, StructureError, VarstateError
from .likelihood import phi_from_hfg
from .structure import StructureParams, jordan_matrix

STABILITY_MARGIN = 1e-8


@dataclass(frozen=True)
class GeneratedModel:
    """A structured model drawn at random, stable in the autoregressive case."""

    structure: StructureParams
    H: np.ndarray
    F: np.ndarray
    G: BlockMatrixG
    Phi: list
    Omega_gen: np.ndarray
    seed: int

    @property
    def k(self) -> int:
        return self.H.shape[0]

    @property
    def m(self) -> int:
        return self.G.m

    @property
    def p(self) -> int:
        return self.structure.p


def companion_matrix(phis) -> np.ndarray:
    """``pk x pk`` companion matrix of the lag polynomial (square coefficients)."""
    phis = [np.asarray(P, dtype=float) for P in phis]
    k = phis[0].shape[0]
    if any(P.shape != (k, k) for P in phis):
        raise DataError("companion matrix needs square lag coefficients")
    p = len(phis)
    C = np.zeros((p * k, p * k))
    C[:k] = np.concatenate(phis, axis=1)
    if p > 1:
        C[k:, :-k] = np.eye((p - 1) * k)
    return C


def is_stable(phis, margin: float = STABILITY_MARGIN) -> tuple[bool, float]:
    """Spectral-radius stability test of the autoregressive recursion."""
    radius = float(np.max(np.abs(np.linalg.eigvals(companion_matrix(phis)))))
    return radius < 1.0 - margin, radius


def random_stable_model(
    structure: StructureParams,
    k: int,
    m: int,
    seed: int = 0,
    target_radius: float = 0.7,
    omega: np.ndarray | None = None,
) -> GeneratedModel:
    """Draw a structured model that passes both minimality rank checks.

    In the autoregressive case (``k == m``) the output map is rescaled until
    the companion spectral radius is below one.  Deterministic given the seed.
    """
    structure.validate_for(k, m)
    rng = np.random.default_rng(seed)
    if omega is None:
        omega = np.eye(k)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (k, k):
        raise DataError(f"noise covariance must be {k} x {k}")

    for _ in range(50):
        draw = rng.standard_normal((structure.n_min, m))
        try:
            _, G = lq_multi_lag(BlockMatrixG(draw, structure))
        except VarstateError:
            continue
        H = rng.standard_normal((k, structure.n_min))
        phis = phi_from_hfg(H, structure, G)
        if k == m:
            for _ in range(100):
                stable, radius = is_stable(phis)
                if stable:
                    break
                H = H * (target_radius / radius)
                phis = phi_from_hfg(H, structure, G)
            else:  # pragma: no cover
                continue
        if not check_minimality_G(G).ok:
            continue
        if not check_minimality_H(H, structure).ok:
            continue
        return GeneratedModel(
            structure=structure,
            H=H,
            F=jordan_matrix(structure),
            G=G,
            Phi=phis,
            Omega_gen=omega,
            seed=seed,
        )
    raise VarstateError(  # pragma: no cover
        f"could not draw a valid model for {structure} with k={k}, m={m}"
    )


def simulate(
    model: GeneratedModel,
    T: int,
    seed: int = 0,
    burn_in: int = 100,
    mode: str | None = None,
    noise_scale: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``T + p`` samples of ``(Y_f, X_f)``.

    ``mode`` is ``"autoregressive"`` (regressors are the responses; requires
    a stable square model) or ``"exogenous"`` (regressors drawn i.i.d.
    standard normal); the default picks autoregressive when ``k == m``.
    The first ``burn_in`` samples are discarded.
    """
    if T < 1:
        raise DataError("T must be >= 1")
    k, m, p = model.k, model.m, model.p
    if mode is None:
        mode = "autoregressive" if k == m else "exogenous"
    if mode not in ("autoregressive", "exogenous"):
        raise DataError(f"unknown simulation mode {mode!r}")
    rng = np.random.default_rng(seed)
    total = burn_in + T + p
    chol = np.linalg.cholesky(model.Omega_gen)
    noise = noise_scale * (chol @ rng.standard_normal((k, total)))

    if mode == "autoregressive":
        if k != m:
            raise DataError("autoregressive simulation requires k = m")
        stable, radius = is_stable(model.Phi)
        if not stable:
            raise DataError(f"unstable model (spectral radius {radius:.6f})")
        Y = np.zeros((k, total))
        for t in range(total):
            y = noise[:, t].copy()
            for i in range(1, p + 1):
                if t - i >= 0:
                    y += model.Phi[i - 1] @ Y[:, t - i]
            Y[:, t] = y
        Y_f = Y[:, burn_in:]
        return Y_f, Y_f
    X = rng.standard_normal((m, total))
    Y = np.zeros((k, total))
    for t in range(total):
        y = noise[:, t].copy()
        for i in range(1, p + 1):
            if t - i >= 0:
                y += model.Phi[i - 1] @ X[:, t - i]
        Y[:, t] = y
    return Y[:, burn_in:], X[:, burn_in:]
