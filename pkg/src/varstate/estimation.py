"""Fitting, structure selection, and forecasting.

The coefficient matrix is estimated by minimizing the concentrated
determinant-ratio objective with a damped Newton iteration on the vectorized
matrix (Levenberg shift when the Hessian is indefinite, gradient descent with
backtracking as a fallback), re-normalizing through the generalized LQ every
few iterations to keep iterates bounded inside their symmetry orbit.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .blockops import (
    BlockMatrixG,
    RankReport,
    check_minimality_G,
    check_minimality_H,
    lq_multi_lag,
)
from .errors import (
    DataError,
    LikelihoodDomainError,
    RankDeficiencyError,
    StructureError,
    VarstateError,
)
from .likelihood import (
    ConcentratedModel,
    LagDataset,
    MomentMatrices,
    hessian_matrix,
    gradient,
    moment_matrices,
    neg_log_lik,
    optimal_H,
    phi_from_hfg,
    residual_covariance,
)
from .structure import (
    StructureParams,
    enumerate_structures,
    jordan_matrix,
    param_reduction,
)

DIVERGENCE_LIMIT = 1e8
RENORM_EVERY = 20

SCAN_FAMILIES = "[(p,1)] or [(p,1),(rho,1)] with m = 2"


@dataclass(frozen=True)
class FitOptions:
    """Optimizer configuration; every random choice derives from ``seed``."""

    method: str = "newton"  # newton | gradient | grid-scan (m=2 only)
    restarts: int = 5
    max_iters: int = 500
    grad_tol: float = 1e-8
    seed: int = 0
    use_lq_normalization: bool = True
    initial_G: np.ndarray | None = None
    scan_t_points: int = 200
    scan_c_points: int = 25
    scan_c_max: float = 3.0

    def __post_init__(self):
        if self.method not in ("newton", "gradient", "grid-scan"):
            raise DataError(f"unknown fit method {self.method!r}")
        if self.restarts < 1:
            raise DataError("restarts must be >= 1")
        if self.grad_tol <= 0:
            raise DataError("grad_tol must be positive")


@dataclass(frozen=True)
class FitResult:
    """Fitted model with optimizer diagnostics."""

    structure: StructureParams
    G: BlockMatrixG
    H: np.ndarray
    F: np.ndarray
    Phi: list
    Omega: np.ndarray
    neg_log_lik: float
    converged: bool
    diverged: bool
    degenerate: bool
    iterations: int
    restarts_used: int
    minimality_G: RankReport
    minimality_H: RankReport


def _guarded_value(model, G_arr, structure):
    """Objective value with -inf for interpolation and +inf for rank failure."""
    try:
        return neg_log_lik(model, BlockMatrixG(G_arr, structure))
    except LikelihoodDomainError:
        return -math.inf
    except RankDeficiencyError:
        return math.inf


def _renormalize(structure, x, sign_normalize=False):
    try:
        _, Go = lq_multi_lag(BlockMatrixG(x, structure), sign_normalize=sign_normalize)
        return Go.data.copy()
    except RankDeficiencyError:
        return x


def _minimize(model, structure, G0, opts):
    """Damped Newton (or plain gradient) loop from one start.

    Returns ``(x, value, iterations, converged, diverged, degenerate)``.
    """
    newton = opts.method == "newton"
    x = np.array(G0, dtype=float)
    fx = _guarded_value(model, x, structure)
    if fx == -math.inf:
        return x, fx, 0, True, False, True
    lam = 0.0
    n_params = x.size
    converged = diverged = degenerate = False
    it = 0
    while it < opts.max_iters:
        it += 1
        G = BlockMatrixG(x, structure)
        try:
            g = gradient(model, G)
        except (LikelihoodDomainError, RankDeficiencyError):
            degenerate = True
            converged = True
            fx = -math.inf
            break
        gmax = np.max(np.abs(g))
        if gmax <= opts.grad_tol:
            converged = True
            break

        gvec = g.ravel()
        step = None
        slope = 0.0
        if newton:
            Hm = hessian_matrix(model, G)
            scale = max(np.trace(np.abs(Hm)) / n_params, 1e-8)
            for _ in range(40):
                try:
                    c = sla.cho_factor(Hm + lam * np.eye(n_params))
                except np.linalg.LinAlgError:
                    lam = max(10.0 * lam, 1e-8 * scale)
                    continue
                cand = -sla.cho_solve(c, gvec)
                sl = float(gvec @ cand)
                if sl < 0:
                    step, slope = cand, sl
                    break
                lam = max(10.0 * lam, 1e-8 * scale)
        if step is None:
            step = -gvec
            slope = -float(gvec @ gvec)

        accepted = False
        alpha = 1.0 if newton else 1.0 / max(1.0, gmax)
        for _ in range(40):
            xnew = x + alpha * step.reshape(x.shape)
            fnew = _guarded_value(model, xnew, structure)
            if fnew == -math.inf:
                return xnew, fnew, it, True, False, True
            if fnew <= fx + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted and newton and step is not None:
            # retry along steepest descent before giving up
            sd = -gvec
            alpha = 1.0 / max(1.0, gmax)
            for _ in range(40):
                xnew = x + alpha * sd.reshape(x.shape)
                fnew = _guarded_value(model, xnew, structure)
                if fnew == -math.inf:
                    return xnew, fnew, it, True, False, True
                if fnew < fx:
                    accepted = True
                    step = sd
                    break
                alpha *= 0.5
        if not accepted:
            break  # stalled below resolution of the line search
        x, fx = xnew, fnew
        lam = lam / 3.0 if alpha == 1.0 else lam

        if opts.use_lq_normalization and it % RENORM_EVERY == 0:
            x = _renormalize(structure, x)
            fx = _guarded_value(model, x, structure)
            if np.max(np.abs(x)) > DIVERGENCE_LIMIT:
                diverged = True
                break
    return x, fx, it, converged, diverged, degenerate


def fit_from_moments(
    moments: MomentMatrices, structure: StructureParams, opts: FitOptions = FitOptions()
) -> FitResult:
    """Fit on precomputed moment matrices (shared across structures)."""
    k = moments.k
    structure.validate_for(k, moments.m)
    model = ConcentratedModel(structure, moments)
    if opts.method == "grid-scan":
        scan = scan_grid(
            moments,
            structure,
            t_points=opts.scan_t_points,
            c_points=opts.scan_c_points,
            c_max=opts.scan_c_max,
        )
        best = (scan.argmin_G, scan.min_value, len(scan.values), True, False, False)
        restarts_used = 1
    else:
        rng = np.random.default_rng(opts.seed)
        n, m = structure.n_min, moments.m
        best = None
        restarts_used = 0
        for r in range(opts.restarts):
            draw = rng.standard_normal((n, m))
            if r == 0 and opts.initial_G is not None:
                draw = np.array(opts.initial_G, dtype=float)
            try:
                _, G0 = lq_multi_lag(BlockMatrixG(draw, structure))
                start = G0.data
            except RankDeficiencyError:
                continue
            res = _minimize(model, structure, start, opts)
            restarts_used += 1
            if best is None or res[1] < best[1]:
                best = res
            if best[1] == -math.inf:
                break
        if best is None:
            raise RankDeficiencyError(
                "every random start had a rank-deficient G[:,0]"
            )

    x, fx, iters, converged, diverged, degenerate = best
    x = _renormalize(structure, x, sign_normalize=True)
    G = BlockMatrixG(x, structure)
    fx = _guarded_value(model, x, structure)
    H = optimal_H(model, G)
    return FitResult(
        structure=structure,
        G=G,
        H=H,
        F=jordan_matrix(structure),
        Phi=phi_from_hfg(H, structure, G),
        Omega=residual_covariance(model, G, H),
        neg_log_lik=fx,
        converged=converged,
        diverged=diverged,
        degenerate=degenerate,
        iterations=iters,
        restarts_used=restarts_used,
        minimality_G=check_minimality_G(G),
        minimality_H=check_minimality_H(H, structure),
    )


def fit(
    data: LagDataset, structure: StructureParams, opts: FitOptions = FitOptions()
) -> FitResult:
    """Maximum-likelihood fit of the structured model on a lagged dataset."""
    return fit_from_moments(moment_matrices(data), structure, opts)


def _logdet_or_neginf(M):
    try:
        c = sla.cho_factor(M)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(M)
        if w[0] <= max(1e-300, 1e-14 * abs(w[-1])):
            return -math.inf
        return float(np.sum(np.log(w)))
    return 2.0 * float(np.sum(np.log(np.diag(c[0]))))


def full_ols_fit(data_or_moments) -> tuple[list, np.ndarray, float]:
    """Unrestricted least squares of Y on all lags.

    Returns ``(Phi list, Omega, neg_log_lik)`` where the objective is the
    same concentrated form (``log det A - log det B``); it lower-bounds every
    structured fit and is ``-inf`` when the regression interpolates.
    """
    mom = data_or_moments if isinstance(data_or_moments, MomentMatrices) else moment_matrices(data_or_moments)
    try:
        cB = sla.cho_factor(mom.B)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError("regressor Gram matrix is singular")
    C = sla.cho_solve(cB, mom.YX.T).T  # k x pm
    p, m = mom.p, mom.m
    phis = [C[:, (p - i) * m : (p - i + 1) * m] for i in range(1, p + 1)]
    omega = (mom.YY - C @ mom.YX.T) / mom.T
    omega = 0.5 * (omega + omega.T)
    llk = _logdet_or_neginf(mom.A) - 2.0 * float(np.sum(np.log(np.diag(cB[0]))))
    return phis, omega, llk


@dataclass(frozen=True)
class SelectionRow:
    structure: StructureParams
    n_min: int
    param_reduction: int
    neg_log_lik: float
    criterion_value: float
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class SelectionReport:
    criterion: str
    T: int
    full_ols_llk: float
    rows: tuple


def select_structure(
    data_or_moments,
    p: int,
    criterion: str = "bic",
    opts: FitOptions = FitOptions(),
    structures: list | None = None,
    threads: int = 1,
) -> SelectionReport:
    """Fit every candidate structure and rank them by an information criterion.

    ``criterion`` is one of ``aic``, ``bic`` (effective parameter count
    ``p*m*k - reduction + k(k+1)/2`` against ``T * objective``) or
    ``llk-gap`` (distance of the fitted objective to the unrestricted one).
    Individual fit failures are recorded per row, not raised.
    """
    criterion = criterion.lower()
    if criterion not in ("aic", "bic", "llk-gap"):
        raise DataError(f"unknown criterion {criterion!r}")
    mom = data_or_moments if isinstance(data_or_moments, MomentMatrices) else moment_matrices(data_or_moments)
    if mom.p != p:
        raise DataError(f"moments were built with p={mom.p}, requested p={p}")
    k, m, T = mom.k, mom.m, mom.T
    if structures is None:
        structures = enumerate_structures(min(k, m), p)
    _, _, full_llk = full_ols_fit(mom)

    seeds = np.random.SeedSequence(opts.seed).spawn(len(structures))

    def run(i):
        st = structures[i]
        o = replace(opts, seed=seeds[i].generate_state(1)[0])
        try:
            red = param_reduction(st, k, m)
        except StructureError:
            red = -1
        try:
            res = fit_from_moments(mom, st, o)
            llk = res.neg_log_lik
            q = p * m * k - red + k * (k + 1) // 2
            if criterion == "aic":
                value = 2.0 * q + T * llk
            elif criterion == "bic":
                value = math.log(T) * q + T * llk
            else:
                value = llk - full_llk
            return SelectionRow(st, st.n_min, red, llk, value, res.converged)
        except VarstateError as exc:
            return SelectionRow(
                st, st.n_min, red, math.nan, math.inf, False, error=str(exc)
            )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, range(len(structures))))
    else:
        rows = [run(i) for i in range(len(structures))]
    rows.sort(key=lambda r: r.criterion_value if not math.isnan(r.criterion_value) else math.inf)
    return SelectionReport(criterion=criterion, T=T, full_ols_llk=full_llk, rows=tuple(rows))


def predict(
    fit_result, X_recent: np.ndarray, steps: int = 1, autoregressive: bool = False
) -> np.ndarray:
    """Forecast from the ``p`` most recent regressor samples (newest last).

    Multi-step forecasts feed predictions back and therefore require the
    autoregressive case (regressors are the responses); with exogenous
    regressors only one step ahead is defined.
    """
    phis = [np.asarray(P, dtype=float) for P in fit_result.Phi] if hasattr(fit_result, "Phi") else list(fit_result)
    p = len(phis)
    k, m = phis[0].shape
    X_recent = np.asarray(X_recent, dtype=float)
    if X_recent.shape != (m, p):
        raise DataError(f"X_recent must be {m} x {p} (newest last), got {X_recent.shape}")
    if steps < 1:
        raise DataError("steps must be >= 1")
    if steps > 1 and not autoregressive:
        raise DataError("multi-step forecasts need autoregressive data (x = y)")
    if autoregressive and k != m:
        raise DataError("autoregressive forecasting requires k = m")
    window = [X_recent[:, i] for i in range(p)]
    out = np.zeros((k, steps))
    for s in range(steps):
        y = np.zeros(k)
        for i in range(1, p + 1):
            y += phis[i - 1] @ window[-i]
        out[:, s] = y
        if autoregressive:
            window.append(y)
    return out


@dataclass(frozen=True)
class ScanResult:
    """Grid of the objective over the reduced coordinates of an m=2 structure."""

    structure: StructureParams
    columns: tuple          # coordinate names, e.g. ("t", "c1")
    points: np.ndarray      # N x len(columns)
    values: np.ndarray      # N objective values
    min_value: float
    argmin: np.ndarray      # coordinates of the minimum
    argmin_G: np.ndarray    # coefficient matrix realizing the minimum


def _scan_layout(structure: StructureParams):
    """Number of tangent coordinates for a scannable m=2 structure."""
    pairs = structure.pairs
    p = structure.p
    if len(pairs) == 1 and pairs[0][1] == 1:
        return p - 1  # [(p,1)]: circle with p-1 tangents
    if len(pairs) == 2 and pairs[0][1] == 1 and pairs[1][1] == 1:
        rho = pairs[1][0]
        return p - rho - 1  # [(p,1),(rho,1)]: circle with p-rho-1 tangents
    raise StructureError(f"scan supports {SCAN_FAMILIES}, not {structure}")


def scan_G(structure: StructureParams, t: float, cs) -> np.ndarray:
    """Coefficient matrix of the scan family at circle angle ``t``."""
    from .structure import jordan_spec

    spec = jordan_spec(structure)
    n_c = _scan_layout(structure)
    cs = list(cs)
    if len(cs) != n_c:
        raise DataError(f"expected {n_c} tangent coordinates, got {len(cs)}")
    v = np.array([math.cos(t), math.sin(t)])
    w = np.array([-math.sin(t), math.cos(t)])
    G = np.zeros((structure.n_min, 2))
    p = structure.p
    G[spec.g_slice(p, 0)] = v
    if len(structure.pairs) == 2:
        rho = structure.pairs[1][0]
        G[spec.g_slice(rho, 0)] = w
    for l, c in enumerate(cs, start=1):
        G[spec.g_slice(p, l)] = c * w
    return G


def scan_grid(
    data_or_moments,
    structure: StructureParams,
    t_points: int = 200,
    c_points: int = 25,
    c_max: float = 3.0,
) -> ScanResult:
    """Evaluate the objective on a reduced-coordinate grid (m = 2 only).

    The circle angle runs over ``[0, pi)`` (the objective has period pi by
    sign-flip invariance); each tangent coordinate runs over
    ``[-c_max, c_max]``.
    """
    mom = data_or_moments if isinstance(data_or_moments, MomentMatrices) else moment_matrices(data_or_moments)
    if mom.m != 2:
        raise StructureError(f"scan requires m = 2, got m = {mom.m}")
    n_c = _scan_layout(structure)
    model = ConcentratedModel(structure, mom)
    ts = np.linspace(0.0, math.pi, t_points, endpoint=False)
    grids = [ts] + [np.linspace(-c_max, c_max, c_points)] * n_c
    mesh = np.meshgrid(*grids, indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=1)
    values = np.empty(points.shape[0])
    for i, row in enumerate(points):
        values[i] = _guarded_value(model, scan_G(structure, row[0], row[1:]), structure)
    best = int(np.argmin(values))
    columns = ("t",) + tuple(f"c{i}" for i in range(1, n_c + 1))
    return ScanResult(
        structure=structure,
        columns=columns,
        points=points,
        values=values,
        min_value=float(values[best]),
        argmin=points[best].copy(),
        argmin_G=scan_G(structure, points[best][0], points[best][1:]),
    )
