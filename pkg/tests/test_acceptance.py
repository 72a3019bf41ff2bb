"""Acceptance suite.

One test per criterion; each prints a single PASS line with its runtime when
it completes (run with ``pytest tests/test_acceptance.py -v -s``).  Failures
surface as ordinary pytest failures.
"""
import json
import math
import time
from collections import Counter

import numpy as np
import pytest
import scipy.linalg as sla

from varstate import (
    BlockMatrixG,
    ConcentratedModel,
    FitOptions,
    LikelihoodDomainError,
    VrwCoefficients,
    VrwModel,
    build_lag_data,
    centralizer_dim,
    enumerate_structures,
    fit_from_moments,
    full_ols_fit,
    gradient,
    hessian_bilinear,
    hessian_matrix,
    jordan_matrix,
    jordan_spec,
    kappa,
    lq_multi_lag,
    moment_matrices,
    neg_log_lik,
    optimal_H,
    parameterize,
    param_reduction,
    phi_from_hfg,
    random_stable_model,
    realize_centralizer,
    residual_covariance,
    scan_grid,
    select_structure,
    simulate,
    structure_from_dvec,
    structure_from_pairs,
    vrw_neg_log_lik,
    vrw_upsilon,
)
from varstate.cli import main as cli_main
from conftest import (
    random_dataset,
    random_moments,
    random_normalized_G,
    random_structure,
    well_conditioned_centralizer,
)


def _report(num, desc, elapsed, bound):
    print(f"\ncriterion {num:2d} PASS: {desc} ({elapsed:.2f}s < {bound:.0f}s)")
    assert elapsed < bound


def test_criterion_01_lq_worked_example(tmp_path):
    t0 = time.perf_counter()
    inp = tmp_path / "g.json"
    out = tmp_path / "lq.json"
    inp.write_text(json.dumps({
        "structure": {"pairs": [[3, 1], [1, 1]]},
        "data": [[-2, 5], [3, -2], [1, 8], [1, -2]],
    }))
    assert cli_main(["lq", "--input", str(inp), "--output", str(out)]) == 0
    payload = json.loads(out.read_text())
    Go = np.asarray(payload["G_o"]["data"]).reshape(payload["G_o"]["shape"])
    S = np.asarray(payload["S"]["data"]).reshape(payload["S"]["shape"])
    expected_Go = np.array([
        [0.0, 0.0],
        [-0.3969112, 0.049614],
        [-0.1240347, -0.992278],
        [-0.9922779, 0.124035],
    ])
    expected_S = np.array([
        [-0.124035, -0.024807, 0.022326, -0.195975],
        [0.0, -0.124035, -0.024807, 0.0],
        [0.0, 0.0, -0.124035, 0.0],
        [0.0, 0.0, -0.186052, -0.806226],
    ])
    assert np.max(np.abs(Go - expected_Go)) < 1e-5
    assert np.max(np.abs(S - expected_S)) < 1e-5
    st = structure_from_pairs([(3, 1), (1, 1)])
    par = parameterize(BlockMatrixG(Go, st))
    assert abs(par.C[(3, 1)][0, 0] - 0.4) < 1e-5
    _report(1, "LQ worked example reproduced, c = 0.4 recovered",
            time.perf_counter() - t0, 1.0)


def test_criterion_02_counting_and_histogram():
    t0 = time.perf_counter()
    assert len(enumerate_structures(2, 2)) == 3
    structures = enumerate_structures(10, 5)
    assert len(structures) == 2002
    hist = Counter(st.n_min for st in structures)
    counts = [hist.get(d, 0) for d in range(5, 51)]
    assert sum(counts) == 2002
    peak = counts.index(max(counts))
    assert all(counts[i] <= counts[i + 1] for i in range(peak))
    assert all(counts[i] >= counts[i + 1] for i in range(peak, len(counts) - 1))
    _report(2, "counts 3 and 2002; degree histogram unimodal over 5..50",
            time.perf_counter() - t0, 1.0)


def test_criterion_03_formula_cross_checks():
    t0 = time.perf_counter()
    n_checked = 0
    for p in range(1, 6):
        for st in enumerate_structures(6, p):
            tails = [sum(st.dvec[i:]) for i in range(p)]
            for k in range(st.lrank, 7):
                for m in range(st.lrank, 7):
                    direct = sum((kk - t) * (mm - t) for t, kk, mm in
                                 zip(tails, [k] * p, [m] * p))
                    alt = (p * m * k
                           - (m + k) * sum((i + 1) * d for i, d in enumerate(st.dvec))
                           + sum(t * t for t in tails))
                    assert direct == alt == param_reduction(st, k, m)
            F = jordan_matrix(st)
            n = F.shape[0]
            assert np.count_nonzero(np.linalg.matrix_power(F, p)) == 0
            if p > 1:
                assert np.count_nonzero(np.linalg.matrix_power(F, p - 1)) > 0
            commutation = np.kron(F.T, np.eye(n)) - np.kron(np.eye(n), F)
            nullity = n * n - np.linalg.matrix_rank(commutation)
            assert nullity == centralizer_dim(st)
            n_checked += 1
    assert n_checked == sum(math.comb(5 + p, p) for p in range(1, 6))
    _report(3, f"closed forms agree on {n_checked} structures (brute-force commutant)",
            time.perf_counter() - t0, 30.0)


def test_criterion_04_algebraic_identities(rng):
    t0 = time.perf_counter()
    for _ in range(200):  # embedding intertwines the symmetry action
        st = random_structure(rng, 4, 4, int(rng.integers(1, 5)))
        m = int(rng.integers(st.lrank, st.lrank + 3))
        G = BlockMatrixG(rng.standard_normal((st.n_min, m)), st)
        Sm = realize_centralizer(well_conditioned_centralizer(st, rng))
        lhs = kappa(BlockMatrixG(Sm @ G.data, st))
        rhs = Sm @ kappa(G)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))

    for _ in range(200):  # objective invariant under the symmetry action
        k, m, p = 3, 3, int(rng.integers(1, 4))
        st = random_structure(rng, k, m, p)
        model = ConcentratedModel(st, random_moments(rng, k, m, p, T=80))
        G = random_normalized_G(rng, st, m)
        Sm = realize_centralizer(well_conditioned_centralizer(st, rng))
        v1 = neg_log_lik(model, G)
        v2 = neg_log_lik(model, BlockMatrixG(Sm @ G.data, st))
        assert abs(v1 - v2) <= 1e-9 * (1.0 + abs(v1))

    for _ in range(200):  # LQ output relations
        st = random_structure(rng, 5, 5, int(rng.integers(1, 5)))
        m = int(rng.integers(st.lrank, 7))
        G = BlockMatrixG(rng.standard_normal((st.n_min, m)), st)
        S, Go = lq_multi_lag(G)
        spec = jordan_spec(st)
        G0 = Go.g0()
        assert np.max(np.abs(G0 @ G0.T - np.eye(st.lrank))) < 1e-10
        for r, _ in st.pairs:
            for l in range(1, r):
                for r1, _ in st.pairs:
                    if l > max(0, r - r1 - 1):
                        blk = Go.data[spec.g_slice(r, l)] @ Go.data[spec.g_slice(r1, 0)].T
                        assert np.max(np.abs(blk)) < 1e-10
        assert np.max(np.abs(realize_centralizer(S) @ G.data - Go.data)) < 1e-10 * max(
            1.0, np.max(np.abs(G.data)))

    for _ in range(200):  # Schur identity
        k, m, p = 3, 2, int(rng.integers(1, 3))
        st = random_structure(rng, k, m, p)
        data = random_dataset(rng, k, m, p, T=70)
        mom = moment_matrices(data)
        model = ConcentratedModel(st, mom)
        G = random_normalized_G(rng, st, m)
        H = optimal_H(model, G)
        omega = residual_covariance(model, G, H)
        lhs = np.linalg.slogdet(mom.T * omega)[1]
        rhs = np.linalg.slogdet(mom.YY)[1] + neg_log_lik(model, G)
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(rhs))
    _report(4, "intertwining 1e-12, invariance 1e-9, LQ relations 1e-10, Schur 1e-8 (200 each)",
            time.perf_counter() - t0, 60.0)


def test_criterion_05_calculus_checks(rng):
    t0 = time.perf_counter()
    worst_g = worst_h = worst_sym = 0.0
    for _ in range(50):
        k, m, p = int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
        st = random_structure(rng, k, m, p, allow_flat=False)
        model = ConcentratedModel(st, random_moments(rng, k, m, p, T=150))
        G = random_normalized_G(rng, st, m)
        D = gradient(model, G)
        fd = np.zeros_like(D)
        eps = 1e-6
        for idx in np.ndindex(D.shape):
            E = np.zeros_like(D)
            E[idx] = 1.0
            fp = neg_log_lik(model, BlockMatrixG(G.data + eps * E, st))
            fm = neg_log_lik(model, BlockMatrixG(G.data - eps * E, st))
            fd[idx] = (fp - fm) / (2.0 * eps)
        worst_g = max(worst_g, np.linalg.norm(fd - D) / np.linalg.norm(D))

        Hm = hessian_matrix(model, G)
        scale = max(np.linalg.norm(Hm, "fro"), 1e-8)
        eps2 = 1e-3
        for _ in range(2):
            psi = rng.standard_normal(G.data.shape)
            eta = rng.standard_normal(G.data.shape)
            psi /= np.linalg.norm(psi)
            eta /= np.linalg.norm(eta)
            hb = hessian_bilinear(model, G, psi, eta)
            worst_sym = max(
                worst_sym, abs(hb - hessian_bilinear(model, G, eta, psi)) / scale
            )

            def f(Y):
                return neg_log_lik(model, BlockMatrixG(Y, st))

            fd2 = (f(G.data + eps2 * (psi + eta)) - f(G.data + eps2 * (psi - eta))
                   - f(G.data - eps2 * (psi - eta)) + f(G.data - eps2 * (psi + eta))
                   ) / (4.0 * eps2 * eps2)
            worst_h = max(worst_h, abs(fd2 - hb) / scale)
    assert worst_g < 1e-5
    assert worst_h < 1e-4
    assert worst_sym < 1e-10
    _report(5, f"gradient fd {worst_g:.1e} < 1e-5, hessian fd {worst_h:.1e} < 1e-4, "
               f"symmetry {worst_sym:.1e} < 1e-10 (50 instances)",
            time.perf_counter() - t0, 120.0)


def test_criterion_06_reduced_rank_oracle(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(20):
        d = 1 + trial % 2
        k, m = int(rng.integers(d + 1, 6)), int(rng.integers(d + 1, 6))
        mom = random_moments(rng, k, m, 1, T=110)
        res = fit_from_moments(
            mom, structure_from_dvec([d]), FitOptions(restarts=8, seed=trial, grad_tol=1e-10)
        )
        w = sla.eigh(mom.A, mom.B, eigvals_only=True)
        oracle = float(np.sum(np.log(w[:d])))
        worst = max(worst, abs(res.neg_log_lik - oracle))
    assert worst < 1e-6
    _report(6, f"p=1 objective matches generalized-eigenvalue oracle (worst {worst:.1e})",
            time.perf_counter() - t0, 60.0)


def test_criterion_07_grid_scan_oracle():
    t0 = time.perf_counter()
    st_a = structure_from_dvec([1, 1])   # circle
    st_b = structure_from_dvec([0, 1])   # circle with one tangent
    gaps = []
    for st, seed, scan_kwargs in (
        (st_a, 61, dict(t_points=2000)),
        (st_b, 62, dict(t_points=50, c_points=40, c_max=4.0)),
    ):
        gen = random_stable_model(st, 2, 2, seed=seed)
        Y_f, X_f = simulate(gen, 1000, seed=seed + 1)
        mom = moment_matrices(build_lag_data(X_f, Y_f, 2))
        scan = scan_grid(mom, st, **scan_kwargs)
        assert scan.values.size == 2000
        res = fit_from_moments(mom, st, FitOptions(restarts=6, seed=seed))
        assert res.neg_log_lik <= scan.min_value + 1e-3
        gaps.append(scan.min_value - res.neg_log_lik)
    _report(7, f"optimizer beats 2000-point scans (margins {gaps[0]:.1e}, {gaps[1]:.1e})",
            time.perf_counter() - t0, 60.0)


def test_criterion_08_recovery_and_nesting():
    t0 = time.perf_counter()
    st_gen = structure_from_dvec([2, 2])
    full_dvec = (0, 5)
    good_seeds = 0
    for seed in range(10):
        gen = random_stable_model(st_gen, 5, 5, seed=1000 + seed)
        Y_f, X_f = simulate(gen, 1000, seed=2000 + seed)
        mom = moment_matrices(build_lag_data(X_f, Y_f, 2))
        rep = select_structure(mom, 2, criterion="bic", opts=FitOptions(restarts=3, seed=seed))
        assert len(rep.rows) == 15
        llk = {r.structure.dvec: r.neg_log_lik for r in rep.rows}
        # the saturated structure always equals unrestricted least squares
        assert abs(llk[full_dvec] - rep.full_ols_llk) < 1e-6
        monotone = all(
            llk[b] <= llk[a] + 1e-6
            for a in llk for b in llk
            if a != b and all(x <= y for x, y in zip(a, b))
        )
        close = abs(llk[st_gen.dvec] - rep.full_ols_llk) <= 0.02 * abs(rep.full_ols_llk)
        if monotone and close:
            good_seeds += 1
    assert good_seeds >= 8
    _report(8, f"nesting monotone and generator within 2% of OLS in {good_seeds}/10 seeds",
            time.perf_counter() - t0, 600.0)


def test_criterion_09_vrw_variant(rng):
    t0 = time.perf_counter()
    worst = 0.0
    for trial in range(12):
        p2 = int(rng.integers(0, 3))
        d = int(rng.integers(1, 3))
        p = p2 + 1
        m = int(rng.integers(d + 1, d + 3))
        k = int(rng.integers(d + 1, d + 3))
        mom = random_moments(rng, k, m, p, T=100)
        bs = tuple(rng.standard_normal((d, m)) for _ in range(p2 + 1))
        v_obj = vrw_neg_log_lik(VrwModel(mom, 0), VrwCoefficients(bs, 0))
        # zero-pattern embedding into the single-block structure
        st = structure_from_dvec([0] * (p - 1) + [d])
        spec = jordan_spec(st)
        Gd = np.zeros((st.n_min, m))
        for j in range(p2 + 1):
            Gd[spec.g_slice(p, j)] = bs[p2 - j]
        K = kappa(BlockMatrixG(Gd, st))
        assert np.array_equal(vrw_upsilon(bs, 0), K[:d])
        # objective of the embedding restricted to its leading row block
        K0 = K[:d]
        r_obj = (np.linalg.slogdet(K0 @ mom.A @ K0.T)[1]
                 - np.linalg.slogdet(K0 @ mom.B @ K0.T)[1])
        worst = max(worst, abs(v_obj - r_obj) / max(1.0, abs(r_obj)))
    assert worst < 1e-8
    _report(9, f"p1=0 banded objective equals restricted embedding objective (worst {worst:.1e})",
            time.perf_counter() - t0, 30.0)


def test_criterion_10_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    artifacts = []
    for tag in ("run1", "run2"):
        root = tmp_path / tag
        root.mkdir()
        prefix = str(root / "sim")
        assert cli_main(["simulate", "--structure", '{"dvec": [1,1]}', "--k", "2",
                         "--m", "2", "--T", "250", "--seed", "17", "--output", prefix]) == 0
        fit_out = str(root / "fit.json")
        assert cli_main(["fit", "--y", prefix + "_y.csv", "--autoregressive", "--p", "2",
                         "--structure", '{"dvec": [1,1]}', "--seed", "5",
                         "--output", fit_out]) == 0
        sel_out = str(root / "sel.json")
        assert cli_main(["select", "--y", prefix + "_y.csv", "--autoregressive", "--p", "2",
                         "--criterion", "bic", "--restarts", "2", "--seed", "5",
                         "--format", "json", "--output", sel_out]) == 0
        scan_out = str(root / "scan.csv")
        assert cli_main(["scan", "--y", prefix + "_y.csv", "--autoregressive", "--p", "2",
                         "--structure", '{"dvec": [1,1]}', "--t-points", "100",
                         "--output", scan_out]) == 0
        enum_out = str(root / "enum.csv")
        assert cli_main(["enumerate", "--h", "4", "--p", "3", "--k", "4", "--m", "4",
                         "--output", enum_out]) == 0
        lq_in = root / "g.json"
        lq_in.write_text(json.dumps({"structure": {"dvec": [1, 0, 1]},
                                     "data": [[-2, 5], [3, -2], [1, 8], [1, -2]]}))
        lq_out = str(root / "lq.json")
        assert cli_main(["lq", "--input", str(lq_in), "--output", lq_out]) == 0
        files = [prefix + "_y.csv", prefix + "_x.csv", prefix + "_model.json",
                 fit_out, sel_out, scan_out, enum_out, lq_out]
        artifacts.append([open(f, "rb").read() for f in files])
    assert artifacts[0] == artifacts[1]
    _report(10, "all six commands byte-identical across two seeded invocations",
            time.perf_counter() - t0, 60.0)
