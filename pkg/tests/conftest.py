import numpy as np
import pytest

from varstate import (
    BlockMatrixG,
    build_lag_data,
    enumerate_structures,
    lq_multi_lag,
    moment_matrices,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_dataset(rng, k, m, p, T=120):
    """Independent noise data; moments are generically well conditioned."""
    X_f = rng.standard_normal((m, T + p))
    Y_f = rng.standard_normal((k, T + p))
    return build_lag_data(X_f, Y_f, p)


def random_moments(rng, k, m, p, T=120):
    return moment_matrices(random_dataset(rng, k, m, p, T))


def random_structure(rng, k, m, p, allow_flat=True):
    """Pick one enumerated structure for the given dimensions.

    With ``allow_flat=False``, structures whose embedding is square (the
    objective is constant in G) are excluded.
    """
    candidates = enumerate_structures(min(k, m), p)
    if not allow_flat:
        candidates = [st for st in candidates if st.n_min < p * m]
    return candidates[rng.integers(len(candidates))]


def random_normalized_G(rng, structure, m):
    _, G = lq_multi_lag(BlockMatrixG(rng.standard_normal((structure.n_min, m)), structure))
    return G


def well_conditioned_centralizer(structure, rng, off_scale=0.4):
    """Random commutant element whose realization has a modest condition number.

    Diagonal walls are orthogonal, so precision-sensitive invariance checks
    are not polluted by an ill-conditioned symmetry action.
    """
    from varstate import CentralizerElement

    walls = {}
    for r1, d1 in structure.pairs:
        for r2, d2 in structure.pairs:
            lo = max(0, r1 - r2)
            blocks = {}
            for j in range(lo, r1):
                if r1 == r2 and j == 0:
                    Q, _ = np.linalg.qr(rng.standard_normal((d1, d1)))
                    blocks[j] = Q
                else:
                    blocks[j] = off_scale * rng.standard_normal((d1, d2))
            walls[(r1, r2)] = blocks
    return CentralizerElement(structure, walls)
