import math

import numpy as np
import pytest

from varstate import (
    StructureError,
    StructureParams,
    centralizer_dim,
    enumerate_structures,
    jordan_matrix,
    mcmillan_degree,
    param_reduction,
    structure_from_dvec,
    structure_from_json,
    structure_from_pairs,
    structure_to_json,
)


class TestEnumerate:
    def test_h2_p2_order_and_values(self):
        got = [list(map(tuple, st.pairs)) for st in enumerate_structures(2, 2)]
        assert got == [[(2, 2)], [(2, 1), (1, 1)], [(2, 1)]]

    def test_h10_p5_count(self):
        assert len(enumerate_structures(10, 5)) == 2002

    def test_h1_p1(self):
        got = enumerate_structures(1, 1)
        assert len(got) == 1
        assert got[0].pairs == ((1, 1),)

    @pytest.mark.parametrize("h", range(1, 9))
    @pytest.mark.parametrize("p", range(1, 7))
    def test_count_formula(self, h, p):
        structures = enumerate_structures(h, p)
        assert len(structures) == math.comb(h + p - 1, p)
        assert len(set(structures)) == len(structures)
        # cumulative count over degrees <= p, plus the all-zero allocation
        cumulative = 1 + sum(len(enumerate_structures(h, q)) for q in range(1, p + 1))
        assert cumulative == math.comb(h + p, p)

    def test_invalid_inputs(self):
        with pytest.raises(StructureError):
            enumerate_structures(0, 2)
        with pytest.raises(StructureError):
            enumerate_structures(2, 0)


class TestStructureForms:
    def test_dvec_examples(self):
        assert structure_from_dvec([0, 1]).pairs == ((2, 1),)
        assert structure_from_dvec([1, 0, 1]).pairs == ((3, 1), (1, 1))
        assert structure_from_dvec([2, 2]).pairs == ((2, 2), (1, 2))

    def test_rejects_bad_dvec(self):
        with pytest.raises(StructureError):
            structure_from_dvec([1, 0])
        with pytest.raises(StructureError):
            structure_from_dvec([-1, 1])
        with pytest.raises(StructureError):
            structure_from_dvec([])

    def test_pairs_validation(self):
        with pytest.raises(StructureError):
            structure_from_pairs([(2, 1), (2, 1)])
        with pytest.raises(StructureError):
            structure_from_pairs([(0, 1)])

    def test_round_trip_on_enumerated(self):
        for st in enumerate_structures(4, 3):
            assert structure_from_dvec(st.dvec) == st
            assert structure_from_pairs(st.pairs) == st

    def test_json_round_trip(self):
        st = structure_from_dvec([1, 0, 2])
        assert structure_to_json(st) == {"pairs": [[3, 2], [1, 1]]}
        assert structure_from_json(structure_to_json(st)) == st
        assert structure_from_json({"dvec": [1, 0, 2]}) == st
        with pytest.raises(StructureError):
            structure_from_json({"nope": 1})


class TestJordanMatrix:
    def test_two_block_example(self):
        F = jordan_matrix(structure_from_dvec([1, 1]))
        expected = np.zeros((3, 3))
        expected[0, 1] = 1.0
        assert np.array_equal(F, expected)

    def test_single_exponent_is_zero_matrix(self):
        for d in (1, 3):
            F = jordan_matrix(structure_from_dvec([d]))
            assert np.array_equal(F, np.zeros((d, d)))

    def test_exponent3_plus_1(self):
        F = jordan_matrix(structure_from_dvec([1, 0, 1]))
        expected = np.zeros((4, 4))
        expected[0, 1] = expected[1, 2] = 1.0
        assert np.array_equal(F, expected)

    @pytest.mark.parametrize("h,p", [(3, 1), (3, 2), (2, 4), (3, 3)])
    def test_nilpotency_index(self, h, p):
        for st in enumerate_structures(h, p):
            F = jordan_matrix(st)
            assert np.count_nonzero(np.linalg.matrix_power(F, p)) == 0
            if p > 1:
                assert np.count_nonzero(np.linalg.matrix_power(F, p - 1)) > 0


class TestCounts:
    def test_mcmillan_examples(self):
        assert mcmillan_degree(structure_from_dvec([1, 0, 1])) == 4
        for p in (1, 2, 5):
            assert mcmillan_degree(structure_from_dvec([0] * (p - 1) + [1])) == p
        assert mcmillan_degree(structure_from_dvec([2, 2])) == 6

    def test_param_reduction_examples(self):
        # full allocation: no reduction
        for p, h in [(2, 2), (3, 4)]:
            st = structure_from_dvec([0] * (p - 1) + [h])
            assert param_reduction(st, h, h) == 0
        # minimal allocation: largest possible reduction
        for p, k, m in [(2, 3, 4), (4, 2, 5)]:
            st = structure_from_dvec([0] * (p - 1) + [1])
            assert param_reduction(st, k, m) == p * (m - 1) * (k - 1)
        assert param_reduction(structure_from_dvec([0, 1]), 2, 2) == 2

    def test_param_reduction_rejects_oversized(self):
        with pytest.raises(StructureError):
            param_reduction(structure_from_dvec([0, 3]), 2, 2)

    @pytest.mark.parametrize("h,p", [(8, 1), (6, 3), (8, 6)])
    def test_two_closed_forms_agree(self, h, p):
        for st in enumerate_structures(h, p):
            tails = [sum(st.dvec[i:]) for i in range(p)]
            for k in range(st.lrank, 9):
                for m in range(st.lrank, 9):
                    direct = sum((k - t) * (m - t) for t in tails)
                    alt = (
                        p * m * k
                        - (m + k) * sum((i + 1) * d for i, d in enumerate(st.dvec))
                        + sum(t * t for t in tails)
                    )
                    assert direct == alt == param_reduction(st, k, m)

    def test_centralizer_dim_examples(self):
        assert centralizer_dim(structure_from_dvec([1, 1])) == 5
        for d in (1, 2, 4):
            assert centralizer_dim(structure_from_dvec([d])) == d * d
        assert centralizer_dim(structure_from_dvec([1, 0, 1])) == 6


def test_immutability():
    st = structure_from_dvec([1, 1])
    with pytest.raises(Exception):
        st.dvec = (2, 2)
    F = jordan_matrix(st)
    F[0, 0] = 5.0  # returned matrices are fresh copies
    assert jordan_matrix(st)[0, 0] == 0.0
