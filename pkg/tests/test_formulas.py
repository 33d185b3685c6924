import itertools
import math

import numpy as np
import pytest

from bandit_meta.formulas import (
    ATOMS,
    BINARY_OPS,
    CONSTANTS,
    UNARY_OPS,
    VARIABLES,
    FormulaSyntaxError,
    SamplePoint,
    SamplePoints,
    compile_formula_scalar,
    count_formulas,
    counts_by_length,
    dense_ranks,
    draw_sample_points,
    enumerate_formulas,
    eval_formula,
    eval_formula_arrays,
    format_formula,
    formula_length,
    parse_formula,
    partition,
    read_representatives,
    signature_of,
    write_representatives,
)


def brute_force_trees(max_length):
    """Independent generator: build the set of all trees per exact length
    by combining smaller sets, in a different style from the library."""
    by_len = {1: set(ATOMS)}
    for n in range(2, max_length + 1):
        out = set()
        for op in UNARY_OPS:
            out |= {(op, child) for child in by_len[n - 1]}
        for op in BINARY_OPS:
            for a in range(1, n - 1):
                for left, right in itertools.product(by_len[a], by_len[n - 1 - a]):
                    out.add((op, left, right))
        by_len[n] = out
    return set().union(*by_len.values())


class TestStructure:
    def test_lengths_of_reference_formulas(self):
        assert formula_length(parse_formula("add(rbar,div(2,tk))")) == 5
        nine = parse_formula("add(rbar,sqrt(div(mul(2,ln(t)),tk)))")
        assert formula_length(nine) == 9
        assert formula_length("rbar") == 1
        assert formula_length(7) == 1

    def test_format_parse_round_trip_everywhere(self):
        for f in enumerate_formulas(3):
            assert parse_formula(format_formula(f)) == f

    @pytest.mark.parametrize("bad", [
        "", "rbar+2", "unknown", "4", "add(rbar)", "sqrt(rbar,t)",
        "add(rbar,2) extra", "add(rbar,", "mystery(rbar)",
    ])
    def test_parse_rejects_bad_input(self, bad):
        with pytest.raises(FormulaSyntaxError):
            parse_formula(bad)


class TestEnumeration:
    def test_level_one_is_the_nine_atoms(self):
        got = list(enumerate_formulas(1))
        assert got == list(VARIABLES) + list(CONSTANTS)

    def test_level_two_count(self):
        assert len(list(enumerate_formulas(2))) == 54

    def test_lengths_nondecreasing_and_unique(self):
        seen = set()
        last = 0
        for f in enumerate_formulas(4):
            n = formula_length(f)
            assert n >= last
            last = n
            assert f not in seen
            seen.add(f)

    def test_complete_against_brute_force_up_to_four(self):
        ours = set(enumerate_formulas(4))
        reference = brute_force_trees(4)
        assert ours == reference

    def test_counts_by_length_match_enumeration(self):
        per = counts_by_length(5)
        for n in range(1, 6):
            exact = sum(1 for f in enumerate_formulas(n) if formula_length(f) == n)
            assert per[n - 1] == exact

    def test_full_scale_count(self):
        assert count_formulas(7) == 33_553_773


class TestEvaluation:
    def test_mean_plus_ratio(self):
        f = parse_formula("add(rbar,div(2,tk))")
        assert eval_formula(f, SamplePoint(0.5, 0.1, 4, 10)) == 1.0

    def test_log_of_negative_is_invalid(self):
        f = parse_formula("ln(sub(rbar,2))")
        for rbar in (0.0, 0.5, 1.0):
            assert eval_formula(f, SamplePoint(rbar, 0.1, 4, 10)) is None

    def test_threshold_formula_zero_at_half(self):
        f = parse_formula("mul(sqrt(tk),sub(rbar,inverse(2)))")
        for tk in (1, 5, 50):
            assert eval_formula(f, SamplePoint(0.5, 0.1, tk, 100)) == 0.0

    def test_division_by_zero_invalid(self):
        f = parse_formula("inverse(sub(rbar,rbar))")
        assert eval_formula(f, SamplePoint(0.3, 0.1, 2, 5)) is None

    def test_min_does_not_swallow_invalidity(self):
        # min(1, 1/0) must be INVALID, not 1
        f = parse_formula("min(1,inverse(sub(tk,tk)))")
        assert eval_formula(f, SamplePoint(0.3, 0.1, 2, 5)) is None
        values, valid = eval_formula_arrays(f, {
            "rbar": np.array([0.3]), "sbar": np.array([0.1]),
            "tk": np.array([2.0]), "t": np.array([5.0]),
        })
        assert not valid[0]

    def test_scalar_and_array_evaluators_agree(self):
        pts = draw_sample_points(64, 5, mode="uniform")
        env = pts.env()
        formulas = [f for i, f in enumerate(enumerate_formulas(4)) if i % 7 == 0]
        for f in formulas:
            values, valid = eval_formula_arrays(f, env)
            values = np.broadcast_to(values, (len(pts),))
            valid = np.broadcast_to(valid, (len(pts),))
            fn = compile_formula_scalar(f)
            for i in range(len(pts)):
                scalar = fn(env["rbar"][i], env["sbar"][i], env["tk"][i], env["t"][i])
                if valid[i]:
                    assert scalar == pytest.approx(float(values[i]), rel=1e-12, abs=1e-12)
                else:
                    assert math.isnan(scalar)


@pytest.fixture(scope="module")
def pts():
    return draw_sample_points(512, 3)


@pytest.fixture(scope="module")
def partition_pts():
    return draw_sample_points(1024, 1)


@pytest.fixture(scope="module")
def level3(partition_pts):
    return partition(3, partition_pts)


class TestSignatures:
    def test_constants_share_one_signature(self, pts):
        sigs = {signature_of(parse_formula(str(c)), pts) for c in CONSTANTS}
        assert len(sigs) == 1

    def test_monotone_transforms_of_mean_collapse(self, pts):
        base = signature_of(parse_formula("rbar"), pts)
        assert base == signature_of(parse_formula("mul(rbar,2)"), pts)
        assert base == signature_of(parse_formula("sqrt(rbar)"), pts)
        assert base == signature_of(parse_formula("add(rbar,rbar)"), pts)

    def test_opposite_orders_differently(self, pts):
        assert signature_of(parse_formula("rbar"), pts) != signature_of(
            parse_formula("opposite(rbar)"), pts
        )

    def test_play_count_transforms_collapse(self, pts):
        base = signature_of(parse_formula("tk"), pts)
        assert base == signature_of(parse_formula("ln(tk)"), pts)
        assert base == signature_of(parse_formula("sqrt(tk)"), pts)

    def test_distinct_variables_stay_distinct(self, pts):
        assert signature_of(parse_formula("rbar"), pts) != signature_of(
            parse_formula("t"), pts
        )

    def test_invalid_anywhere_is_absorbing(self, pts):
        assert signature_of(parse_formula("inverse(sub(rbar,rbar))"), pts) is None

    def test_signature_accepts_point_lists(self):
        points = [SamplePoint(0.1 * i, 0.05 * i, i + 1, 10 * (i + 1)) for i in range(6)]
        a = signature_of(parse_formula("rbar"), points)
        b = signature_of(parse_formula("mul(rbar,3)"), points)
        assert a == b

    def test_deterministic(self, pts):
        f = parse_formula("add(rbar,inverse(tk))")
        assert signature_of(f, pts) == signature_of(f, pts)


class TestDenseRanks:
    def test_relative_tolerance_merges_neighbors(self):
        values = np.array([1.0, 1.0 + 1e-12, 2.0])
        assert dense_ranks(values).tolist() == [0, 0, 1]

    def test_distinct_values_get_distinct_ranks(self):
        values = np.array([3.0, 1.0, 2.0])
        assert dense_ranks(values).tolist() == [2, 0, 1]

    def test_zero_values_tie_exactly(self):
        values = np.array([0.0, 0.0, 1.0])
        assert dense_ranks(values).tolist() == [0, 0, 1]


class TestPartition:
    def test_totals(self, level3):
        assert level3.total_enumerated == 9 + 45 + 711
        assert level3.total_invalid + sum(c.size for c in level3.classes) \
            == level3.total_enumerated

    def test_representatives_match_exhaustive_clustering(self, level3, partition_pts):
        """Re-cluster from scratch with signature_of and compare."""
        reference = {}
        for f in enumerate_formulas(3):
            sig = signature_of(f, partition_pts)
            if sig is None:
                continue
            reference.setdefault(sig.digest, []).append(f)
        by_digest = {bytes.fromhex(c.signature_hex): c for c in level3.classes}
        assert set(by_digest) == set(reference)
        for digest, members in reference.items():
            rep = by_digest[digest]
            assert rep.size == len(members)
            assert rep.representative == members[0]  # first-seen minimal length
            assert all(formula_length(m) >= rep.length for m in members)

    def test_greedy_representative_present(self, level3):
        reps = {format_formula(c.representative) for c in level3.classes}
        assert "rbar" in reps

    def test_collision_verification_keeps_rank_vectors(self, partition_pts):
        result = partition(2, partition_pts, verify_collisions=True)
        assert all(c.size >= 1 for c in result.classes)

    def test_jsonl_round_trip(self, level3, tmp_path):
        path = tmp_path / "reps.jsonl"
        write_representatives(str(path), level3)
        back = read_representatives(str(path))
        assert len(back) == len(level3.classes)
        assert back[0]["formula"] == level3.classes[0].representative
        assert back[0]["class_size"] == level3.classes[0].size


class TestSamplePoints:
    def test_bernoulli_mode_hits_grid_values(self):
        pts = draw_sample_points(4096, 2, mode="bernoulli")
        assert ((pts.rbar == 0.0) | (pts.rbar > 0)).all()
        assert (pts.rbar == 0.0).sum() > 0  # exact zeros occur
        assert (pts.rbar == 1.0).sum() > 0
        assert np.allclose(pts.sbar, np.sqrt(pts.rbar * (1 - pts.rbar)))
        assert (pts.tk >= 1).all() and (pts.tk <= pts.t).all()

    def test_uniform_mode_ranges(self):
        pts = draw_sample_points(4096, 2, mode="uniform", t_max=500)
        assert pts.rbar.min() >= 0 and pts.rbar.max() <= 1
        assert pts.sbar.max() <= 0.5
        assert pts.t.max() <= 500 and pts.t.min() >= 2
        assert (pts.tk <= pts.t).all()

    def test_indexing_returns_sample_points(self):
        pts = draw_sample_points(10, 1)
        p = pts[3]
        assert isinstance(p, SamplePoint)
        assert 0 <= p.rbar <= 1

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            draw_sample_points(10, 1, mode="exotic")
