import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_compare, random_pair
from pitchbench.contour import PitchContour
from pitchbench.errors import AlignmentError
from pitchbench.metrics import ErrorReport, cents_error, compare, pool, substitute_vuv


def contour(voiced, f0, hop=0.010):
    voiced = np.asarray(voiced, bool)
    f0 = np.array([np.nan if v is None else v for v in f0], dtype=float)
    return PitchContour(hop, voiced, f0, voiced.astype(float))


# --- cents ---------------------------------------------------------------

def test_cents_examples():
    assert cents_error(440, 440) == 0
    assert cents_error(880, 440) == pytest.approx(1200, abs=1e-9)
    assert cents_error(466.1638, 440) == pytest.approx(100.0, abs=0.01)


@pytest.mark.parametrize("bad", [(0, 440), (440, -1), (np.nan, 440)])
def test_cents_domain(bad):
    with pytest.raises(ValueError):
        cents_error(*bad)


def test_cents_vectorized():
    np.testing.assert_allclose(cents_error([220, 440, 880], 440), [-1200, 0, 1200], atol=1e-9)


# --- compare -------------------------------------------------------------

def test_identity():
    c = contour([1, 1, 0, 1], [100, 200, None, 300])
    r = compare(c, c)
    assert (r.gpe, r.fpe, r.vde, r.ffe) == (0.0, 0.0, 0.0, 0.0)


def test_hand_computed_example():
    ref = contour([1, 1, 1, 1], [100, 100, 100, 100])
    est = contour([1, 1, 1, 0], [100, 100, 210, None])
    r = compare(est, ref)
    assert r.vde == 0.25 and r.n_both_voiced == 3 and r.n_gross == 1
    assert r.gpe == pytest.approx(1 / 3) and r.ffe == 0.5 and r.fpe == 0.0
    assert cents_error(210, 100) == pytest.approx(1284.47, abs=0.01)


def test_all_unvoiced_gpe_undefined():
    u = PitchContour.unvoiced(10)
    r = compare(u, u)
    assert r.vde == 0 and r.ffe == 0 and r.gpe is None and r.fpe is None
    assert r.csv_row()[:2] == ["NA", "NA"]


def test_gross_boundary_is_inclusive():
    ref = contour([1, 1], [100.0, 100.0])
    est = contour([1, 1], [100.0 * 2 ** (99.9 / 1200), 100.0 * 2 ** (100.1 / 1200)])
    assert compare(est, ref).n_gross == 1


def test_relative_threshold():
    ref = contour([1, 1, 1], [100, 100, 100])
    est = contour([1, 1, 1], [115, 125, 79])
    assert compare(est, ref, relative_threshold=0.2).n_gross == 2


def test_hop_mismatch():
    with pytest.raises(AlignmentError):
        compare(PitchContour.unvoiced(5, 0.010), PitchContour.unvoiced(5, 0.005))


def test_length_mismatch_warns_and_truncates():
    with pytest.warns(UserWarning):
        r = compare(PitchContour.unvoiced(5), PitchContour.unvoiced(7))
    assert r.n_frames == 5


def test_matches_brute_force_random():
    rng = np.random.default_rng(42)
    for _ in range(200):
        est, ref = random_pair(rng)
        got = compare(est, ref)
        want = brute_compare(est.voiced, est.f0, ref.voiced, ref.f0)
        for key in ("n_frames", "n_voicing_errors", "n_both_voiced", "n_gross"):
            assert getattr(got, key) == want[key]
        assert (got.fpe is None) == (want["fpe"] is None)
        if want["fpe"] is not None:
            assert got.fpe == pytest.approx(want["fpe"], abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_report_properties(seed):
    est, ref = random_pair(np.random.default_rng(seed))
    r = compare(est, ref)
    assert r.ffe * r.n_frames == pytest.approx(r.n_voicing_errors + r.n_gross, abs=1e-9)
    assert r.vde * r.n_frames == pytest.approx(r.n_voicing_errors, abs=1e-9)
    assert r.ffe >= r.vde
    if r.gpe is not None:
        assert r.gpe == r.n_gross / r.n_both_voiced
        assert r.ffe >= r.gpe * r.n_both_voiced / r.n_frames - 1e-12
    for v in (r.gpe, r.vde, r.ffe):
        assert v is None or 0 <= v <= 1
    swapped = compare(ref, est)
    assert swapped.vde == r.vde and swapped.n_gross == r.n_gross
    assert (swapped.fpe is None and r.fpe is None) or swapped.fpe == pytest.approx(r.fpe, abs=1e-9)
    inf = compare(est, ref, gross_threshold=math.inf)
    assert inf.gpe in (0.0, None) and inf.ffe == inf.vde


# --- substitute_vuv ------------------------------------------------------

def test_substitute_same_flags_is_identity():
    t = contour([1, 0, 1], [100, None, 120])
    out = substitute_vuv(t, t)
    np.testing.assert_array_equal(out.voiced, t.voiced)
    np.testing.assert_array_equal(out.f0, t.f0)
    assert not out.filled.any()


def test_substitute_unvoiced_donor():
    out = substitute_vuv(contour([1, 1, 1], [100, 110, 120]), PitchContour.unvoiced(3))
    assert not out.voiced.any()


def test_substitute_nearest_tie_left():
    out = substitute_vuv(contour([1, 0, 1], [100, None, 120]), contour([1, 1, 1], [90, 90, 90]))
    np.testing.assert_array_equal(out.f0, [100, 100, 120])
    np.testing.assert_array_equal(out.filled, [False, True, False])


def test_substitute_nearest_neighbor():
    out = substitute_vuv(contour([0, 0, 0, 1, 0, 0, 1, 0], [None, None, None, 200, None, None, 300, None]),
                         contour([1] * 8, [50] * 8))
    np.testing.assert_array_equal(out.f0, [200, 200, 200, 200, 200, 300, 300, 300])


def test_substitute_empty_target_uses_donor():
    donor = contour([0, 1, 1], [None, 150, 160])
    out = substitute_vuv(PitchContour.unvoiced(3), donor)
    np.testing.assert_array_equal(out.f0[1:], [150, 160])


def test_substitute_alignment():
    with pytest.raises(AlignmentError):
        substitute_vuv(PitchContour.unvoiced(3), PitchContour.unvoiced(4))


# --- pool ----------------------------------------------------------------

def test_pool_single_identical():
    est, ref = random_pair(np.random.default_rng(1))
    r = compare(est, ref)
    assert pool([r]) == r


def test_pool_vde_example():
    a = ErrorReport(None, None, 0.01, 0.01, 100, 0, 0, 1)
    b = ErrorReport(None, None, 0.03, 0.03, 100, 0, 0, 3)
    assert pool([a, b]).vde == pytest.approx(0.02)


def test_pool_empty():
    with pytest.raises(ValueError):
        pool([])


def test_pool_frames_equals_concatenation():
    rng = np.random.default_rng(3)
    pairs = [random_pair(rng) for _ in range(6)]
    pooled = pool([compare(e, r) for e, r in pairs])
    cat = lambda attr, which: np.concatenate([getattr(p[which], attr) for p in pairs])
    want = brute_compare(cat("voiced", 0), cat("f0", 0), cat("voiced", 1), cat("f0", 1))
    assert pooled.n_gross == want["n_gross"] and pooled.n_frames == want["n_frames"]
    assert pooled.fpe == pytest.approx(want["fpe"], abs=1e-9)
    assert pooled.gpe == pytest.approx(want["gpe"], abs=1e-15)


def test_pool_order_invariant():
    rng = np.random.default_rng(4)
    reports = [compare(*random_pair(rng)) for _ in range(4)]
    ref = pool(reports)
    for perm in itertools.permutations(reports):
        p = pool(perm)
        assert (p.n_gross, p.n_frames, p.n_voicing_errors) == (ref.n_gross, ref.n_frames, ref.n_voicing_errors)
        assert p.fpe == pytest.approx(ref.fpe, abs=1e-9)


def test_pool_files_mode():
    a = ErrorReport(0.1, 2.0, 0.0, 0.1, 100, 50, 5, 0)
    b = ErrorReport(None, None, 0.5, 0.5, 10, 0, 0, 5)
    p = pool([a, b], mode="files")
    assert p.gpe == 0.1 and p.vde == 0.25 and p.n_frames == 110
    with pytest.raises(ValueError):
        pool([a], mode="median")


def test_report_dict_round_trip():
    r = compare(*random_pair(np.random.default_rng(9)))
    assert ErrorReport.from_dict(r.to_dict(stats=True)) == r
    assert "fine_m2" not in r.to_dict()
