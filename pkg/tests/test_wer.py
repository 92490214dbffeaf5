import math

import pytest
from hypothesis import given, settings, strategies as st

from ekd.wer import accumulate, wer

from oracles import recursive_edit_distance

words = st.lists(st.sampled_from(["aa", "bb", "cc", "dd"]), min_size=0, max_size=6)


def test_identical_sequences():
    b = wer(["a", "b", "c"], ["a", "b", "c"])
    assert b.total_errors == 0 and b.wer == 0.0


def test_single_substitution():
    b = wer(["a", "b", "c"], ["a", "x", "c"])
    assert (b.substitutions, b.insertions, b.deletions) == (1, 0, 0)
    assert b.wer == pytest.approx(1 / 3)


def test_deletion_and_insertion():
    b = wer(["a", "b"], ["a"])
    assert (b.substitutions, b.insertions, b.deletions) == (0, 0, 1)
    b = wer(["a"], ["a", "b"])
    assert (b.substitutions, b.insertions, b.deletions) == (0, 1, 0)


def test_empty_reference_nonempty_hypothesis():
    b = wer([], ["a", "b"])
    assert b.insertions == 2 and b.reference_words == 0
    assert not b.wer_defined
    assert math.isnan(b.wer)


def test_empty_both():
    b = wer([], [])
    assert b.total_errors == 0 and not b.wer_defined


@given(words, words)
@settings(max_examples=300, deadline=None)
def test_total_matches_recursive_oracle(r, h):
    assert wer(r, h).total_errors == recursive_edit_distance(r, h)


@given(words, words)
@settings(max_examples=200, deadline=None)
def test_symmetric_total(r, h):
    assert wer(r, h).total_errors == wer(h, r).total_errors


@given(words, words, words)
@settings(max_examples=150, deadline=None)
def test_triangle_inequality(a, b, c):
    ab = wer(a, b).total_errors
    bc = wer(b, c).total_errors
    ac = wer(a, c).total_errors
    assert ac <= ab + bc


def test_breakdown_sums_to_total(rng):
    pool = ["a", "b", "c", "d", "e"]
    for _ in range(200):
        r = [pool[i] for i in rng.integers(0, 5, size=rng.integers(0, 7))]
        h = [pool[i] for i in rng.integers(0, 5, size=rng.integers(0, 7))]
        b = wer(r, h)
        assert b.substitutions + b.insertions + b.deletions == recursive_edit_distance(r, h)
        assert b.wer >= 0 or not b.wer_defined


def test_tie_preference_substitution_first():
    # "a" -> "b" could be del+ins; the breakdown must call it a substitution.
    b = wer(["a"], ["b"])
    assert (b.substitutions, b.insertions, b.deletions) == (1, 0, 0)


def test_accumulate():
    total = accumulate([wer(["a", "b"], ["a", "x"]), wer(["c"], ["c", "d"])])
    assert total.reference_words == 3
    assert total.total_errors == 2
    assert total.wer == pytest.approx(2 / 3)
