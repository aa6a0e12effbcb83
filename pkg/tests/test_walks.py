"""Tests for random streams and walk transition tables."""
import numpy as np
import pytest

from wstlab.sampling import wilson_sample
from wstlab.walks import RngStream, TransitionTable, WalkStalledError, hitting_time


def test_rng_stream_reproducible():
    a = RngStream(3, 1).random(5)
    b = RngStream(3, 1).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, RngStream(3, 2).random(5))
    assert not np.array_equal(a, RngStream(4, 1).random(5))


def test_rng_stream_children():
    parent = RngStream(3)
    child = parent.child(7)
    assert child.spawn_key == (0, 7)
    assert child.child(1).spawn_key == (0, 7, 1)
    np.testing.assert_array_equal(child.random(4), RngStream(3).child(7).random(4))
    assert not np.array_equal(RngStream(3).child(0).random(4), RngStream(3).random(4))
    assert "spawn_key=(0, 7)" in repr(child)


def test_rng_stream_counter():
    rng = RngStream(0)
    rng.random()
    rng.random(10)
    rng.integers(0, 5, size=3)
    assert rng.counter == 14


def test_rng_stream_negative_seed():
    with pytest.raises(ValueError):
        RngStream(-1)


def test_uniforms_follow_random():
    draws = RngStream(1).uniforms(first_chunk=4)
    first = [next(draws) for _ in range(6)]
    expected = RngStream(1)
    reference = expected.random(4).tolist() + expected.random(8).tolist()[:2]
    assert first == reference


def test_uniforms_count_consumed_draws():
    rng = RngStream(2)
    draws = rng.uniforms()
    for _ in range(10):
        next(draws)
    assert rng.counter == 10


def test_wilson_draws_match_steps(k4):
    rng = RngStream(5)
    table = TransitionTable(k4)
    for _ in range(200):
        before = rng.counter
        wilson_sample(k4, rng, table=table)
        assert 3 <= rng.counter - before < 1000


def test_transition_table_steps(star5):
    table = TransitionTable(star5)
    assert table.step(0, 0.05) == (1, 0)
    assert table.step(0, 0.15) == (2, 1)
    assert table.step(0, 0.5) == (3, 2)
    assert table.step(0, 0.99) == (4, 3)
    for leaf in range(1, 5):
        assert table.step(leaf, 0.7) == (0, leaf - 1)


def test_transition_table_log_weights(path3):
    table = TransitionTable(path3, log_conductance=np.array([0.0, -2000.0]))
    assert table.step(1, 0.999999) == (0, 0)
    table = TransitionTable(path3, log_conductance=np.array([-5000.0, 0.0]))
    assert table.step(1, 0.0) == (2, 1)


def test_hitting_time(path3):
    table = TransitionTable(path3)
    steps = hitting_time(table, 0, 2, RngStream(0).uniforms(), max_steps=10**6)
    assert steps >= 2
    assert steps % 2 == 0
    assert hitting_time(table, 1, 1, RngStream(0).uniforms(), max_steps=1) == 0


def test_hitting_time_stalls(path4):
    table = TransitionTable(path4)
    with pytest.raises(WalkStalledError):
        hitting_time(table, 0, 3, RngStream(0).uniforms(), max_steps=2)
