"""Deterministic generator: reference values and batch equivalence."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colonykit.rng import SplitMix64

MASK = (1 << 64) - 1


def reference_stream(seed: int, n: int) -> list[int]:
    """Literal transcription of the published SplitMix64 algorithm."""
    out = []
    state = seed & MASK
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


class TestU64Stream:
    @pytest.mark.parametrize("seed", [0, 1, 42, 0xDEADBEEF, MASK])
    def test_matches_reference(self, seed):
        rng = SplitMix64(seed)
        got = [rng.next_u64() for _ in range(64)]
        assert got == reference_stream(seed, 64)

    def test_streams_repeatable(self):
        a = SplitMix64(99)
        b = SplitMix64(99)
        assert [a.next_u64() for _ in range(16)] == [
            b.next_u64() for _ in range(16)
        ]

    def test_different_seeds_differ(self):
        assert SplitMix64(1).next_u64() != SplitMix64(2).next_u64()


class TestBatchEquivalence:
    @given(st.integers(min_value=0, max_value=2**64 - 1),
           st.integers(min_value=0, max_value=130))
    @settings(max_examples=50, deadline=None)
    def test_uniforms_match_scalar(self, seed, n):
        scalar = SplitMix64(seed)
        batch = SplitMix64(seed)
        expected = np.array([scalar.uniform() for _ in range(n)])
        got = batch.uniforms(n)
        assert np.array_equal(got, expected)
        # both generators must land in the same state
        assert scalar.next_u64() == batch.next_u64()

    def test_uniforms_split_anywhere(self):
        whole = SplitMix64(7).uniforms(100)
        rng = SplitMix64(7)
        parts = np.concatenate([rng.uniforms(13), rng.uniforms(0),
                                rng.uniforms(87)])
        assert np.array_equal(whole, parts)

    def test_normals_pair_consumption(self):
        # odd n consumes a full pair: next draw equals the n+1 case
        a = SplitMix64(5)
        a.normals(3)
        b = SplitMix64(5)
        b.normals(4)
        assert a.next_u64() == b.next_u64()

    def test_normals_match_manual_box_muller(self):
        n = 10
        u = SplitMix64(11).uniforms(n)
        rng = SplitMix64(11)
        got = rng.normals(n)
        for i in range(0, n, 2):
            r = math.sqrt(-2.0 * math.log(1.0 - u[i]))
            theta = 2.0 * math.pi * u[i + 1]
            assert got[i] == pytest.approx(r * math.cos(theta), rel=1e-15)
            assert got[i + 1] == pytest.approx(r * math.sin(theta), rel=1e-15)


class TestDistributions:
    def test_uniform_range(self):
        values = SplitMix64(3).uniforms(10_000)
        assert values.min() >= 0.0
        assert values.max() < 1.0

    def test_uniform_mean(self):
        values = SplitMix64(3).uniforms(50_000)
        assert values.mean() == pytest.approx(0.5, abs=0.01)

    def test_normal_moments(self):
        values = SplitMix64(17).normals(50_000)
        assert values.mean() == pytest.approx(0.0, abs=0.02)
        assert values.std() == pytest.approx(1.0, abs=0.02)

    def test_lognormal_of_zero_sigma(self):
        rng = SplitMix64(23)
        assert rng.lognormal(0.3, 0.0) == pytest.approx(math.exp(0.3))

    def test_lognormal_matches_exp_normal(self):
        a = SplitMix64(29)
        b = SplitMix64(29)
        assert a.lognormal(0.1, 0.5) == pytest.approx(
            math.exp(0.1 + 0.5 * b.normal()), rel=1e-15
        )

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            SplitMix64(1).uniforms(-1)
        with pytest.raises(ValueError):
            SplitMix64(1).normals(-1)


class TestSpawn:
    def test_spawn_deterministic_and_distinct(self):
        parent_a = SplitMix64(31)
        parent_b = SplitMix64(31)
        child_a = parent_a.spawn()
        child_b = parent_b.spawn()
        assert child_a.next_u64() == child_b.next_u64()
        assert child_a.next_u64() != parent_a.next_u64()
