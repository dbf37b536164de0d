"""Shared fixtures: canonical chains and tolerance restoration."""

from __future__ import annotations

import numpy as np
import pytest

from ergorate import chain_core
from ergorate.chain_core import build_birth_death, build_example21, build_example22


@pytest.fixture(autouse=True)
def _restore_tolerances():
    """CLI tolerance overrides mutate module globals; undo after each test."""
    saved = (chain_core.ROW_TOL, chain_core.STAT_TOL, chain_core.REV_TOL)
    yield
    chain_core.ROW_TOL, chain_core.STAT_TOL, chain_core.REV_TOL = saved


@pytest.fixture
def ex21():
    return build_example21([0.5, 0.25, 0.25], 2.0)


@pytest.fixture
def ex22():
    return build_example22()


@pytest.fixture
def bd6():
    return build_birth_death(
        [1.0, 2.0, 0.5, 1.5, 1.0], [1.0, 1.0, 2.0, 0.5, 1.0], [1, 2, 1, 3, 1, 2]
    )


def random_detailed_balance(rng: np.random.Generator, n: int):
    """Dense reversible chain from a random symmetric flux matrix."""
    p = rng.uniform(0.2, 1.0, n)
    p /= p.sum()
    W = rng.uniform(0.2, 1.0, (n, n))
    W = 0.5 * (W + W.T)
    q = W / p[:, None]
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def random_irreversible(rng: np.random.Generator, n: int):
    """Dense conservative chain with no symmetry; generically irreversible."""
    q = rng.uniform(0.05, 1.0, (n, n))
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q
