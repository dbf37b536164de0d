"""Stochastic oracle for the deterministic pipeline.

Samples exact chain trajectories (exponential holding times, jump
probabilities proportional to off-diagonal rates) and estimates the
transition law and the weighted-norm decay empirically.  Every path
owns a counter-based random stream keyed by (seed, path index), so the
ensemble is bit-reproducible regardless of chunking or worker count,
and paths are independent by construction.

Simulation is vectorized across paths: each path pre-draws blocks of
unit exponentials and uniforms from its stream, the jump chains advance
one transition per step for all paths at once, and blocks are extended
(from each path's own stream) until every path outlives the horizon.
"""

from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .chain_core import ChainSpec, Distribution, WeightFunction
from .errors import ErgorateError

_CHUNK = 1 << 14


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Sampled trajectories reduced to states at the requested times.

    ``occupancy[p, k]`` is the state of path p at times[k].  Holding
    statistics (sum and count of drawn holding times per state, over
    holds that started before the horizon) support the
    generator-consistency check: mean hold at state s estimates
    1/(-q_ss).
    """

    chain: ChainSpec
    start: int
    times: NDArray[np.float64]
    n_paths: int
    seed: int
    occupancy: NDArray[np.int32]
    holding_time_sum: NDArray[np.float64]
    holding_count: NDArray[np.int64]


@dataclass(frozen=True)
class EmpiricalDecay:
    """Empirical weighted-norm distance estimates with standard errors."""

    times: NDArray[np.float64]
    estimates: NDArray[np.float64]
    stderrs: NDArray[np.float64]


def worker_count() -> int:
    """Worker cap from ERGORATE_THREADS (default 1)."""
    raw = os.environ.get("ERGORATE_THREADS", "1")
    try:
        v = int(raw)
    except ValueError as exc:
        raise ErgorateError(f"ERGORATE_THREADS must be an integer, got {raw!r}") from exc
    return max(1, v)


def _path_generator(seed: int, path_index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(path_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _simulate_chunk(
    spec: ChainSpec,
    start: int,
    times: NDArray[np.float64],
    seed: int,
    lo: int,
    hi: int,
) -> tuple[NDArray[np.int32], NDArray[np.float64], NDArray[np.int64]]:
    """Simulate paths [lo, hi); returns (occupancy, hold_sum, hold_count)."""
    m = hi - lo
    n = spec.n
    exit_rate = -np.diag(spec.q).copy()
    targets: list[NDArray[np.int_]] = []
    cdfs: list[NDArray[np.float64]] = []
    for s0 in range(n):
        row = spec.q[s0].copy()
        row[s0] = 0.0
        nz = np.nonzero(row > 0.0)[0]
        targets.append(nz)
        cdfs.append(np.cumsum(row[nz]) / exit_rate[s0])

    horizon = float(times[-1])
    gens = [_path_generator(seed, p) for p in range(lo, hi)]
    block = max(8, int(np.ceil(horizon * float(exit_rate.max()) * 1.5 + 20)))

    E = np.empty((m, 0))
    U = np.empty((m, 0))
    while True:
        extraE = np.empty((m, block))
        extraU = np.empty((m, block))
        for r, gen in enumerate(gens):
            extraE[r] = gen.standard_exponential(block)
            extraU[r] = gen.random(block)
        E = np.concatenate([E, extraE], axis=1)
        U = np.concatenate([U, extraU], axis=1)
        K = E.shape[1]

        states = np.empty((m, K + 1), dtype=np.int64)
        states[:, 0] = start
        holds = np.empty((m, K))
        for k in range(K):
            s = states[:, k]
            holds[:, k] = E[:, k] / exit_rate[s]
            nxt = np.empty(m, dtype=np.int64)
            for s0 in np.unique(s):
                sel = s == s0
                idx = np.searchsorted(cdfs[s0], U[sel, k], side="right")
                idx = np.minimum(idx, len(targets[s0]) - 1)
                nxt[sel] = targets[s0][idx]
            states[:, k + 1] = nxt
        jump_times = np.cumsum(holds, axis=1)
        if bool(np.all(jump_times[:, -1] > horizon)):
            break
        block = K  # double the pre-drawn block and rebuild

    occ = np.empty((m, times.size), dtype=np.int32)
    for g, t in enumerate(times):
        idx = (jump_times <= t).sum(axis=1)
        occ[:, g] = states[np.arange(m), idx]

    started = np.empty((m, K), dtype=bool)
    started[:, 0] = True
    started[:, 1:] = jump_times[:, :-1] < horizon
    hold_sum = np.zeros(n)
    hold_count = np.zeros(n, dtype=np.int64)
    visited = states[:, :K][started]
    np.add.at(hold_sum, visited, holds[started])
    np.add.at(hold_count, visited, 1)
    return occ, hold_sum, hold_count


def sample_paths(
    spec: ChainSpec,
    i: int,
    times: NDArray[np.float64],
    n_paths: int,
    seed: int,
) -> TrajectoryEnsemble:
    """Draw an ensemble of exact trajectories started at state i.

    Identical (spec, i, times, n_paths, seed) give a bit-identical
    ensemble; path chunks are merged by path index so the worker count
    never changes the result.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0.0) or times[0] < 0.0:
        raise ErgorateError("times must be a nondecreasing nonnegative grid")
    if not 0 <= i < spec.n:
        raise ErgorateError(f"start state {i} out of range for {spec.n} states")
    if n_paths < 1:
        raise ErgorateError(f"need at least one path, got {n_paths}")

    bounds = [(lo, min(lo + _CHUNK, n_paths)) for lo in range(0, n_paths, _CHUNK)]
    workers = worker_count()
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _simulate_chunk(spec, i, times, seed, *b), bounds))
    else:
        parts = [_simulate_chunk(spec, i, times, seed, lo, hi) for lo, hi in bounds]

    occupancy = np.concatenate([p[0] for p in parts], axis=0)
    hold_sum = sum(p[1] for p in parts)
    hold_count = sum(p[2] for p in parts)
    return TrajectoryEnsemble(
        chain=spec,
        start=int(i),
        times=times,
        n_paths=int(n_paths),
        seed=int(seed),
        occupancy=occupancy,
        holding_time_sum=hold_sum,
        holding_count=hold_count,
    )


def empirical_law(ensemble: TrajectoryEnsemble, k: int) -> NDArray[np.float64]:
    """Empirical occupation law at times[k]."""
    counts = np.bincount(ensemble.occupancy[:, k], minlength=ensemble.chain.n)
    return counts / ensemble.n_paths


def empirical_fnorm(
    ensemble: TrajectoryEnsemble, pi: Distribution, f: WeightFunction
) -> EmpiricalDecay:
    """Weighted-norm distance of the empirical law to pi per time point,
    with a plug-in multinomial (delta-method) standard error.

    Crude near kinks of the absolute value but sufficient for
    few-sigma cross-checks against the deterministic pipeline.
    """
    m = ensemble.n_paths
    times = ensemble.times
    est = np.empty(times.size)
    se = np.empty(times.size)
    for k in range(times.size):
        phat = empirical_law(ensemble, k)
        diff = phat - pi.p
        est[k] = float(np.dot(f.f, np.abs(diff)))
        a = f.f * np.sign(diff)
        var = (np.dot(phat, a**2) - np.dot(phat, a) ** 2) / m
        se[k] = float(np.sqrt(max(var, 0.0)))
    return EmpiricalDecay(times=times, estimates=est, stderrs=se)


def empirical_to_csv(emp: EmpiricalDecay) -> str:
    """CSV with header t,fnorm_est,stderr at full double precision."""
    buf = io.StringIO()
    buf.write("t,fnorm_est,stderr\n")
    for t, e, s in zip(emp.times, emp.estimates, emp.stderrs):
        buf.write(f"{t:.17g},{e:.17g},{s:.17g}\n")
    return buf.getvalue()
