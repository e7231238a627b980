"""Trajectory-level estimators.

Chains are simulated exactly (exponential holding times, categorical
jumps), many trajectories at once in lockstep; one-dimensional diffusions
by Euler-Maruyama with reflection at 0.  Every estimator takes an
:class:`RngConfig` (or a numpy ``Generator``) and splits its trials into
``streams`` batches with independent child seeds, so results are
bit-for-bit reproducible for a fixed configuration.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .model import BirthDeathSpec, DiffusionSpec, SingleDeathSpec, TreeSpec
from .oracle import GeneratorMatrix

__all__ = [
    "RngConfig",
    "HitEstimate",
    "TailEstimate",
    "Path",
    "simulate_ctmc",
    "mc_hitting",
    "mc_tail",
    "em_diffusion_hitting",
    "SimulationError",
]

SEED_ENV = "ERGO_SEED"
DEFAULT_SEED = 20240601
CENSOR_FLAG = 0.01


class SimulationError(RuntimeError):
    """Rate overflow, all trajectories censored, or a step-size violation."""


@dataclass(frozen=True)
class RngConfig:
    """Seed and number of independent substreams.

    ``RngConfig.from_env()`` reads the seed from ``ERGO_SEED`` when set.
    """

    seed: int = DEFAULT_SEED
    streams: int = 8

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.streams < 1:
            raise ValueError("streams must be positive")

    @classmethod
    def from_env(cls, default: int = DEFAULT_SEED, streams: int = 8) -> "RngConfig":
        raw = os.environ.get(SEED_ENV)
        return cls(int(raw) if raw else default, streams)

    def generators(self) -> list[np.random.Generator]:
        children = np.random.SeedSequence(int(self.seed)).spawn(self.streams)
        return [np.random.default_rng(c) for c in children]


def _rng_streams(rng) -> list[np.random.Generator]:
    if rng is None:
        return RngConfig.from_env().generators()
    if isinstance(rng, RngConfig):
        return rng.generators()
    if isinstance(rng, np.random.Generator):
        return [rng]
    if isinstance(rng, (int, np.integer)):
        return RngConfig(int(rng)).generators()
    raise TypeError("rng must be an RngConfig, a numpy Generator or an integer seed")


def _split(trials: int, parts: int) -> list[int]:
    base, extra = divmod(trials, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


@dataclass(frozen=True)
class HitEstimate:
    """Sample mean of a hitting time with its standard error.

    ``censored`` counts trajectories still outside ``H`` at the horizon;
    they are excluded from ``mean`` and ``flagged`` is set when they exceed
    1% of ``trials``.  ``exp_moment`` is ``(beta, mean of e^{beta tau},
    standard error)`` when requested.
    """

    mean: float
    std_error: float
    trials: int
    exp_moment: tuple | None = None
    censored: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")

    @property
    def flagged(self) -> bool:
        return self.censored > CENSOR_FLAG * self.trials

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "trials": self.trials,
            "exp_moment": None if self.exp_moment is None else list(self.exp_moment),
            "censored": self.censored,
            "flagged": self.flagged,
            "diagnostics": dict(self.diagnostics),
        }


class _Moments:
    """Chan-Welford merge of per-batch (count, mean, M2)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values: np.ndarray):
        k = values.size
        if k == 0:
            return
        mb = float(values.mean())
        m2b = float(((values - mb) ** 2).sum())
        n = self.n + k
        d = mb - self.mean
        self.mean += d * k / n
        self.m2 += m2b + d * d * self.n * k / n
        self.n = n

    @property
    def std_error(self) -> float:
        if self.n < 2:
            return math.inf
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


# --------------------------------------------------------------------------
# chain transitions

class _Table:
    """Outgoing rates of visited states, indexed densely as they are met.

    ``targets[k]`` and ``cum[k]`` are padded to a common width; ``total[k]``
    is the total jump rate of state ``labels[k]``.
    """

    def __init__(self, spec):
        self.spec = spec
        self.labels: list = []
        self.index: dict = {}
        self.rows: list = []
        self.width = 1
        self.targets = np.zeros((0, 1), dtype=np.int64)
        self.cum = np.zeros((0, 1))
        self.total = np.zeros(0)
        self.built = np.zeros(0, dtype=bool)

    def id_of(self, label) -> int:
        k = self.index.get(label)
        if k is None:
            k = len(self.labels)
            self.index[label] = k
            self.labels.append(label)
            self.rows.append(None)
        return k

    def _row(self, label) -> dict:
        spec = self.spec
        if isinstance(spec, GeneratorMatrix):
            Q = spec.Q
            row = Q.getrow(label).toarray().ravel() if hasattr(Q, "getrow") else Q[label]
            return {int(j): float(row[j]) for j in np.flatnonzero(row) if j != label}
        if isinstance(spec, BirthDeathSpec):
            i = int(label)
            out = {}
            if i >= 1:
                out[i - 1] = float(spec.a(i))
            if spec.size is None or i + 1 < spec.size:
                out[i + 1] = float(spec.b(i))
            return out
        if isinstance(spec, SingleDeathSpec):
            return spec.row(int(label))
        if isinstance(spec, TreeSpec):
            return _tree_row(spec, label)
        raise TypeError(f"cannot simulate a {type(spec).__name__}")

    def build(self, ks: np.ndarray):
        """Compute rows for the dense ids ``ks`` that are not built yet."""
        need = [int(k) for k in np.unique(ks) if k >= self.built.size or not self.built[k]]
        if not need:
            return
        for k in need:
            row = self._row(self.labels[k])
            rates = np.array(list(row.values()), dtype=float)
            if rates.size and (not np.all(np.isfinite(rates)) or np.any(rates < 0)):
                raise SimulationError(f"invalid jump rates at state {self.labels[k]!r}")
            self.rows[k] = ([self.id_of(j) for j in row], rates)
        n = len(self.labels)
        width = max([self.width] + [len(r[0]) for r in self.rows if r is not None])
        targets = np.zeros((n, width), dtype=np.int64)
        cum = np.full((n, width), np.inf)
        total = np.zeros(n)
        built = np.zeros(n, dtype=bool)
        for k, r in enumerate(self.rows):
            if r is None:
                continue
            t, rates = r
            m = len(t)
            targets[k, :m] = t
            c = np.cumsum(rates)
            cum[k, :m] = c
            total[k] = c[-1] if m else 0.0
            built[k] = True
        self.width, self.targets, self.cum, self.total, self.built = width, targets, cum, total, built


def _tree_row(spec: TreeSpec, label: str) -> dict:
    nodes = spec.by_id()
    out = {}
    rays = {r.start: r for r in spec.rays}
    if "/" in label:
        start, k = label.rsplit("/", 1)
        k = int(k)
        ray = rays[start]
        out[start if k == 1 else f"{start}/{k - 1}"] = float(ray.down(k))
        out[f"{start}/{k + 1}"] = float(ray.up(k + 1))
        return out
    node = nodes[label]
    if node.parent is not None:
        out[node.parent] = node.down
    for child in spec.children()[label]:
        out[child] = nodes[child].up
    if label in rays:
        out[f"{label}/1"] = float(rays[label].up(1))
    return {k: v for k, v in out.items() if v > 0}


def _to_label(spec, state):
    if isinstance(spec, TreeSpec):
        return str(state)
    return int(state)


@dataclass(frozen=True)
class Path:
    """Jump times (starting with 0) and the states entered at those times."""

    times: tuple
    states: tuple


def simulate_ctmc(spec, x0, horizon: float, rng=None) -> Path:
    """Exact trajectory of a chain up to ``horizon``.

    ``spec`` is a birth-death, single-death or tree spec, or a
    :class:`~ergobound.oracle.GeneratorMatrix`.  Holding times are
    exponential at the total rate and the next state is drawn with
    probabilities proportional to the rates.
    """
    gen = _rng_streams(rng)[0]
    table = _Table(spec)
    k = table.id_of(_to_label(spec, x0))
    t = 0.0
    times, states = [0.0], [table.labels[k]]
    while True:
        table.build(np.array([k]))
        rate = table.total[k]
        if rate == 0:
            break
        t += gen.exponential(1.0 / rate)
        if t > horizon:
            break
        u = gen.random() * rate
        j = int(np.searchsorted(table.cum[k], u, side="right"))
        k = int(table.targets[k, min(j, table.targets.shape[1] - 1)])
        times.append(t)
        states.append(table.labels[k])
    return Path(tuple(times), tuple(states))


def _hit_batch(table: _Table, x0_id: int, H_ids: set, n: int, horizon: float, gen) -> tuple:
    """Lockstep simulation of ``n`` trajectories; returns (times, hit mask)."""
    state = np.full(n, x0_id, dtype=np.int64)
    clock = np.zeros(n)
    active = np.ones(n, dtype=bool)
    hit = np.zeros(n, dtype=bool)
    in_H = np.zeros(0, dtype=bool)

    def refresh():
        nonlocal in_H
        m = len(table.labels)
        if in_H.size < m:
            in_H = np.concatenate([in_H, np.zeros(m - in_H.size, dtype=bool)])
            for h in H_ids:
                if h < m:
                    in_H[h] = True

    refresh()
    if in_H[x0_id]:
        return np.zeros(n), np.ones(n, dtype=bool)
    while np.any(active):
        idx = np.flatnonzero(active)
        table.build(state[idx])
        refresh()
        rate = table.total[state[idx]]
        if np.any(rate == 0):
            raise SimulationError("a trajectory reached an absorbing state outside H")
        clock[idx] += gen.exponential(1.0, idx.size) / rate
        over = clock[idx] > horizon
        u = gen.random(idx.size) * rate
        cum = table.cum[state[idx]]
        j = np.minimum((u[:, None] >= cum).sum(axis=1), table.width - 1)
        nxt = table.targets[state[idx], j]
        state[idx] = np.where(over, state[idx], nxt)
        refresh()
        arrived = ~over & in_H[state[idx]]
        hit[idx[arrived]] = True
        active[idx[arrived | over]] = False
    return clock, hit


def mc_hitting(spec, x0, H, trials: int, beta: float | None = None,
               horizon: float = 1e6, rng=None) -> HitEstimate:
    """Monte Carlo estimate of ``E_x0 tau_H``.

    Trajectories still outside ``H`` at ``horizon`` are censored: they are
    counted, excluded from the mean, and flag the estimate when above 1%.
    With ``beta`` the sample mean of ``e^{beta tau}`` is reported as well.

    Raises
    ------
    SimulationError
        If every trajectory is censored.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    streams = _rng_streams(rng)
    table = _Table(spec)
    x0_id = table.id_of(_to_label(spec, x0))
    H_ids = {table.id_of(_to_label(spec, h)) for h in H}
    mom, emom = _Moments(), _Moments()
    censored = 0
    for gen, n in zip(streams, _split(trials, len(streams))):
        if n == 0:
            continue
        clock, hit = _hit_batch(table, x0_id, H_ids, n, horizon, gen)
        censored += int((~hit).sum())
        mom.add(clock[hit])
        if beta is not None:
            with np.errstate(over="ignore"):
                emom.add(np.exp(beta * clock[hit]))
    if mom.n == 0:
        raise SimulationError("every trajectory was censored at the horizon")
    exp_moment = None if beta is None else (beta, emom.mean, emom.std_error)
    se = mom.std_error if mom.n >= 2 else 0.0
    if mom.n >= 2 and mom.m2 == 0.0:
        se = 0.0
    return HitEstimate(mom.mean, se, trials, exp_moment, censored,
                       {"horizon": horizon, "states_visited": len(table.labels)})


@dataclass(frozen=True)
class TailEstimate:
    """``delta_hat = max_x P_x(tau_H > t0)`` over probe states.

    ``moment_bound = t0 / (1 - delta_hat)`` bounds ``sup_x E_x tau_H`` when
    the probe maximum stands in for the sup over all states.
    """

    t0: float
    delta_hat: float
    moment_bound: float
    per_probe: dict
    std_errors: dict

    def to_dict(self) -> dict:
        return {"t0": self.t0, "delta_hat": self.delta_hat, "moment_bound": self.moment_bound,
                "per_probe": {str(k): v for k, v in self.per_probe.items()},
                "std_errors": {str(k): v for k, v in self.std_errors.items()}}


def mc_tail(spec, H, t0: float, trials: int, probes=None, rng=None) -> TailEstimate:
    """Estimate ``sup_x P_x(tau_H > t0)`` by the maximum over probe states.

    ``probes`` defaults to every state outside ``H`` of a finite chain.
    The sup over an infinite space is only approximated; for stochastically
    monotone chains the largest probe dominates.

    Raises
    ------
    SimulationError
        If no trajectory from some probe reached ``H`` (``delta_hat = 1``).
    """
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if probes is None:
        n = _finite_size(spec)
        if n is None:
            raise ValueError("probes are required for an infinite chain")
        Hs = {_to_label(spec, h) for h in H}
        probes = [s for s in range(n) if s not in Hs]
    streams = _rng_streams(rng)
    table = _Table(spec)
    H_ids = {table.id_of(_to_label(spec, h)) for h in H}
    per, ses = {}, {}
    for x in probes:
        x0_id = table.id_of(_to_label(spec, x))
        survive = 0
        for gen, n in zip(streams, _split(trials, len(streams))):
            if n:
                _, hit = _hit_batch(table, x0_id, H_ids, n, t0, gen)
                survive += int((~hit).sum())
        p = survive / trials
        per[x] = p
        ses[x] = math.sqrt(max(p * (1 - p), 0.0) / trials)
    delta_hat = max(per.values())
    if delta_hat >= 1.0:
        raise SimulationError("no trajectory reached H from some probe (delta_hat = 1)")
    return TailEstimate(t0, delta_hat, t0 / (1.0 - delta_hat), per, ses)


def _finite_size(spec):
    if isinstance(spec, GeneratorMatrix):
        return spec.n
    if isinstance(spec, BirthDeathSpec):
        return spec.size
    if isinstance(spec, SingleDeathSpec) and spec.finite:
        return spec.N
    return None


# --------------------------------------------------------------------------
# diffusions

def em_diffusion_hitting(spec: DiffusionSpec, x0: float, r: float, dt: float, trials: int,
                         rng=None, horizon: float = 1e3, max_drift_step: float = 0.1) -> HitEstimate:
    """Euler-Maruyama estimate of ``E_x0 tau_[0,r]`` for ``a f'' + b f'`` reflected at 0.

    ``X <- |X + b(X) dt + sqrt(2 a(X) dt) Z|``; the hit is declared at the
    first step with ``X <= r``.  Discrete monitoring biases the estimate
    upward by ``O(sqrt(dt))``.  The same Brownian increments drive a second
    run with step ``2 dt``; ``diagnostics["richardson"]`` holds that mean,
    the bias estimate ``(m_dt - m_2dt)/(sqrt 2 - 1)`` and its standard
    error from the paired differences.

    Raises
    ------
    SimulationError
        If ``|b(X)| dt`` exceeds ``max_drift_step * max(x0, 1)`` on the
        visited range, or every trajectory is censored.
    """
    if spec.domain != "half_line":
        raise ValueError("only half-line diffusions can be simulated")
    if not (dt > 0 and trials >= 2):
        raise ValueError("need dt > 0 and at least 2 trials")
    if x0 <= r:
        return HitEstimate(0.0, 0.0, trials, None, 0, {"dt": dt})
    scale = max(float(x0), 1.0)
    streams = _rng_streams(rng)
    fine_m, coarse_m, diff_m = _Moments(), _Moments(), _Moments()
    censored = 0
    worst = 0.0
    steps_cap = int(math.ceil(horizon / (2 * dt)))
    sq = math.sqrt(dt)
    for gen, n in zip(streams, _split(trials, len(streams))):
        if n == 0:
            continue
        xf = np.full(n, float(x0))
        xc = np.full(n, float(x0))
        tf = np.full(n, np.nan)
        tc = np.full(n, np.nan)
        for step in range(steps_cap):
            af = np.isnan(tf)
            ac = np.isnan(tc)
            if not (af.any() or ac.any()):
                break
            z1 = gen.standard_normal(n)
            z2 = gen.standard_normal(n)
            # fine path: two steps of dt
            for z, k in ((z1, 2 * step + 1), (z2, 2 * step + 2)):
                idx = np.flatnonzero(af)
                if idx.size:
                    x = xf[idx]
                    b = spec.b(x)
                    worst = max(worst, float(np.max(np.abs(b))) * dt)
                    x = np.abs(x + b * dt + np.sqrt(2 * spec.a(x)) * sq * z[idx])
                    xf[idx] = x
                    done = x <= r
                    tf[idx[done]] = k * dt
                    af[idx[done]] = False
            # coarse path: one step of 2 dt with the summed increment
            idx = np.flatnonzero(ac)
            if idx.size:
                x = xc[idx]
                b = spec.b(x)
                x = np.abs(x + b * 2 * dt + np.sqrt(2 * spec.a(x)) * sq * (z1[idx] + z2[idx]))
                xc[idx] = x
                done = x <= r
                tc[idx[done]] = (2 * step + 2) * dt
            if worst > max_drift_step * scale:
                raise SimulationError(
                    f"drift step |b(x)| dt = {worst:.3g} exceeds {max_drift_step} * x-scale; reduce dt")
        ok_f = ~np.isnan(tf)
        both = ok_f & ~np.isnan(tc)
        censored += int((~ok_f).sum())
        fine_m.add(tf[ok_f])
        coarse_m.add(tc[~np.isnan(tc)])
        diff_m.add(tf[both] - tc[both])
    if fine_m.n == 0:
        raise SimulationError("every trajectory was censored at the horizon")
    factor = 1.0 / (math.sqrt(2.0) - 1.0)
    rich = {
        "mean_2dt": coarse_m.mean,
        "bias_estimate": -diff_m.mean * factor,
        "bias_std_error": diff_m.std_error * factor,
        "extrapolated": fine_m.mean + diff_m.mean * factor,
        "note": "hitting times under Euler-Maruyama carry an O(sqrt(dt)) bias",
    }
    diags = {"dt": dt, "max_drift_step": worst, "richardson": rich, "horizon": horizon}
    return HitEstimate(fine_m.mean, fine_m.std_error, trials, None, censored, diags)
