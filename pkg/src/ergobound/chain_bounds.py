"""Rate bounds for birth-death, single-death and tree chains.

Everything here is computed from closed-form series in the rates: the
symmetric measure ``mu``, the series ``S`` and its tails ``S_n`` (uniform
hitting-time moments of ``{0..n}``), the head sums ``S-bar_i``, the
Hardy-type constant ``delta`` and their combination into a
:class:`RateBounds` record.  Series are evaluated in log space because
``mu`` typically has factorial growth or decay.

The sandwich ``(4 delta)^-1 <= lambda_1`` is attached as stated.  Its
companion ``lambda_1 <= 1/delta`` is reported in ``extras`` but not used as
the upper end of the interval; the upper end comes from step-function
Rayleigh quotients, which bound ``lambda_1`` for every reversible chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import BirthDeathSpec, SingleDeathSpec, TreeSpec
from .numerics import DEFAULT_TOL, NumericalError, Tolerance, sum_series

__all__ = [
    "RateBounds",
    "HittingSummary",
    "EntranceVerdict",
    "NotStronglyErgodic",
    "InconclusiveError",
    "SCAN_WINDOW",
    "bd_mu",
    "bd_entrance_boundary",
    "bd_S_profile",
    "bd_delta",
    "bd_hitting_moment",
    "bd_rate_bounds",
    "sd_G",
    "sd_S",
    "sd_hitting_moment",
    "sd_rate_bounds",
    "tree_mu",
    "tree_m",
    "tree_H",
    "tree_bounds",
    "mc1_bound",
    "moment_to_exp",
    "tail_to_moment",
    "combine_bounds",
]

SCAN_WINDOW = 64
_SCAN_START = 256
_SCAN_CAP = 1 << 20


class NotStronglyErgodic(ValueError):
    """The model fails the strong-ergodicity criterion (a series diverges)."""


class InconclusiveError(NumericalError):
    """A series neither converged nor diverged within the caps."""


@dataclass
class RateBounds:
    """Bounds on the strong-ergodicity rate ``kappa`` and on ``lambda_1``.

    ``provenance`` lists ``(field, rule)`` pairs naming the result that
    produced each number.  ``extras`` holds diagnostics that do not fit
    the fixed fields (scan lengths, literal forms of stated bounds).
    """

    kappa_lower: float
    kappa_equals_lambda1: bool
    lambda1_lower: float
    lambda1_upper: float | None = None
    M_H: float | None = None
    H: str | None = None
    S: float | None = None
    delta: float | None = None
    provenance: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lambda1_upper is not None and self.lambda1_lower > self.lambda1_upper * (1 + 1e-9):
            raise ValueError("lambda1_lower exceeds lambda1_upper")
        if (
            self.kappa_equals_lambda1
            and self.lambda1_upper is not None
            and self.kappa_lower > self.lambda1_upper * (1 + 1e-9)
        ):
            raise ValueError("kappa_lower exceeds lambda1_upper although kappa = lambda1")

    def to_dict(self) -> dict:
        return {
            "kappa_lower": self.kappa_lower,
            "kappa_equals_lambda1": self.kappa_equals_lambda1,
            "lambda1_lower": self.lambda1_lower,
            "lambda1_upper": self.lambda1_upper,
            "M_H": self.M_H,
            "H": self.H,
            "S": self.S,
            "delta": self.delta,
            "provenance": [list(p) for p in self.provenance],
            "extras": dict(self.extras),
        }


@dataclass(frozen=True)
class HittingSummary:
    """Moments of the hitting time of a set ``H``.

    ``moment1`` is ``sup_x E_x tau_H``; ``exp_moment`` a pair
    ``(beta, bound on E e^{beta tau})``; ``tail`` a pair ``(t0, bound on
    sup_x P_x[tau_H > t0])``.
    """

    target: str
    moment1: float
    exp_moment: tuple | None = None
    tail: tuple | None = None

    def __post_init__(self):
        if not self.moment1 >= 0:
            raise ValueError("moment1 must be nonnegative")
        if self.exp_moment is not None and not self.exp_moment[0] * self.moment1 < 1:
            raise ValueError("beta * moment1 must be below 1")


@dataclass(frozen=True)
class EntranceVerdict:
    """Outcome of the entrance-boundary test for a birth-death chain.

    ``first`` is the series that must diverge and ``S`` the one that must
    converge; ``is_entrance`` requires both.
    """

    is_entrance: bool
    S: float
    first: float
    S_error: float = 0.0
    note: str = ""


# --------------------------------------------------------------------------
# log-space series helpers

def _log_series(logf: Callable, start: int, tol: Tolerance) -> tuple[float, float]:
    """``log sum_{k>=start} exp(logf(k))`` and its relative error.

    Returns ``(inf, inf)`` on a divergence verdict.
    """
    base = float(logf(np.array([start]))[0])
    if base == -math.inf:
        # leading term vanishes; fall back to an unscaled sum
        base = 0.0
    if base == math.inf:
        return math.inf, math.inf
    with np.errstate(over="ignore"):
        res = sum_series(
            lambda k: np.exp(logf(k) - base), tol, start=start, block=min(max(start, 1), 4096)
        )
    if res.diverges:
        return math.inf, math.inf
    if not res.converged:
        raise InconclusiveError(
            f"series from index {start} neither converged nor diverged after {res.terms} terms"
        )
    if res.value <= 0:
        return -math.inf, 0.0
    return base + math.log(res.value), res.error_estimate / res.value


def _log_cumsum(logs: np.ndarray) -> np.ndarray:
    """Running ``log sum exp`` along a 1-d array."""
    if logs.size == 0:
        return logs.copy()
    return np.logaddexp.accumulate(logs)


class _TailSums:
    """Log tail sums ``log sum_{k>=j} exp(logf(k))`` for ``j = 0..n``.

    ``stop`` is the number of terms of a finite series; ``None`` means the
    series is infinite and the part beyond the table is summed by
    :func:`sum_series`.
    """

    def __init__(self, logf: Callable, tol: Tolerance, stop: int | None = None):
        self.logf = logf
        self.tol = tol
        self.stop = stop
        self._n = -1
        self._logs = np.zeros(0)
        self.rel_error = 0.0

    def __call__(self, n: int) -> np.ndarray:
        if n > self._n:
            self._extend(max(n, 2 * self._n, 16))
        return self._logs[: n + 1]

    def _extend(self, n: int):
        if self.stop is not None:
            m = max(self.stop, 0)
            head = self.logf(np.arange(m)) if m else np.zeros(0)
            tail = -math.inf
            self.rel_error = 0.0
        else:
            m = n
            head = self.logf(np.arange(m))
            tail, self.rel_error = _log_series(self.logf, m, self.tol)
        rev = np.logaddexp.accumulate(np.concatenate([[tail], head[::-1]]))
        logs = rev[::-1]
        if logs.size < n + 1:
            logs = np.concatenate([logs, np.full(n + 1 - logs.size, -math.inf)])
        self._logs = logs
        self._n = logs.size - 1


class _BirthDeath:
    """Lazily extended log tables for one birth-death chain."""

    def __init__(self, spec: BirthDeathSpec, tol: Tolerance):
        self.spec = spec
        self.tol = tol
        self.size = spec.size
        self._log_mu = np.zeros(0)
        flux_stop = None if self.size is None else self.size - 1
        self.mass = _TailSums(self.log_mu, tol, self.size)
        self.S_tails = _TailSums(self._log_S_term, tol, flux_stop)
        self.inv_flux = _TailSums(lambda k: -self.log_flux(k), tol, flux_stop)

    def _grow(self, n: int):
        if self.size is not None:
            n = min(n, self.size)
        have = self._log_mu.size
        if n <= have:
            return
        n = max(n, 2 * have, 64)
        if self.size is not None:
            n = min(n, self.size)
        i = np.arange(1, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.log(self.spec.b(i - 1)) - np.log(self.spec.a(i))
        if not np.all(np.isfinite(steps)):
            bad = int(i[np.argmax(~np.isfinite(steps))])
            raise NumericalError(f"rate ratio b_(i-1)/a_i is not finite at i={bad}")
        log_mu = np.concatenate([[0.0], np.cumsum(steps)])
        if not np.all(np.isfinite(log_mu)):
            raise NumericalError("log mu overflowed")
        self._log_mu = log_mu

    def log_mu(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return np.zeros(0)
        self._grow(int(idx.max()) + 1)
        out = np.full(idx.shape, -math.inf)
        ok = idx < self._log_mu.size
        out[ok] = self._log_mu[idx[ok]]
        return out

    def log_flux(self, idx) -> np.ndarray:
        """``log(mu_k b_k)``; ``-inf`` past the last state of a finite chain."""
        idx = np.asarray(idx, dtype=np.int64)
        out = self.log_mu(idx) + np.log(self.spec.b(idx))
        if self.size is not None:
            out = np.where(idx >= self.size - 1, -math.inf, out)
        return out

    def _log_S_term(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if k.size == 0:
            return np.zeros(0)
        log_T = self.mass(int(k.max()) + 1)
        return log_T[k + 1] - self.log_flux(k)

    def log_heads(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """``log S-bar_i`` and ``log R_i`` for ``i = 0..n``.

        ``S-bar_i = sum_{k<i} (mu_k b_k)^-1 sum_{j<=k} mu_j`` and
        ``R_i = sum_{k<i} 1/(mu_k b_k)``.
        """
        k = np.arange(n)
        flux = self.log_flux(k)
        prefix = _log_cumsum(self.log_mu(k))
        sbar = np.concatenate([[-math.inf], _log_cumsum(prefix - flux)])
        R = np.concatenate([[-math.inf], _log_cumsum(-flux)])
        return sbar, R

    def scan_length(self) -> int:
        """Largest index a scan may reach (the last state of a finite chain)."""
        return _SCAN_CAP if self.size is None else max(self.size - 1, 1)


def _exp(x: float) -> float:
    return math.inf if x > 709.0 else math.exp(x)


# --------------------------------------------------------------------------
# birth-death chains

def bd_mu(spec: BirthDeathSpec, n: int) -> float:
    """Symmetric measure ``mu_n = b_0...b_(n-1) / (a_1...a_n)``, ``mu_0 = 1``.

    The product is accumulated as a sum of logarithms.

    Examples
    --------
    >>> from ergobound.model import BirthDeathSpec
    >>> round(bd_mu(BirthDeathSpec.from_strings("1", "i^2"), 3), 12) == round(1 / 36, 12)
    True
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if spec.size is not None and n >= spec.size:
        raise IndexError(f"state {n} outside the finite chain of size {spec.size}")
    value = float(_BirthDeath(spec, DEFAULT_TOL).log_mu(np.array([n]))[0])
    if value > 709.0:
        raise OverflowError(f"mu_{n} = exp({value:.6g}) overflows")
    return math.exp(value)


def bd_entrance_boundary(spec: BirthDeathSpec, tol: Tolerance = DEFAULT_TOL) -> EntranceVerdict:
    """Test whether infinity is an entrance boundary.

    The first series ``sum_i mu_i sum_{j>=i} 1/(mu_j b_j)`` must diverge
    and ``S = sum_i (mu_i b_i)^-1 sum_{j>i} mu_j`` must converge.

    Raises
    ------
    InconclusiveError
        When a series hits the term cap without a verdict.
    """
    bd = _BirthDeath(spec, tol)
    log_S = float(bd.S_tails(0)[0])
    S = _exp(log_S)
    if spec.size is not None:
        return EntranceVerdict(True, S, math.inf, 0.0, "finite chain: strongly ergodic")
    log_U0 = float(bd.inv_flux(0)[0])
    if log_U0 == math.inf:
        first = math.inf
    else:
        def log_first(k):
            k = np.asarray(k, dtype=np.int64)
            return bd.log_mu(k) + bd.inv_flux(int(k.max()))[k]

        first = _exp(_log_series(log_first, 0, tol)[0])
    note = ""
    if first < math.inf:
        note = "the first series converges"
    elif S == math.inf:
        note = "S diverges"
    return EntranceVerdict(first == math.inf and S < math.inf, S, first, bd.S_tails.rel_error, note)


def _profile_scan(bd: _BirthDeath) -> tuple[float, int, int]:
    """``inf_i max{S_i, S-bar_i}``, its argmin and the scan length."""
    n = min(_SCAN_START, bd.scan_length())
    while True:
        log_S = bd.S_tails(n)
        log_sbar, _ = bd.log_heads(n)
        mx = np.maximum(log_S, log_sbar)
        arg = int(np.argmin(mx))
        crossed = np.flatnonzero(log_sbar >= log_S)
        done = crossed.size and crossed[0] + SCAN_WINDOW <= n
        if done or n >= bd.scan_length() or log_S[0] == math.inf:
            return _exp(float(mx[arg])), arg, n
        n = min(2 * n, bd.scan_length())


def bd_S_profile(spec: BirthDeathSpec, tol: Tolerance = DEFAULT_TOL) -> tuple[float, float]:
    """``S`` and ``inf_i max{S_i, S-bar_i}``.

    ``S_i`` is the uniform mean hitting time of ``{0..i}`` from above and
    ``S-bar_i`` the mean hitting time of ``i`` from ``0``.  The first
    decreases and the second increases in ``i``, so the infimum of the
    larger one sits at their crossing.  Its reciprocal lower-bounds
    ``kappa`` and ``lambda_1``, and it never exceeds ``S``.

    Raises
    ------
    NotStronglyErgodic
        When ``S`` diverges.
    """
    bd = _BirthDeath(spec, tol)
    S = _exp(float(bd.S_tails(0)[0]))
    if S == math.inf:
        raise NotStronglyErgodic("S diverges: the chain is not strongly ergodic")
    best, _, _ = _profile_scan(bd)
    return S, best


def _delta_scan(bd: _BirthDeath) -> tuple[float, int, int, bool]:
    """``delta = sup_n T_n R_n`` with ``T_n = sum_{i>=n} mu_i``.

    For ``m >= n`` every later term obeys ``T_m R_m <= T_n R_n + S_n``, so
    the scan stops once that majorant drops below the running max and the
    max has been stable for :data:`SCAN_WINDOW` indices.  Returns
    ``(delta, argmax, length, certified)``.
    """
    n = min(_SCAN_START, bd.scan_length())
    while True:
        log_T = bd.mass(n)
        _, log_R = bd.log_heads(n)
        log_S = bd.S_tails(n)
        with np.errstate(invalid="ignore"):
            log_d = log_T + log_R
        log_d[0] = -math.inf
        arg = int(np.argmax(log_d))
        top = float(log_d[arg])
        if top == math.inf or math.isnan(top):
            raise NotStronglyErgodic("delta diverges")
        major = np.logaddexp(log_d, log_S)
        later = major[arg + SCAN_WINDOW :] if arg + SCAN_WINDOW <= n else np.zeros(0)
        certified = bool(later.size and later.min() <= top + math.log1p(bd.tol.rel))
        if bd.size is not None and n >= bd.scan_length():
            certified = True
        if certified or n >= bd.scan_length():
            return math.exp(top), arg, n, certified
        n = min(2 * n, bd.scan_length())


def bd_delta(spec: BirthDeathSpec, tol: Tolerance = DEFAULT_TOL) -> float:
    """``delta = sup_n (sum_{i>=n} mu_i)(sum_{i<n} 1/(mu_i b_i))``.

    Examples
    --------
    >>> from ergobound.model import BirthDeathSpec
    >>> bd_delta(BirthDeathSpec.from_strings("1", "1", size=2))
    1.0
    """
    bd = _BirthDeath(spec, tol)
    if float(bd.S_tails(0)[0]) == math.inf:
        raise NotStronglyErgodic("S diverges: delta is not finite")
    return _delta_scan(bd)[0]


def bd_hitting_moment(spec: BirthDeathSpec, n: int, tol: Tolerance = DEFAULT_TOL) -> HittingSummary:
    """Uniform mean hitting time of ``H_n = {0..n}``.

    ``M_{H_n} = S_n = sum_{k>=n} (mu_k b_k)^-1 sum_{j>k} mu_j``, which is
    nonincreasing in ``n`` and tends to 0 when ``S`` is finite.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    bd = _BirthDeath(spec, tol)
    value = _exp(float(bd.S_tails(n)[n]))
    if value == math.inf:
        raise NotStronglyErgodic(f"S_{n} diverges: the chain is not strongly ergodic")
    return HittingSummary(f"{{0..{n}}}", value)


def _rayleigh_upper(bd: _BirthDeath, n: int) -> tuple[float, int]:
    """``min_k mu_(k-1) b_(k-1) Z / (T_k (Z - T_k))`` over ``k = 1..n``.

    This is the Rayleigh quotient of the indicator of ``{k, k+1, ...}``;
    every such quotient bounds ``lambda_1`` from above.
    """
    n = max(1, n if bd.size is None else min(n, bd.size - 1))
    k = np.arange(1, n + 1)
    log_T = bd.mass(n)[k]
    log_Z = float(bd.mass(0)[0])
    log_head = _log_cumsum(bd.log_mu(np.arange(n)))[k - 1]
    logs = bd.log_flux(k - 1) + log_Z - log_T - log_head
    arg = int(np.argmin(logs))
    return _exp(float(logs[arg])), int(k[arg])


def bd_rate_bounds(spec: BirthDeathSpec, tol: Tolerance = DEFAULT_TOL) -> RateBounds:
    """Full bound record for a strongly ergodic birth-death chain.

    ``kappa`` and ``lambda_1`` are bounded below by
    ``max{(4 delta)^-1, 1/inf_i max{S_i, S-bar_i}}``.  ``kappa = lambda_1``
    is certified by exhibiting ``n`` with ``S_n <= 1/lambda1_upper``, which
    gives ``lambda_1 <= 1/M_{H_n}``; otherwise the weaker combination
    ``min{lambda_1, 1/M_H}`` is reported.

    Raises
    ------
    NotStronglyErgodic
        When ``S`` diverges.
    """
    verdict = bd_entrance_boundary(spec, tol)
    if verdict.S == math.inf:
        raise NotStronglyErgodic("S diverges: the chain is not strongly ergodic")
    bd = _BirthDeath(spec, tol)
    S = verdict.S
    prof, prof_arg, prof_len = _profile_scan(bd)
    delta, delta_arg, delta_len, certified = _delta_scan(bd)
    n_scan = max(prof_len, delta_len)
    upper, upper_at = _rayleigh_upper(bd, n_scan)
    hardy = 1.0 / (4.0 * delta)
    lam_lower = max(hardy, 1.0 / prof)
    provenance = [
        ("S", "entrance-boundary series"),
        ("delta", "Hardy-type constant, lambda_1 >= 1/(4 delta)"),
        ("lambda1_lower", "max of 1/(4 delta) and hitting-time sup bound"),
        ("lambda1_upper", f"Rayleigh quotient of the indicator of {{{upper_at}, ...}}"),
    ]
    log_S = bd.S_tails(n_scan)
    # R1: smallest n with S_n <= 1/lambda1_upper
    ok = np.flatnonzero(log_S <= -math.log(upper))
    extras = {
        "entrance": verdict.is_entrance,
        "delta_inverse": 1.0 / delta,
        "delta_argmax": delta_arg,
        "delta_scan_certified": certified,
        "profile_inf": prof,
        "profile_argmin": prof_arg,
        "scan_length": n_scan,
    }
    literal = np.flatnonzero(log_S <= math.log(delta))
    extras["first_n_with_S_n_le_delta"] = int(literal[0]) if literal.size else None
    if ok.size:
        n = int(ok[0])
        M = _exp(float(log_S[n]))
        provenance.append(("kappa_equals_lambda1", f"R1: lambda_1 <= 1/M_H for H = {{0..{n}}}"))
        provenance.append(("kappa_lower", "kappa = lambda_1 >= lambda1_lower"))
        return RateBounds(
            lam_lower, True, lam_lower, upper, M, f"{{0..{n}}}", S, delta, provenance, extras
        )
    n = int(log_S.size - 1)
    M = _exp(float(log_S[n]))
    combo, case = combine_bounds(lam_lower, M)
    kappa = max(combo, 1.0 / prof)
    extras["case"] = case
    provenance.append(("kappa_lower", "max of min{lambda_1, 1/M_H} and hitting-time sup bound"))
    return RateBounds(kappa, False, lam_lower, upper, M, f"{{0..{n}}}", S, delta, provenance, extras)


# --------------------------------------------------------------------------
# single-death chains

def _up_rates(spec: SingleDeathSpec, k: int) -> np.ndarray:
    """Upward rates ``q_{k,k+1}, q_{k,k+2}, ...`` of row ``k`` (trailing zeros kept short)."""
    if k < spec.N:
        row = spec.table[k, k + 1 :]
        nz = np.flatnonzero(row)
        return row[: nz[-1] + 1].astype(float) if nz.size else np.zeros(0)
    return np.array([float(f(k)) for f in spec.tail_up])


def _q_upper(up: np.ndarray) -> np.ndarray:
    """``q_n^{(n+j)}`` for ``j = 1..len(up)``: reverse cumulative sums."""
    return np.cumsum(up[::-1])[::-1]


def _n_states(spec: SingleDeathSpec) -> int | None:
    return spec.N if spec.finite else None


def sd_G(spec: SingleDeathSpec, n: int, i: int, memo: dict | None = None) -> float:
    """``G_n^{(i)}`` from ``G_i^{(i)} = 1`` and
    ``G_n^{(i)} = q_{n,n-1}^-1 sum_{k=n+1}^{i} q_n^{(k)} G_k^{(i)}``.

    Values are stored in ``memo`` under ``(n, i)``.
    """
    if not 1 <= n <= i:
        raise ValueError("need 1 <= n <= i")
    if memo is None:
        memo = {}
    if (n, i) in memo:
        return memo[(n, i)]
    memo[(i, i)] = 1.0
    for m in range(i - 1, n - 1, -1):
        if (m, i) in memo:
            continue
        qu = _q_upper(_up_rates(spec, m))
        if not np.all(np.isfinite(qu)):
            raise NumericalError(f"row {m} has an infinite upward tail")
        total = 0.0
        for j, q in enumerate(qu[: i - m], start=1):
            total += q * memo[(m + j, i)]
        memo[(m, i)] = total / float(spec.down(m)[0])
    return memo[(n, i)]


class _Columns:
    """Column sums ``c_l = sum_{k=n0+1}^{l} G_k^{(l)} / q_{l,l-1}`` for ``l > n0``.

    ``G^{(l)} = q_{l,l-1} A^-1 e_l`` for the upper-triangular matrix with
    diagonal ``q_{n,n-1}`` and entries ``-q_n^{(k)}`` above it, so the
    column sums of ``A^-1`` obey the forward recursion
    ``c_l = (1 + sum_{n0<k<l} q_k^{(l)} c_k) / q_{l,l-1}``.
    """

    def __init__(self, spec: SingleDeathSpec, n0: int = 0):
        self.spec = spec
        self.n0 = n0
        self.c: list[float] = []
        self.acc: dict[int, float] = {}
        self.stop = None if spec.finite else None
        if spec.finite:
            self.stop = spec.N

    def ensure(self, l_max: int):
        spec = self.spec
        l = self.n0 + 1 + len(self.c)
        if self.stop is not None:
            l_max = min(l_max, self.stop - 1)
        if l > l_max:
            return
        downs = spec.down(np.arange(l, l_max + 1))
        tail_rows = None
        if not spec.finite and l_max >= spec.N:
            lo = max(l, spec.N)
            idx = np.arange(lo, l_max + 1, dtype=float)
            tail_rows = (lo, np.stack([f(idx) for f in spec.tail_up], axis=1) if spec.tail_up else None)
        acc = self.acc
        c = self.c
        for pos, ql in enumerate(downs.tolist()):
            cur = l + pos
            value = (1.0 + acc.pop(cur, 0.0)) / ql
            c.append(value)
            if tail_rows is not None and cur >= tail_rows[0]:
                ups = tail_rows[1][cur - tail_rows[0]] if tail_rows[1] is not None else ()
            else:
                ups = _up_rates(spec, cur)
            if len(ups):
                run = 0.0
                for j in range(len(ups), 0, -1):
                    run += float(ups[j - 1])
                    acc[cur + j] = acc.get(cur + j, 0.0) + run * value

    def terms(self, idx: np.ndarray) -> np.ndarray:
        """``c_l`` at ``l = n0 + 1 + idx`` (zero past a finite chain)."""
        top = self.n0 + 1 + int(idx.max())
        self.ensure(top)
        arr = np.asarray(self.c)
        out = np.zeros(idx.shape)
        ok = idx < arr.size
        out[ok] = arr[idx[ok]]
        return out


def _sd_sum(spec: SingleDeathSpec, n0: int, tol: Tolerance) -> float:
    cols = _Columns(spec, n0)
    if spec.finite:
        cols.ensure(spec.N - 1)
        return float(np.sum(cols.c)) if cols.c else 0.0
    res = sum_series(cols.terms, tol)
    if res.diverges:
        return math.inf
    if not res.converged:
        raise InconclusiveError(f"single-death series inconclusive after {res.terms} terms")
    return res.value


def sd_S(spec: SingleDeathSpec, tol: Tolerance = DEFAULT_TOL) -> float:
    """``S = sum_{k>=1} sum_{l>=k} G_k^{(l)} / q_{l,l-1}``.

    Finite ``S`` is equivalent to strong ergodicity.  Returns ``inf`` on a
    divergence verdict.
    """
    return _sd_sum(spec, 0, tol)


def sd_hitting_moment(spec: SingleDeathSpec, n: int, tol: Tolerance = DEFAULT_TOL) -> HittingSummary:
    """Bound ``sum_{k>n} sum_{l>=k} G_k^{(l)}/q_{l,l-1}`` on ``sup_{i>n} E_i tau_{0..n}``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    value = _sd_sum(spec, n, tol)
    if value == math.inf:
        raise NotStronglyErgodic("single-death series diverges")
    return HittingSummary(f"{{0..{n}}}", value)


def sd_rate_bounds(spec: SingleDeathSpec, tol: Tolerance = DEFAULT_TOL) -> RateBounds:
    """Strong-ergodicity record for a single-death chain.

    The tails ``sum_{k>n} sum_{l>=k} G_k^{(l)}/q_{l,l-1}`` vanish as ``n``
    grows, so ``kappa = lambda``.  No ``lambda_1`` estimate is available
    from the series alone; ``kappa_lower`` is the time-one bound
    ``1/S`` only when the chain is reversible, so it is left at 0 here.
    """
    S = sd_S(spec, tol)
    if S == math.inf:
        raise NotStronglyErgodic("S diverges: the chain is not strongly ergodic")
    return RateBounds(
        0.0,
        True,
        0.0,
        None,
        S,
        "{0}",
        S,
        None,
        [("S", "single-death double series"), ("kappa_equals_lambda1", "R1: M_{H_n} -> 0")],
        {},
    )


# --------------------------------------------------------------------------
# trees

class _Ray:
    """Log tables along one ray; node 0 is the leaf it hangs from."""

    def __init__(self, ray, log_mu_start: float, tol: Tolerance):
        self.ray = ray
        self.base = log_mu_start
        self._log_mu = np.zeros(1)  # relative to the start node
        self.mass = _TailSums(self.log_mu, tol)
        # m_k for k >= 1, stored at index k - 1
        self.m_tails = _TailSums(self._log_m, tol)

    def log_mu(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if k.size == 0:
            return np.zeros(0)
        need = int(k.max()) + 1
        if need > self._log_mu.size:
            n = max(need, 2 * self._log_mu.size, 64)
            j = np.arange(1, n, dtype=float)
            steps = np.log(self.ray.up(j)) - np.log(self.ray.down(j))
            if not np.all(np.isfinite(steps)):
                raise NumericalError(f"ray below {self.ray.start!r} has a non-positive rate")
            self._log_mu = np.concatenate([[0.0], np.cumsum(steps)])
        return self._log_mu[k]

    def _log_m(self, idx) -> np.ndarray:
        k = np.asarray(idx, dtype=np.int64) + 1
        log_T = self.mass(int(k.max()))
        return log_T[k] - self.log_mu(k) - np.log(self.ray.down(k.astype(float)))

    def log_mass_below(self) -> float:
        """``log sum_{k>=1} mu_k`` in absolute units."""
        return self.base + float(self.mass(1)[1])


def _tree_tables(spec: TreeSpec, tol: Tolerance):
    nodes = spec.by_id()
    kids = spec.children()
    root = spec.root
    log_mu = {root: 0.0}
    order = [root]
    for u in order:
        for v in kids[u]:
            log_mu[v] = log_mu[u] + math.log(nodes[v].up) - math.log(nodes[v].down)
            order.append(v)
    rays = {r.start: _Ray(r, log_mu[r.start], tol) for r in spec.rays}
    log_sub = {}
    for u in reversed(order):
        parts = [log_mu[u]] + [log_sub[v] for v in kids[u]]
        if u in rays:
            parts.append(rays[u].log_mass_below())
        log_sub[u] = float(np.logaddexp.reduce(parts))
    return nodes, kids, order, log_mu, log_sub, rays


def tree_mu(spec: TreeSpec, j: str) -> float:
    """``mu_j``: product of ``q_{i*i}/q_{ii*}`` along the path from the root."""
    _, _, _, log_mu, _, _ = _tree_tables(spec, DEFAULT_TOL)
    return math.exp(log_mu[j])


def _ray_node(label: str):
    if "/" in label:
        start, k = label.rsplit("/", 1)
        return start, int(k)
    return None


def tree_m(spec: TreeSpec, j: str, tol: Tolerance = DEFAULT_TOL) -> float:
    """``m_j = (mu_j q_{jj*})^-1 sum_{l in T_j} mu_l``.

    ``T_j`` is the subtree rooted at ``j``.  Explicit nodes are named by
    their id; the ``k``-th node of the ray below leaf ``s`` is ``"s/k"``.
    """
    nodes, _, _, log_mu, log_sub, rays = _tree_tables(spec, tol)
    where = _ray_node(j)
    if where is not None:
        start, k = where
        if start not in rays or k < 1:
            raise KeyError(j)
        return _exp(float(rays[start]._log_m(np.array([k - 1]))[0]))
    if j not in nodes:
        raise KeyError(j)
    if nodes[j].parent is None:
        raise ValueError("m_j is not defined at the root")
    value = log_sub[j] - log_mu[j] - math.log(nodes[j].down)
    if value == math.inf:
        raise NotStronglyErgodic(f"subtree weight below {j!r} diverges")
    return _exp(value)


def _path_sums(spec: TreeSpec, tol: Tolerance):
    nodes, kids, order, log_mu, log_sub, rays = _tree_tables(spec, tol)
    m = {}
    path = {spec.root: 0.0}
    for u in order[1:]:
        m[u] = _exp(log_sub[u] - log_mu[u] - math.log(nodes[u].down))
        path[u] = path[nodes[u].parent] + m[u]
    ray_total = {}
    for s, ray in rays.items():
        ray_total[s] = _exp(float(ray.m_tails(0)[0]))
    return nodes, kids, m, path, rays, ray_total


def tree_H(spec: TreeSpec, n: int, tol: Tolerance = DEFAULT_TOL) -> tuple[frozenset, float]:
    """The set ``H_n`` and the resulting bound on ``M_{H_n}``.

    For each root-to-leaf path (ray-extended where a ray hangs) the node
    ``i_gamma`` is the shallowest one whose remaining path sum of ``m`` is
    at most ``1/n``; ``H_n`` is the union of the paths from the root to
    these nodes.  Returns ``(H_n, max remaining sum)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    eps = 1.0 / n
    nodes, kids, m, path, rays, ray_total = _path_sums(spec, tol)
    H = set()
    worst = 0.0
    leaves = [u for u in kids if not kids[u]]
    for leaf in leaves:
        chain = []
        u = leaf
        while u is not None:
            chain.append(u)
            u = nodes[u].parent
        chain.reverse()
        end_total = path[leaf] + ray_total.get(leaf, 0.0)
        stop = None
        for u in chain:
            if end_total - path[u] <= eps:
                stop = u
                break
        if stop is not None:
            idx = chain.index(stop)
            H.update(chain[: idx + 1])
            worst = max(worst, end_total - path[stop])
            continue
        # the cut falls inside the ray
        H.update(chain)
        ray = rays[leaf]
        length = 64
        while True:
            log_tails = ray.m_tails(length)
            hit = np.flatnonzero(log_tails <= math.log(eps))
            if hit.size:
                k = int(hit[0])  # nodes 1..k are kept
                H.update(f"{leaf}/{j}" for j in range(1, k + 1))
                worst = max(worst, _exp(float(log_tails[k])))
                break
            if length >= _SCAN_CAP:
                raise InconclusiveError(f"ray below {leaf!r} never drops below 1/{n}")
            length *= 2
    return frozenset(H), worst


def tree_bounds(spec: TreeSpec, tol: Tolerance = DEFAULT_TOL, H_levels=(1, 2, 4, 8, 16)) -> RateBounds:
    """``kappa = lambda_1 >= 1/S`` with ``S`` the largest path sum of ``m``.

    The sizes of ``H_n`` for each ``n`` in ``H_levels`` are reported in
    ``extras["H_sizes"]``.
    """
    nodes, kids, m, path, rays, ray_total = _path_sums(spec, tol)
    best = max(path.values())
    for s, total in ray_total.items():
        best = max(best, path[s] + total)
    if best == math.inf:
        raise NotStronglyErgodic("a path sum of m diverges")
    if best <= 0:
        raise ValueError("tree has no edges")
    sizes = {}
    bounds = {}
    for n in H_levels:
        H, worst = tree_H(spec, n, tol)
        sizes[n] = len(H)
        bounds[n] = worst
    top = max(H_levels) if H_levels else None
    return RateBounds(
        1.0 / best,
        True,
        1.0 / best,
        None,
        bounds.get(top),
        f"H_{top}" if top else None,
        best,
        None,
        [
            ("S", "largest path sum of m"),
            ("lambda1_lower", "hitting-time sup bound, lambda_1 >= 1/S"),
            ("kappa_equals_lambda1", "R1: M_{H_n} <= 1/n"),
        ],
        {"H_sizes": sizes, "H_bounds": bounds, "path_sums": dict(path), "ray_sums": ray_total},
    )


# --------------------------------------------------------------------------
# generic bounds

def mc1_bound(Q, pi=None, check_tol: float = 1e-10) -> float:
    """``sup_x (sup_{i != x} E_i tau_x)^-1`` for a finite reversible generator.

    For every target ``x`` the mean hitting times solve
    ``Q_{-x} u = -1`` on the remaining states.

    Parameters
    ----------
    Q : GeneratorMatrix or ndarray
    pi : ndarray, optional
        Stationary vector; taken from ``Q.pi`` when ``Q`` is a
        :class:`~ergobound.oracle.GeneratorMatrix`.

    Raises
    ------
    ValueError
        For a non-reversible or reducible input.
    """
    if pi is None and hasattr(Q, "pi"):
        pi = Q.pi
    Q = np.asarray(getattr(Q, "Q", Q), dtype=float)
    n = Q.shape[0]
    if pi is None:
        w, v = np.linalg.eig(Q.T)
        pi = np.real(v[:, np.argmin(np.abs(w))])
        pi = pi / pi.sum()
    pi = np.asarray(pi, dtype=float)
    flow = pi[:, None] * Q
    scale = max(1.0, float(np.max(np.abs(flow))))
    if np.max(np.abs(flow - flow.T)) > check_tol * scale:
        raise ValueError("generator is not reversible with respect to pi")
    best = 0.0
    ones = np.ones(n - 1)
    for x in range(n):
        keep = np.r_[0:x, x + 1 : n]
        block = Q[np.ix_(keep, keep)]
        try:
            u = np.linalg.solve(block, -ones)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"restricted generator off state {x} is singular") from exc
        if not np.all(np.isfinite(u)) or np.any(u <= 0):
            raise ValueError(f"state {x} is not reachable from every other state")
        best = max(best, 1.0 / float(u.max()))
    return best


def moment_to_exp(moment1: float, beta: float) -> tuple[float, Callable[[float], float]]:
    """Exponential-moment and tail bounds from a uniform first moment.

    ``E e^{beta tau} <= 1/(1 - beta M)`` and
    ``P[tau > t] <= e^{-beta t}/(1 - beta M)`` for ``0 < beta < 1/M``.

    >>> bound, tail = moment_to_exp(1.0, 0.5)
    >>> bound, round(tail(0.0), 12)
    (2.0, 2.0)
    """
    if not moment1 > 0:
        raise ValueError("moment1 must be positive")
    if not 0 < beta < 1.0 / moment1:
        raise ValueError(f"beta must lie in (0, 1/M) = (0, {1.0 / moment1:g})")
    bound = 1.0 / (1.0 - beta * moment1)

    def tail(t):
        return bound * np.exp(-beta * np.asarray(t, dtype=float)) if np.ndim(t) else bound * math.exp(-beta * t)

    return bound, tail


def tail_to_moment(t0: float, delta: float) -> float:
    """``t0 / (1 - delta)``: mean hitting time from a tail probability at ``t0``."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    return t0 / (1.0 - delta)


def combine_bounds(lam: float, M_H: float) -> tuple[float, str]:
    """``min{lambda, 1/M_H}`` with its case tag.

    ``"R1"`` when ``lambda <= 1/M_H`` (then ``kappa = lambda``), else
    ``"R2"``.  Ties go to R1.

    >>> combine_bounds(2.0, 1.0)
    (1.0, 'R2')
    >>> combine_bounds(1.0, 1.0)
    (1.0, 'R1')
    """
    if not (lam > 0 and M_H > 0):
        raise ValueError("lambda and M_H must be positive")
    inv = 1.0 / M_H
    if lam <= inv:
        return lam, "R1"
    return inv, "R2"
