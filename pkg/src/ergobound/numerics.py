"""Series, quadrature and fitting kernels shared by the bound computations.

Infinite series and semi-infinite integrals are both handled as sums of
*dyadic blocks*: block ``k`` of a series holds the terms with index in
``[2**k - 1, 2**(k+1) - 1)``, and panel ``k`` of an integral covers
``[a + s*(2**k - 1), a + s*(2**(k+1) - 1)]``.  For a term or integrand that
behaves like ``x**p`` the block values are asymptotically geometric with
ratio ``2**(p+1)``; for faster decay the ratio tends to zero.  This single
observation gives

* a geometric tail extrapolation ``B_k * rho / (1 - rho)`` (added to the
  value, its change between blocks is the error estimate), and
* a divergence verdict when the block ratio stays at or above
  ``2**(-DIVERGENCE_LOG2_MARGIN)`` (logarithmic or worse growth) or the
  partial sum exceeds ``BLOWUP`` while the blocks are non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "Tolerance",
    "SeriesResult",
    "QuadratureResult",
    "NumericalError",
    "sum_series",
    "integrate",
    "CumulativeIntegral",
    "LogIntegral",
    "local_log_integral",
    "gamma_fn",
    "fit_exp_rate",
    "BLOWUP",
]

BLOWUP = 1e12
DIVERGENCE_LOG2_MARGIN = 1e-3
# Block index from which the ratio-based divergence rule is trusted.
DIVERGENCE_MIN_BLOCK = 10
_RATIO_DIVERGE = 2.0 ** (-DIVERGENCE_LOG2_MARGIN)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)
_GL20_NODES, _GL20_WEIGHTS = np.polynomial.legendre.leggauss(20)


class NumericalError(ArithmeticError):
    """Non-finite evaluations, exhausted caps and similar failures."""


@dataclass(frozen=True)
class Tolerance:
    rel: float = 1e-10
    abs: float = 1e-14
    max_terms: int = 10**7
    max_evals: int = 10**6

    def __post_init__(self):
        if self.rel < 0 or self.abs < 0 or (self.rel == 0 and self.abs == 0):
            raise ValueError("need rel >= 0, abs >= 0 and not both zero")
        if self.max_terms <= 0 or self.max_evals <= 0:
            raise ValueError("caps must be positive")

    def target(self, value: float) -> float:
        return max(self.abs, self.rel * abs(value))

    def scaled(self, factor: float) -> "Tolerance":
        return Tolerance(self.rel * factor, self.abs * factor, self.max_terms, self.max_evals)


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class SeriesResult:
    value: float
    error_estimate: float
    converged: bool
    terms: int
    verdict: str = "converged"  # "converged" | "diverges" | "inconclusive"

    @property
    def diverges(self) -> bool:
        return self.verdict == "diverges"


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    converged: bool
    evals: int
    verdict: str = "converged"

    @property
    def diverges(self) -> bool:
        return self.verdict == "diverges"


class _BlockTail:
    """Running state for a sum of dyadic blocks."""

    def __init__(self, tol: Tolerance, min_blocks: int = 4):
        self.tol = tol
        self.min_blocks = min_blocks
        self.blocks: list[float] = []
        self.partial = 0.0
        self.extrapolated: list[float] = []
        self.accelerated: list[float] = []
        self.tail = 0.0
        self.error = math.inf

    def push(self, block: float) -> str | None:
        """Add a block; return a verdict once one is reached."""
        self.blocks.append(block)
        self.partial += block
        k = len(self.blocks) - 1
        if block == math.inf or (self.partial > BLOWUP and self._nondecreasing(3)):
            return "diverges"
        if k >= DIVERGENCE_MIN_BLOCK and self._ratios_at_least(_RATIO_DIVERGE, 3):
            return "diverges"
        rho = self._ratio(-1)
        if rho is not None and rho < 1.0 and (self._ratio(-2) or 0.0) < 1.0:
            self.tail = block * rho / (1.0 - rho)
        elif block == 0.0 and len(self.blocks) > 1 and self.blocks[-2] == 0.0:
            self.tail = 0.0
        else:
            self.tail = math.inf
        value = self.partial + self.tail
        self.extrapolated.append(value)
        value = self._accelerate()
        if len(self.accelerated) >= 2 and math.isfinite(value):
            self.error = abs(value - self.accelerated[-2])
        if (len(self.blocks) >= self.min_blocks and math.isfinite(self.error)
                and self.error <= self.tol.target(value)):
            return "converged"
        return None

    def _accelerate(self) -> float:
        """Aitken's delta-squared step on the last three extrapolated values.

        The extrapolations converge geometrically when the block ratios
        themselves settle geometrically (power-law terms), which is the
        case the step removes.  Without a contracting, one-signed pattern
        the plain extrapolation is kept.
        """
        v = self.extrapolated
        out = v[-1]
        if len(v) >= 3 and all(math.isfinite(x) for x in v[-3:]):
            d1 = v[-2] - v[-3]
            d2 = v[-1] - v[-2]
            if d1 != 0.0 and d2 != 0.0 and (d1 > 0) == (d2 > 0) and abs(d2) < abs(d1):
                out = v[-1] - d2 * d2 / (d2 - d1)
        self.accelerated.append(out)
        return out

    @property
    def value(self) -> float:
        if self.accelerated and math.isfinite(self.accelerated[-1]):
            return self.accelerated[-1]
        return self.partial + (self.tail if math.isfinite(self.tail) else 0.0)

    def _ratio(self, idx: int):
        if len(self.blocks) < 1 - idx + 1:
            return None
        num, den = self.blocks[idx], self.blocks[idx - 1]
        if den > 0 and num >= 0:
            return num / den
        if den == 0 and num == 0:
            return 0.0
        return None

    def _ratios_at_least(self, thresh: float, count: int) -> bool:
        if len(self.blocks) < count + 1:
            return False
        for j in range(count):
            r = self._ratio(-1 - j)
            if r is None or r < thresh:
                return False
        return True

    def _nondecreasing(self, count: int) -> bool:
        tail = self.blocks[-count:]
        return all(b2 >= b1 for b1, b2 in zip(tail, tail[1:]))


def sum_series(
    term: Callable,
    tol: Tolerance = DEFAULT_TOL,
    start: int = 0,
    vectorized: bool = True,
    block: int = 1,
) -> SeriesResult:
    """Sum ``term(k)`` for ``k = start, start+1, ...``.

    ``term`` receives an integer ndarray when ``vectorized`` is true and a
    single int otherwise.  Terms must be eventually nonnegative.

    Terms are grouped into blocks of ``block * 2^k`` consecutive indices
    and the tail is extrapolated from the ratio of the last two block sums.
    For a tail starting far from 0 a ``block`` comparable to ``start``
    puts power-law terms in their asymptotic regime from the first block.

    >>> round(sum_series(lambda k: 0.5 ** k).value, 12)
    2.0
    """
    width = int(block)
    if width < 1:
        raise ValueError("block must be a positive integer")
    state = _BlockTail(tol)
    count = 0
    k = 0
    while True:
        lo = start + width * ((1 << k) - 1)
        hi = start + width * ((1 << (k + 1)) - 1)
        if count + (hi - lo) > tol.max_terms:
            return SeriesResult(state.value, state.error, False, count, "inconclusive")
        idx = np.arange(lo, hi)
        if vectorized:
            vals = np.asarray(term(idx), dtype=float)
        else:
            vals = np.fromiter((term(int(i)) for i in idx), dtype=float, count=idx.size)
        count += idx.size
        if np.any(np.isnan(vals)) or np.any(vals == -np.inf):
            raise NumericalError(f"non-finite series term in index range [{lo}, {hi})")
        block = float(np.sum(vals)) if np.all(np.isfinite(vals)) else math.inf
        verdict = state.push(block)
        if verdict == "diverges":
            return SeriesResult(math.inf, math.inf, False, count, "diverges")
        if verdict == "converged":
            return SeriesResult(state.value, state.error, True, count, "converged")
        k += 1


# --------------------------------------------------------------------------
# quadrature

def _gl(f, lo, hi, nodes=_GL_NODES, weights=_GL_WEIGHTS):
    """Gauss-Legendre on many intervals at once; returns (values, evals)."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    fx = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    return half * (fx @ weights), pts.size


def _tiny_width(lo, hi):
    return (hi - lo) <= np.maximum(8 * np.finfo(float).eps * np.maximum(np.abs(lo), np.abs(hi)),
                                   1e-300)


def _adaptive(f, a: float, b: float, tol: Tolerance):
    """Vectorized adaptive bisection with GL15; returns (value, err, evals, mesh).

    A piece is accepted once the 15-point rule on it agrees with the sum over
    its two halves to relative accuracy ``tol.rel`` of the piece itself, or
    to an absolute error far below the running total (this second rule ends
    the refinement at integrable endpoint singularities, sign changes and
    regions that are negligible next to the whole).
    The accepted pieces form the returned mesh.
    """
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    acc_lo, acc_hi, acc_val, acc_err = [], [], [], []
    parent = np.array([math.inf])
    acc_total = 0.0
    evals = 0
    for _ in range(1100):
        if not lo.size:
            break
        mid = 0.5 * (lo + hi)
        coarse, n1 = _gl(f, lo, hi)
        left, n2 = _gl(f, lo, mid)
        right, n3 = _gl(f, mid, hi)
        evals += n1 + n2 + n3
        fine = left + right
        if not np.all(np.isfinite(fine)):
            if np.any(np.isnan(fine)) or np.any(fine == -np.inf):
                raise NumericalError(f"non-finite integrand on [{a}, {b}]")
            return math.inf, math.inf, evals, None
        err = np.abs(fine - coarse)
        scale = abs(acc_total) + float(np.sum(np.abs(fine)))
        ok = (err <= tol.rel * np.abs(fine)) | (err <= 1e-2 * max(tol.abs, tol.rel * scale))
        # bisection stopped helping: the integrand is noisy at this level
        ok |= (err >= parent) & (err <= math.sqrt(tol.rel) * np.abs(fine))
        ok |= _tiny_width(lo, hi)
        acc_lo.append(lo[ok])
        acc_hi.append(hi[ok])
        acc_val.append(fine[ok])
        acc_err.append(err[ok])
        acc_total += float(np.sum(fine[ok]))
        lo = np.concatenate([lo[~ok], mid[~ok]])
        hi = np.concatenate([mid[~ok], hi[~ok]])
        parent = np.concatenate([err[~ok], err[~ok]]) * 0.5
        if evals > tol.max_evals:
            break
    if lo.size:
        rest, _ = _gl(f, lo, hi)
        acc_lo.append(lo)
        acc_hi.append(hi)
        acc_val.append(rest)
        acc_err.append(np.full(lo.shape, math.inf))
    value = float(sum(v.sum() for v in acc_val))
    error = float(sum(e.sum() for e in acc_err))
    order = np.argsort(np.concatenate(acc_lo))
    mesh = (np.concatenate(acc_lo)[order], np.concatenate(acc_hi)[order])
    return value, error, evals, mesh


def _finite(f, a, b, tol) -> QuadratureResult:
    if a == b:
        return QuadratureResult(0.0, 0.0, True, 0)
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    value, err, evals, _ = _adaptive(f, a, b, tol)
    if value == math.inf and err == math.inf and _ is None:
        return QuadratureResult(math.inf, math.inf, False, evals, "diverges")
    converged = bool(err <= tol.target(value))
    verdict = "converged" if converged else "inconclusive"
    return QuadratureResult(sign * value, err, converged, evals, verdict)


def _semi_infinite(f, a, tol, scale) -> QuadratureResult:
    state = _BlockTail(tol)
    evals = 0
    panel_err = 0.0
    k = 0
    while True:
        lo = a + scale * ((1 << k) - 1) if k < 1000 else math.inf
        hi = a + scale * ((1 << (k + 1)) - 1) if k < 1000 else math.inf
        if not math.isfinite(hi):
            return QuadratureResult(state.value, math.inf, False, evals, "inconclusive")
        res = _finite(f, lo, hi, tol.scaled(0.1))
        evals += res.evals
        if res.diverges:
            return QuadratureResult(math.inf, math.inf, False, evals, "diverges")
        panel_err += res.error_estimate
        verdict = state.push(res.value)
        if verdict == "diverges":
            return QuadratureResult(math.inf, math.inf, False, evals, "diverges")
        if verdict == "converged":
            err = state.error + panel_err
            return QuadratureResult(state.value, err, True, evals, "converged")
        if evals > tol.max_evals:
            return QuadratureResult(state.value, math.inf, False, evals, "inconclusive")
        k += 1


def integrate(
    f: Callable,
    a: float,
    b: float,
    tol: Tolerance = DEFAULT_TOL,
    method: str = "panels",
    scale: float = 1.0,
) -> QuadratureResult:
    """Integrate a vectorized ``f`` over ``[a, b]``; either limit may be infinite.

    Parameters
    ----------
    f : callable
        Accepts and returns float ndarrays.
    a, b : float
        Limits.  ``b = inf`` (or ``a = -inf``) selects the semi-infinite path.
    method : {"panels", "substitution"}
        Semi-infinite strategy.  ``"panels"`` sums dyadic panels with
        geometric tail control and can return a ``"diverges"`` verdict;
        ``"substitution"`` maps ``t in [0, 1)`` to ``a + t/(1-t)``.
    scale : float
        Width of the first dyadic panel.
    """
    if math.isnan(a) or math.isnan(b):
        raise ValueError("integration limits must not be NaN")
    if a == b:
        return QuadratureResult(0.0, 0.0, True, 0)
    if a > b:
        res = integrate(f, b, a, tol, method, scale)
        return QuadratureResult(-res.value, res.error_estimate, res.converged, res.evals, res.verdict)
    if math.isinf(a) and math.isinf(b):
        left = integrate(lambda x: f(-np.asarray(x)), 0.0, math.inf, tol.scaled(0.5), method, scale)
        right = integrate(f, 0.0, math.inf, tol.scaled(0.5), method, scale)
        return _combine(left, right)
    if math.isinf(a):
        return integrate(lambda x: f(-np.asarray(x)), -b, math.inf, tol, method, scale)
    if math.isinf(b):
        if method == "substitution":
            def g(t):
                t = np.asarray(t)
                return f(a + t / (1.0 - t)) / (1.0 - t) ** 2
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return _finite(g, 0.0, 1.0 - 1e-15, tol)
        if method != "panels":
            raise ValueError(f"unknown method {method!r}")
        with np.errstate(over="ignore"):
            return _semi_infinite(f, a, tol, scale)
    return _finite(f, a, b, tol)


def _combine(*parts: QuadratureResult) -> QuadratureResult:
    evals = sum(p.evals for p in parts)
    if any(p.diverges for p in parts):
        return QuadratureResult(math.inf, math.inf, False, evals, "diverges")
    value = sum(p.value for p in parts)
    err = sum(p.error_estimate for p in parts)
    ok = all(p.converged for p in parts)
    return QuadratureResult(value, err, ok, evals, "converged" if ok else "inconclusive")


def integrate_pieces(f, points, tol: Tolerance = DEFAULT_TOL) -> QuadratureResult:
    """Integrate over consecutive ``[points[i], points[i+1]]`` and add up."""
    pts = list(points)
    n = max(len(pts) - 1, 1)
    return _combine(*(integrate(f, p, q, tol.scaled(1.0 / n)) for p, q in zip(pts, pts[1:])))


# --------------------------------------------------------------------------
# cumulative integrals

def _dyadic_edges(base: float, scale: float, k: int, direction: int) -> float:
    return base + direction * scale * ((1 << k) - 1)


class CumulativeIntegral:
    """``F(x) = integral of g from base to x`` for arbitrary vectorized ``x``.

    The line is covered lazily by dyadic panels on both sides of ``base``;
    each panel is integrated adaptively and its accepted sub-intervals are
    kept as a mesh, so a query only needs one fixed-order rule on a piece of
    a single resolved sub-interval.
    """

    def __init__(self, g: Callable, base: float = 0.0, tol: Tolerance = DEFAULT_TOL,
                 scale: float = 1.0):
        self.g = g
        self.base = float(base)
        self.tol = tol.scaled(0.01)
        self.scale = scale
        self._edges = np.array([self.base])
        self._cum = np.array([0.0])
        self._k_right = 0
        self._k_left = 0

    def _add_panel(self, direction: int):
        if direction > 0:
            k = self._k_right
            lo = _dyadic_edges(self.base, self.scale, k, 1)
            hi = _dyadic_edges(self.base, self.scale, k + 1, 1)
            self._k_right += 1
        else:
            k = self._k_left
            hi = _dyadic_edges(self.base, self.scale, k, -1)
            lo = _dyadic_edges(self.base, self.scale, k + 1, -1)
            self._k_left += 1
        value, _, _, mesh = _adaptive(self.g, lo, hi, self.tol)
        if mesh is None:
            raise NumericalError(f"integrand not integrable on [{lo}, {hi}]")
        sub_lo, sub_hi = mesh
        pieces, _ = _gl(self.g, sub_lo, sub_hi, _GL20_NODES, _GL20_WEIGHTS)
        if direction > 0:
            start = self._cum[-1]
            self._edges = np.concatenate([self._edges, sub_hi])
            self._cum = np.concatenate([self._cum, start + np.cumsum(pieces)])
        else:
            start = self._cum[0]
            self._edges = np.concatenate([sub_lo, self._edges])
            back = start - np.cumsum(pieces[::-1])[::-1]
            self._cum = np.concatenate([back, self._cum])

    def ensure(self, lo: float, hi: float):
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise NumericalError("cumulative integral queried at a non-finite point")
        while self._edges[-1] < hi:
            self._add_panel(+1)
        while self._edges[0] > lo:
            self._add_panel(-1)

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size == 0:
            return x.copy()
        self.ensure(float(x.min()), float(x.max()))
        idx = np.clip(np.searchsorted(self._edges, x, side="right") - 1, 0, self._edges.size - 2)
        left = self._edges[idx]
        piece, _ = _gl(self.g, left, x, _GL20_NODES, _GL20_WEIGHTS)
        out = self._cum[idx] + piece
        return float(out[0]) if scalar else out


def _log_gl(logf, lo, hi, nodes=_GL_NODES, weights=_GL_WEIGHTS):
    """log of GL quadrature of exp(logf) on many intervals (hi > lo)."""
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    lf = np.asarray(logf(pts.ravel()), dtype=float).reshape(pts.shape)
    with np.errstate(divide="ignore"):
        lw = np.log(weights)[None, :] + np.log(half)[:, None]
    return special.logsumexp(lf + lw, axis=1)


def _log_adaptive(logf, a: float, b: float, rel: float, max_evals: int = 10**6):
    """Adaptive GL of ``exp(logf)`` on ``[a, b]`` in log space.

    Same acceptance rule as the linear version.  Returns ``(lo, hi, logs)``
    for the accepted pieces in order, or ``None`` if the integrand overflows.
    """
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    acc_lo, acc_hi, acc_log = [], [], []
    log_acc = -math.inf
    log_rel = math.log(rel)
    parent = np.array([math.inf])
    evals = 0
    for _ in range(1100):
        if not lo.size or evals > max_evals:
            break
        evals += 45 * lo.size
        mid = 0.5 * (lo + hi)
        coarse = _log_gl(logf, lo, hi)
        fine = np.logaddexp(_log_gl(logf, lo, mid), _log_gl(logf, mid, hi))
        if np.any(np.isnan(fine)):
            raise NumericalError(f"non-finite log-integrand on [{a}, {b}]")
        if np.any(fine == np.inf):
            return None
        log_total = np.logaddexp(log_acc, special.logsumexp(fine))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_err = fine + np.log(np.abs(np.expm1(coarse - fine)))
        log_err = np.where(np.isnan(log_err), np.inf, log_err)
        ok = (log_err <= log_rel + fine) | (log_err <= log_rel - 2 * math.log(10) + log_total)
        # bisection stopped helping: the integrand is noisy at this level
        ok |= (log_err >= parent) & (log_err <= 0.5 * log_rel + fine)
        ok |= (fine == -np.inf) | _tiny_width(lo, hi)
        acc_lo.append(lo[ok])
        acc_hi.append(hi[ok])
        acc_log.append(fine[ok])
        if np.any(ok):
            log_acc = np.logaddexp(log_acc, special.logsumexp(fine[ok]))
        lo = np.concatenate([lo[~ok], mid[~ok]])
        hi = np.concatenate([mid[~ok], hi[~ok]])
        parent = np.concatenate([log_err[~ok], log_err[~ok]]) - math.log(2)
    if lo.size:
        mid = 0.5 * (lo + hi)
        acc_lo.append(lo)
        acc_hi.append(hi)
        acc_log.append(np.logaddexp(_log_gl(logf, lo, mid), _log_gl(logf, mid, hi)))
    sl, sh, lg = (np.concatenate(v) for v in (acc_lo, acc_hi, acc_log))
    order = np.argsort(sl)
    return sl[order], sh[order], lg[order]


def _composite_log_gl(logf, lo, hi, m):
    """log of composite GL20 with ``m`` equal sub-panels on each [lo, hi] (lo <= hi)."""
    t = np.arange(m + 1) / m
    edges = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    vals = _log_gl(logf, edges[:, :-1].ravel(), edges[:, 1:].ravel(), _GL20_NODES, _GL20_WEIGHTS)
    return special.logsumexp(vals.reshape(lo.size, m), axis=1)


def _log_sweep(logf, start, direction: int, limit: float, rel: float, max_panels: int = 200):
    """Vectorized ``log int exp(logf)`` from each ``start`` towards ``limit``.

    Each query gets its own dyadic panels ``start + dir*s*[2**k - 1, 2**(k+1) - 1]``
    where ``s`` is the local decay length of ``logf``, so every result is
    accurate relative to itself no matter how fast the integrand varies.
    Returns ``(logs, ok)``; ``ok`` is False where the two-level composite
    check failed or no verdict was reached (callers fall back to
    :func:`_log_adaptive`).  Divergent queries get ``+inf`` with ``ok`` True.
    """
    start = np.asarray(start, dtype=float)
    n = start.size
    h = 1e-6 * (1.0 + np.abs(start))
    with np.errstate(all="ignore"):
        probe = start + direction * np.minimum(h, np.abs(limit - start) / 2)
        f0 = np.asarray(logf(start), dtype=float)
        f1 = np.asarray(logf(probe), dtype=float)
        slope = np.abs((f1 - f0) / (probe - start))
    slope = np.where(np.isfinite(slope), slope, 0.0)
    scale = 1.0 / np.maximum(slope, 1.0 / (1.0 + np.abs(start)))
    acc = np.full(n, -np.inf)
    log_err = np.full(n, -np.inf)
    panels = np.full((max_panels, n), np.nan)
    done = np.zeros(n, dtype=bool)
    result = np.full(n, np.nan)
    ok = np.ones(n, dtype=bool)
    for k in range(max_panels):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        s0 = start[act] + direction * scale[act] * ((1 << k) - 1)
        s1 = start[act] + direction * scale[act] * ((1 << (k + 1)) - 1)
        if direction > 0:
            s1 = np.minimum(s1, limit)
            lo, hi = s0, s1
        else:
            s1 = np.maximum(s1, limit)
            lo, hi = s1, s0
        if not np.all(np.isfinite(hi - lo)):
            ok[act] = False
            done[act] = True
            break
        with np.errstate(all="ignore"):
            coarse = _composite_log_gl(logf, lo, hi, 4)
            fine = _composite_log_gl(logf, lo, hi, 8)
        if np.any(np.isnan(fine)):
            bad = act[np.isnan(fine)]
            ok[bad] = False
            done[bad] = True
            fine = np.where(np.isnan(fine), -np.inf, fine)
        with np.errstate(all="ignore"):
            e = fine + np.log(np.abs(np.expm1(coarse - fine)))
        e = np.where(np.isnan(e), np.where(fine == -np.inf, -np.inf, np.inf), e)
        panels[k, act] = fine
        acc[act] = np.logaddexp(acc[act], fine)
        log_err[act] = np.logaddexp(log_err[act], e)
        # verdicts
        reached = (s1 == limit)
        overflow = fine == np.inf
        fin = np.zeros(act.size, dtype=bool)
        rest = np.full(act.size, -np.inf)
        if k >= 2:
            p = panels[k - 2:k + 1, act]
            with np.errstate(invalid="ignore"):
                r1 = p[2] - p[1]
                r0 = p[1] - p[0]
            grow = (r1 >= 0) & (r0 >= 0)
            decaying = (r1 < 0) & (r0 < 0)
            with np.errstate(all="ignore"):
                rest1 = p[2] + r1 - np.log(-np.expm1(r1))
                rest0 = p[1] + r0 - np.log(-np.expm1(r0))
                change = np.abs(np.exp(p[2] - acc[act]) + np.exp(rest1 - acc[act])
                                - np.exp(rest0 - acc[act]))
            fin = decaying & (change <= rel)
            fin |= (p[2] == -np.inf) & (p[1] == -np.inf)
            rest = np.where(decaying, rest1, -np.inf)
            if k >= DIVERGENCE_MIN_BLOCK and k >= 3:
                r2 = panels[k - 2, act] - panels[k - 3, act]
                diverge = (r1 >= math.log(_RATIO_DIVERGE)) & (r0 >= math.log(_RATIO_DIVERGE)) & (
                    r2 >= math.log(_RATIO_DIVERGE))
                overflow |= diverge & ~reached
            overflow |= grow & (acc[act] > math.log(BLOWUP) + 5) & ~reached
        fin &= ~reached & ~overflow
        idx = act[reached]
        result[idx] = acc[idx]
        idx = act[fin]
        result[idx] = np.logaddexp(acc[idx], rest[fin])
        idx = act[overflow]
        result[idx] = np.inf
        done[act[reached | fin | overflow]] = True
    ok &= done
    # exponents of size |logf| carry an absolute rounding error of eps*|logf|
    noise = np.log(np.maximum(rel, 64 * np.finfo(float).eps * np.abs(f0)))
    with np.errstate(invalid="ignore"):
        ok &= ~(log_err - result > noise) | (result == np.inf)
    return result, ok


def _gl20_integration_matrix() -> np.ndarray:
    """``S[j, k]`` with ``int_{-1}^{t_j} p = sum_k S[j, k] p(t_k)`` for degree < 20."""
    leg = np.polynomial.legendre
    n = _GL20_NODES.size
    V = leg.legvander(_GL20_NODES, n - 1)
    Vint = np.empty_like(V)
    for k in range(n):
        coef = np.zeros(n)
        coef[k] = 1.0
        Vint[:, k] = leg.legval(_GL20_NODES, leg.legint(coef, lbnd=-1))
    return Vint @ np.linalg.inv(V)


_GL20_CUM = _gl20_integration_matrix()


def _local_panel(beta, logw, carry, lo, hi, m, sign, direction):
    """One panel of :func:`local_log_integral` split into ``m`` GL20 pieces.

    ``carry`` is ``int_x^z beta`` at the panel end nearest ``x``.  Returns
    the log of the panel integral and the carry at the far end.
    """
    q = lo.size
    t = np.arange(m + 1) / m
    edges = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    half = 0.5 * (edges[:, 1:] - edges[:, :-1])
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    nodes = mid[..., None] + half[..., None] * _GL20_NODES
    flat = nodes.ravel()
    b = np.asarray(beta(flat), dtype=float).reshape(nodes.shape)
    lw = np.asarray(logw(flat), dtype=float).reshape(nodes.shape)
    sub = half * (b @ _GL20_WEIGHTS)
    part = half[..., None] * (b @ _GL20_CUM.T)
    if direction > 0:
        left = carry[:, None] + np.concatenate([np.zeros((q, 1)), np.cumsum(sub, axis=1)[:, :-1]], axis=1)
        G = left[..., None] + part
        new_carry = carry + sub.sum(axis=1)
    else:
        above = np.cumsum(sub[:, ::-1], axis=1)[:, ::-1]
        right = carry[:, None] - np.concatenate([above[:, 1:], np.zeros((q, 1))], axis=1)
        G = right[..., None] - (sub[..., None] - part)
        new_carry = carry - sub.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = sign * G + lw + np.log(_GL20_WEIGHTS) + np.log(half)[..., None]
    logs = special.logsumexp(expo.reshape(q, -1), axis=1)
    return logs, new_carry


def local_log_integral(beta, logw, x, direction: int, limit: float, sign: float = 1.0,
                       rel: float = 1e-10, max_panels: int = 200):
    """``log int exp(sign * int_x^z beta + logw(z)) dz`` from each ``x`` towards ``limit``.

    The exponent is built from ``x`` outwards, so integrals such as
    ``int_x^inf e^{c(z) - c(x)} dz`` keep full relative accuracy even where
    ``c`` itself is far beyond the range in which ``c(z) - c(x)`` could be
    formed by subtraction.  Panels grow geometrically from the local decay
    length at ``x``; each is integrated with composite GL20 at two
    resolutions.  Returns ``(logs, ok)`` like the plain sweep; divergent
    queries get ``+inf``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.size
    result = np.full(n, np.nan)
    ok = np.ones(n, dtype=bool)
    result[x == limit] = -np.inf
    # decay length below the float spacing at x: the exponent is linear on
    # every representable step, so the integral is w(x)/rate
    with np.errstate(all="ignore"):
        rate = -direction * sign * np.asarray(beta(x), dtype=float)
        w0 = np.asarray(logw(x), dtype=float)
        steep = (x != limit) & np.isfinite(rate) & (rate > 0) & (1.0 / rate < 1e4 * np.spacing(np.abs(x)))
    result[steep] = w0[steep] - np.log(rate[steep])
    todo = np.flatnonzero((x != limit) & ~steep)
    m = 8
    while todo.size and m <= 64:
        vals, good = _local_sweep(beta, logw, x[todo], direction, limit, sign, rel, max_panels, m)
        result[todo] = vals
        ok[todo] = good
        todo = todo[~good]
        m *= 2
    return result, ok


def _local_sweep(beta, logw, x, direction, limit, sign, rel, max_panels, m):
    n = x.size
    h = 1e-6 * (1.0 + np.abs(x))
    with np.errstate(all="ignore"):
        probe = x + direction * np.minimum(h, np.abs(limit - x) / 2)
        b0 = np.asarray(beta(x), dtype=float)
        w0 = np.asarray(logw(x), dtype=float)
        w1 = np.asarray(logw(probe), dtype=float)
        slope = np.abs(sign * b0 + (w1 - w0) / (probe - x))
    slope = np.where(np.isfinite(slope), slope, 0.0)
    scale = 1.0 / np.maximum(slope, 1.0 / (1.0 + np.abs(x)))
    acc = np.full(n, -np.inf)
    log_err = np.full(n, -np.inf)
    carry = np.zeros(n)
    panels = np.full((max_panels, n), np.nan)
    done = np.zeros(n, dtype=bool)
    result = np.full(n, np.nan)
    ok = np.ones(n, dtype=bool)
    for k in range(max_panels):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        s0 = x[act] + direction * scale[act] * ((1 << k) - 1)
        s1 = x[act] + direction * scale[act] * ((1 << (k + 1)) - 1)
        if direction > 0:
            s0 = np.minimum(s0, limit)
            s1 = np.minimum(s1, limit)
            lo, hi = s0, s1
        else:
            s0 = np.maximum(s0, limit)
            s1 = np.maximum(s1, limit)
            lo, hi = s1, s0
        if not np.all(np.isfinite(hi - lo)):
            ok[act] = False
            done[act] = True
            break
        with np.errstate(all="ignore"):
            coarse, _ = _local_panel(beta, logw, carry[act], lo, hi, m // 2, sign, direction)
            fine, carry_new = _local_panel(beta, logw, carry[act], lo, hi, m, sign, direction)
        carry[act] = carry_new
        if np.any(np.isnan(fine)):
            bad = act[np.isnan(fine)]
            ok[bad] = False
            done[bad] = True
            fine = np.where(np.isnan(fine), -np.inf, fine)
        with np.errstate(all="ignore"):
            e = fine + np.log(np.abs(np.expm1(coarse - fine)))
        e = np.where(np.isnan(e), np.where(fine == -np.inf, -np.inf, np.inf), e)
        panels[k, act] = fine
        acc[act] = np.logaddexp(acc[act], fine)
        log_err[act] = np.logaddexp(log_err[act], e)
        reached = s1 == limit
        overflow = fine == np.inf
        fin = np.zeros(act.size, dtype=bool)
        rest = np.full(act.size, -np.inf)
        if k >= 2:
            p = panels[k - 2:k + 1, act]
            with np.errstate(invalid="ignore"):
                r1 = p[2] - p[1]
                r0 = p[1] - p[0]
            grow = (r1 >= 0) & (r0 >= 0)
            decaying = (r1 < 0) & (r0 < 0)
            with np.errstate(all="ignore"):
                rest1 = p[2] + r1 - np.log(-np.expm1(r1))
                rest0 = p[1] + r0 - np.log(-np.expm1(r0))
                change = np.abs(np.exp(p[2] - acc[act]) + np.exp(rest1 - acc[act])
                                - np.exp(rest0 - acc[act]))
            fin = decaying & (change <= rel)
            fin |= (p[2] == -np.inf) & (p[1] == -np.inf)
            rest = np.where(decaying, rest1, -np.inf)
            if k >= DIVERGENCE_MIN_BLOCK and k >= 3:
                r2 = panels[k - 2, act] - panels[k - 3, act]
                diverge = (r1 >= math.log(_RATIO_DIVERGE)) & (r0 >= math.log(_RATIO_DIVERGE)) & (
                    r2 >= math.log(_RATIO_DIVERGE))
                overflow |= diverge & ~reached
            overflow |= grow & (acc[act] > math.log(BLOWUP) + 5) & ~reached
        fin &= ~reached & ~overflow
        idx = act[reached]
        result[idx] = acc[idx]
        idx = act[fin]
        result[idx] = np.logaddexp(acc[idx], rest[fin])
        idx = act[overflow]
        result[idx] = np.inf
        done[act[reached | fin | overflow]] = True
    ok &= done
    noise = np.log(np.maximum(rel, 64 * np.finfo(float).eps * np.abs(w0)))
    with np.errstate(invalid="ignore"):
        ok &= ~(log_err - result > noise) | (result == np.inf)
    return result, ok


class LogIntegral:
    """Integrals of ``exp(logf)`` over ``[lo, hi)`` kept in log space.

    Provides ``log_head(x) = log int_lo^x``, ``log_tail(y) = log int_y^hi``
    and the total with a convergence verdict.  Used wherever a density can
    be astronomically large or small (``exp(+-c(x))`` for diffusions) while
    products of head and tail pieces stay moderate.  ``hi`` defaults to
    infinity, in which case the range is covered by dyadic panels and the
    part beyond the last panel is extrapolated geometrically.
    """

    def __init__(self, logf: Callable, lo: float, tol: Tolerance = DEFAULT_TOL,
                 scale: float = 1.0, hi: float = math.inf):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.logf = logf
        self.lo = float(lo)
        self.hi = float(hi)
        self.tol = tol
        self.scale = scale
        self._edges = np.array([self.lo])
        self._logs = np.array([])  # log of each mesh piece
        self._panel_logs: list[float] = []  # log of each dyadic panel
        self._k = 0
        self._diverges = False
        self._log_rest = -math.inf  # log of the extrapolated part beyond the last edge

    # mesh construction ----------------------------------------------------
    def _panel_range(self):
        k = self._k
        if math.isfinite(self.hi):
            # geometric panels accumulating at the finite upper end
            lo = self._edges[-1]
            hi = self.hi if k >= 60 else self.hi - (self.hi - self.lo) * 0.5 ** (k + 1)
            return lo, hi
        if k > 1000:
            raise NumericalError("panel construction ran past the float range")
        return (_dyadic_edges(self.lo, self.scale, k, 1),
                _dyadic_edges(self.lo, self.scale, k + 1, 1))

    def _add_panel(self) -> bool:
        if self._edges[-1] >= self.hi:
            return False
        lo, hi = self._panel_range()
        self._k += 1
        mesh = _log_adaptive(self.logf, lo, hi, self.tol.rel, self.tol.max_evals)
        if mesh is None:
            self._diverges = True
            self._panel_logs.append(math.inf)
            return False
        _, sub_hi, logs = mesh
        self._edges = np.concatenate([self._edges, sub_hi])
        self._logs = np.concatenate([self._logs, logs])
        self._panel_logs.append(float(special.logsumexp(logs)) if logs.size else -math.inf)
        return True

    def _cover(self, x: float):
        while self._edges[-1] < x:
            if not self._add_panel():
                if self._diverges:
                    raise NumericalError("integrand overflowed on a finite range")
                break

    def _settle(self, anchor_log: float) -> bool:
        """Extend until the unresolved remainder is negligible next to ``exp(anchor_log)``.

        Returns False if the integral diverges.
        """
        if self._diverges:
            return False
        if math.isfinite(self.hi):
            while self._add_panel():
                pass
            return not self._diverges
        while True:
            verdict = self._tail_verdict(anchor_log)
            if verdict is not None:
                return verdict
            if not self._add_panel():
                return False

    def _tail_verdict(self, anchor_log: float):
        logs = self._panel_logs
        if len(logs) < 3:
            return None
        k = len(logs) - 1
        last, prev, prev2 = logs[-1], logs[-2], logs[-3]
        if last == math.inf:
            self._diverges = True
            return False
        grow = [logs[-1 - j] - logs[-2 - j] for j in range(min(3, k))]
        if k >= DIVERGENCE_MIN_BLOCK and all(g >= math.log(_RATIO_DIVERGE) for g in grow):
            self._diverges = True
            return False
        if last > math.log(BLOWUP) and all(g >= 0 for g in grow):
            self._diverges = True
            return False
        if last == -math.inf:
            self._log_rest = -math.inf
            return True
        if prev == -math.inf or prev2 == -math.inf:
            return None
        lr1, lr0 = last - prev, prev - prev2
        if lr1 >= 0 or lr0 >= 0:
            return None
        rest1 = last + lr1 - math.log(-math.expm1(lr1))
        rest0 = prev + lr0 - math.log(-math.expm1(lr0))
        expo = [last - anchor_log, rest1 - anchor_log, rest0 - anchor_log]
        if max(expo) > 700:
            return None
        change = abs(math.exp(expo[0]) + math.exp(expo[1]) - math.exp(expo[2]))
        if change <= self.tol.rel and k >= 3:
            self._log_rest = rest1
            return True
        return None

    # public queries ---------------------------------------------------------
    def total(self) -> QuadratureResult:
        """The whole integral over ``[lo, hi)`` with a verdict."""
        self._add_panel() if not self._panel_logs else None
        anchor = special.logsumexp(self._logs) if self._logs.size else 0.0
        if not self._settle(anchor if np.isfinite(anchor) else 0.0):
            return QuadratureResult(math.inf, math.inf, False, 0, "diverges")
        log_total = float(np.logaddexp(special.logsumexp(self._logs), self._log_rest))
        value = math.exp(log_total) if log_total < 709 else math.inf
        rest = math.exp(self._log_rest) if self._log_rest < 709 else math.inf
        return QuadratureResult(value, self.tol.rel * value + 0.1 * rest, True, 0, "converged")

    def log_total(self) -> float:
        """``log`` of :meth:`total`; ``inf`` when divergent."""
        self._add_panel() if not self._panel_logs else None
        anchor = special.logsumexp(self._logs) if self._logs.size else 0.0
        if not self._settle(anchor if np.isfinite(anchor) else 0.0):
            return math.inf
        return float(np.logaddexp(special.logsumexp(self._logs), self._log_rest))

    def log_head(self, x):
        """``log int_lo^x exp(logf)`` (vectorized)."""
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise ValueError("log_head queried outside the integration range")
        out = np.full(x.shape, -np.inf)
        pos = x > self.lo
        if np.any(pos):
            vals, ok = _log_sweep(self.logf, x[pos], -1, self.lo, self.tol.rel)
            for j in np.flatnonzero(~ok):
                xj = x[pos][j]
                vals[j] = LogIntegral(self.logf, self.lo, self.tol, hi=xj).log_total()
            out[pos] = vals
        return float(out[0]) if scalar else out

    def log_tail(self, y):
        """``log int_y^hi exp(logf)`` (vectorized); ``inf`` if divergent."""
        scalar = np.ndim(y) == 0
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any(y < self.lo) or np.any(y > self.hi):
            raise ValueError("log_tail queried outside the integration range")
        out = np.full(y.shape, -np.inf)
        pos = y < self.hi
        if np.any(pos):
            vals, ok = _log_sweep(self.logf, y[pos], +1, self.hi, self.tol.rel)
            for j in np.flatnonzero(~ok):
                yj = y[pos][j]
                vals[j] = LogIntegral(self.logf, yj, self.tol, hi=self.hi).log_total()
            out[pos] = vals
        return float(out[0]) if scalar else out


# --------------------------------------------------------------------------
# special functions and fitting

def gamma_fn(x):
    """Euler's Gamma function; raises ``ValueError`` at the poles.

    >>> gamma_fn(5)
    24.0
    """
    if np.ndim(x) == 0:
        xf = float(x)
        if xf <= 0 and xf == math.floor(xf):
            raise ValueError(f"Gamma has a pole at {xf}")
        return math.gamma(xf)
    arr = np.asarray(x, dtype=float)
    if np.any((arr <= 0) & (arr == np.floor(arr))):
        raise ValueError("Gamma has poles at nonpositive integers")
    return special.gamma(arr)


def fit_exp_rate(times, values, window: tuple[float, float] | None = None):
    """Fit ``v ~ C exp(-rate * t)`` by least squares on ``log v``.

    Returns ``(rate, r_squared)``.  ``window`` restricts the fit to
    ``window[0] <= t <= window[1]``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape:
        raise ValueError("times and values differ in length")
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, v = t[keep], v[keep]
    if t.size < 5:
        raise ValueError("need at least 5 points in the fit window")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("values must be positive and finite")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    y = np.log(v)
    tc = t - t.mean()
    sxx = float(tc @ tc)
    if sxx == 0:
        raise ValueError("degenerate fit window")
    slope = float(tc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * tc
    syy = float((y - y.mean()) @ (y - y.mean()))
    r2 = 1.0 if syy == 0 else 1.0 - float(resid @ resid) / syy
    return -slope, r2
