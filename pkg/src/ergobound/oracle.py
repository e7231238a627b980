"""Numerical ground truth on finite generators.

Chains are truncated to finitely many states and diffusions are
discretized on a uniform mesh.  On the resulting generator matrix we
compute spectral and Dirichlet gaps, hitting-time moments by linear
solves, total-variation decay by uniformization, an empirical rate fitted
to that decay, and both sides of the first-hitting decomposition
inequality for TV distances.

Total variation is half the L1 distance throughout (values in ``[0, 1]``).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import special
from scipy import sparse
from scipy.sparse import linalg as spla

from .model import BirthDeathSpec, DiffusionSpec, SingleDeathSpec, TreeSpec
from .numerics import fit_exp_rate

__all__ = [
    "GeneratorMatrix",
    "DecayCurve",
    "LemmaReport",
    "truncate_generator",
    "discretize_diffusion",
    "spectral_gap",
    "dirichlet_gap",
    "hitting_moments",
    "hitting_survival",
    "tv_decay",
    "kappa_empirical",
    "check_main_lemma",
    "POISSON_TAIL",
]

POISSON_TAIL = 1e-14
_ROW_SUM_TOL = 1e-12
_BALANCE_TOL = 1e-10
_SPARSE_FROM = 600


# --------------------------------------------------------------------------
# generator matrices

@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Finite generator ``Q`` with its stationary distribution.

    ``log_pi`` keeps the stationary weights in log form because truncated
    chains routinely have states whose mass underflows; ``pi`` is its
    exponential and may contain exact zeros for such states.

    Parameters
    ----------
    Q : ndarray
        Square matrix, nonnegative off the diagonal, rows summing to 0.
    log_pi : ndarray, optional
        Log of the stationary weights, up to an additive constant.
        Computed from detailed balance or a null-space solve when omitted.
    boundary : str
        Truncation convention, ``"reflecting"`` for every constructor here.
    """

    Q: np.ndarray
    log_pi: np.ndarray | None = None
    boundary: str = "reflecting"
    labels: tuple | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise ValueError("Q has a negative off-diagonal entry")
        scale = max(1.0, float(np.max(np.abs(Q))))
        if np.max(np.abs(Q.sum(axis=1))) > _ROW_SUM_TOL * scale:
            raise ValueError("rows of Q must sum to zero")
        object.__setattr__(self, "Q", Q)
        log_pi = self.log_pi
        if log_pi is None:
            log_pi = _stationary_log(Q)
        log_pi = np.asarray(log_pi, dtype=float)
        log_pi = log_pi - np.logaddexp.reduce(log_pi)
        if not np.all(np.isfinite(log_pi)):
            raise ValueError("stationary weights must be positive")
        object.__setattr__(self, "log_pi", log_pi)
        pi = self.pi
        resid = np.abs(pi @ Q).max()
        if resid > _BALANCE_TOL * scale:
            raise ValueError(f"pi Q = 0 fails (residual {resid:.3g})")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def pi(self) -> np.ndarray:
        return np.exp(self.log_pi)

    @property
    def reversible(self) -> bool:
        """Detailed balance ``pi_i q_ij = pi_j q_ji`` within 1e-10 (relative)."""
        return _is_reversible(self.Q)

    @property
    def tridiagonal(self) -> bool:
        Q = self.Q
        n = self.n
        if n < 3:
            return True
        mask = np.abs(np.subtract.outer(np.arange(n), np.arange(n))) > 1
        return not np.any(Q[mask])


def _is_reversible(Q: np.ndarray) -> bool:
    """Kolmogorov-type check through the symmetrized rates.

    Reversibility is equivalent to the existence of ``pi`` with
    ``pi_i q_ij = pi_j q_ji``; we build ``pi`` along a spanning tree of the
    support and test the balance on every edge.
    """
    n = Q.shape[0]
    off = Q - np.diag(np.diag(Q))
    if np.any((off > 0) != (off.T > 0)):
        return False
    log_w = _tree_log_weights(off)
    if log_w is None:
        return False
    i, j = np.nonzero(off)
    lhs = log_w[i] + np.log(off[i, j])
    rhs = log_w[j] + np.log(off[j, i])
    return bool(np.all(np.abs(lhs - rhs) <= _BALANCE_TOL * np.maximum(1.0, np.abs(lhs))))


def _tree_log_weights(off: np.ndarray):
    """Log weights from detailed balance along a BFS tree, or ``None``."""
    n = off.shape[0]
    log_w = np.full(n, np.nan)
    log_w[0] = 0.0
    queue = [0]
    for u in queue:
        for v in np.flatnonzero(off[u]):
            if np.isnan(log_w[v]) and off[v, u] > 0:
                log_w[v] = log_w[u] + math.log(off[u, v]) - math.log(off[v, u])
                queue.append(int(v))
    if np.any(np.isnan(log_w)):
        return None
    return log_w


def _stationary_log(Q: np.ndarray) -> np.ndarray:
    off = Q - np.diag(np.diag(Q))
    if _is_reversible(Q):
        return _tree_log_weights(off)
    n = Q.shape[0]
    A = Q.T.copy()
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(A, rhs)
    if np.any(pi <= 0):
        # polish tiny negative round-off; a genuinely reducible chain fails here
        if np.min(pi) < -1e-12 or np.any(pi == 0):
            raise ValueError("Q is reducible: no positive stationary vector")
        pi = np.abs(pi)
    return np.log(pi)


def truncate_generator(spec, N: int | None = None, *, mesh: float | None = None,
                       length: float | None = None) -> GeneratorMatrix:
    """Finite surrogate of a chain or one-dimensional diffusion.

    Chains keep states ``0..N-1``; jumps that would leave this range land
    on ``N-1`` (for birth-death chains the birth at ``N-1`` is dropped).
    Trees keep every explicit node plus the first ``N`` nodes of each ray.
    Diffusions are discretized by :func:`discretize_diffusion` with step
    ``mesh`` on ``[0, length]``.
    """
    if isinstance(spec, DiffusionSpec):
        if mesh is None or length is None:
            raise ValueError("diffusions need mesh and length")
        return discretize_diffusion(spec, mesh, length)
    if N is None or N < 2:
        raise ValueError("N must be at least 2")
    if isinstance(spec, BirthDeathSpec):
        if spec.size is not None:
            N = min(N, spec.size)
        i = np.arange(N)
        births = spec.b(i[:-1])
        deaths = spec.a(i[1:])
        Q = np.diag(births, 1) + np.diag(deaths, -1)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        log_pi = np.concatenate([[0.0], np.cumsum(np.log(births) - np.log(deaths))])
        return GeneratorMatrix(Q, log_pi, meta={"family": "birth_death", "N": N})
    if isinstance(spec, SingleDeathSpec):
        if spec.finite:
            N = min(N, spec.N)
        Q = np.zeros((N, N))
        for i in range(N):
            for j, q in spec.row(i).items():
                Q[i, min(j, N - 1)] += q
        np.fill_diagonal(Q, 0.0)
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return GeneratorMatrix(Q, meta={"family": "single_death", "N": N})
    if isinstance(spec, TreeSpec):
        return _tree_generator(spec, N)
    raise TypeError(f"cannot truncate a {type(spec).__name__}")


def _tree_generator(spec: TreeSpec, ray_nodes: int) -> GeneratorMatrix:
    labels = [n.id for n in spec.nodes]
    parent = {n.id: n.parent for n in spec.nodes}
    up = {n.id: n.up for n in spec.nodes}
    down = {n.id: n.down for n in spec.nodes}
    for ray in spec.rays:
        prev = ray.start
        for k in range(1, ray_nodes + 1):
            lab = f"{ray.start}/{k}"
            labels.append(lab)
            parent[lab] = prev
            up[lab] = float(ray.up(k))
            down[lab] = float(ray.down(k))
            prev = lab
    index = {lab: i for i, lab in enumerate(labels)}
    Q = np.zeros((len(labels), len(labels)))
    for lab in labels:
        p = parent[lab]
        if p is None:
            continue
        Q[index[p], index[lab]] = up[lab]
        Q[index[lab], index[p]] = down[lab]
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorMatrix(Q, labels=tuple(labels), meta={"family": "tree", "ray_nodes": ray_nodes})


_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


def _antiderivative(g, x: np.ndarray) -> np.ndarray:
    """``int_0^x g`` at sorted points ``x`` (3-point Gauss per gap)."""
    lo, hi = x[:-1], x[1:]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    pts = mid[:, None] + half[:, None] * _GL3_X[None, :]
    vals = np.asarray(g(pts.ravel()), dtype=float).reshape(pts.shape)
    pieces = half * (vals @ _GL3_W)
    first = 0.0
    if x[0] != 0.0:
        first = float(_antiderivative(g, np.array([0.0, x[0]]))[1])
    return first + np.concatenate([[0.0], np.cumsum(pieces)])


def discretize_diffusion(spec: DiffusionSpec, mesh: float, length: float) -> GeneratorMatrix:
    """Finite-volume generator for ``a f'' + b f'`` on ``[0, length]``.

    The operator is written in divergence form ``w^-1 (p f')'`` with
    ``p = e^c``, ``w = e^c / a`` and ``c' = b / a``.  Node ``i`` at
    ``x_i = i h`` owns a control volume of width ``h`` (``h/2`` at the two
    ends) and exchanges flux ``p(x_{i+1/2}) (f_{i+1} - f_i)/h`` with its
    neighbour.  Off-diagonal rates are positive for every mesh and the
    matrix is reversible with respect to ``w_i * volume_i``; both ends are
    reflecting.  The scheme is second order in ``h``.
    """
    if spec.domain != "half_line":
        raise ValueError("only half-line diffusions can be discretized")
    if not (mesh > 0 and length > 0):
        raise ValueError("mesh and length must be positive")
    M = int(round(length / mesh))
    if M < 2:
        raise ValueError("mesh too coarse for the interval")
    h = length / M
    half = np.arange(2 * M + 1) * (h / 2)
    c_half = _antiderivative(lambda y: spec.b(y) / spec.a(y), half)
    c_node, c_mid = c_half[0::2], c_half[1::2]
    x = half[0::2]
    a_node = np.asarray(spec.a(x), dtype=float)
    if np.any(~np.isfinite(a_node)) or np.any(a_node <= 0):
        raise ValueError("a(x) must be positive on the mesh")
    vol = np.full(M + 1, h)
    vol[0] = vol[-1] = h / 2
    # rate i -> i+1 and i+1 -> i
    up = a_node[:-1] * np.exp(c_mid - c_node[:-1]) / (h * vol[:-1])
    down = a_node[1:] * np.exp(c_mid - c_node[1:]) / (h * vol[1:])
    if not (np.all(np.isfinite(up)) and np.all(np.isfinite(down))):
        raise ValueError("discretized rates overflow; shorten the interval")
    log_pi = c_node - np.log(a_node) + np.log(vol)
    n = M + 1
    if n >= _SPARSE_FROM:
        gm = _BandedGenerator(up, down, log_pi, h, x)
        return gm
    Q = np.diag(up, 1) + np.diag(down, -1)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorMatrix(Q, log_pi, meta={"family": "diffusion", "mesh": h, "length": length, "x": x})


class _BandedGenerator(GeneratorMatrix):
    """Tridiagonal generator kept in band form (large meshes)."""

    def __init__(self, up, down, log_pi, h, x):
        n = up.size + 1
        diag = -(np.concatenate([up, [0.0]]) + np.concatenate([[0.0], down]))
        object.__setattr__(self, "_up", up)
        object.__setattr__(self, "_down", down)
        object.__setattr__(self, "_diag", diag)
        object.__setattr__(self, "log_pi", log_pi - np.logaddexp.reduce(log_pi))
        object.__setattr__(self, "boundary", "reflecting")
        object.__setattr__(self, "labels", None)
        object.__setattr__(self, "meta", {"family": "diffusion", "mesh": h, "length": x[-1], "x": x})
        object.__setattr__(self, "_n", n)

    @property
    def Q(self):
        return sparse.diags([self._down, self._diag, self._up], [-1, 0, 1], format="csr")

    @property
    def n(self) -> int:
        return self._n

    @property
    def reversible(self) -> bool:
        return True

    @property
    def tridiagonal(self) -> bool:
        return True


# --------------------------------------------------------------------------
# spectra

def _bands(G: GeneratorMatrix):
    """Diagonal and off-diagonal of the symmetrized tridiagonal ``-Q``."""
    if isinstance(G, _BandedGenerator):
        return -G._diag, -np.sqrt(G._up * G._down)
    Q = G.Q
    up = np.diag(Q, 1)
    down = np.diag(Q, -1)
    return -np.diag(Q), -np.sqrt(up * down)


def _symmetrized(Q: np.ndarray) -> np.ndarray:
    """``D^{1/2} (-Q) D^{-1/2}`` for a reversible ``Q``: entries ``-sqrt(q_ij q_ji)``.

    The stationary weights cancel, which keeps the matrix well scaled even
    when ``pi`` spans hundreds of orders of magnitude.
    """
    off = np.sqrt(np.clip(Q, 0, None) * np.clip(Q.T, 0, None))
    np.fill_diagonal(off, 0.0)
    return np.diag(-np.diag(Q)) - off


def _smallest(G: GeneratorMatrix, drop: int | None = None, k: int = 2) -> np.ndarray:
    if G.tridiagonal and drop is None:
        d, e = _bands(G)
        return sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    if G.tridiagonal and drop is not None:
        d, e = _bands(G)
        if drop in (0, G.n - 1):
            d2 = d[1:] if drop == 0 else d[:-1]
            e2 = e[1:] if drop == 0 else e[:-1]
            return sla.eigvalsh_tridiagonal(d2, e2, select="i", select_range=(0, k - 1))
    Q = G.Q.toarray() if sparse.issparse(G.Q) else G.Q
    S = _symmetrized(Q)
    if drop is not None:
        keep = np.r_[0:drop, drop + 1 : G.n]
        S = S[np.ix_(keep, keep)]
    return sla.eigvalsh(S, subset_by_index=(0, min(k, S.shape[0]) - 1))


def spectral_gap(G: GeneratorMatrix, return_tag: bool = False):
    """Smallest nonzero eigenvalue of ``-Q`` on ``L^2(pi)``.

    For a reversible generator this is ``lambda_1`` of the finite chain.
    Otherwise the gap of the additive symmetrization ``(Q + Q*)/2`` is
    returned, which only bounds the L2 decay rate from below, and the tag
    is ``"additive symmetrization (lower bound only)"``.
    """
    if G.n < 2:
        raise ValueError("need at least two states")
    if G.reversible:
        vals = _smallest(G)
        tag = "reversible"
    else:
        Q = G.Q
        pi = G.pi
        adj = (Q.T * pi[None, :]) / pi[:, None]
        sym = 0.5 * (Q + adj)
        vals = sla.eigvalsh(_symmetrized(sym), subset_by_index=(0, 1))
        tag = "additive symmetrization (lower bound only)"
        warnings.warn("non-reversible generator: spectral gap is a lower bound only", stacklevel=2)
    gap = float(vals[1])
    if vals[1] <= 1e-12 * max(1.0, abs(vals[0])) + abs(vals[0]):
        raise ValueError("generator is reducible (zero eigenvalue is not simple)")
    return (gap, tag) if return_tag else gap


def dirichlet_gap(G: GeneratorMatrix, x: int) -> float:
    """Smallest eigenvalue of ``-Q`` with state ``x`` removed (killed on hitting ``x``)."""
    if not 0 <= x < G.n:
        raise IndexError(f"state {x} outside 0..{G.n - 1}")
    if not G.reversible:
        raise ValueError("dirichlet_gap needs a reversible generator")
    return float(_smallest(G, drop=x, k=1)[0])


# --------------------------------------------------------------------------
# hitting times

def _restricted(G: GeneratorMatrix, keep: np.ndarray):
    Q = G.Q
    if sparse.issparse(Q):
        return Q[keep][:, keep].tocsc()
    return Q[np.ix_(keep, keep)]


def _complement(G: GeneratorMatrix, H) -> np.ndarray:
    H = np.atleast_1d(np.asarray(sorted(set(int(h) for h in H)), dtype=int))
    if H.size == 0:
        raise ValueError("H must be nonempty")
    if H.min() < 0 or H.max() >= G.n:
        raise IndexError("H contains a state outside the chain")
    mask = np.ones(G.n, dtype=bool)
    mask[H] = False
    return np.flatnonzero(mask)


def hitting_moments(G: GeneratorMatrix, H, order: int = 1) -> np.ndarray:
    """``E_x[tau_H^order]`` for every state ``x`` (zero on ``H``).

    Order ``n`` solves ``Q_{H^c} u_n = -n u_{n-1}`` with ``u_0 = 1``.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    keep = _complement(G, H)
    out = np.zeros(G.n)
    if keep.size == 0:
        return out
    A = _restricted(G, keep)
    if sparse.issparse(A):
        lu = spla.splu(A)
        solve = lu.solve
    else:
        try:
            lu = sla.lu_factor(A)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise ValueError("restricted generator is singular") from exc
        solve = lambda rhs: sla.lu_solve(lu, rhs)  # noqa: E731
    u = np.ones(keep.size)
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            for n in range(1, order + 1):
                u = solve(-n * u)
        except sla.LinAlgWarning as exc:
            raise ValueError("restricted generator is singular") from exc
    if not np.all(np.isfinite(u)) or np.any(u < 0):
        raise ValueError("H is not reachable from every state")
    out[keep] = u
    return out


# --------------------------------------------------------------------------
# uniformization

def _poisson_weights(rate_t: float, tail: float) -> np.ndarray:
    """Poisson(rate_t) probabilities, cut where the dropped mass is below ``tail``."""
    if rate_t == 0:
        return np.ones(1)
    k_hi = int(rate_t + 10 * math.sqrt(rate_t) + 40)
    while True:
        k = np.arange(k_hi + 1)
        w = np.exp(-rate_t + k * math.log(rate_t) - special.gammaln(k + 1))
        # geometric majorant for the mass beyond k_hi
        ratio = rate_t / (k_hi + 2)
        beyond = w[-1] * ratio / (1 - ratio) if ratio < 1 else math.inf
        if beyond < 1e-3 * tail:
            break
        k_hi *= 2
    tails = np.cumsum(w[::-1])[::-1]
    kept = np.flatnonzero(tails + beyond >= tail)
    last = int(kept[-1]) if kept.size else 0
    return w[: last + 1]


def _uniformized(Q: np.ndarray, X: np.ndarray, t: float, tail: float) -> np.ndarray:
    """``X e^{tQ}`` (rows are measures) by uniformization."""
    lam = float(np.max(-np.diag(Q)))
    if lam == 0 or t == 0:
        return X.copy()
    K = np.eye(Q.shape[0]) + Q / lam
    w = _poisson_weights(lam * t, tail)
    out = w[0] * X
    cur = X
    for wk in w[1:]:
        cur = cur @ K
        out = out + wk * cur
    return out


def _uniformized_vec(Q: np.ndarray, v: np.ndarray, t: float, tail: float, lam: float) -> np.ndarray:
    """``e^{tQ} v`` (column action) by uniformization with rate ``lam``."""
    if t == 0:
        return v.copy()
    K = np.eye(Q.shape[0]) + Q / lam
    w = _poisson_weights(lam * t, tail)
    out = w[0] * v
    cur = v
    for wk in w[1:]:
        cur = K @ cur
        out = out + wk * cur
    return out


def _dense(G: GeneratorMatrix) -> np.ndarray:
    Q = G.Q
    return Q.toarray() if sparse.issparse(Q) else Q


def _tv_rows(P: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(P - pi[None, :]).sum(axis=1)


@dataclass(frozen=True)
class DecayCurve:
    """Total-variation distance to stationarity along a time grid.

    ``tv[j]`` is ``sup_x`` of the half-L1 distance at ``times[j]`` and
    ``per_state[x, j]`` the distance from each start.
    """

    times: np.ndarray
    tv: np.ndarray
    per_state: np.ndarray | None = None
    normalization: str = "half-L1"
    rate: float | None = None
    r_squared: float | None = None

    def fitted(self, window: tuple[float, float] | None = None) -> "DecayCurve":
        """Copy with ``rate`` and ``r_squared`` from a log-linear fit."""
        rate, r2 = fit_exp_rate(self.times, self.tv, window)
        return DecayCurve(self.times, self.tv, self.per_state, self.normalization, rate, r2)

    def to_csv(self, path=None) -> str:
        """Write columns ``t, tv_sup`` and one column per state; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["t", "tv_sup"]
        if self.per_state is not None:
            header += [f"tv_{x}" for x in range(self.per_state.shape[0])]
        writer.writerow(header)
        for j, t in enumerate(self.times):
            row = [repr(float(t)), repr(float(self.tv[j]))]
            if self.per_state is not None:
                row += [repr(float(v)) for v in self.per_state[:, j]]
            writer.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def tv_decay(G: GeneratorMatrix, times, tail: float = POISSON_TAIL) -> DecayCurve:
    """``sup_x ||P_t(x, .) - pi||`` on a time grid, by uniformization.

    ``P_t = sum_k Pois(Lambda t; k) K^k`` with ``K = I + Q/Lambda`` and
    ``Lambda = max_i |q_ii|``; the Poisson series is cut once its tail
    mass drops below ``tail``.  Consecutive grid times are chained, so each
    step only uniformizes over the increment.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d grid")
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be increasing and nonnegative")
    Q = _dense(G)
    lam = float(np.max(-np.diag(Q)))
    if lam * float(np.max(np.diff(np.concatenate([[0.0], times])))) > 1e6:
        raise OverflowError("Lambda * dt is too large for uniformization; rescale the times")
    pi = G.pi
    P = np.eye(G.n)
    prev = 0.0
    per = np.empty((G.n, times.size))
    for j, t in enumerate(times):
        P = _uniformized(Q, P, t - prev, tail)
        prev = t
        per[:, j] = _tv_rows(P, pi)
    return DecayCurve(times, per.max(axis=0), per)


def kappa_empirical(G: GeneratorMatrix, window: tuple[float, float] | None = None,
                    points: int = 41, floor: float = 1e-9) -> float:
    """Exponential rate fitted to the late-time sup-TV curve.

    Without a ``window`` the horizon is chosen where the curve has decayed
    to about ``floor`` and the fit uses its second half.  Uniformization
    round-off grows like ``eps * Lambda t``, so ``floor`` is raised to a
    thousand times that level when it is larger.  The slope fit is
    independent of any eigenvalue computation; a rough decay estimate from
    the curve itself only places the window.
    """
    if window is None:
        lam = max(1e-300, float(np.max(-np.diag(_dense(G)))))

        def level(t):
            return max(floor, 1e3 * np.finfo(float).eps * (1.0 + lam * t))

        # march until the curve is near the noise-adjusted floor
        t = 1.0 / lam
        probe = tv_decay(G, [t])
        while probe.tv[0] > level(t) and t < 1e8:
            t *= 2
            probe = tv_decay(G, [t])
        # the doubling may overshoot into round-off; bisect for the crossing
        below, above = t, t / 2
        for _ in range(12):
            mid = 0.5 * (below + above)
            if tv_decay(G, [mid]).tv[0] > level(mid):
                above = mid
            else:
                below = mid
        window = (below / 2, below)
    lo, hi = window
    if not 0 <= lo < hi:
        raise ValueError("window must satisfy 0 <= lo < hi")
    times = np.linspace(lo, hi, points)
    if times[0] == 0:
        times = times[1:]
    curve = tv_decay(G, times)
    if np.any(curve.tv <= 1e-13):
        raise ValueError("the decay curve underflows inside the window")
    rate, _ = fit_exp_rate(curve.times, curve.tv)
    return rate


def hitting_survival(G: GeneratorMatrix, H, times, tail: float = POISSON_TAIL) -> np.ndarray:
    """``P_x[tau_H > t]`` for every state and grid time (zero rows on ``H``)."""
    times = np.asarray(times, dtype=float)
    keep = _complement(G, H)
    Q = _dense(G)
    lam = float(np.max(-np.diag(Q))) or 1.0
    sub = Q[np.ix_(keep, keep)]
    out = np.zeros((G.n, times.size))
    v = np.ones(keep.size)
    prev = 0.0
    for j, t in enumerate(times):
        v = _uniformized_vec(sub, v, t - prev, tail, lam)
        prev = t
        out[keep, j] = v
    return out


@dataclass(frozen=True)
class LemmaReport:
    """Both sides of ``f(x,t) <= P_x[tau_H > t] + int_0^t sup_{y in H} f(y, t-s) dF(s)``.

    Arrays are indexed ``[state, time]`` over the states outside ``H``.
    ``allowance`` is half the gap between upper and lower Stieltjes sums
    of the convolution, so the exact right side lies within
    ``rhs +- allowance``.
    """

    states: np.ndarray
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    allowance: np.ndarray
    passed: bool
    violations: int
    max_relative_allowance: float


def check_main_lemma(G: GeneratorMatrix, H, times, steps: int = 400,
                     tail: float = POISSON_TAIL) -> LemmaReport:
    """Check the first-hitting decomposition of TV distances.

    ``g(u) = sup_{y in H} f(y, u)`` is nonincreasing, so on a uniform grid
    of ``steps`` cells per unit of the largest time the upper and lower
    Stieltjes sums of ``int g(t-s) dF(s)`` bracket the integral.  Each
    requested time is snapped to that grid.

    Raises
    ------
    ValueError
        When the bracket is wider than 10% of the right side somewhere.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    H = sorted(set(int(h) for h in H))
    keep = _complement(G, H)
    t_max = float(times.max())
    dt = t_max / steps if t_max > 0 else 1.0
    grid = np.arange(steps + 1) * dt
    curve = tv_decay(G, grid[1:], tail) if steps else None
    f = np.concatenate([_tv_rows(np.eye(G.n), G.pi)[:, None], curve.per_state], axis=1)
    g = f[H].max(axis=0)
    surv = np.concatenate([np.ones((G.n, 1)), hitting_survival(G, H, grid[1:], tail)], axis=1)
    F = 1.0 - surv  # hitting-time distribution from each start
    idx = np.clip(np.rint(times / dt).astype(int), 0, steps)
    lhs = np.empty((keep.size, idx.size))
    rhs = np.empty_like(lhs)
    allow = np.empty_like(lhs)
    for col, m in enumerate(idx):
        dF = np.diff(F[keep, : m + 1], axis=1)  # increments over [s_j, s_{j+1}], j < m
        upper = dF @ g[m - 1 :: -1][:m] if m else np.zeros(keep.size)  # g(t - s_{j+1})
        lower = dF @ g[m:0:-1] if m else np.zeros(keep.size)  # g(t - s_j)
        lhs[:, col] = f[keep, m]
        rhs[:, col] = surv[keep, m] + 0.5 * (upper + lower)
        allow[:, col] = 0.5 * (upper - lower)
    rel = float(np.max(allow / np.maximum(rhs, 1e-300)))
    if rel > 0.1:
        raise ValueError(f"grid too coarse: allowance reaches {rel:.1%} of the right side")
    bad = lhs > rhs + allow + 1e-12
    return LemmaReport(keep, grid[idx], lhs, rhs, allow, not bad.any(), int(bad.sum()), rel)
