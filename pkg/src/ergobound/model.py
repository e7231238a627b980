"""Model families and ingestion of model documents.

A model document is JSON of the form::

    {"family": "birth_death",
     "params": {"birth": "1", "death": "(i+1)^2"},
     "numerics": {"rel": 1e-10, "truncation": 400}}

``family`` selects one of the spec classes below; ``params`` holds the
fields of that class, with rates written as expressions (see
:mod:`ergobound.expr`).  Chains use the variable ``i``, diffusions and
stable models ``x``, radial data ``r``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Union

import numpy as np

from .expr import ExpressionError, RateFunction, parse_rate_expr
from .numerics import Tolerance

__all__ = [
    "ModelError",
    "BirthDeathSpec",
    "SingleDeathSpec",
    "TreeSpec",
    "TreeNode",
    "TreeRay",
    "DiffusionSpec",
    "StableSdeSpec",
    "TimeChangedStableSpec",
    "ModelSpec",
    "FAMILIES",
    "load_model",
    "parse_model",
    "validate",
    "tolerance_from",
]

# indices / points sampled when validating rates on infinite ranges
CHECK_INDICES = 4096
_CHECK_POINTS = np.concatenate([np.linspace(0.0, 10.0, 2001), np.geomspace(10.0, 1e6, 500)])

_NUMERIC_KEYS = {"rel", "abs", "max_terms", "max_evals", "truncation", "mesh", "length"}


class ModelError(ValueError):
    """Schema or invariant violation in a model document or spec.

    ``where`` names the offending field, index or point.
    """

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


def _rate(value, variable: str, where: str) -> RateFunction:
    if isinstance(value, RateFunction):
        return value
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise ModelError(f"expected an expression string, got {type(value).__name__}", where)
    text = value if isinstance(value, str) else repr(float(value))
    try:
        return parse_rate_expr(text, variable)
    except ExpressionError as exc:
        raise ModelError(str(exc), where) from exc


def _positive_on(f: RateFunction, pts: np.ndarray, where: str, what: str):
    vals = f(pts)
    bad = ~np.isfinite(vals) | (vals <= 0)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ModelError(f"{what} must be positive and finite, got {vals[k]!r} at {pts[k]:g}", where)


# --------------------------------------------------------------------------
# chains

@dataclass(frozen=True)
class BirthDeathSpec:
    """Birth-death chain on ``{0, 1, ...}`` (or ``{0, ..., size-1}``).

    Parameters
    ----------
    birth : RateFunction
        ``b_i > 0`` for ``i >= 0``.
    death : RateFunction
        ``a_i > 0`` for ``i >= 1``.
    size : int, optional
        Number of states of a finite chain; ``None`` for the infinite chain.
    """

    birth: RateFunction
    death: RateFunction
    size: int | None = None
    numerics: Mapping = field(default_factory=dict, compare=False)

    family = "birth_death"

    @classmethod
    def from_strings(cls, birth: str, death: str, size: int | None = None) -> "BirthDeathSpec":
        spec = cls(_rate(birth, "i", "birth"), _rate(death, "i", "death"), size)
        validate(spec)
        return spec

    def b(self, i):
        """Birth rates at integer indices (array in, array out)."""
        return self.birth(np.asarray(i, dtype=float))

    def a(self, i):
        """Death rates at integer indices."""
        return self.death(np.asarray(i, dtype=float))

    def scaled(self, s: float) -> "BirthDeathSpec":
        return replace(self, birth=self.birth.scaled(s), death=self.death.scaled(s))


@dataclass(frozen=True)
class SingleDeathSpec:
    """Downward skip-free chain: from ``i`` it moves down only to ``i-1``.

    ``table[i, j]`` holds ``q_ij`` for the explicit rows ``i < N``; columns
    may extend beyond ``N``.  Rows ``i >= N`` come from ``tail_down(i)``
    (the rate ``q_{i,i-1}``) and ``tail_up[k-1](i)`` (the rate
    ``q_{i,i+k}``, ``k = 1..K``).  Without tails the chain is finite with
    ``N`` states and the table must be square.
    """

    table: np.ndarray
    tail_down: RateFunction | None = None
    tail_up: tuple = ()
    numerics: Mapping = field(default_factory=dict, compare=False)

    family = "single_death"

    @property
    def N(self) -> int:
        return int(self.table.shape[0])

    @property
    def finite(self) -> bool:
        return self.tail_down is None

    @property
    def jump_width(self) -> int:
        """Largest upward jump among tail rows."""
        return len(self.tail_up)

    def row(self, i: int) -> dict:
        """Off-diagonal rates out of state ``i`` as ``{j: q_ij}`` (zeros dropped)."""
        if i < self.N:
            r = self.table[i]
            return {j: float(r[j]) for j in np.flatnonzero(r) if j != i}
        if self.finite:
            raise IndexError(f"state {i} outside the finite chain")
        out = {i - 1: float(self.tail_down(i))}
        for k, f in enumerate(self.tail_up, start=1):
            v = float(f(i))
            if v:
                out[i + k] = v
        return out

    def down(self, i) -> np.ndarray:
        """``q_{i,i-1}`` for an array of indices ``i >= 1``."""
        i = np.atleast_1d(np.asarray(i, dtype=int))
        out = np.empty(i.shape, dtype=float)
        inside = i < self.N
        out[inside] = self.table[i[inside], i[inside] - 1]
        if np.any(~inside):
            out[~inside] = self.tail_down(i[~inside].astype(float))
        return out

    def scaled(self, s: float) -> "SingleDeathSpec":
        return replace(
            self,
            table=self.table * s,
            tail_down=None if self.tail_down is None else self.tail_down.scaled(s),
            tail_up=tuple(f.scaled(s) for f in self.tail_up),
        )

    @classmethod
    def from_birth_death(cls, bd: BirthDeathSpec, N: int = 8) -> "SingleDeathSpec":
        """Encode a birth-death chain (explicit rows ``0..N-1`` plus tails)."""
        if bd.size is not None:
            N = bd.size
            table = np.zeros((N, N))
        else:
            table = np.zeros((N, N + 1))
        idx = np.arange(N)
        births = bd.b(idx)
        deaths = bd.a(idx[1:])
        for i in range(N):
            if i + 1 < table.shape[1]:
                table[i, i + 1] = births[i]
            if i >= 1:
                table[i, i - 1] = deaths[i - 1]
        if bd.size is not None:
            return cls(table)
        return cls(table, bd.death, (bd.birth,))


@dataclass(frozen=True)
class TreeNode:
    id: str
    parent: str | None
    up: float = 0.0  # rate parent -> node
    down: float = 0.0  # rate node -> parent


@dataclass(frozen=True)
class TreeRay:
    """Infinite path hanging below a leaf; ``up(k)``, ``down(k)`` for its k-th node."""

    start: str
    up: RateFunction
    down: RateFunction


@dataclass(frozen=True)
class TreeSpec:
    """Rooted tree chain: jumps only between a node and its parent.

    The explicit part is a finite tree; optional rays extend leaves into
    infinite paths whose rates are functions of the position ``k >= 1``
    along the ray.
    """

    nodes: tuple
    rays: tuple = ()
    numerics: Mapping = field(default_factory=dict, compare=False)

    family = "tree"

    @property
    def root(self) -> str:
        return next(n.id for n in self.nodes if n.parent is None)

    def by_id(self) -> dict:
        return {n.id: n for n in self.nodes}

    def children(self) -> dict:
        out = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            if n.parent is not None:
                out[n.parent].append(n.id)
        return out

    def depth(self) -> dict:
        """``|i|`` for every explicit node (root has depth 0)."""
        kids = self.children()
        out = {self.root: 0}
        stack = [self.root]
        while stack:
            u = stack.pop()
            for v in kids[u]:
                out[v] = out[u] + 1
                stack.append(v)
        return out

    def scaled(self, s: float) -> "TreeSpec":
        nodes = tuple(replace(n, up=n.up * s, down=n.down * s) for n in self.nodes)
        rays = tuple(replace(r, up=r.up.scaled(s), down=r.down.scaled(s)) for r in self.rays)
        return replace(self, nodes=nodes, rays=rays)

    @classmethod
    def path(cls, bd: BirthDeathSpec, n_explicit: int = 8) -> "TreeSpec":
        """The birth-death chain as a path tree rooted at state 0."""
        size = bd.size if bd.size is not None else n_explicit
        nodes = [TreeNode("0", None)]
        for i in range(1, size):
            nodes.append(TreeNode(str(i), str(i - 1), float(bd.b(i - 1)), float(bd.a(i))))
        rays = ()
        if bd.size is None:
            m = size - 1
            # ray node k is chain state m + k
            rays = (TreeRay(str(m), _shift(bd.birth, m - 1, "k"), _shift(bd.death, m, "k")),)
        return cls(tuple(nodes), rays)


def _shift(f: RateFunction, offset: int, variable: str) -> RateFunction:
    """``k -> f(k + offset)`` as a new function of ``variable``."""
    if f.is_constant:
        return parse_rate_expr(f.text, variable)
    var = f.variable
    text = _substitute(f.text, var, f"({variable}+{offset})")
    return parse_rate_expr(text, variable)


def _substitute(text: str, name: str, repl: str) -> str:
    import re

    return re.sub(rf"\b{re.escape(name)}\b", repl, text)


# --------------------------------------------------------------------------
# continuum models

@dataclass(frozen=True)
class DiffusionSpec:
    """One-dimensional diffusion ``L = a(x) f'' + b(x) f'``.

    ``domain`` is ``"half_line"`` (``[0, inf)``, reflecting at 0) or
    ``"radial"``, in which case ``beta_bar``, ``r0`` and ``D`` describe the
    radial comparison drift ``beta_bar(r)`` on ``[0, D)``.
    """

    a: RateFunction | None = None
    b: RateFunction | None = None
    domain: str = "half_line"
    beta_bar: RateFunction | None = None
    r0: float = 1.0
    D: float = math.inf
    numerics: Mapping = field(default_factory=dict, compare=False)

    family = "diffusion"

    @classmethod
    def from_strings(cls, a: str, b: str) -> "DiffusionSpec":
        spec = cls(_rate(a, "x", "a"), _rate(b, "x", "b"))
        validate(spec)
        return spec

    @classmethod
    def radial(cls, beta_bar: str, r0: float = 1.0, D: float = math.inf) -> "DiffusionSpec":
        spec = cls(domain="radial", beta_bar=_rate(beta_bar, "r", "beta_bar"), r0=r0, D=D)
        validate(spec)
        return spec

    def scaled(self, s: float) -> "DiffusionSpec":
        if self.domain == "radial":
            raise ModelError("radial comparison data has no time scaling", "domain")
        return replace(self, a=self.a.scaled(s), b=self.b.scaled(s))


@dataclass(frozen=True)
class StableSdeSpec:
    """SDE driven by a symmetric alpha-stable process in ``R^dim``.

    ``drift_radial`` is either the radial profile ``r -> -<x,b(x)>/|x|^2``
    (variable ``r``) or, for ``dim == 1``, the drift ``b(x)`` itself
    (variable ``x``); the profile is then ``min(-b(r)/r, b(-r)/r)``.
    """

    alpha: float
    dim: int
    drift_radial: RateFunction
    numerics: Mapping = field(default_factory=dict, compare=False)

    family = "stable_sde"

    @property
    def is_drift(self) -> bool:
        return self.drift_radial.variable == "x"

    def profile(self, r):
        """Radial profile before clipping and monotone envelope."""
        r = np.asarray(r, dtype=float)
        if self.is_drift:
            with np.errstate(all="ignore"):
                return np.minimum(-self.drift_radial(r) / r, self.drift_radial(-r) / r)
        return self.drift_radial(r)

    @classmethod
    def from_strings(cls, alpha: float, dim: int, drift: str) -> "StableSdeSpec":
        var = "x" if _uses(drift, "x") else "r"
        spec = cls(float(alpha), int(dim), _rate(drift, var, "drift_radial"))
        validate(spec)
        return spec


@dataclass(frozen=True)
class TimeChangedStableSpec:
    """Symmetric alpha-stable process on ``R`` run at speed ``a(x)``."""

    alpha: float
    a: RateFunction
    numerics: Mapping = field(default_factory=dict, compare=False)

    family = "tc_stable"

    @classmethod
    def from_strings(cls, alpha: float, a: str) -> "TimeChangedStableSpec":
        spec = cls(float(alpha), _rate(a, "x", "a"))
        validate(spec)
        return spec

    def scaled(self, s: float) -> "TimeChangedStableSpec":
        return replace(self, a=self.a.scaled(s))


ModelSpec = Union[BirthDeathSpec, SingleDeathSpec, TreeSpec, DiffusionSpec,
                  StableSdeSpec, TimeChangedStableSpec]


def _uses(text: str, name: str) -> bool:
    import re

    return re.search(rf"\b{name}\b", text) is not None


# --------------------------------------------------------------------------
# validation

def validate(spec) -> None:
    """Check the invariants of ``spec``; raise :class:`ModelError` on failure.

    Rates on infinite index ranges are checked on the first
    ``CHECK_INDICES`` indices (points for continuum models); computations
    re-check every rate they actually use.
    """
    if isinstance(spec, BirthDeathSpec):
        n = spec.size if spec.size is not None else CHECK_INDICES
        if spec.size is not None and spec.size < 2:
            raise ModelError("a finite chain needs at least 2 states", "size")
        _positive_on(spec.birth, np.arange(0, n - 1 if spec.size else n, dtype=float),
                     "birth", "birth rate b_i")
        _positive_on(spec.death, np.arange(1, n, dtype=float), "death", "death rate a_i")
    elif isinstance(spec, SingleDeathSpec):
        _validate_single_death(spec)
    elif isinstance(spec, TreeSpec):
        _validate_tree(spec)
    elif isinstance(spec, DiffusionSpec):
        if spec.domain == "half_line":
            if spec.a is None or spec.b is None:
                raise ModelError("half-line diffusion needs a and b", "params")
            _positive_on(spec.a, _CHECK_POINTS, "a", "diffusion coefficient a(x)")
            vals = spec.b(_CHECK_POINTS)
            if not np.all(np.isfinite(vals)):
                k = int(np.argmax(~np.isfinite(vals)))
                raise ModelError(f"drift not finite at x={_CHECK_POINTS[k]:g}", "b")
        elif spec.domain == "radial":
            if spec.beta_bar is None:
                raise ModelError("radial comparison needs beta_bar", "beta_bar")
            if not (spec.D > spec.r0 >= 0):
                raise ModelError("need 0 <= r0 < D", "r0")
        else:
            raise ModelError(f"unknown domain {spec.domain!r}", "domain")
    elif isinstance(spec, StableSdeSpec):
        if not 0 < spec.alpha < 2:
            raise ModelError(f"alpha must lie in (0, 2), got {spec.alpha}", "alpha")
        if spec.dim < 1:
            raise ModelError(f"dim must be >= 1, got {spec.dim}", "dim")
        if spec.is_drift and spec.dim != 1:
            raise ModelError("a drift in x is only accepted for dim = 1; give the radial profile in r",
                             "drift_radial")
    elif isinstance(spec, TimeChangedStableSpec):
        if not 1 < spec.alpha < 2:
            raise ModelError(f"alpha must lie in (1, 2), got {spec.alpha}", "alpha")
        pts = np.concatenate([-_CHECK_POINTS[::-1], _CHECK_POINTS])
        _positive_on(spec.a, pts, "a", "speed a(x)")
    else:
        raise ModelError(f"not a model spec: {type(spec).__name__}")


def _validate_single_death(spec: SingleDeathSpec):
    t = spec.table
    if t.ndim != 2 or t.shape[0] < 1:
        raise ModelError("table must be a non-empty matrix", "table")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        i, j = np.argwhere(~np.isfinite(t) | (t < 0))[0]
        raise ModelError(f"rate q[{i}][{j}] must be finite and >= 0", "table")
    N, M = t.shape
    if spec.finite:
        if M != N:
            raise ModelError("without tails the table must be square", "table")
        if spec.tail_up:
            raise ModelError("tail.up given without tail.down", "tail")
    elif M < N:
        raise ModelError("table needs at least N columns", "table")
    for i in range(N):
        if i >= 1 and not t[i, i - 1] > 0:
            raise ModelError(f"q[{i}][{i - 1}] must be > 0", f"table[{i}]")
        if i >= 2 and np.any(t[i, : i - 1] > 0):
            j = int(np.flatnonzero(t[i, : i - 1])[0])
            raise ModelError(f"q[{i}][{j}] must be 0 (only single-step downward jumps)", f"table[{i}]")
    if not spec.finite:
        idx = np.arange(N, N + CHECK_INDICES, dtype=float)
        _positive_on(spec.tail_down, idx, "tail.down", "q_{i,i-1}")
        for k, f in enumerate(spec.tail_up, start=1):
            v = f(idx)
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                bad = int(np.argmax(~np.isfinite(v) | (v < 0)))
                raise ModelError(f"q_(i,i+{k}) must be finite and >= 0 at i={int(idx[bad])}",
                                 f"tail.up[{k - 1}]")


def _validate_tree(spec: TreeSpec):
    ids = [n.id for n in spec.nodes]
    if len(set(ids)) != len(ids):
        raise ModelError("duplicate node id", "nodes")
    roots = [n.id for n in spec.nodes if n.parent is None]
    if len(roots) != 1:
        raise ModelError(f"exactly one root required, found {len(roots)}", "nodes")
    known = set(ids)
    for n in spec.nodes:
        if n.parent is not None:
            if n.parent not in known:
                raise ModelError(f"parent {n.parent!r} of {n.id!r} is not a node", f"nodes[{n.id}]")
            if not (n.up > 0 and n.down > 0 and math.isfinite(n.up) and math.isfinite(n.down)):
                raise ModelError("up and down rates must be positive and finite", f"nodes[{n.id}]")
    depth = spec.depth()
    if len(depth) != len(ids):
        missing = sorted(known - set(depth))
        raise ModelError(f"nodes not connected to the root: {missing[:5]}", "nodes")
    kids = spec.children()
    seen = set()
    for r in spec.rays:
        if r.start not in known:
            raise ModelError(f"ray starts at unknown node {r.start!r}", "rays")
        if kids[r.start] or r.start in seen:
            raise ModelError(f"rays must start at distinct leaves ({r.start!r})", "rays")
        seen.add(r.start)
        k = np.arange(1, CHECK_INDICES + 1, dtype=float)
        _positive_on(r.up, k, f"rays[{r.start}].up", "ray up rate")
        _positive_on(r.down, k, f"rays[{r.start}].down", "ray down rate")


# --------------------------------------------------------------------------
# ingestion

def _require(params: Mapping, key: str, family: str):
    if key not in params:
        raise ModelError(f"missing field {key!r} for family {family!r}", f"params.{key}")
    return params[key]


def _check_keys(params: Mapping, allowed: set, where: str = "params"):
    extra = set(params) - allowed
    if extra:
        raise ModelError(f"unknown field(s) {sorted(extra)}", where)


def _number(value, where: str) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(f"expected a number, got {value!r}", where)
    return float(value)


def parse_model(doc: Mapping):
    """Build and validate a spec from an already-decoded model document."""
    if not isinstance(doc, Mapping):
        raise ModelError("model document must be a JSON object")
    _check_keys(doc, {"family", "params", "numerics"}, "document")
    family = doc.get("family")
    if family not in FAMILIES:
        raise ModelError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}", "family")
    params = doc.get("params")
    if not isinstance(params, Mapping):
        raise ModelError("params must be an object", "params")
    numerics = dict(doc.get("numerics") or {})
    _check_keys(numerics, _NUMERIC_KEYS, "numerics")
    spec = FAMILIES[family](params)
    spec = replace(spec, numerics=numerics)
    validate(spec)
    return spec


def _bd(params):
    _check_keys(params, {"birth", "death", "size"})
    size = params.get("size")
    if size is not None and (isinstance(size, bool) or not isinstance(size, int)):
        raise ModelError("size must be an integer", "params.size")
    return BirthDeathSpec(
        _rate(_require(params, "birth", "birth_death"), "i", "params.birth"),
        _rate(_require(params, "death", "birth_death"), "i", "params.death"),
        size,
    )


def _sd(params):
    _check_keys(params, {"table", "tail"})
    raw = _require(params, "table", "single_death")
    try:
        table = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"table must be a rectangular numeric matrix ({exc})", "params.table")
    tail = params.get("tail")
    if tail is None:
        return SingleDeathSpec(table)
    _check_keys(tail, {"down", "up"}, "params.tail")
    down = _rate(_require(tail, "down", "single_death"), "i", "params.tail.down")
    ups = tail.get("up", [])
    if isinstance(ups, str) or not isinstance(ups, (list, tuple)):
        raise ModelError("tail.up must be a list of expressions (k = 1, 2, ...)", "params.tail.up")
    up = tuple(_rate(u, "i", f"params.tail.up[{k}]") for k, u in enumerate(ups))
    return SingleDeathSpec(table, down, up)


def _tree(params):
    _check_keys(params, {"nodes", "rays"})
    nodes = []
    for k, n in enumerate(_require(params, "nodes", "tree")):
        where = f"params.nodes[{k}]"
        if not isinstance(n, Mapping):
            raise ModelError("node must be an object", where)
        _check_keys(n, {"id", "parent", "up", "down"}, where)
        parent = n.get("parent")
        nid = str(_require(n, "id", "tree"))
        if parent is None:
            nodes.append(TreeNode(nid, None))
        else:
            nodes.append(TreeNode(nid, str(parent), _number(_require(n, "up", "tree"), where + ".up"),
                                  _number(_require(n, "down", "tree"), where + ".down")))
    rays = []
    for k, r in enumerate(params.get("rays", [])):
        where = f"params.rays[{k}]"
        _check_keys(r, {"from", "up", "down"}, where)
        rays.append(TreeRay(str(_require(r, "from", "tree")),
                            _rate(_require(r, "up", "tree"), "k", where + ".up"),
                            _rate(_require(r, "down", "tree"), "k", where + ".down")))
    return TreeSpec(tuple(nodes), tuple(rays))


def _diffusion(params):
    _check_keys(params, {"a", "b", "domain", "beta_bar", "r0", "D"})
    domain = params.get("domain", "half_line")
    if domain == "radial":
        return DiffusionSpec(
            domain="radial",
            beta_bar=_rate(_require(params, "beta_bar", "diffusion"), "r", "params.beta_bar"),
            r0=_number(params.get("r0", 1.0), "params.r0"),
            D=_number(params.get("D", math.inf), "params.D"),
        )
    return DiffusionSpec(
        _rate(_require(params, "a", "diffusion"), "x", "params.a"),
        _rate(_require(params, "b", "diffusion"), "x", "params.b"),
        domain,
    )


def _stable(params):
    _check_keys(params, {"alpha", "dim", "drift_radial"})
    drift = _require(params, "drift_radial", "stable_sde")
    dim = params.get("dim", 1)
    if isinstance(dim, bool) or not isinstance(dim, int):
        raise ModelError("dim must be an integer", "params.dim")
    var = "x" if isinstance(drift, str) and _uses(drift, "x") else "r"
    return StableSdeSpec(_number(_require(params, "alpha", "stable_sde"), "params.alpha"), dim,
                         _rate(drift, var, "params.drift_radial"))


def _tc(params):
    _check_keys(params, {"alpha", "a"})
    return TimeChangedStableSpec(_number(_require(params, "alpha", "tc_stable"), "params.alpha"),
                                 _rate(_require(params, "a", "tc_stable"), "x", "params.a"))


FAMILIES = {
    "birth_death": _bd,
    "single_death": _sd,
    "tree": _tree,
    "diffusion": _diffusion,
    "stable_sde": _stable,
    "tc_stable": _tc,
}


def load_model(path) -> ModelSpec:
    """Read, parse and validate a model document from ``path``.

    Raises
    ------
    OSError
        If the file cannot be read.
    ModelError
        On malformed JSON, schema violations or invariant violations.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    return parse_model(doc)


def tolerance_from(spec, overrides: Mapping | None = None) -> Tolerance:
    """Tolerance from the spec's ``numerics`` block, then ``overrides``."""
    merged: dict[str, Any] = dict(getattr(spec, "numerics", {}) or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    base = Tolerance()
    return Tolerance(
        rel=float(merged.get("rel", base.rel)),
        abs=float(merged.get("abs", base.abs)),
        max_terms=int(merged.get("max_terms", base.max_terms)),
        max_evals=int(merged.get("max_evals", base.max_evals)),
    )
