"""Samplers for every tree law in the coupling constructions.

Size draws invert cumulative tables built from the exact laws; tables are
float (correctly rounded from exact values), so exact inequalities between
cumulative functions survive rounding and shared-uniform inversions can
never violate the couplings' monotonicity.  Tables extend lazily and are
capped; a draw that resolves beyond the cap is reported as TAIL ("finite
but larger than the cap") so callers can either coarsen (a TAIL size is
still known to be >= 2) or quarantine.

Two window-flag semantics appear, matching the exact laws in ``verify``:

  * truncations of materialized finite trees flag boundary vertices that
    have a child in the full tree ("haschild");
  * windows of conditioned/infinite laws flag exactly the boundary
    vertices whose continuation is infinite ("spine"), which is what the
    conditioned one-step decompositions observe.

Finite companion trees are sampled via the extinction dual: a
supercritical cluster conditioned to stay finite is percolation with the
dual retention ``p * e^((d-1)/d)`` where ``e^(1/d) = 1 - p + p e``.  That
gives exact finite-branch sampling with no size inversion at all.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import mpmath

from .combinatorics import (
    MP_DPS,
    OffspringParams,
    _as_mpf,
    count_ratio,
    count_trees,
    second_tree_factor,
    size_pmf,
    survival_probability,
)
from .rng import RngStream
from .treecore import DTree, Label, WindowedTree

INFINITE = math.inf


class Tail:
    """Sentinel: a size known to be finite but beyond the table cap."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TAIL"


TAIL = Tail()

DEFAULT_SIZE_TABLE_CAP = {2: 4096, 3: 4096}


@dataclass
class SampleBudget:
    max_vertices: int = 100_000
    max_depth: int = 512


@dataclass
class GWSample:
    """Explored root component.  ``complete_depth`` is the largest D for
    which the depth-D window (including haschild flags) is exact; None
    means the whole tree was materialized."""

    tree: DTree
    exceeded: bool
    complete_depth: int | None = None

    def window(self, depth: int) -> WindowedTree:
        if self.complete_depth is not None and depth > self.complete_depth:
            raise ValueError(f"window depth {depth} not resolved (budget hit)")
        return self.tree.truncate(depth)


def _bernoulli_threshold(p) -> int:
    """u64 < threshold  <=>  success with probability p (exact for Fraction)."""
    if isinstance(p, Fraction):
        return (p.numerator << 64) // p.denominator
    with mpmath.workdps(MP_DPS):
        return int(mpmath.floor(_as_mpf(p) * 2**64))


def sample_gw(params: OffspringParams, rng: RngStream,
              budget: SampleBudget | None = None) -> GWSample:
    """Site percolation: the root component explored breadth-first.

    Every vertex is retained independently with probability p (exact
    Bernoulli for rational p); children are explored only under retained
    parents.  Breadth-first order guarantees that when the budget is hit,
    all fully processed levels still yield exact windows.
    """
    budget = budget or SampleBudget()
    d = params.d
    thresh = _bernoulli_threshold(params.p)
    if rng.u64() >= thresh:
        return GWSample(DTree.empty(d), False)
    verts: list[Label] = [()]
    level: list[Label] = [()]
    depth = 0
    while level:
        if depth >= budget.max_depth:
            return GWSample(DTree(d, verts, _checked=True), True, complete_depth=depth - 1)
        nxt: list[Label] = []
        for v in level:
            for i in range(1, d + 1):
                if rng.u64() < thresh:
                    nxt.append(v + (i,))
        verts.extend(nxt)
        if len(verts) > budget.max_vertices:
            return GWSample(DTree(d, verts, _checked=True), True, complete_depth=depth)
        level = nxt
        depth += 1
    return GWSample(DTree(d, verts, _checked=True), False)


def gw_window_verts(d: int, thresh: int, depth: int, rng: RngStream) -> frozenset[Label]:
    """Vertex content of a percolation window: exploration stops at the
    window boundary, so the work is bounded by the ball size."""
    if rng.u64() >= thresh:
        return frozenset()
    verts = [()]
    level = [()]
    for _ in range(depth):
        nxt = []
        for v in level:
            for i in range(1, d + 1):
                if rng.u64() < thresh:
                    nxt.append(v + (i,))
        verts.extend(nxt)
        level = nxt
    return frozenset(verts)


def gw_window(d: int, p, depth: int, rng: RngStream) -> WindowedTree:
    """Percolation window with haschild boundary flags (one extra level)."""
    thresh = _bernoulli_threshold(p)
    verts = gw_window_verts(d, thresh, depth + 1, rng)
    kept = frozenset(v for v in verts if len(v) <= depth)
    alive = frozenset(v for v in kept if len(v) == depth
                      and any(v + (i,) in verts for i in range(1, d + 1)))
    return WindowedTree(d, depth, kept, alive, _checked=True)


def extinction_dual_retention(params: OffspringParams):
    """Retention probability of the percolation law equal to GW(p)
    conditioned on a finite root component."""
    d, p = params.d, params.p
    if p <= params.critical:
        return p
    if d == 2:
        return 1 - p
    with mpmath.workdps(MP_DPS):
        surv = _as_mpf(survival_probability(params))
        pm = mpmath.mpf(p.numerator) / p.denominator
        e = 1 - surv / pm
        return pm * e ** mpmath.mpf("2/3") if e > 0 else mpmath.mpf(0)


# ---------------------------------------------------------------------------
# size tables


class SizeCdf:
    """Lazily extended float cumulative table over {0..cap} + TAIL + INF.

    The pmf is supplied as a generator so entries extend in O(1) per size
    via multiplicative recurrences, even where the exact weights have
    astronomical numerators.
    """

    def __init__(self, pmf_iter, finite_total: float, cap: int):
        self._pmf = pmf_iter
        self.finite_total = finite_total
        self.cap = cap
        self._cum: list[float] = []

    def cum(self, k: int) -> float:
        while len(self._cum) <= k:
            prev = self._cum[-1] if self._cum else 0.0
            self._cum.append(prev + next(self._pmf))
        return self._cum[k]

    def invert(self, u: float):
        """min{k : F(k) >= u}, TAIL when that exceeds the cap, INFINITE when
        u falls in the infinite-size mass."""
        if u >= self.finite_total:
            return INFINITE
        hi = 1
        while self.cum(min(hi, self.cap)) < u:
            if hi >= self.cap:
                return TAIL
            hi *= 2
        idx = bisect.bisect_left(self._cum, u)
        return idx if idx <= self.cap else TAIL


def _recurrence_pmf(d: int, first: float, step: float):
    val = first
    k = 0
    while True:
        yield val
        k += 1
        val *= count_ratio(d, k) * step


def companion_cdf(params: OffspringParams, cap: int | None = None) -> SizeCdf:
    """d=2 companion size: P(k) = 2p*size_pmf(k), finite total 2(1-p)."""
    params.require_conditionable()
    if params.d != 2:
        raise ValueError("companion_cdf is the d = 2 table")
    cap = cap if cap is not None else DEFAULT_SIZE_TABLE_CAP[2]
    p = params.p
    return SizeCdf(_recurrence_pmf(2, float(2 * p * (1 - p)), float(p * (1 - p))),
                   float(2 * (1 - p)), cap)


def _root3p(params: OffspringParams) -> mpmath.mpf:
    with mpmath.workdps(MP_DPS):
        return mpmath.sqrt(3 * mpmath.mpf(params.p.numerator) / params.p.denominator)


def first_companion_cdf(params: OffspringParams, cap: int | None = None) -> SizeCdf:
    """d=3 first companion size: P(k) = sqrt(3p)*size_pmf(k)."""
    params.require_conditionable()
    if params.d != 3:
        raise ValueError("first_companion_cdf is the d = 3 table")
    cap = cap if cap is not None else DEFAULT_SIZE_TABLE_CAP[3]
    p = params.p
    with mpmath.workdps(MP_DPS):
        r = _root3p(params)
        fin = float(r * (1 - _as_mpf(survival_probability(params))))
        first = float(r * _as_mpf(size_pmf(params, 0)))
    return SizeCdf(_recurrence_pmf(3, first, float(p * (1 - p) ** 2)), fin, cap)


def second_companion_cdf(params: OffspringParams, first_infinite: bool,
                         cap: int | None = None) -> SizeCdf:
    """d=3 second companion size given the first companion's class."""
    params.require_conditionable()
    if params.d != 3:
        raise ValueError("second_companion_cdf is the d = 3 table")
    cap = cap if cap is not None else DEFAULT_SIZE_TABLE_CAP[3]
    if not first_infinite:
        return first_companion_cdf(params, cap)
    p = params.p
    with mpmath.workdps(MP_DPS):
        r = _root3p(params)
        factor = second_tree_factor(p)
        fin = float(r * (1 - _as_mpf(survival_probability(params))) * factor)
        first = float(r * factor * _as_mpf(size_pmf(params, 0)))
    return SizeCdf(_recurrence_pmf(3, first, float(p * (1 - p) ** 2)), fin, cap)


def min_split_cdf(k: int, cap: int | None = None) -> SizeCdf:
    """d=2 law of the smaller root-subtree size of a uniform (k+1)-tree.

    Support is {0..k//2}; total mass 1, so invert never returns INFINITE
    or TAIL.  P(j)/P(j-1) = count_ratio(j)/count_ratio(k-j+1) with the
    diagonal atom halved.
    """

    def pmf():
        val = 2.0 * count_ratio(2, k + 1) ** -1  # 2 c_0 c_k / c_{k+1}
        j = 0
        while True:
            if 2 * j == k:
                yield val / 2
            else:
                yield val
            j += 1
            if j > k // 2:
                yield 0.0
                continue
            val *= count_ratio(2, j) / count_ratio(2, k - j + 1)

    return SizeCdf(pmf(), math.inf, k // 2 + 1)


# ---------------------------------------------------------------------------
# uniform trees


def _draw_binary_split(m: int, rng: RngStream) -> tuple[int, int]:
    """Exact root split of a uniform (m+1)-vertex binary tree."""
    if m == 0:
        return (0, 0)
    denom = count_trees(2, m + 1)
    target = rng.u64() * denom
    acc = 0
    for a in range(m + 1):
        acc += count_trees(2, a) * count_trees(2, m - a)
        if (acc << 64) > target:
            return (a, m - a)
    return (m, 0)


_pair_counts: dict[int, int] = {}


def _count_pairs(m: int) -> int:
    """Number of ordered pairs of trees with total size m (d = 3 helper)."""
    if m not in _pair_counts:
        _pair_counts[m] = sum(count_trees(3, b) * count_trees(3, m - b) for b in range(m + 1))
    return _pair_counts[m]


def _draw_ternary_split(m: int, rng: RngStream) -> tuple[int, int, int]:
    """Exact root split of a uniform (m+1)-vertex ternary tree."""
    if m == 0:
        return (0, 0, 0)
    denom = count_trees(3, m + 1)
    target = rng.u64() * denom
    acc = 0
    first = m
    for a in range(m + 1):
        acc += count_trees(3, a) * _count_pairs(m - a)
        if (acc << 64) > target:
            first = a
            break
    rest = m - first
    if rest == 0:
        return (first, 0, 0)
    target2 = rng.u64() * _count_pairs(rest)
    acc = 0
    for b in range(rest + 1):
        acc += count_trees(3, b) * count_trees(3, rest - b)
        if (acc << 64) > target2:
            return (first, b, rest - b)
    return (first, rest, 0)


def draw_split(d: int, m: int, rng: RngStream) -> tuple[int, ...]:
    return _draw_binary_split(m, rng) if d == 2 else _draw_ternary_split(m, rng)


def sample_uniform(d: int, k: int, rng: RngStream) -> DTree:
    """Uniform over the count_trees(d, k) size-k trees, by recursive exact
    root-split inversion."""
    if k < 0:
        raise ValueError("size must be >= 0")
    if k == 0:
        return DTree.empty(d)
    verts: list[Label] = []

    def build(prefix: Label, size: int):
        verts.append(prefix)
        if size == 1:
            return
        split = draw_split(d, size - 1, rng)
        for i, part in enumerate(split, start=1):
            if part:
                build(prefix + (i,), part)

    build((), k)
    return DTree(d, verts, _checked=True)


def uniform_window_verts(d: int, k, depth: int, rng: RngStream,
                         sign_only_tail: bool = True) -> frozenset[Label]:
    """Vertex content of the depth window of a uniform size-k tree.

    ``k`` may be TAIL (finite, beyond table caps): then only depth-0/1
    content can be resolved exactly when ``sign_only_tail`` is impossible,
    so TAIL is accepted only with depth == 0 (callers quarantine deeper).
    """
    if k is TAIL:
        if depth == 0:
            return frozenset({()})
        raise ValueError("TAIL size cannot be windowed below depth 0")
    if k == 0:
        return frozenset()
    verts: list[Label] = []

    def build(prefix: Label, size: int, left: int):
        verts.append(prefix)
        if size == 1 or left == 0:
            return
        split = draw_split(d, size - 1, rng)
        for i, part in enumerate(split, start=1):
            if part:
                build(prefix + (i,), part, left - 1)

    build((), k, depth)
    return frozenset(verts)


def uniform_window(d: int, k: int, depth: int, rng: RngStream) -> WindowedTree:
    """Depth window of a uniform k-tree with haschild boundary flags (the
    flags come free from the split recursion: a boundary vertex's subtree
    size exceeds 1 iff it has a child)."""
    if k == 0:
        return WindowedTree.empty(d, depth)
    verts: list[Label] = []
    alive: list[Label] = []

    def build(prefix: Label, size: int, left: int):
        verts.append(prefix)
        if left == 0:
            if size > 1:
                alive.append(prefix)
            return
        if size == 1:
            return
        split = draw_split(d, size - 1, rng)
        for i, part in enumerate(split, start=1):
            if part:
                build(prefix + (i,), part, left - 1)

    build((), k, depth)
    return WindowedTree(d, depth, verts, alive, _checked=True)


# ---------------------------------------------------------------------------
# conditioned laws


def sample_iic(d: int, rng: RngStream, depth: int) -> WindowedTree:
    """Critical conditioned window: a uniform backbone ray with independent
    critical percolation trees hung off it; the backbone's boundary vertex
    is the only infinite flag."""
    thresh = _bernoulli_threshold(Fraction(1, d))
    verts: set[Label] = {()}
    spine: Label = ()
    for level in range(depth):
        step = 1 + rng.randbelow(d)
        for j in range(1, d + 1):
            if j == step:
                continue
            sub = gw_window_verts(d, thresh, depth - level - 1, rng)
            verts.update(spine + (j,) + w for w in sub)
        spine = spine + (step,)
        verts.add(spine)
    return WindowedTree(d, depth, frozenset(verts), frozenset({spine}), _checked=True)


def survivor_window(params: OffspringParams, rng: RngStream, depth: int) -> WindowedTree:
    """Window of the tree conditioned on survival (the critical case is the
    backbone construction by definition).

    Supercritical recursion: pick the spine child uniformly, attach
    companion windows to the other children (finite companions via the
    extinction dual, infinite ones recursively), recurse on the spine.
    Boundary flags mark exactly the infinite continuations.
    """
    params.require_conditionable()
    if params.is_critical:
        return sample_iic(params.d, rng, depth)
    d = params.d
    dual_thresh = _bernoulli_threshold(extinction_dual_retention(params))
    if d == 2:
        fin_prob = float(2 * (1 - params.p))
    else:
        with mpmath.workdps(MP_DPS):
            fin_prob = float(_root3p(params) * (1 - _as_mpf(survival_probability(params))))
        factor = float(second_tree_factor(params.p))

    verts: set[Label] = set()
    alive: set[Label] = set()

    def attach_finite(prefix: Label, left: int):
        sub = gw_window_verts(d, dual_thresh, left, rng)
        verts.update(prefix + w for w in sub)

    def rec(prefix: Label, left: int):
        verts.add(prefix)
        if left == 0:
            alive.add(prefix)
            return
        if d == 2:
            x = 1 + rng.randbelow(2)
            spine, companions = (x,), [(3 - x, rng.uniform() < fin_prob)]
        else:
            perm = rng.permutation(3)
            first_fin = rng.uniform() < fin_prob
            second_fin = rng.uniform() < (fin_prob if first_fin else fin_prob * factor)
            spine = (perm[2],)
            companions = [(perm[0], first_fin), (perm[1], second_fin)]
        for child, finite in companions:
            if finite:
                attach_finite(prefix + (child,), left - 1)
            else:
                rec(prefix + (child,), left - 1)
        rec(prefix + spine, left - 1)

    rec((), depth)
    return WindowedTree(d, depth, frozenset(verts), frozenset(alive), _checked=True)


@dataclass
class CompanionSample:
    """Companion tree draw: a materialized finite tree, or an infinite
    marker carrying a lazy window generator."""

    infinite: bool
    tree: DTree | None = None
    exceeded: bool = False
    _window_fn: Callable[[int], WindowedTree] | None = field(default=None, repr=False)

    def window(self, depth: int) -> WindowedTree:
        if self.infinite:
            return self._window_fn(depth)
        return self.tree.truncate(depth)


def _finite_companion(params: OffspringParams, rng: RngStream,
                      budget: SampleBudget) -> CompanionSample:
    # materialize the dual percolation cluster breadth-first under budget
    thresh = _bernoulli_threshold(extinction_dual_retention(params))
    d = params.d
    if rng.u64() >= thresh:
        return CompanionSample(False, DTree.empty(d))
    verts: list[Label] = [()]
    level: list[Label] = [()]
    depth = 0
    while level:
        if depth >= budget.max_depth or len(verts) > budget.max_vertices:
            return CompanionSample(False, DTree(d, verts, _checked=True), exceeded=True)
        nxt = []
        for v in level:
            for i in range(1, d + 1):
                if rng.u64() < thresh:
                    nxt.append(v + (i,))
        verts.extend(nxt)
        level = nxt
        depth += 1
    return CompanionSample(False, DTree(d, verts, _checked=True))


def _infinite_companion(params: OffspringParams, rng: RngStream) -> CompanionSample:
    sub = rng.child("inf-window")
    return CompanionSample(True, _window_fn=lambda depth: survivor_window(params, sub, depth))


def sample_companion(params: OffspringParams, rng: RngStream,
                     budget: SampleBudget | None = None) -> CompanionSample:
    """d=2 companion tree: finite sizes are companion-law distributed with
    uniform shapes (realized exactly by the extinction dual); otherwise the
    conditioned law, exposed as a lazy window."""
    params.require_conditionable()
    if params.d != 2:
        raise ValueError("sample_companion is the d = 2 draw")
    budget = budget or SampleBudget()
    if rng.uniform() < float(2 * (1 - params.p)):
        return _finite_companion(params, rng, budget)
    return _infinite_companion(params, rng)


def sample_companion_pair(params: OffspringParams, rng: RngStream,
                          budget: SampleBudget | None = None
                          ) -> tuple[CompanionSample, CompanionSample]:
    """d=3 companion pair with the class structure of the paired size law:
    the second companion's finite-class probability is damped by the
    correction factor when the first is infinite."""
    params.require_conditionable()
    if params.d != 3:
        raise ValueError("sample_companion_pair is the d = 3 draw")
    budget = budget or SampleBudget()
    with mpmath.workdps(MP_DPS):
        fin_prob = float(_root3p(params) * (1 - _as_mpf(survival_probability(params))))
    factor = float(second_tree_factor(params.p))
    first_fin = rng.uniform() < fin_prob
    first = (_finite_companion(params, rng, budget) if first_fin
             else _infinite_companion(params, rng))
    second_fin = rng.uniform() < (fin_prob if first_fin else fin_prob * factor)
    second = (_finite_companion(params, rng, budget) if second_fin
              else _infinite_companion(params, rng))
    return first, second


def companion_window_observable(params: OffspringParams, depth: int,
                                rng: RngStream) -> tuple:
    """Tagged window observable of the d=2 companion draw, cap-free:
    ("fin", haschild-window) or ("inf", spine-window)."""
    if rng.uniform() < float(2 * (1 - params.p)):
        return ("fin", gw_window(params.d, extinction_dual_retention(params), depth, rng))
    return ("inf", survivor_window(params, rng, depth))


def companion_pair_window_observable(params: OffspringParams, depth: int,
                                     rng: RngStream) -> tuple:
    """Tagged pair of window observables of the d=3 companion pair."""
    with mpmath.workdps(MP_DPS):
        fin_prob = float(_root3p(params) * (1 - _as_mpf(survival_probability(params))))
    factor = float(second_tree_factor(params.p))
    q = extinction_dual_retention(params)

    def one(fin: bool) -> tuple:
        if fin:
            return ("fin", gw_window(params.d, q, depth, rng))
        return ("inf", survivor_window(params, rng, depth))

    first_fin = rng.uniform() < fin_prob
    first = one(first_fin)
    second_fin = rng.uniform() < (fin_prob if first_fin else fin_prob * factor)
    return first, one(second_fin)
