"""Exact monotone coupling kernels between finite tree distributions.

Three layers:

  * A deterministic integer max-flow solver (Dinic).  Marginals are scaled
    by the lcm of their denominators so that feasibility is decided in
    exact big-integer arithmetic; a failed flow yields a violated-up-set
    certificate extracted from the min cut.
  * Tree-level kernels: the joint law of a uniform size-k tree inside a
    uniform size-(k+1) tree under containment, built by flow over the full
    enumerated supports.  Feasibility is a theorem (the nested uniform
    chain exists), so an unsaturated flow here is an internal error.
  * Composition-level kernels between the root-split laws of consecutive
    uniform sizes, under "coordinatewise >= and total +1".  These have
    polynomial supports, so they power ``grow``/``shrink`` and the nested
    chains at sizes where tree enumeration is hopeless.  For d = 2 the
    admissible edges form a path, which makes the kernel unique and lets a
    linear cascade replace the flow solver.

Among multiple feasible kernels the solver's result under a fixed
canonical ordering of supports and edges is used, so kernels are
reproducible across runs and platforms.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, inf
from typing import Callable, Sequence

from .combinatorics import count_trees, split_law
from .rng import RngStream
from .treecore import DTree, enumerate_trees

TREE_KERNEL_CAP = {2: 10, 3: 7}
SPLIT_KERNEL_CAP = {2: 4096, 3: 200}


class SizeCapError(ValueError):
    """Requested kernel exceeds the configured construction cap."""


class FlowInfeasibleError(RuntimeError):
    """A flow that is guaranteed feasible failed to saturate: a bug."""


@dataclass
class InfeasibilityCertificate:
    """Witness that no monotone coupling exists: a set of left objects
    whose mass exceeds the mass of all right objects related to them."""

    witness: list
    left_mass: Fraction
    right_mass: Fraction
    relation: str

    def __post_init__(self):
        if not self.left_mass > self.right_mass:
            raise ValueError("certificate masses do not witness infeasibility")

    def to_json(self, key: Callable = str) -> dict:
        return {
            "infeasible": True,
            "relation": self.relation,
            "witness": [key(w) for w in self.witness],
            "left_mass": _frac_str(self.left_mass),
            "right_mass": _frac_str(self.right_mass),
        }


class CouplingKernel:
    """Exact joint distribution over pairs (left, right) with prescribed
    marginals, supported only on relation-satisfying pairs."""

    def __init__(self, left: Sequence, right: Sequence,
                 left_weights: Sequence[Fraction], right_weights: Sequence[Fraction],
                 weights: dict[tuple[int, int], Fraction], relation: str):
        self.left = list(left)
        self.right = list(right)
        self.left_weights = list(left_weights)
        self.right_weights = list(right_weights)
        self.weights = weights
        self.relation = relation
        self._left_index = {self._key(o): i for i, o in enumerate(self.left)}
        self._right_index = {self._key(o): j for j, o in enumerate(self.right)}
        self._rows: dict[int, tuple[list[int], list[float]]] = {}
        self._cols: dict[int, tuple[list[int], list[float]]] = {}

    @staticmethod
    def _key(obj):
        return obj.encode() if isinstance(obj, DTree) else obj

    def left_of(self, obj) -> int:
        return self._left_index[self._key(obj)]

    def right_of(self, obj) -> int:
        return self._right_index[self._key(obj)]

    def validate(self, relation: Callable | None = None):
        row = [Fraction(0)] * len(self.left)
        col = [Fraction(0)] * len(self.right)
        for (i, j), w in self.weights.items():
            if w < 0:
                raise ValueError("negative kernel weight")
            if relation is not None and w > 0 and not relation(self.left[i], self.right[j]):
                raise ValueError(f"supported pair violates relation: {i}, {j}")
            row[i] += w
            col[j] += w
        if row != self.left_weights or col != self.right_weights:
            raise ValueError("kernel marginals do not match prescribed laws")

    def _row(self, i: int):
        cached = self._rows.get(i)
        if cached is None:
            entries = sorted((j, w) for (ii, j), w in self.weights.items() if ii == i)
            total = self.left_weights[i]
            cum, acc = [], 0.0
            for _, w in entries:
                acc += float(w / total)
                cum.append(acc)
            cached = ([j for j, _ in entries], cum)
            self._rows[i] = cached
        return cached

    def _col(self, j: int):
        cached = self._cols.get(j)
        if cached is None:
            entries = sorted((i, w) for (i, jj), w in self.weights.items() if jj == j)
            total = self.right_weights[j]
            cum, acc = [], 0.0
            for _, w in entries:
                acc += float(w / total)
                cum.append(acc)
            cached = ([i for i, _ in entries], cum)
            self._cols[j] = cached
        return cached

    def sample_right_given_left(self, left_obj, rng: RngStream):
        js, cum = self._row(self.left_of(left_obj))
        return self.right[js[_pick(cum, rng)]]

    def sample_left_given_right(self, right_obj, rng: RngStream):
        ids, cum = self._col(self.right_of(right_obj))
        return self.left[ids[_pick(cum, rng)]]

    def to_json(self, key: Callable | None = None) -> dict:
        key = key or (lambda o: o.hex() if isinstance(o, DTree) else str(o))
        return {
            "relation": self.relation,
            "left": [key(o) for o in self.left],
            "right": [key(o) for o in self.right],
            "left_weights": [_frac_str(w) for w in self.left_weights],
            "right_weights": [_frac_str(w) for w in self.right_weights],
            "weights": [[i, j, _frac_str(w)] for (i, j), w in sorted(self.weights.items())],
        }


def _pick(cum: list[float], rng: RngStream) -> int:
    u = rng.uniform()
    idx = bisect.bisect_right(cum, u)
    return min(idx, len(cum) - 1)


def _frac_str(w) -> str:
    w = Fraction(w)
    return f"{w.numerator}/{w.denominator}"


class _Dinic:
    """Integer max flow; deterministic given insertion order."""

    def __init__(self, n: int):
        self.n = n
        self.to: list[int] = []
        self.cap: list[int] = []
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add(self, u: int, v: int, c: int):
        self.adj[u].append(len(self.to)); self.to.append(v); self.cap.append(c)
        self.adj[v].append(len(self.to)); self.to.append(u); self.cap.append(0)

    def maxflow(self, s: int, t: int) -> int:
        flow = 0
        while True:
            level = self._bfs(s, t)
            if level is None:
                return flow
            it = [0] * self.n
            while True:
                pushed = self._dfs(s, t, None, level, it)
                if not pushed:
                    break
                flow += pushed

    def _bfs(self, s, t):
        level = [-1] * self.n
        level[s] = 0
        queue = [s]
        for u in queue:
            for e in self.adj[u]:
                v = self.to[e]
                if self.cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[t] >= 0 else None

    def _dfs(self, u, t, limit, level, it):
        if u == t:
            return limit
        adj = self.adj[u]
        while it[u] < len(adj):
            e = adj[it[u]]
            v = self.to[e]
            if self.cap[e] > 0 and level[v] == level[u] + 1:
                cap_here = self.cap[e] if limit is None else min(limit, self.cap[e])
                pushed = self._dfs(v, t, cap_here, level, it)
                if pushed:
                    self.cap[e] -= pushed
                    self.cap[e ^ 1] += pushed
                    return pushed
            it[u] += 1
        level[u] = -1
        return 0

    def residual_reachable(self, s) -> set[int]:
        seen = {s}
        queue = [s]
        for u in queue:
            for e in self.adj[u]:
                v = self.to[e]
                if self.cap[e] > 0 and v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen


def _lcm(a: int, b: int) -> int:
    return a // gcd(a, b) * b


def transport(left: Sequence, left_weights: Sequence[Fraction],
              right: Sequence, right_weights: Sequence[Fraction],
              edges: list[tuple[int, int]], relation_name: str):
    """Exact transportation between two rational laws along admissible edges.

    Returns a CouplingKernel if the flow saturates, otherwise an
    InfeasibilityCertificate from the min cut.
    """
    denoms = 1
    for w in list(left_weights) + list(right_weights):
        denoms = _lcm(denoms, Fraction(w).denominator)
    scale = denoms
    n = len(left) + len(right) + 2
    src, snk = 0, n - 1
    solver = _Dinic(n)
    big = scale + 1
    for i, w in enumerate(left_weights):
        solver.add(src, 1 + i, int(w * scale))
    edge_base = len(solver.to)
    for i, j in edges:
        solver.add(1 + i, 1 + len(left) + j, big)
    for j, w in enumerate(right_weights):
        solver.add(1 + len(left) + j, snk, int(w * scale))
    total = solver.maxflow(src, snk)
    if total == scale:
        weights: dict[tuple[int, int], Fraction] = {}
        for idx, (i, j) in enumerate(edges):
            e = edge_base + 2 * idx
            sent = big - solver.cap[e]
            if sent:
                weights[(i, j)] = Fraction(sent, scale)
        return CouplingKernel(left, right, [Fraction(w) for w in left_weights],
                              [Fraction(w) for w in right_weights], weights, relation_name)
    reach = solver.residual_reachable(src)
    witness_ids = [i for i in range(len(left)) if 1 + i in reach]
    reach_right = {j for i, j in edges if i in set(witness_ids)}
    left_mass = sum((Fraction(left_weights[i]) for i in witness_ids), Fraction(0))
    right_mass = sum((Fraction(right_weights[j]) for j in reach_right), Fraction(0))
    return InfeasibilityCertificate([left[i] for i in witness_ids],
                                    left_mass, right_mass, relation_name)


def check_domination(left_law: Sequence[tuple[object, Fraction]],
                     right_law: Sequence[tuple[object, Fraction]],
                     relation: Callable[[object, object], bool],
                     relation_name: str = "leq"):
    """Monotone coupling of two finite laws, or a certificate that none exists."""
    left = [o for o, _ in left_law]
    right = [o for o, _ in right_law]
    edges = [(i, j) for i, l in enumerate(left) for j, r in enumerate(right) if relation(l, r)]
    return transport(left, [w for _, w in left_law], right, [w for _, w in right_law],
                     edges, relation_name)


_tree_kernel_cache: dict[tuple[int, int], CouplingKernel] = {}
_tree_kernel_lock = threading.Lock()


def build_tree_kernel(d: int, k: int, cap: int | None = None) -> CouplingKernel:
    """Joint law of (uniform k-tree, uniform (k+1)-tree) under containment.

    Supports are fully enumerated in canonical-encoding order; admissible
    pairs differ by one childless vertex.  The flow must saturate; if it
    does not, that is an invariant violation, not a caller error.
    """
    cap = TREE_KERNEL_CAP[d] if cap is None else cap
    if k < 0:
        raise ValueError("size must be >= 0")
    if k > cap:
        raise SizeCapError(f"tree kernel for k={k} exceeds cap {cap} (d={d})")
    with _tree_kernel_lock:
        cached = _tree_kernel_cache.get((d, k))
        if cached is not None:
            return cached
        left = sorted(enumerate_trees(d, k), key=lambda t: t.encode())
        right = sorted(enumerate_trees(d, k + 1), key=lambda t: t.encode())
        left_index = {t.encode(): i for i, t in enumerate(left)}
        edges = []
        for j, big_tree in enumerate(right):
            childless = [v for v in big_tree.vertices if big_tree.child_mask(v) == 0]
            for v in sorted(childless):
                smaller = DTree(d, big_tree.vertices - {v}, _checked=True)
                edges.append((left_index[smaller.encode()], j))
        edges.sort()
        ck, ck1 = count_trees(d, k), count_trees(d, k + 1)
        result = transport(left, [Fraction(1, ck)] * len(left),
                           right, [Fraction(1, ck1)] * len(right),
                           edges, "tree_containment")
        if isinstance(result, InfeasibilityCertificate):
            raise FlowInfeasibleError(
                f"uniform {k} -> {k + 1} tree flow did not saturate (d={d}); "
                "this contradicts the nested-chain theorem and signals a bug")
        _tree_kernel_cache[(d, k)] = result
        return result


def _point_split_weights(d: int, k: int) -> dict[tuple, Fraction]:
    if k == 0:
        return {(0,) * d: Fraction(1)}
    return split_law(d, k).weights


_split_kernel_cache: dict[tuple[int, int], CouplingKernel] = {}
_split_kernel_lock = threading.Lock()


def build_split_kernel(d: int, k: int, cap: int | None = None) -> CouplingKernel:
    """Kernel between root-split laws at total k and k+1, supported on
    pairs differing by one unit coordinate step.

    d = 2: the admissible edges form a path, so conservation determines the
    kernel uniquely; it is computed by a linear cascade.  d = 3: solved by
    the flow solver with lexicographic support order.
    """
    cap = SPLIT_KERNEL_CAP[d] if cap is None else cap
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > cap:
        raise SizeCapError(f"split kernel for k={k} exceeds cap {cap} (d={d})")
    with _split_kernel_lock:
        cached = _split_kernel_cache.get((d, k))
        if cached is not None:
            return cached
        lw = _point_split_weights(d, k)
        rw = _point_split_weights(d, k + 1)
        left = sorted(lw)
        right = sorted(rw)
        if d == 2:
            kernel = _binary_split_cascade(k, left, right, lw, rw)
        else:
            rindex = {c: j for j, c in enumerate(right)}
            edges = []
            for i, comp in enumerate(left):
                for axis in range(d):
                    up = comp[:axis] + (comp[axis] + 1,) + comp[axis + 1:]
                    edges.append((i, rindex[up]))
            edges.sort()
            result = transport(left, [lw[c] for c in left], right, [rw[c] for c in right],
                               edges, "split_unit_step")
            if isinstance(result, InfeasibilityCertificate):
                raise FlowInfeasibleError(
                    f"split kernel {k} -> {k + 1} infeasible (d={d}): {result.to_json()}")
            kernel = result
        _split_kernel_cache[(d, k)] = kernel
        return kernel


def _binary_split_cascade(k: int, left: list, right: list, lw: dict, rw: dict) -> CouplingKernel:
    # Right composition (a, k+1-a) receives only from lefts (a-1, k-a+1)
    # and (a, k-a); sweeping a upward determines every flow value.
    lindex = {c: i for i, c in enumerate(left)}
    rindex = {c: j for j, c in enumerate(right)}
    weights: dict[tuple[int, int], Fraction] = {}
    carry = Fraction(0)  # mass left (a-1, .) still must push via +e1 into (a, .)
    for a in range(k + 2):
        demand = rw[(a, k + 1 - a)]
        via_e1 = carry
        via_e2 = demand - via_e1
        if via_e2 < 0:
            raise FlowInfeasibleError(f"binary split cascade negative at a={a} (k={k})")
        if via_e1 > 0:
            weights[(lindex[(a - 1, k - a + 1)], rindex[(a, k + 1 - a)])] = via_e1
        if a <= k:
            supply = lw[(a, k - a)]
            carry = supply - via_e2
            if carry < 0:
                raise FlowInfeasibleError(f"binary split cascade negative carry at a={a} (k={k})")
            if via_e2 > 0:
                weights[(lindex[(a, k - a)], rindex[(a, k + 1 - a)])] = via_e2
        elif via_e2 != 0:
            raise FlowInfeasibleError(f"binary split cascade unbalanced at top (k={k})")
    return CouplingKernel(left, right, [lw[c] for c in left], [rw[c] for c in right],
                          weights, "split_unit_step")


class FloatSplitSteps:
    """Float conditional rows of the binary split cascade, for fast walks.

    Probabilities are computed from Catalan ratios, so no big integers are
    touched; accuracy is ~1e-14, far below anything a chi-square at the
    tested sample sizes can see.  d = 3 rows fall back to the exact
    kernels.
    """

    def __init__(self, d: int):
        self.d = d
        self._rows: dict[tuple[int, tuple], tuple[list[tuple], list[float]]] = {}
        self._ratio: list[float] = [0.0]  # ratio[j] = c_j / c_{j-1}
        self._lock = threading.Lock()

    def _ratios_upto(self, n: int):
        while len(self._ratio) <= n:
            j = len(self._ratio)
            self._ratio.append(count_trees(self.d, j) / count_trees(self.d, j - 1))
        return self._ratio

    def row(self, level: int, comp: tuple):
        """Conditional distribution of the next split given `comp` at total
        `level` (i.e. inside a tree of size level+1)."""
        key = (level, comp)
        cached = self._rows.get(key)
        if cached is not None:
            return cached
        with self._lock:
            cached = self._rows.get(key)
            if cached is not None:
                return cached
            if self.d == 2:
                self._cascade_level(level)
                return self._rows[key]
            kernel = build_split_kernel(self.d, level)
            i = kernel.left.index(comp)
            js, cum = kernel._row(i)
            out = ([kernel.right[j] for j in js], cum)
            self._rows[key] = out
            return out

    def _cascade_level(self, k: int):
        ratio = self._ratios_upto(k + 2)
        # sup[a] = P(split of uniform (k+1)-tree = (a, k-a)), demands analogous
        sup = [0.0] * (k + 1)
        sup[0] = 1.0 / ratio[k + 1]
        for a in range(1, k + 1):
            sup[a] = sup[a - 1] * ratio[a] / ratio[k - a + 1]
        dem = [0.0] * (k + 2)
        dem[0] = 1.0 / ratio[k + 2]
        for a in range(1, k + 2):
            dem[a] = dem[a - 1] * ratio[a] / ratio[k - a + 2]
        carry = 0.0
        for a in range(k + 1):
            via_e2 = max(dem[a] - carry, 0.0)
            comp = (a, k - a)
            p_e2 = min(via_e2 / sup[a], 1.0) if sup[a] > 0 else 0.0
            targets = [(a, k - a + 1), (a + 1, k - a)]
            self._rows[(k, comp)] = (targets, [p_e2, 1.0])
            carry = max(sup[a] - via_e2, 0.0)


_float_steps = {2: FloatSplitSteps(2), 3: FloatSplitSteps(3)}


def split_step(d: int, level: int, comp: tuple, rng: RngStream) -> tuple:
    """One chain step on root splits: from total `level` to `level + 1`."""
    targets, cum = _float_steps[d].row(level, comp)
    return targets[_pick(cum, rng)]


def walk_split(d: int, comp: tuple, from_level: int, to_level: int, rng: RngStream) -> tuple:
    """Advance a root split along the chain kernels by to_level - from_level steps."""
    for level in range(from_level, to_level):
        comp = split_step(d, level, comp, rng)
    return comp


def root_split(t: DTree) -> tuple:
    return tuple(len(t.subtree_at((i,))) for i in range(1, t.d + 1))


def grow_tree(t: DTree, rng: RngStream) -> DTree:
    """One nested-chain step: a uniform (k+1)-tree containing t.

    Samples the next root split from the chain kernel conditioned on t's
    split and recurses into the coordinate that grew; pushing the uniform
    k-law through this map gives exactly the uniform (k+1)-law (tested
    symbolically at small k).
    """
    d = t.d
    if len(t) == 0:
        return DTree.single(d)
    s = root_split(t)
    s2 = split_step(d, len(t) - 1, s, rng)
    axis = next(i for i in range(d) if s2[i] == s[i] + 1)
    branch = (axis + 1,)
    sub = grow_tree(t.subtree_at(branch), rng)
    verts = {v for v in t.vertices if v[: 1] != branch}
    verts.update(branch + w for w in sub.vertices)
    return DTree(d, verts, _checked=True)


def shrink_tree(t: DTree, rng: RngStream) -> DTree:
    """Reverse chain step: a uniform k-tree inside the given (k+1)-tree,
    sampled from the exact conditional of the split kernel given its right
    side.  Bayes-inverse of grow (tested symbolically)."""
    d = t.d
    if len(t) == 0:
        raise ValueError("cannot shrink the empty tree")
    if len(t) == 1:
        return DTree.empty(d)
    kernel = build_split_kernel(d, len(t) - 2)
    s2 = root_split(t)
    s = kernel.sample_left_given_right(s2, rng)
    axis = next(i for i in range(d) if s2[i] == s[i] + 1)
    branch = (axis + 1,)
    sub = shrink_tree(t.subtree_at(branch), rng)
    verts = {v for v in t.vertices if v[: 1] != branch}
    verts.update(branch + w for w in sub.vertices)
    return DTree(d, verts, _checked=True)


def grow_pushforward(d: int, k: int) -> dict[DTree, Fraction]:
    """Exact law of grow(T) when T is uniform over size-k trees.
    Used to certify chain uniformity symbolically."""
    out: dict[DTree, Fraction] = {}
    ck = count_trees(d, k)
    for t in enumerate_trees(d, k):
        for grown, pr in _grow_dist(t).items():
            out[grown] = out.get(grown, Fraction(0)) + pr / ck
    return out


_grow_dist_cache: dict[tuple[int, bytes], dict] = {}


def _grow_dist(t: DTree) -> dict[DTree, Fraction]:
    d = t.d
    cached = _grow_dist_cache.get((d, t.encode()))
    if cached is not None:
        return cached
    if len(t) == 0:
        out = {DTree.single(d): Fraction(1)}
    else:
        kernel = build_split_kernel(d, len(t) - 1)
        s = root_split(t)
        i = kernel.left.index(s)
        total = kernel.left_weights[i]
        out = {}
        for (ii, j), w in sorted(kernel.weights.items()):
            if ii != i:
                continue
            s2 = kernel.right[j]
            axis = next(a for a in range(d) if s2[a] == s[a] + 1)
            branch = (axis + 1,)
            base = {v for v in t.vertices if v[: 1] != branch}
            for sub, pr in _grow_dist(t.subtree_at(branch)).items():
                grown = DTree(d, base | {branch + wv for wv in sub.vertices}, _checked=True)
                out[grown] = out.get(grown, Fraction(0)) + (w / total) * pr
    _grow_dist_cache[(d, t.encode())] = out
    return out
