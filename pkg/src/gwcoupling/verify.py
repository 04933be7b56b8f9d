"""Ground truth and statistical testing.

Exact depth-D window laws are computed in closed form for every sampled
tree distribution.  The two boundary-flag semantics:

  * finite laws (percolation clusters, uniform size-k trees, finite
    companion branches) flag boundary vertices with at least one child;
  * conditioned/infinite laws (backbone construction, survival-conditioned
    windows) flag exactly the boundary vertices with infinite
    continuation.

For a window w with interior content and boundary set B, the percolation
probability factorizes: an interior factor base(w) (one retention factor
per vertex, one complement per absent child slot above the boundary) and
one continuation-class factor per boundary vertex.  The continuation
classes used below, per boundary vertex, are

    childless:        (1-p)^d
    child but finite: (1-s)^d - (1-p)^d      (s = survival probability)
    infinite:         1 - (1-s)^d

and conditioning on survival divides by s and restricts to windows with
at least one infinite flag.  At the critical point s = 0 the conditioned
law is the backbone construction; its closed form is the s -> 0 limit
base(w) * d on single-flag windows, and the equality of that limit with
the explicit backbone sum is asserted (exactly, in rationals) by the test
suite.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
from scipy.stats import chi2 as _chi2

from .combinatorics import (
    MP_DPS,
    OffspringParams,
    _as_mpf,
    count_trees,
    second_tree_factor,
    size_pmf,
    survival_probability,
)
from .kernels import CouplingKernel, InfeasibilityCertificate, check_domination
from .treecore import Label, WindowedTree, enumerate_trees

DEFAULT_SIGNIFICANCE = 1e-3
LAW_DEPTH_CAP = {2: 3, 3: 2}


# ---------------------------------------------------------------------------
# window enumeration and interior factors


_vw_cache: dict[tuple[int, int], list[frozenset]] = {}


def vertex_windows(d: int, depth: int) -> list[frozenset]:
    """All vertex sets a depth-`depth` window can take (including empty)."""
    key = (d, depth)
    if key in _vw_cache:
        return _vw_cache[key]
    if depth == 0:
        out = [frozenset(), frozenset({()})]
    else:
        subs = vertex_windows(d, depth - 1)
        out = [frozenset()]
        def extend(child: int, acc: frozenset):
            if child > d:
                out.append(acc)
                return
            for sub in subs:
                extend(child + 1, acc | frozenset((child,) + v for v in sub))
        extend(1, frozenset({()}))
    _vw_cache[key] = out
    return out


def boundary_of(w: frozenset, depth: int) -> list[Label]:
    return sorted((v for v in w if len(v) == depth))


def interior_base(d: int, p: Fraction, w: frozenset, depth: int) -> Fraction:
    """Percolation probability of the window interior: retention of every
    vertex, removal of every absent child slot strictly above the boundary."""
    if not w:
        return 1 - p
    absent = 0
    for v in w:
        if len(v) < depth:
            absent += sum(1 for i in range(1, d + 1) if v + (i,) not in w)
    return p ** len(w) * (1 - p) ** absent


def _sub_window(w: frozenset, prefix: Label) -> frozenset:
    n = len(prefix)
    return frozenset(v[n:] for v in w if v[:n] == prefix)


def window_key(d: int, depth: int, verts: frozenset, alive: frozenset) -> str:
    return WindowedTree(d, depth, verts, alive, _checked=True).key()


def _subsets(items: Sequence[Label]):
    n = len(items)
    for mask in range(1 << n):
        yield frozenset(items[i] for i in range(n) if (mask >> i) & 1)


# ---------------------------------------------------------------------------
# law container


@dataclass
class WindowLaw:
    """Exact law over canonical window keys (plus tagged composites)."""

    kind: str
    d: int
    depth: int
    p: Fraction | None
    entries: dict[str, object] = field(repr=False)
    tol: float = 1e-10

    def __post_init__(self):
        total = math.fsum(float(v) for v in self.entries.values())
        if abs(total - 1.0) > self.tol:
            raise ValueError(f"{self.kind} window law mass {total} off by > {self.tol}")

    def float_entries(self) -> dict[str, float]:
        return {k: float(v) for k, v in self.entries.items()}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["encoding", "probability"])
            for k, v in sorted(self.entries.items()):
                writer.writerow([k, repr(float(v))])

    def is_rational(self) -> bool:
        return all(isinstance(v, (Fraction, int)) for v in self.entries.values())


# ---------------------------------------------------------------------------
# exact laws


def gw_window_law(d: int, p: Fraction, depth: int) -> WindowLaw:
    """Percolation window with haschild flags."""
    p = Fraction(p)
    entries: dict[str, object] = {}
    childless = (1 - p) ** d
    haschild = 1 - childless
    for w in vertex_windows(d, depth):
        base = interior_base(d, p, w, depth)
        if not w:
            entries[window_key(d, depth, w, frozenset())] = base
            continue
        bnd = boundary_of(w, depth)
        for alive in _subsets(bnd):
            prob = base * childless ** (len(bnd) - len(alive)) * haschild ** len(alive)
            entries[window_key(d, depth, w, alive)] = prob
    return WindowLaw("gw", d, depth, p, entries)


def uniform_window_law(d: int, k: int, depth: int) -> WindowLaw:
    """Window of the uniform size-k law with haschild flags, by enumeration."""
    entries: dict[str, object] = {}
    ck = count_trees(d, k)
    for t in enumerate_trees(d, k):
        key = t.truncate(depth).key()
        entries[key] = entries.get(key, Fraction(0)) + Fraction(1, ck)
    return WindowLaw("uniform_k", d, depth, None, entries)


def _gw_vertex_prob(d: int, p: Fraction, w: frozenset, depth: int) -> Fraction:
    # vertex-content-only percolation window probability (flags summed out)
    return interior_base(d, p, w, depth)


def iic_window_law(d: int, depth: int) -> WindowLaw:
    """Backbone construction at p = 1/d: uniform spine ray, independent
    critical clusters off it; the spine endpoint is the unique flag."""
    p = Fraction(1, d)
    entries: dict[str, object] = {}
    for w in vertex_windows(d, depth):
        for x in boundary_of(w, depth):
            prob = Fraction(1, d) ** depth
            for i in range(depth):
                prefix = x[:i]
                for j in range(1, d + 1):
                    child = prefix + (j,)
                    if child == x[: i + 1]:
                        continue
                    prob *= _gw_vertex_prob(d, p, _sub_window(w, child), depth - i - 1)
            if prob:
                key = window_key(d, depth, w, frozenset({x}))
                entries[key] = entries.get(key, Fraction(0)) + prob
    return WindowLaw("iic", d, depth, p, entries)


def tinf_window_law_critical(d: int, depth: int) -> WindowLaw:
    """Survival-conditioned window law continued to p = 1/d: the limit of
    the supercritical closed form, base(w) * d on single-flag windows.
    Equality with iic_window_law is a theorem, asserted exactly in tests."""
    p = Fraction(1, d)
    entries: dict[str, object] = {}
    for w in vertex_windows(d, depth):
        base = interior_base(d, p, w, depth)
        for x in boundary_of(w, depth):
            entries[window_key(d, depth, w, frozenset({x}))] = base * d
    return WindowLaw("tinf", d, depth, p, entries)


def tinf_window_law(params: OffspringParams, depth: int) -> WindowLaw:
    """Survival-conditioned window law with infinite-continuation flags."""
    params.require_conditionable()
    if params.is_critical:
        return tinf_window_law_critical(params.d, depth)
    d, p = params.d, params.p
    surv = survival_probability(params)
    if isinstance(surv, Fraction):
        fin_slot = (1 - surv) ** d
    else:
        with mpmath.workdps(MP_DPS):
            fin_slot = (1 - surv) ** d
    inf_slot = 1 - fin_slot
    entries: dict[str, object] = {}
    for w in vertex_windows(d, depth):
        base = interior_base(d, p, w, depth)
        bnd = boundary_of(w, depth)
        for alive in _subsets(bnd):
            if not alive:
                continue
            prob = base * fin_slot ** (len(bnd) - len(alive)) * inf_slot ** len(alive) / surv
            entries[window_key(d, depth, w, alive)] = prob
    return WindowLaw("tinf", d, depth, p, entries)


def _finite_cluster_states(params: OffspringParams, depth: int) -> dict[str, object]:
    """Unnormalized window states of a percolation cluster on the event
    that the whole cluster is finite, with haschild flags.  Total mass is
    1 - survival."""
    d, p = params.d, params.p
    surv = survival_probability(params)
    if isinstance(surv, Fraction):
        one = Fraction(1)
    else:
        one = mpmath.mpf(1)
    childless = one * (1 - p) ** d
    finite_child = one * (1 - surv) ** d - childless
    out: dict[str, object] = {}
    for w in vertex_windows(d, depth):
        base = interior_base(d, p, w, depth)
        if not w:
            out[window_key(d, depth, w, frozenset())] = one * base
            continue
        bnd = boundary_of(w, depth)
        for alive in _subsets(bnd):
            prob = base * childless ** (len(bnd) - len(alive)) * finite_child ** len(alive)
            out[window_key(d, depth, w, alive)] = prob
    return out


def fin_key(key: str) -> str:
    return f"fin|{key}"


def inf_key(key: str) -> str:
    return f"inf|{key}"


def pair_key(k1: str, k2: str) -> str:
    return f"{k1}&&{k2}"


def companion_window_law(params: OffspringParams, depth: int) -> WindowLaw:
    """d=2 companion observable: ("fin", finite-cluster window) with mass
    2p per cluster, or ("inf", conditioned window) with mass p*survival."""
    params.require_conditionable()
    if params.d != 2:
        raise ValueError("companion_window_law is the d = 2 law")
    p = params.p
    entries: dict[str, object] = {}
    for key, mass in _finite_cluster_states(params, depth).items():
        entries[fin_key(key)] = 2 * p * mass
    surv = survival_probability(params)
    if surv > 0:
        for key, mass in tinf_window_law(params, depth).entries.items():
            entries[inf_key(key)] = p * surv * mass
    return WindowLaw("tstar", 2, depth, p, entries)


def companion_pair_window_law(params: OffspringParams, depth: int) -> WindowLaw:
    """d=3 companion pair observable: tagged product law."""
    params.require_conditionable()
    if params.d != 3:
        raise ValueError("companion_pair_window_law is the d = 3 law")
    p = params.p
    fin_states = _finite_cluster_states(params, depth)
    if params.is_critical:
        entries = {
            pair_key(fin_key(k1), fin_key(k2)): m1 * m2
            for k1, m1 in fin_states.items() for k2, m2 in fin_states.items()
        }
        return WindowLaw("tstar_pair", 3, depth, p, entries)
    with mpmath.workdps(MP_DPS):
        root3p = mpmath.sqrt(3 * mpmath.mpf(p.numerator) / p.denominator)
        surv = _as_mpf(survival_probability(params))
        factor = second_tree_factor(p)
        pm = mpmath.mpf(p.numerator) / p.denominator
        inf_first = 1 - root3p * (1 - surv)
        inf_second_given_inf = pm * surv**2 / (1 - root3p * (1 - surv))
    inf_states = tinf_window_law(params, depth).entries
    entries: dict[str, object] = {}
    for k1, m1 in fin_states.items():
        w1 = root3p * m1
        for k2, m2 in fin_states.items():
            entries[pair_key(fin_key(k1), fin_key(k2))] = w1 * root3p * m2
        for k2, m2 in inf_states.items():
            entries[pair_key(fin_key(k1), inf_key(k2))] = w1 * inf_first * m2
    for k1, m1 in inf_states.items():
        w1 = inf_first * m1
        for k2, m2 in fin_states.items():
            entries[pair_key(inf_key(k1), fin_key(k2))] = w1 * root3p * factor * m2
        for k2, m2 in inf_states.items():
            entries[pair_key(inf_key(k1), inf_key(k2))] = w1 * inf_second_given_inf * m2
    return WindowLaw("tstar_pair", 3, depth, p, entries)


def uniform_vertex_window_law(d: int, k: int, depth: int) -> dict[frozenset, Fraction]:
    """Vertex-content law of the depth window of a uniform size-k tree
    (flags ignored).  Computed by the split recursion, so it works for any
    k for which tree counts are affordable."""
    if k == 0:
        return {frozenset(): Fraction(1)}
    if depth == 0:
        return {frozenset({()}): Fraction(1)}
    from .combinatorics import compositions

    out: dict[frozenset, Fraction] = {}
    denom = count_trees(d, k)
    for comp in compositions(k - 1, d):
        weight = Fraction(1)
        for part in comp:
            weight *= count_trees(d, part)
        weight = Fraction(weight, denom)
        subs = [uniform_vertex_window_law(d, part, depth - 1) for part in comp]
        items: list[tuple[frozenset, Fraction]] = [(frozenset({()}), weight)]
        for i, sub in enumerate(subs, start=1):
            items = [
                (acc | frozenset((i,) + v for v in sw), wa * ws)
                for acc, wa in items for sw, ws in sub.items()
            ]
        for verts, wgt in items:
            out[verts] = out.get(verts, Fraction(0)) + wgt
    return out


def exact_window_law(kind: str, d: int, depth: int, p=None, k: int | None = None,
                     depth_cap: int | None = None) -> WindowLaw:
    """Dispatch for the exact depth-window law of a sampled distribution."""
    cap = LAW_DEPTH_CAP[d] if depth_cap is None else depth_cap
    if depth > cap:
        raise ValueError(f"window law at depth {depth} exceeds enumeration cap {cap}")
    if kind == "gw":
        return gw_window_law(d, Fraction(p), depth)
    if kind == "uniform_k":
        if k is None:
            raise ValueError("uniform_k law needs k")
        return uniform_window_law(d, k, depth)
    if kind == "iic":
        return iic_window_law(d, depth)
    if kind == "tinf":
        return tinf_window_law(OffspringParams(d, p), depth)
    if kind == "tstar":
        return companion_window_law(OffspringParams(d, p), depth)
    if kind == "tstar_pair":
        return companion_pair_window_law(OffspringParams(d, p), depth)
    raise ValueError(f"unknown law kind {kind!r}")


# ---------------------------------------------------------------------------
# statistical comparison


@dataclass
class TestReport:
    name: str
    n: int
    quarantined: int
    statistic: float
    dof: int
    p_value: float
    tv_distance: float
    significance: float
    quarantine_bound: float
    passed: bool
    notes: str = ""

    @property
    def quarantine_rate(self) -> float:
        total = self.n + self.quarantined
        return self.quarantined / total if total else 0.0

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "quarantined": self.quarantined,
            "quarantine_rate": self.quarantine_rate,
            "chi2": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "tv": self.tv_distance,
            "significance": self.significance,
            "passed": self.passed,
            "notes": self.notes,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: n={self.n} chi2={self.statistic:.2f} "
                f"dof={self.dof} p={self.p_value:.3g} tv={self.tv_distance:.4f} "
                f"quarantine={self.quarantine_rate:.4%}")


def compare(law: WindowLaw, counts: dict[str, int], name: str = "",
            significance: float = DEFAULT_SIGNIFICANCE, quarantined: int = 0,
            quarantine_bound: float = 0.01, pool_threshold: float = 5.0) -> TestReport:
    """Chi-square (with small-expectation pooling) plus total-variation
    distance of observed window counts against an exact law."""
    probs = law.float_entries()
    n = sum(counts.values())
    unexpected = sum(c for key, c in counts.items() if key not in probs)
    tv = 0.5 * sum(abs(counts.get(key, 0) / n - pk) for key, pk in probs.items()) \
        + 0.5 * unexpected / n if n else 1.0

    cells = sorted(probs.items(), key=lambda kv: (-kv[1], kv[0]))
    stat = 0.0
    kept = 0
    pooled_p = 0.0
    pooled_obs = unexpected
    for key, pk in cells:
        exp = pk * n
        if exp >= pool_threshold:
            obs = counts.get(key, 0)
            stat += (obs - exp) ** 2 / exp
            kept += 1
        else:
            pooled_p += pk
            pooled_obs += counts.get(key, 0)
    if pooled_p * n > 0:
        exp = pooled_p * n
        stat += (pooled_obs - exp) ** 2 / exp
        kept += 1
    elif pooled_obs:
        stat = math.inf
    dof = max(kept - 1, 1)
    p_value = float(_chi2.sf(stat, dof)) if math.isfinite(stat) else 0.0
    total = n + quarantined
    qrate = quarantined / total if total else 0.0
    passed = p_value > significance and qrate < quarantine_bound
    return TestReport(name or law.kind, n, quarantined, stat, dof, p_value, tv,
                      significance, quarantine_bound, passed)


def calibrate(law: WindowLaw, runs: int, n: int, seed: int,
              significance: float = DEFAULT_SIGNIFICANCE) -> int:
    """Number of false failures of `compare` against its own law over
    `runs` synthetic experiments of size n."""
    import numpy as np

    keys = sorted(law.entries)
    probs = np.array([float(law.entries[k]) for k in keys])
    probs = probs / probs.sum()
    gen = np.random.default_rng(seed)
    failures = 0
    for _ in range(runs):
        draw = gen.multinomial(n, probs)
        counts = {k: int(c) for k, c in zip(keys, draw) if c}
        if not compare(law, counts, significance=significance).passed:
            failures += 1
    return failures


# ---------------------------------------------------------------------------
# conditioned-domination counterexample


def _example_offspring_laws(r: Fraction, depth1_conditioned: bool):
    """Depth-1 vertex-window laws for the 0/1/2-children offspring law
    with masses (1/2-2r, r, 1/2+r).  Conditioning on survival fixes
    P(one child | infinite) = r exactly."""
    r = Fraction(r)
    w0 = WindowedTree(2, 1, [()], []).key()
    w1 = WindowedTree(2, 1, [(), (1,)], []).key()
    w2 = WindowedTree(2, 1, [(), (1,), (2,)], []).key()
    if not depth1_conditioned:
        return [(w0, Fraction(1, 2) - 2 * r), (w1, r), (w2, Fraction(1, 2) + r)]
    # P(one child | survival) = r exactly; at r = 0 read as the limit law
    return [(w1, r), (w2, 1 - r)] if r > 0 else [(w2, Fraction(1))]


def counterexample_demo(r1, r2) -> dict:
    """The conditioned trees of the 0/1/2-offspring family are not
    stochastically ordered even though the unconditioned trees are:
    check_domination certifies the violated up-set exactly."""
    r1, r2 = Fraction(r1), Fraction(r2)
    if not (0 <= r1 <= r2 <= Fraction(1, 4)):
        raise ValueError("need 0 <= r1 <= r2 <= 1/4")

    def window_leq(key_a: str, key_b: str) -> bool:
        from .treecore import window_from_json
        da, ta, aa = key_a.split(":")
        db, tb, ab = key_b.split(":")
        wa = window_from_json(2, {"depth": int(da), "tree": ta, "alive": aa})
        wb = window_from_json(2, {"depth": int(db), "tree": tb, "alive": ab})
        return wa.leq(wb)

    unconditioned = check_domination(
        _example_offspring_laws(r1, False), _example_offspring_laws(r2, False),
        window_leq, "window_containment")
    conditioned = check_domination(
        _example_offspring_laws(r1, True), _example_offspring_laws(r2, True),
        window_leq, "window_containment") if r1 > 0 else None
    return {
        "unconditioned": unconditioned,
        "conditioned": conditioned,
        "unconditioned_feasible": isinstance(unconditioned, CouplingKernel),
        "conditioned_feasible": isinstance(conditioned, CouplingKernel),
        "one_child_mass": (r1, r2),
    }


# ---------------------------------------------------------------------------
# closed-form identity and inequality suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (
            f": {self.detail}" if self.detail else "")


def inequality_suite(grid_points: int = 1000) -> list[CheckResult]:
    """Every closed-form inequality and identity the couplings rest on,
    evaluated on grids; exact rational checks wherever the quantities are
    rational."""
    out: list[CheckResult] = []

    def add(name, passed, detail=""):
        out.append(CheckResult(name, bool(passed), detail))

    # count-ratio monotonicity and limit
    for d in (2, 3):
        ratios = [Fraction(count_trees(d, k - 1), count_trees(d, k)) for k in range(1, 65)]
        mono = all(a > b for a, b in zip(ratios, ratios[1:]))
        limit = Fraction(1, d) * Fraction(d - 1, d) ** (d - 1)
        add(f"count_ratio_decreasing_d{d}", mono,
            f"final gap {float(ratios[-1] - limit):.3e}")
        add(f"count_ratio_limit_d{d}", abs(float(ratios[-1] - limit)) < 0.01)

    # c_{k-l}/c_k >= (p(1-p)^{d-1})^l
    ok = True
    worst = 1.0
    for d in (2, 3):
        for k in range(1, 65):
            for l in range(k + 1):
                lhs = Fraction(count_trees(d, k - l), count_trees(d, k))
                rhs = (Fraction(1, d) * Fraction(d - 1, d) ** (d - 1)) ** l
                ok = ok and lhs >= rhs
                if rhs:
                    worst = min(worst, float(lhs - rhs))
    add("count_tail_ratio_bound", ok, f"min margin {worst:.3e}")

    # size pmf decreasing in k
    ok = True
    for d, p in [(2, Fraction(1, 2)), (2, Fraction(3, 4)), (3, Fraction(1, 3)), (3, Fraction(2, 3))]:
        params = OffspringParams(d, p)
        vals = [size_pmf(params, k) for k in range(65)]
        ok = ok and all(a >= b for a, b in zip(vals, vals[1:]))
    add("size_pmf_decreasing", ok)

    # d=2 companion cumulative dominance in p (exact rationals)
    ps = [Fraction(1, 2) + Fraction(i, 2 * 16) for i in range(17)]
    ok = True
    for pa, pb in zip(ps, ps[1:]):
        ca = cb = Fraction(0)
        for k in range(65):
            ca += 2 * pa * size_pmf(OffspringParams(2, pa), k)
            cb += 2 * pb * size_pmf(OffspringParams(2, pb), k)
            ok = ok and cb <= ca
    add("companion_cdf_decreasing_in_p_d2", ok)

    # survival fixed point
    ok = True
    worst = 0.0
    for d in (2, 3):
        for i in range(0, 21):
            p = Fraction(1, d) + (1 - Fraction(1, d)) * Fraction(i, 20)
            s = float(survival_probability(OffspringParams(d, p)))
            resid = abs(s - float(p) * (1 - (1 - s) ** d))
            worst = max(worst, resid)
            ok = ok and resid <= 1e-12
    add("survival_fixed_point", ok, f"max residual {worst:.2e}")

    # correction factor: endpoints, limit, monotone, bounds
    f1 = float(second_tree_factor(1))
    add("factor_at_one", abs(f1 - (math.sqrt(3) - 1)) <= 1e-10, f"|f(1)-(sqrt3-1)|={abs(f1-(math.sqrt(3)-1)):.2e}")
    flim = float(second_tree_factor(Fraction(1, 3) + Fraction(1, 10**6)))
    add("factor_limit_at_third", abs(flim - 1) <= 1e-3, f"|f(1/3+1e-6)-1|={abs(flim-1):.2e}")
    grid = [Fraction(1, 3) + Fraction(i, int(1.5 * grid_points)) for i in range(1, grid_points + 1)]
    vals = [second_tree_factor(q) for q in grid]
    add("factor_strictly_decreasing", all(a > b for a, b in zip(vals, vals[1:])))
    add("factor_bounds", all(0 <= float(v) <= 1 for v in vals))

    # d=3 first-companion mass sqrt(3p)(1 - survival): equals 1 exactly at
    # p = 1/3 and is strictly below 1 above it
    with mpmath.workdps(MP_DPS):
        ok = True
        for q in [Fraction(1, 3) + Fraction(i, 40) for i in range(1, 27)]:
            params = OffspringParams(3, q)
            r = mpmath.sqrt(3 * mpmath.mpf(q.numerator) / q.denominator)
            mass = r * (1 - _as_mpf(survival_probability(params)))
            ok = ok and mass < 1
        add("first_companion_mass_below_one", ok)
        # closed form vs partial sums where the tail is geometric
        params = OffspringParams(3, Fraction(3, 5))
        r = mpmath.sqrt(3 * mpmath.mpf(3) / 5)
        head = mpmath.fsum(r * _as_mpf(size_pmf(params, k)) for k in range(400))
        closed = r * (1 - _as_mpf(survival_probability(params)))
        add("first_companion_mass_identity", abs(float(head - closed)) < 1e-12,
            f"|head - closed| = {abs(float(head - closed)):.2e}")
        # at the critical point the closed form is exactly 1 (rationally) and
        # the partial sums increase strictly toward it from below
        heads = []
        acc = Fraction(0)
        crit = OffspringParams(3, Fraction(1, 3))
        for k in range(200):
            acc += size_pmf(crit, k)
            heads.append(acc)
        add("first_companion_mass_one_at_third",
            all(h < 1 for h in heads) and all(a < b for a, b in zip(heads, heads[1:])),
            f"head(200) = {float(heads[-1]):.6f}, closed form = 1 exactly")

    # d=3 conditional masses sum to one
    from .combinatorics import companion_pair_laws

    ok = True
    worst = 0.0
    for q in [Fraction(1, 3), Fraction(2, 5), Fraction(3, 5), Fraction(9, 10), Fraction(1)]:
        laws = companion_pair_laws(OffspringParams(3, q), K=64)
        for law in (laws.first, laws.second_given_finite, laws.second_given_infinite):
            dev = abs(float(law.total_mass()) - 1)
            worst = max(worst, dev)
            ok = ok and dev <= 1e-12
    add("pair_conditional_masses", ok, f"max deviation {worst:.2e}")

    # d=3 shared-uniform monotonicity: the three case-wise cumulative
    # dominances behind the coupled size quadruple
    with mpmath.workdps(MP_DPS):
        ok1 = ok2 = ok3 = True
        qs = [Fraction(1, 3) + Fraction(i, 15) for i in range(0, 11)]
        for qa, qb in zip(qs, qs[1:]):
            pa, pb = OffspringParams(3, qa), OffspringParams(3, qb)
            ra = mpmath.sqrt(3 * mpmath.mpf(qa.numerator) / qa.denominator)
            rb = mpmath.sqrt(3 * mpmath.mpf(qb.numerator) / qb.denominator)
            fa = second_tree_factor(qa)
            fb = second_tree_factor(qb)
            ca = cb = mpmath.mpf(0)
            for k in range(65):
                ea = ra * _as_mpf(size_pmf(pa, k))
                eb = rb * _as_mpf(size_pmf(pb, k))
                ca += ea
                cb += eb
                ok1 = ok1 and cb <= ca + mpmath.mpf(10) ** (-25)
                ok2 = ok2 and fb * cb <= ca + mpmath.mpf(10) ** (-25)
                ok3 = ok3 and fb * cb <= fa * ca + mpmath.mpf(10) ** (-25)
        add("pair_cdf_case_finite_finite", ok1)
        add("pair_cdf_case_finite_infinite", ok2)
        add("pair_cdf_case_infinite_infinite", ok3)

    # conditioned subtree-size identity: p*s*eta_k/s == p*eta_k
    ok = True
    for d, p in [(2, Fraction(3, 4)), (3, Fraction(1, 2))]:
        params = OffspringParams(d, p)
        s = survival_probability(params)
        if isinstance(s, Fraction) and s:
            ok = ok and all(p * s * size_pmf(params, k) / s == p * size_pmf(params, k)
                            for k in range(10))
        else:
            with mpmath.workdps(MP_DPS):
                sm = _as_mpf(s)
                ok = ok and all(
                    abs(float(p) * sm * float(size_pmf(params, k)) / sm
                        - float(p) * float(size_pmf(params, k))) < 1e-20
                    for k in range(10))
    add("conditioned_subtree_identity", ok)

    return out
