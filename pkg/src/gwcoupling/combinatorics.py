"""Exact closed forms for binomial Galton-Watson tree combinatorics.

Conventions used throughout the package:

  * ``d``-ary rooted trees live inside the complete ``d``-ary tree; a tree
    of size ``k`` is a prefix-closed set of ``k`` vertices containing the
    root.  ``count_trees(d, k)`` counts them; for ``d = 2`` these are the
    Catalan numbers.
  * Site percolation with retention probability ``p`` on the complete
    ``d``-ary tree leaves a (possibly empty) root component whose size
    distribution is ``size_pmf``.  The empty tree has size 0 and
    probability ``1 - p``, which forces the convention ``count_trees(d, 0)
    == 1``.
  * Everything rational is computed in exact :class:`fractions.Fraction`
    arithmetic.  Quantities involving square roots (the ternary survival
    probability and anything built from it) are computed with mpmath at
    ``MP_DPS`` decimal digits, because double precision cancels badly near
    the critical point ``p = 1/d``.

Size laws are bundled in :class:`SizeLaw`: an explicit head ``k = 0..K``,
one bucket for "finite but larger than K", and one atom at infinity, so
that no mass is ever silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import mpmath

MP_DPS = 40

Prob = Union[Fraction, mpmath.mpf]

RATIONAL_TOL = 0
FLOAT_TOL = 1e-12

DEFAULT_SIZE_CUTOFF = 64


def _as_mpf(x) -> mpmath.mpf:
    if isinstance(x, Fraction):
        with mpmath.workdps(MP_DPS):
            return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def as_fraction(p) -> Fraction:
    """Parse a probability given as Fraction, int, or string ('2/3', '0.6')."""
    if isinstance(p, Fraction):
        return p
    if isinstance(p, int):
        return Fraction(p)
    if isinstance(p, str):
        return Fraction(p)
    if isinstance(p, float):
        # Floats are accepted but converted via their shortest repr so that
        # 0.6 means 3/5, not the binary expansion of the double.
        return Fraction(repr(p))
    raise TypeError(f"cannot interpret {p!r} as an exact probability")


@dataclass(frozen=True)
class OffspringParams:
    """Arity and retention probability for the Bin(d, p) offspring law.

    ``p`` is kept exact.  Conditioned-on-survival constructions require
    ``p >= 1/d``; plain percolation sampling does not, so the constructor
    only enforces ``0 < p <= 1`` and callers that need supercriticality
    assert it via :meth:`require_conditionable`.
    """

    d: int
    p: Fraction

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"arity must be 2 or 3, got {self.d}")
        object.__setattr__(self, "p", as_fraction(self.p))
        if not (0 < self.p <= 1):
            raise ValueError(f"retention probability must lie in (0, 1], got {self.p}")

    @property
    def critical(self) -> Fraction:
        return Fraction(1, self.d)

    @property
    def is_critical(self) -> bool:
        return self.p == self.critical

    def require_conditionable(self) -> "OffspringParams":
        if self.p < self.critical:
            raise ValueError(
                f"p = {self.p} < 1/{self.d}: conditioning on survival needs p >= 1/d"
            )
        return self


_count_cache: dict[int, list[int]] = {}


def count_trees(d: int, k: int) -> int:
    """Number of size-k subtrees of the complete d-ary tree containing the root.

    count_trees(d, k) = C(d*k, k) / ((d-1)*k + 1), with count_trees(d, 0) = 1.
    Exact big-integer arithmetic; matches brute-force enumeration (tested).
    """
    if d < 2:
        raise ValueError("arity must be >= 2")
    if k < 0:
        raise ValueError("size must be >= 0")
    cache = _count_cache.setdefault(d, [1, 1])
    while len(cache) <= k:
        j = len(cache)
        cache.append(math.comb(d * j, j) // ((d - 1) * j + 1))
    return cache[k]


_ratio_cache: dict[int, list[float]] = {}


def count_ratio(d: int, k: int) -> float:
    """count_trees(d, k) / count_trees(d, k-1) as a float (k >= 1).

    Bounded by d^d/(d-1)^(d-1), so usable in stable multiplicative
    recurrences for size laws at sizes where absolute counts overflow.
    """
    cache = _ratio_cache.setdefault(d, [0.0])
    while len(cache) <= k:
        j = len(cache)
        cache.append(count_trees(d, j) / count_trees(d, j - 1))
    return cache[k]


def size_pmf(params: OffspringParams, k: int) -> Fraction:
    """P(root component has exactly k vertices) under site percolation.

    Equals count_trees(d,k) * p^k * (1-p)^((d-1)k+1); k = 0 gives 1-p.
    """
    if k < 0:
        raise ValueError("size must be >= 0")
    d, p = params.d, params.p
    return count_trees(d, k) * p**k * (1 - p) ** ((d - 1) * k + 1)


def survival_probability(params: OffspringParams) -> Prob:
    """P(root component is infinite), for p >= 1/d.

    d=2: exact rational (2p-1)/p.  d=3: the root in [0,1] of
    p*s^2 - 3p*s + 3p - 1 = 0, i.e. (3*sqrt(p) - sqrt(4-3p)) / (2*sqrt(p)),
    returned as an mpf.  Satisfies s = p*(1 - (1-s)^d) to 1e-12 (tested).
    """
    params.require_conditionable()
    d, p = params.d, params.p
    if d == 2:
        return (2 * p - 1) / p
    if params.is_critical:
        return Fraction(0)
    with mpmath.workdps(MP_DPS):
        pm = _as_mpf(p)
        return (3 * mpmath.sqrt(pm) - mpmath.sqrt(4 - 3 * pm)) / (2 * mpmath.sqrt(pm))


def second_tree_factor(p) -> mpmath.mpf:
    """Weight applied to the second companion tree's size law when the first
    companion is infinite (d = 3 only).

    (sqrt(3p) - 1) / (1 - sqrt(3p)*(1 - survival)), continuously extended
    to 1 at p = 1/3.  Strictly decreasing on (1/3, 1], with value
    sqrt(3) - 1 at p = 1.
    """
    p = as_fraction(p)
    if not (Fraction(1, 3) <= p <= 1):
        raise ValueError(f"second_tree_factor needs p in [1/3, 1], got {p}")
    if p == Fraction(1, 3):
        return mpmath.mpf(1)
    with mpmath.workdps(MP_DPS):
        s = _as_mpf(survival_probability(OffspringParams(3, p)))
        r = mpmath.sqrt(3 * _as_mpf(p))
        return (r - 1) / (1 - r * (1 - s))


@dataclass
class SizeLaw:
    """A distribution over sizes {0..K} + (K, inf) + {inf}.

    ``weights[k]`` is the mass at finite size k for k <= K; ``tail_finite``
    is the total mass of finite sizes above K; ``infinity`` the atom at
    infinite size.  Split laws reuse the container with composition tuples
    as keys and no tail/infinity.  Weights are Fractions when the law is
    rational and mpf otherwise; total mass is validated at construction
    (exactly 1 in rational mode, to 1e-12 in float mode).
    """

    kind: str
    d: int
    p: Fraction | None
    K: int
    weights: dict = field(repr=False)
    tail_finite: Prob = Fraction(0)
    infinity: Prob = Fraction(0)

    def __post_init__(self):
        self.check_mass()

    def is_rational(self) -> bool:
        vals = list(self.weights.values()) + [self.tail_finite, self.infinity]
        return all(isinstance(v, (Fraction, int)) for v in vals)

    def total_mass(self) -> Prob:
        tot = sum(self.weights.values()) + self.tail_finite + self.infinity
        return tot

    def check_mass(self):
        for key, w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight at {key}: {w}")
        if self.tail_finite < 0 or self.infinity < 0:
            raise ValueError("negative tail/infinity mass")
        tot = self.total_mass()
        if self.is_rational():
            if tot != 1:
                raise ValueError(f"{self.kind} law mass {tot} != 1")
        elif abs(float(tot) - 1.0) > FLOAT_TOL:
            raise ValueError(f"{self.kind} law mass {float(tot)} off by > {FLOAT_TOL}")

    def prob(self, k) -> Prob:
        if k == math.inf:
            return self.infinity
        return self.weights.get(k, Fraction(0))

    def to_json(self) -> dict:
        ws = [float(self.weights.get(k, 0)) for k in range(self.K + 1)] \
            if self.kind != "split" else \
            [[list(c), float(w)] for c, w in sorted(self.weights.items())]
        return {
            "kind": self.kind,
            "d": self.d,
            "p": None if self.p is None else f"{self.p.numerator}/{self.p.denominator}",
            "K": self.K,
            "weights": ws,
            "tail_finite": float(self.tail_finite),
            "infinity": float(self.infinity),
        }


def companion_size_law(params: OffspringParams, K: int = DEFAULT_SIZE_CUTOFF) -> SizeLaw:
    """Size law of the binary companion tree: the tree attached beside the
    distinguished infinite child in the one-step decomposition of a
    conditioned binary tree.

    P(size = k) = 2p * size_pmf(k) for finite k, P(size = inf) = p * survival.
    Exact rational.  d = 2 only.
    """
    if params.d != 2:
        raise ValueError("companion_size_law is the d = 2 construction")
    params.require_conditionable()
    p = params.p
    weights = {k: 2 * p * size_pmf(params, k) for k in range(K + 1)}
    surv = survival_probability(params)
    inf_atom = p * surv
    # total finite companion mass is 2p(1 - survival) = 2(1-p)
    tail = 2 * (1 - p) - sum(weights.values())
    return SizeLaw("lstar", 2, p, K, weights, tail_finite=tail, infinity=inf_atom)


@dataclass(frozen=True)
class CompanionPairLaws:
    """Marginal of the first ternary companion size, plus the conditional
    laws of the second companion size given the first is finite / infinite."""

    first: SizeLaw
    second_given_finite: SizeLaw
    second_given_infinite: SizeLaw


def companion_pair_laws(params: OffspringParams, K: int = DEFAULT_SIZE_CUTOFF) -> CompanionPairLaws:
    """Joint size law of the two ternary companion trees (d = 3 only).

    First companion: P(k) = sqrt(3p) * size_pmf(k), infinite with the
    complementary mass 1 - sqrt(3p)(1 - survival).  Second companion given
    the first finite: same law.  Given the first infinite: finite weights
    are damped by second_tree_factor(p) and the atom at infinity is
    p*survival^2 / (1 - sqrt(3p)(1 - survival)).  Each conditional law sums
    to 1 (to 1e-12; exactly when p = 1/3, where everything is rational).
    """
    if params.d != 3:
        raise ValueError("companion_pair_laws is the d = 3 construction")
    params.require_conditionable()
    p = params.p
    if params.is_critical:
        # sqrt(3p) = 1 and survival = 0: all laws are rational and the
        # infinite atoms vanish.
        weights = {k: size_pmf(params, k) for k in range(K + 1)}
        tail = 1 - sum(weights.values())
        first = SizeLaw("lstar", 3, p, K, dict(weights), tail_finite=tail)
        cf = SizeLaw("lstarstar_given_finite", 3, p, K, dict(weights), tail_finite=tail)
        ci = SizeLaw("lstarstar_given_infinite", 3, p, K, dict(weights), tail_finite=tail)
        return CompanionPairLaws(first, cf, ci)
    with mpmath.workdps(MP_DPS):
        pm = _as_mpf(p)
        root3p = mpmath.sqrt(3 * pm)
        surv = _as_mpf(survival_probability(params))
        factor = second_tree_factor(p)
        w = {k: root3p * _as_mpf(size_pmf(params, k)) for k in range(K + 1)}
        fin_total = root3p * (1 - surv)
        inf_first = 1 - fin_total
        first = SizeLaw("lstar", 3, p, K, dict(w),
                        tail_finite=fin_total - mpmath.fsum(w.values()),
                        infinity=inf_first)
        cf = SizeLaw("lstarstar_given_finite", 3, p, K, dict(w),
                     tail_finite=fin_total - mpmath.fsum(w.values()),
                     infinity=inf_first)
        wi = {k: v * factor for k, v in w.items()}
        inf_atom = pm * surv**2 / (1 - root3p * (1 - surv))
        tail_i = (1 - inf_atom) - mpmath.fsum(wi.values())
        ci = SizeLaw("lstarstar_given_infinite", 3, p, K, wi,
                     tail_finite=tail_i, infinity=inf_atom)
    return CompanionPairLaws(first, cf, ci)


def split_law(d: int, k: int) -> SizeLaw:
    """Law of the ordered d-tuple of root-subtree sizes of a uniform
    (k+1)-vertex tree: P(k_1..k_d) = prod count_trees(k_i) / count_trees(k+1),
    over compositions of k.  Exact rational."""
    if k < 1:
        raise ValueError("split_law needs k >= 1")
    denom = count_trees(d, k + 1)
    weights: dict[tuple, Fraction] = {}
    for comp in compositions(k, d):
        num = 1
        for part in comp:
            num *= count_trees(d, part)
        weights[comp] = Fraction(num, denom)
    return SizeLaw("split", d, None, k, weights)


def min_split_law(k: int) -> SizeLaw:
    """d = 2 law of min(left, right) root-subtree size of a uniform
    (k+1)-vertex binary tree: 2*c_l*c_{k-l}/c_{k+1} for l < k-l, halved on
    the diagonal."""
    if k < 1:
        raise ValueError("min_split_law needs k >= 1")
    denom = count_trees(2, k + 1)
    weights: dict[int, Fraction] = {}
    for l in range(k // 2 + 1):
        m = Fraction(count_trees(2, l) * count_trees(2, k - l), denom)
        weights[l] = m if 2 * l == k else 2 * m
    return SizeLaw("split", 2, None, k, weights)


def compositions(total: int, parts: int):
    """Ordered tuples of `parts` non-negative ints summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in compositions(total - head, parts - 1):
            yield (head,) + rest
