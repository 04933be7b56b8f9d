"""Finite d-ary trees as prefix-closed label sets, plus depth windows.

A vertex is addressed by its path from the root: a tuple of child indices
in ``1..d`` (the root is the empty tuple).  A tree is any prefix-closed
finite set of such labels; the empty tree is a first-class value of size 0.
Vertices are totally ordered breadth-first: shorter paths first, ties
broken lexicographically.

The canonical encoding walks the tree in that order, emitting one d-bit
child-presence mask per visited vertex, packed MSB-first into bytes.  It is
a bijection (the decoder rejects anything that is not an encoding of a
prefix-closed set), which makes tree encodings usable as exact hash keys
for kernels and distribution counting.

A :class:`WindowedTree` is the depth-D restriction of a (possibly
conceptually infinite) tree, plus a set of depth-D vertices flagged as
continuing beyond the window.  For truncations of materialized finite
trees the flag means "has a child in the full tree"; samplers of
conditioned laws flag exactly the vertices whose continuation is infinite.
Each exact window law documents which flag semantics it uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

Label = tuple[int, ...]

ROOT: Label = ()


def vertex_key(u: Label):
    """Sort key realizing the breadth-first total order on labels."""
    return (len(u), u)


def compare_vertices(u: Label, v: Label) -> int:
    """-1, 0, 1 as u precedes, equals, or follows v in breadth-first order."""
    ku, kv = vertex_key(u), vertex_key(v)
    return (ku > kv) - (ku < kv)


def concat(u: Label, v: Label) -> Label:
    return u + v


class DTree:
    """An immutable prefix-closed set of vertex labels in the complete
    d-ary tree (possibly empty)."""

    __slots__ = ("d", "vertices", "_enc")

    def __init__(self, d: int, vertices: Iterable[Label] = (), _checked: bool = False):
        if d < 2:
            raise ValueError("arity must be >= 2")
        vs = frozenset(tuple(v) for v in vertices)
        if not _checked:
            for v in vs:
                if any(not (1 <= i <= d) for i in v):
                    raise ValueError(f"label {v} has entries outside 1..{d}")
                if v and v[:-1] not in vs:
                    raise ValueError(f"vertex {v} present without its parent")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "_enc", None)

    def __setattr__(self, name, value):
        raise AttributeError("DTree is immutable")

    @classmethod
    def empty(cls, d: int) -> "DTree":
        return cls(d, (), _checked=True)

    @classmethod
    def single(cls, d: int) -> "DTree":
        return cls(d, (ROOT,), _checked=True)

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, u: Label) -> bool:
        return tuple(u) in self.vertices

    def __eq__(self, other) -> bool:
        return isinstance(other, DTree) and self.d == other.d and self.vertices == other.vertices

    def __hash__(self) -> int:
        return hash((self.d, self.vertices))

    def __repr__(self) -> str:
        return f"DTree(d={self.d}, size={len(self)}, {self.encode().hex()!r})"

    def children(self, u: Label) -> list[Label]:
        return [u + (i,) for i in range(1, self.d + 1) if u + (i,) in self.vertices]

    def child_mask(self, u: Label) -> int:
        """Bit i-1 (MSB-first over 1..d) set iff child i is present."""
        mask = 0
        for i in range(1, self.d + 1):
            mask = (mask << 1) | (1 if u + (i,) in self.vertices else 0)
        return mask

    def subtree_at(self, u: Label) -> "DTree":
        """The shifted subtree {w : u+w in self}; empty when u is absent."""
        u = tuple(u)
        if u == ROOT:
            return self
        n = len(u)
        verts = [v[n:] for v in self.vertices if v[:n] == u]
        return DTree(self.d, verts, _checked=True)

    def contains(self, other: "DTree") -> bool:
        if self.d != other.d:
            raise ValueError("containment needs matching arity")
        return other.vertices <= self.vertices

    def depth(self) -> int:
        return max((len(v) for v in self.vertices), default=0)

    def bfs(self) -> Iterator[Label]:
        yield from sorted(self.vertices, key=vertex_key)

    def truncate(self, depth: int) -> "WindowedTree":
        """Depth-window with 'has at least one child in self' boundary flags."""
        if depth < 0:
            raise ValueError("depth must be >= 0")
        kept = frozenset(v for v in self.vertices if len(v) <= depth)
        alive = frozenset(
            v for v in kept
            if len(v) == depth and any(v + (i,) in self.vertices for i in range(1, self.d + 1))
        )
        return WindowedTree(self.d, depth, kept, alive, _checked=True)

    def encode(self) -> bytes:
        """Canonical byte encoding: breadth-first d-bit child masks."""
        if self._enc is not None:
            return self._enc
        bits: list[int] = []
        for v in self.bfs():
            mask = self.child_mask(v)
            for shift in range(self.d - 1, -1, -1):
                bits.append((mask >> shift) & 1)
        out = _pack_bits(bits)
        object.__setattr__(self, "_enc", out)
        return out

    def hex(self) -> str:
        return self.encode().hex()

    def to_dot(self, name: str = "tree") -> str:
        return window_dot([(self.truncate(self.depth()), "black")], name)


def decode(d: int, data: bytes) -> DTree:
    """Inverse of :meth:`DTree.encode`; rejects malformed input."""
    if not data:
        return DTree.empty(d)
    bits = _unpack_bits(data)
    verts: list[Label] = []
    queue: list[Label] = [ROOT]
    pos = 0
    while queue:
        v = queue.pop(0)
        verts.append(v)
        if pos + d > len(bits):
            raise ValueError("encoding truncated")
        for i in range(1, d + 1):
            if bits[pos]:
                queue.append(v + (i,))
            pos += 1
        queue.sort(key=vertex_key)
    if any(bits[pos:]):
        raise ValueError("trailing bits set after final vertex")
    return DTree(d, verts, _checked=True)


class WindowedTree:
    """Depth-D restriction of a tree plus boundary continuation flags."""

    __slots__ = ("d", "depth", "vertices", "alive", "_key")

    def __init__(self, d: int, depth: int, vertices: Iterable[Label],
                 alive: Iterable[Label] = (), _checked: bool = False):
        vs = frozenset(tuple(v) for v in vertices)
        al = frozenset(tuple(v) for v in alive)
        if not _checked:
            for v in vs:
                if len(v) > depth:
                    raise ValueError(f"vertex {v} deeper than window depth {depth}")
                if any(not (1 <= i <= d) for i in v):
                    raise ValueError(f"label {v} has entries outside 1..{d}")
                if v and v[:-1] not in vs:
                    raise ValueError(f"vertex {v} present without its parent")
            if not al <= {v for v in vs if len(v) == depth}:
                raise ValueError("alive flags must sit on depth-D vertices of the window")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "alive", al)
        object.__setattr__(self, "_key", None)

    def __setattr__(self, name, value):
        raise AttributeError("WindowedTree is immutable")

    @classmethod
    def empty(cls, d: int, depth: int) -> "WindowedTree":
        return cls(d, depth, (), (), _checked=True)

    def __len__(self) -> int:
        return len(self.vertices)

    def __eq__(self, other) -> bool:
        return (isinstance(other, WindowedTree) and self.d == other.d
                and self.depth == other.depth and self.vertices == other.vertices
                and self.alive == other.alive)

    def __hash__(self) -> int:
        return hash((self.d, self.depth, self.vertices, self.alive))

    def __repr__(self) -> str:
        return f"WindowedTree(d={self.d}, D={self.depth}, key={self.key()!r})"

    def boundary(self) -> list[Label]:
        return sorted((v for v in self.vertices if len(v) == self.depth), key=vertex_key)

    def as_tree(self) -> DTree:
        return DTree(self.d, self.vertices, _checked=True)

    def key(self) -> str:
        """Canonical string key: depth, tree hex, alive bitmask hex."""
        if self._key is not None:
            return self._key
        tree_hex = self.as_tree().hex()
        bits = [1 if v in self.alive else 0 for v in self.boundary()]
        alive_hex = _pack_bits(bits).hex()
        out = f"{self.depth}:{tree_hex}:{alive_hex}"
        object.__setattr__(self, "_key", out)
        return out

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "tree": self.as_tree().hex(),
            "alive": _pack_bits([1 if v in self.alive else 0 for v in self.boundary()]).hex(),
        }

    def leq(self, other: "WindowedTree", check_alive: bool = True) -> bool:
        """Window containment: vertex sets nest, and (when both windows use
        the same flag semantics) flags nest too."""
        if self.d != other.d or self.depth != other.depth:
            raise ValueError("window comparison needs matching arity and depth")
        ok = self.vertices <= other.vertices
        if check_alive:
            ok = ok and self.alive <= other.alive
        return ok


def window_from_json(d: int, obj: dict) -> WindowedTree:
    tree = decode(d, bytes.fromhex(obj["tree"]))
    depth = obj["depth"]
    w = WindowedTree(d, depth, tree.vertices)
    bits = _unpack_bits(bytes.fromhex(obj["alive"])) if obj["alive"] else []
    alive = [v for v, b in zip(w.boundary(), bits) if b]
    return WindowedTree(d, depth, tree.vertices, alive)


def enumerate_trees(d: int, k: int) -> list[DTree]:
    """All size-k trees, by recursion over root-subtree compositions.

    This is the brute-force oracle against which count_trees is tested;
    results are memoized as vertex-tuple lists.
    """
    return [DTree(d, vs, _checked=True) for vs in _enum_shapes(d, k)]


_shape_cache: dict[tuple[int, int], list[tuple[Label, ...]]] = {}


def _enum_shapes(d: int, k: int) -> list[tuple[Label, ...]]:
    if k < 0:
        raise ValueError("size must be >= 0")
    key = (d, k)
    if key in _shape_cache:
        return _shape_cache[key]
    if k == 0:
        out = [()]
    else:
        from .combinatorics import compositions

        out = []
        for comp in compositions(k - 1, d):
            subs = [_enum_shapes(d, part) for part in comp]
            for choice in _product(subs):
                verts: list[Label] = [ROOT]
                for i, sub in enumerate(choice, start=1):
                    verts.extend((i,) + v for v in sub)
                out.append(tuple(verts))
    _shape_cache[key] = out
    return out


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for rest in _product(lists[1:]):
            yield (head,) + rest


def window_dot(layers: list[tuple[WindowedTree, str]], name: str = "window") -> str:
    """Graphviz DOT for one or more windows drawn over each other.

    Later layers win on color; alive boundary vertices are doubled circles.
    """
    lines = [f"digraph {name} {{", "  node [shape=circle];"]
    style: dict[Label, tuple[str, bool]] = {}
    edges: set[tuple[Label, Label]] = set()
    for w, color in layers:
        for v in sorted(w.vertices, key=vertex_key):
            style[v] = (color, v in w.alive)
            if v:
                edges.add((v[:-1], v))
    for v, (color, alive) in sorted(style.items(), key=lambda kv: vertex_key(kv[0])):
        shape = "doublecircle" if alive else "circle"
        lines.append(f'  "{_label_str(v)}" [color={color}, shape={shape}];')
    for a, b in sorted(edges, key=lambda e: (vertex_key(e[0]), vertex_key(e[1]))):
        lines.append(f'  "{_label_str(a)}" -> "{_label_str(b)}";')
    lines.append("}")
    return "\n".join(lines)


def _label_str(v: Label) -> str:
    return "o" if not v else "o" + "".join(str(i) for i in v)


def _pack_bits(bits: list[int]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i // 8] |= 0x80 >> (i % 8)
    return bytes(out)


def _unpack_bits(data: bytes) -> list[int]:
    bits = []
    for byte in data:
        for shift in range(7, -1, -1):
            bits.append((byte >> shift) & 1)
    return bits
