"""Finite trees of integer sequences, groups of involutions and their actions.

Nodes are tuples of non-negative integers.  The enumeration ``sigma`` orders
all nodes by the key ``len(t) + sum(t)``, breaking ties by length and then
lexicographically.  Every proper initial segment has a smaller key, so it is
enumerated earlier.

Groups ``G_s^n`` are sums of ``Z/2`` indexed by the level-``s`` nodes of the
tree with index at most ``n``.  Elements are stored as bit masks over the
ordered generator list; ``GroupActionTable`` holds the action of each
generator on a set of class indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ClassOutOfRange,
    HypothesisViolated,
    LevelOrderViolation,
    NoNodeAtLevel,
)

Node = tuple[int, ...]

SIGMA_ORDER = "key=len+sum, ties by length then lexicographic"


# --------------------------------------------------------------------------
# enumeration


def _count_with_sum(length: int, total: int) -> int:
    """Number of length-``length`` sequences of naturals with the given sum."""
    if length == 0:
        return 1 if total == 0 else 0
    if total < 0:
        return 0
    return comb(total + length - 1, length - 1)


def sigma_index(node: Sequence[int]) -> int:
    node = tuple(int(v) for v in node)
    if any(v < 0 for v in node):
        raise ValueError("node entries must be non-negative")
    if not node:
        return 0
    key = len(node) + sum(node)
    index = 1 << (key - 1)  # nodes with smaller key: 1 + sum_{k<key} 2^(k-1)
    for shorter in range(1, len(node)):
        index += _count_with_sum(shorter, key - shorter)
    remaining = key - len(node)
    for pos, value in enumerate(node):
        rest = len(node) - pos - 1
        for v in range(value):
            index += _count_with_sum(rest, remaining - v)
        remaining -= value
    return index


@lru_cache(maxsize=65536)
def sigma(n: int) -> Node:
    if n < 0:
        raise ValueError("index must be non-negative")
    if n == 0:
        return ()
    key = n.bit_length()  # nodes with key k occupy [2^(k-1), 2^k)
    offset = n - (1 << (key - 1))
    length = 1
    while True:
        block = _count_with_sum(length, key - length)
        if offset < block:
            break
        offset -= block
        length += 1
    remaining = key - length
    out = []
    for pos in range(length):
        rest = length - pos - 1
        v = 0
        while True:
            block = _count_with_sum(rest, remaining - v)
            if offset < block:
                break
            offset -= block
            v += 1
        out.append(v)
        remaining -= v
    return tuple(out)


def parent(node: Node) -> Node:
    if not node:
        raise ValueError("the root has no parent")
    return node[:-1]


def parse_node(text: str) -> Node:
    text = text.strip()
    if text in ("()", ""):
        return ()
    return tuple(int(v) for v in text.strip("()").split(","))


def format_node(node: Node) -> str:
    return "()" if not node else ",".join(str(v) for v in node)


# --------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class TreeTrunc:
    """A finite tree closed under initial segments, with a horizon index."""

    nodes: frozenset
    horizon: int | None = None

    def __post_init__(self):
        nodes = frozenset(tuple(int(v) for v in t) for t in self.nodes)
        if () not in nodes:
            raise ValueError("a tree must contain the root ()")
        for t in nodes:
            if t and t[:-1] not in nodes:
                raise ValueError(f"node {t} present without its parent {t[:-1]}")
        top = max(sigma_index(t) for t in nodes)
        horizon = top if self.horizon is None else int(self.horizon)
        if top > horizon:
            raise ValueError(f"node with index {top} beyond horizon {horizon}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "horizon", horizon)

    @classmethod
    def from_indices(cls, indices: Iterable[int], horizon: int | None = None) -> "TreeTrunc":
        return cls(frozenset(sigma(i) for i in indices), horizon)

    @classmethod
    def from_text(cls, text: str) -> "TreeTrunc":
        nodes = [parse_node(line) for line in text.splitlines() if line.strip()]
        return cls(frozenset(nodes))

    @classmethod
    def load(cls, path) -> "TreeTrunc":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self) -> str:
        return "\n".join(format_node(t) for t in self.ordered()) + "\n"

    def ordered(self) -> list[Node]:
        return sorted(self.nodes, key=sigma_index)

    def indices(self) -> list[int]:
        return sorted(sigma_index(t) for t in self.nodes)

    def __contains__(self, node) -> bool:
        return tuple(node) in self.nodes

    def truncate(self, n: int) -> "TreeTrunc":
        """Nodes with index at most ``n``."""
        return TreeTrunc(frozenset(t for t in self.nodes if sigma_index(t) <= n), n)

    def nodes_at(self, s: int, n: int | None = None) -> list[Node]:
        """Level-``s`` nodes with index at most ``n``, in enumeration order."""
        n = self.horizon if n is None else n
        return [t for t in self.ordered() if len(t) == s and sigma_index(t) <= n]

    def previous(self, n: int) -> int:
        """Largest tree index below ``n``."""
        below = [i for i in self.indices() if i < n]
        if not below:
            raise ValueError(f"no tree node before index {n}")
        return below[-1]


def m_of_s(t: TreeTrunc, s: int) -> int:
    found = [sigma_index(x) for x in t.nodes if len(x) == s]
    if not found:
        raise NoNodeAtLevel(f"no node of length {s}")
    return min(found)


def s_of_n(t: TreeTrunc, n: int) -> int:
    return max(len(x) for x in t.nodes if sigma_index(x) <= n)


def branches(t: TreeTrunc) -> list[tuple[Node, ...]]:
    """Maximal chains root, child, grandchild, ...; sorted by their leaf."""
    leaves = [x for x in t.nodes if not any(len(y) == len(x) + 1 and y[:-1] == x for y in t.nodes)]
    return [tuple(leaf[:k] for k in range(len(leaf) + 1)) for leaf in sorted(leaves)]


def max_branch_length(t: TreeTrunc) -> int:
    return max(len(x) for x in t.nodes)


# --------------------------------------------------------------------------
# groups of involutions


def group(t: TreeTrunc, s: int, n: int) -> list[Node]:
    """Canonical generators of ``G_s^n``: level-``s`` nodes of index <= n."""
    if s == 0:
        return []
    return t.nodes_at(s, n)


@dataclass(frozen=True)
class InvolutionElement:
    """Element of a sum of ``Z/2`` copies, given by its support."""

    level: int
    support: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        sup = frozenset(tuple(x) for x in self.support)
        if any(len(x) != self.level for x in sup):
            raise ValueError("support must consist of level-sized nodes")
        object.__setattr__(self, "support", sup)

    @classmethod
    def generator(cls, node: Node) -> "InvolutionElement":
        return cls(len(node), frozenset([tuple(node)]))

    @classmethod
    def identity(cls, level: int) -> "InvolutionElement":
        return cls(level, frozenset())

    def __add__(self, other: "InvolutionElement") -> "InvolutionElement":
        if self.level != other.level:
            raise ValueError("elements live at different levels")
        return InvolutionElement(self.level, self.support ^ other.support)

    @property
    def is_identity(self) -> bool:
        return not self.support

    def to_mask(self, generators: Sequence[Node]) -> int:
        pos = {g: k for k, g in enumerate(generators)}
        mask = 0
        for x in self.support:
            if x not in pos:
                raise ValueError(f"{x} is not a generator here")
            mask |= 1 << pos[x]
        return mask

    @classmethod
    def from_mask(cls, level: int, generators: Sequence[Node], mask: int) -> "InvolutionElement":
        return cls(level, frozenset(g for k, g in enumerate(generators) if mask >> k & 1))


def parity(g: InvolutionElement | int) -> str:
    count = len(g.support) if isinstance(g, InvolutionElement) else bin(int(g)).count("1")
    return "odd" if count % 2 else "even"


def is_odd(mask: int) -> bool:
    return bin(mask).count("1") % 2 == 1


def rho(t: TreeTrunc, from_level: int, to_level: int, g: InvolutionElement) -> InvolutionElement:
    """Send each generator to its initial segment of length ``to_level``."""
    if not 0 <= to_level < from_level:
        raise LevelOrderViolation(f"need 0 <= {to_level} < {from_level}")
    if g.level != from_level:
        raise LevelOrderViolation("element does not live at from_level")
    if to_level == 0:
        return InvolutionElement.identity(0)
    out: frozenset = frozenset()
    for x in g.support:
        out = out ^ frozenset([x[:to_level]])
    return InvolutionElement(to_level, out)


def rho_injective(t: TreeTrunc, from_level: int, to_level: int, n: int) -> bool:
    """Whether the generator map of ``rho`` is injective on ``G_from^n``."""
    gens = group(t, from_level, n)
    if to_level == 0:
        return not gens
    images = [x[:to_level] for x in gens]
    return len(set(images)) == len(images)


def rho_masks(from_gens: Sequence[Node], to_gens: Sequence[Node]) -> list[int]:
    """Image mask in ``to_gens`` of each generator in ``from_gens``."""
    if not to_gens:
        return [0] * len(from_gens)
    pos = {g: k for k, g in enumerate(to_gens)}
    level = len(to_gens[0])
    return [1 << pos[g[:level]] for g in from_gens]


def mask_image(mask: int, images: Sequence[int]) -> int:
    out = 0
    k = 0
    while mask:
        if mask & 1:
            out ^= images[k]
        mask >>= 1
        k += 1
    return out


def coherent_sequence_check(t: TreeTrunc, gs: Sequence[InvolutionElement]) -> bool:
    """``gs[k]`` lives at level ``k+1``; checks rho(g_{s+1}) = g_s for all s."""
    for k in range(len(gs) - 1):
        if rho(t, gs[k + 1].level, gs[k].level, gs[k + 1]) != gs[k]:
            return False
    return True


def is_chain_witness(t: TreeTrunc, gs: Sequence[InvolutionElement]) -> bool:
    """True when every element is a single generator and they lie on one chain."""
    if not all(len(g.support) == 1 for g in gs):
        return False
    nodes = [next(iter(g.support)) for g in gs]
    return all(nodes[k + 1][:-1] == nodes[k] for k in range(len(nodes) - 1)) and all(x in t for x in nodes)


# --------------------------------------------------------------------------
# actions


@dataclass(frozen=True, eq=False)
class GroupActionTable:
    """Action of a group of involutions on ``domain_size`` class indices.

    ``table[k, c]`` is the image of class ``c`` under generator ``k``.
    """

    generators: tuple
    domain_size: int
    table: np.ndarray

    def __post_init__(self):
        tab = np.asarray(self.table, dtype=np.int64).reshape(len(self.generators), self.domain_size)
        tab = np.ascontiguousarray(tab)
        tab.setflags(write=False)
        object.__setattr__(self, "generators", tuple(tuple(g) for g in self.generators))
        object.__setattr__(self, "table", tab)

    @property
    def order(self) -> int:
        return 1 << len(self.generators)

    def element_table(self, mask: int) -> np.ndarray:
        out = np.arange(self.domain_size, dtype=np.int64)
        k = 0
        while mask:
            if mask & 1:
                out = self.table[k][out]
            mask >>= 1
            k += 1
        return out

    def all_tables(self) -> np.ndarray:
        """Array ``[2^g, domain]`` with the action of every element (by mask)."""
        out = np.empty((self.order, self.domain_size), dtype=np.int64)
        out[0] = np.arange(self.domain_size)
        for mask in range(1, self.order):
            low = mask & -mask
            k = low.bit_length() - 1
            out[mask] = self.table[k][out[mask ^ low]]
        return out

    def apply(self, g: InvolutionElement | int, c: int) -> int:
        mask = g if isinstance(g, int) else g.to_mask(self.generators)
        if not 0 <= c < self.domain_size:
            raise ClassOutOfRange(f"class {c} outside 0..{self.domain_size - 1}")
        return int(self.element_table(mask)[c])

    def axioms_hold(self) -> bool:
        """Generators are involutions and commute (so masks give a group action)."""
        ident = np.arange(self.domain_size)
        for k in range(len(self.generators)):
            if not np.array_equal(self.table[k][self.table[k]], ident):
                return False
            for j in range(k):
                if not np.array_equal(self.table[k][self.table[j]], self.table[j][self.table[k]]):
                    return False
        return True

    def fixed_point(self) -> tuple[int, int] | None:
        """A pair (mask, class) with a non-identity element fixing the class."""
        tabs = self.all_tables()
        for mask in range(1, self.order):
            hits = np.flatnonzero(tabs[mask] == np.arange(self.domain_size))
            if hits.size:
                return mask, int(hits[0])
        return None

    def is_free(self) -> bool:
        return self.fixed_point() is None

    def to_json(self) -> dict:
        return {
            "generators": [format_node(g) for g in self.generators],
            "domain_size": self.domain_size,
            "table": self.table.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "GroupActionTable":
        gens = tuple(parse_node(g) for g in data["generators"])
        return cls(gens, int(data["domain_size"]), np.array(data["table"], dtype=np.int64))

    @classmethod
    def trivial(cls, domain_size: int, generators: Sequence[Node] = ()) -> "GroupActionTable":
        tab = np.tile(np.arange(domain_size, dtype=np.int64), (len(generators), 1))
        return cls(tuple(generators), domain_size, tab)


def skew_diagonal_apply(
    g: InvolutionElement | int, action: GroupActionTable, classes: Sequence[int]
) -> list[int]:
    mask = g if isinstance(g, int) else g.to_mask(action.generators)
    arr = np.asarray(classes, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= action.domain_size):
        raise ClassOutOfRange("class index outside the action's domain")
    image = action.element_table(mask)[arr]
    if is_odd(mask):
        image = image[::-1]
    return image.tolist()


def skew_apply_array(table_row: np.ndarray, odd: bool, strings: np.ndarray) -> np.ndarray:
    """Vectorised skew-diagonal image of the rows of ``strings``."""
    out = table_row[strings]
    return out[..., ::-1] if odd else out


def check_subordinate(
    upper: GroupActionTable, lower: GroupActionTable, proj: np.ndarray, images: Sequence[int]
) -> tuple[int, int] | None:
    """First (generator, class) violating ``proj(h c) = rho(h) proj(c)``."""
    for k in range(len(upper.generators)):
        lhs = proj[upper.table[k]]
        rhs = lower.element_table(images[k])[proj]
        bad = np.flatnonzero(lhs != rhs)
        if bad.size:
            return k, int(bad[0])
    return None


def extend_action(
    q_classes: int,
    r_classes_per_q: int,
    base_action: GroupActionTable,
    sub_action: GroupActionTable,
    rho_map: Sequence[int],
    z_index: int,
    new_generator: Node | None = None,
    r_to_q: np.ndarray | None = None,
) -> GroupActionTable:
    """Extend a free ``H`` action on R-classes to a free ``H x Z2`` action.

    ``base_action`` is the ``G x Z2`` action on Q-classes, where ``Z2`` is the
    generator ``z_index``.  ``rho_map`` gives the mask in ``base_action`` of
    each ``H`` generator.  The new involution pairs ``H``-orbits lying over
    ``Q`` and ``z Q``, lowest index first, and commutes with ``H``.
    """
    n_r = q_classes * r_classes_per_q
    if r_to_q is None:
        r_to_q = np.repeat(np.arange(q_classes), r_classes_per_q)
    r_to_q = np.asarray(r_to_q, dtype=np.int64)
    if sub_action.domain_size != n_r or base_action.domain_size != q_classes:
        raise HypothesisViolated("domain sizes do not match the class counts")
    if not sub_action.axioms_hold():
        raise HypothesisViolated("H table is not an action of a group of involutions")
    fp = sub_action.fixed_point()
    if fp is not None:
        raise HypothesisViolated("H does not act freely", {"element": fp[0], "class": fp[1]})
    bad = check_subordinate(sub_action, base_action, r_to_q, rho_map)
    if bad is not None:
        raise HypothesisViolated("H action is not subordinate via rho", {"generator": bad[0], "class": bad[1]})
    z_mask = 1 << z_index
    z_on_q = base_action.table[z_index]
    h_tabs = sub_action.all_tables()
    h1 = [mask for mask in range(sub_action.order) if mask_image(mask, rho_map) in (0, z_mask)]
    # parity hypothesis: every Z2-orbit on Q-classes carries an even number of H1-orbits
    seen_q = np.zeros(q_classes, dtype=bool)
    for q in range(q_classes):
        if seen_q[q]:
            continue
        orbit_q = {q, int(z_on_q[q])}
        for x in orbit_q:
            seen_q[x] = True
        members = np.flatnonzero(np.isin(r_to_q, list(orbit_q)))
        covered: set[int] = set()
        count = 0
        for r in members.tolist():
            if r in covered:
                continue
            count += 1
            covered.update(int(h_tabs[mask][r]) for mask in h1)
        if count % 2:
            raise HypothesisViolated(
                "a Z2 orbit contains an odd number of H1 orbits",
                {"q_orbit": sorted(orbit_q), "h1_orbits": count},
            )
    z = np.full(n_r, -1, dtype=np.int64)
    for r in range(n_r):
        if z[r] >= 0:
            continue
        orbit = set(h_tabs[:, r].tolist())
        target_q = int(z_on_q[r_to_q[r]])
        partner = -1
        for r2 in np.flatnonzero(r_to_q == target_q).tolist():
            if r2 in orbit or z[r2] >= 0:
                continue
            partner = r2
            break
        if partner < 0:
            raise HypothesisViolated("no free partner orbit left", {"class": r})
        z[h_tabs[:, r]] = h_tabs[:, partner]
        z[h_tabs[:, partner]] = h_tabs[:, r]
    gens = tuple(sub_action.generators) + ((tuple(new_generator),) if new_generator is not None else (("z",),))
    out = GroupActionTable(gens, n_r, np.vstack([sub_action.table, z[None, :]]))
    if not out.axioms_hold() or not out.is_free():
        raise HypothesisViolated("extension failed to produce a free action")
    return out
