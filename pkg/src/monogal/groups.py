"""Permutation-group analysis of monodromy output.

Permutations act on solution indices, 0-based internally (1-based only in
the perm-script text format). Groups carry a lazily built deterministic
stabilizer chain (base points, transversals, strong generators) that backs
exact order computation, membership, block-action kernels, and the Galois
width recursion.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "Permutation",
    "PermGroup",
    "BlockSystem",
    "NotTransitive",
    "InvalidBlocks",
    "UnsupportedGroup",
    "orbits",
    "minimal_blocks",
    "minimal_nontrivial_blocks",
    "order",
    "block_action",
    "is_natural_sym_or_alt",
    "is_solvable",
    "galois_width",
    "is_even_subgroup",
    "parse_perm_script",
]


class NotTransitive(ValueError):
    """The operation requires a transitive group."""


class InvalidBlocks(ValueError):
    """The partition is not preserved by the group."""


class UnsupportedGroup(ValueError):
    """Primitive, non-solvable, non-natural-Sym/Alt group: width not computed."""

    def __init__(self, order: int, degree: int):
        super().__init__(f"cannot compute Galois width: primitive non-solvable group of order {order}, degree {degree}")
        self.order = order
        self.degree = degree


# ============================================================
# Permutations
# ============================================================


class Permutation:
    """A bijection on {0, ..., d-1}, stored as the image tuple."""

    __slots__ = ("images",)

    def __init__(self, images: Sequence[int]):
        t = tuple(int(v) for v in images)
        if sorted(t) != list(range(len(t))):
            raise ValueError(f"not a bijection on 0..{len(t) - 1}: {t}")
        self.images = t

    @classmethod
    def identity(cls, degree: int) -> "Permutation":
        return cls(range(degree))

    @property
    def degree(self) -> int:
        return len(self.images)

    def __call__(self, point: int) -> int:
        return self.images[point]

    def __mul__(self, other: "Permutation") -> "Permutation":
        # (p * q)(x) = q(p(x)): apply self first, then other.
        if other.degree != self.degree:
            raise ValueError("degree mismatch")
        return Permutation(tuple(other.images[v] for v in self.images))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.images)
        for src, dst in enumerate(self.images):
            inv[dst] = src
        return Permutation(inv)

    def is_identity(self) -> bool:
        return all(v == idx for idx, v in enumerate(self.images))

    def is_even(self) -> bool:
        seen = [False] * len(self.images)
        cycles = 0
        for start in range(len(self.images)):
            if not seen[start]:
                cycles += 1
                p = start
                while not seen[p]:
                    seen[p] = True
                    p = self.images[p]
        return (len(self.images) - cycles) % 2 == 0

    def moved_points(self) -> list[int]:
        return [idx for idx, v in enumerate(self.images) if v != idx]

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and self.images == other.images

    def __hash__(self) -> int:
        return hash(self.images)

    def __repr__(self) -> str:
        return f"Permutation({list(self.images)})"


# Raw-tuple helpers used by the stabilizer chain (cheaper than objects).


def _mul(a: tuple, b: tuple) -> tuple:
    return tuple(b[v] for v in a)


def _inv(a: tuple) -> tuple:
    out = [0] * len(a)
    for src, dst in enumerate(a):
        out[dst] = src
    return tuple(out)


def _smallest_moved(a: tuple) -> int:
    for idx, v in enumerate(a):
        if v != idx:
            return idx
    raise ValueError("identity permutation has no moved point")


# ============================================================
# Deterministic stabilizer chain (Schreier-Sims)
# ============================================================


class _Chain:
    """Base, per-level strong generators, per-level transversals."""

    __slots__ = ("degree", "base", "levels", "transversals")

    def __init__(self, degree: int, base: list[int], levels: list[list[tuple]], transversals: list[dict[int, tuple]]):
        self.degree = degree
        self.base = base
        self.levels = levels  # levels[i]: strong generators fixing base[:i]
        self.transversals = transversals

    def order(self) -> int:
        n = 1
        for t in self.transversals:
            n *= len(t)
        return n

    def strip(self, g: tuple, lo: int = 0) -> tuple[tuple, int]:
        """Sifts g through levels >= lo; returns (residue, level reached)."""
        for lvl in range(lo, len(self.base)):
            p = g[self.base[lvl]]
            rep = self.transversals[lvl].get(p)
            if rep is None:
                return g, lvl
            g = _mul(g, _inv(rep))
        return g, len(self.base)

    def contains(self, g: tuple) -> bool:
        residue, _ = self.strip(g)
        return all(v == idx for idx, v in enumerate(residue))


def _orbit_transversal(gens: list[tuple], beta: int, degree: int) -> dict[int, tuple]:
    ident = tuple(range(degree))
    trans = {beta: ident}
    queue = [beta]
    while queue:
        p = queue.pop(0)
        up = trans[p]
        for g in gens:
            q = g[p]
            if q not in trans:
                trans[q] = _mul(up, g)
                queue.append(q)
    return trans


def _schreier_sims(degree: int, gens: Iterable[tuple], seed_base: Sequence[int] = ()) -> _Chain:
    """Deterministic Schreier-Sims; optional pre-seeded base points."""
    ident = tuple(range(degree))
    sgs: list[tuple] = []
    seen = set()
    for g in gens:
        if g != ident and g not in seen:
            sgs.append(g)
            seen.add(g)
    base: list[int] = list(seed_base)
    if not sgs:
        levels = [[] for _ in base]
        transversals = [{b: ident} for b in base]
        return _Chain(degree, base, levels, transversals)
    for g in sgs:
        if all(g[b] == b for b in base):
            base.append(_smallest_moved(g))
    levels = [[g for g in sgs if all(g[b] == b for b in base[:i])] for i in range(len(base))]
    transversals = [_orbit_transversal(levels[i], base[i], degree) for i in range(len(base))]
    chain = _Chain(degree, base, levels, transversals)

    i = len(base) - 1
    while i >= 0:
        clean = True
        for p in sorted(chain.transversals[i]):
            up = chain.transversals[i][p]
            for g in chain.levels[i]:
                rep = chain.transversals[i][g[p]]
                sch = _mul(_mul(up, g), _inv(rep))
                if sch == ident:
                    continue
                residue, j = chain.strip(sch, i + 1)
                if residue == ident:
                    continue
                clean = False
                if j == len(chain.base):
                    chain.base.append(_smallest_moved(residue))
                    chain.levels.append([])
                    chain.transversals.append({})
                for lvl in range(i + 1, j + 1):
                    chain.levels[lvl].append(residue)
                    chain.transversals[lvl] = _orbit_transversal(chain.levels[lvl], chain.base[lvl], degree)
                i = j
                break
            if not clean:
                break
        if clean:
            i -= 1
    return chain


# ============================================================
# Permutation groups
# ============================================================


class PermGroup:
    """Group generated by permutations of a common degree.

    The stabilizer chain is built lazily on first use and reused afterwards;
    construction first discards generators already contained in the group of
    the previous ones, which keeps chains small for the long generator lists
    monodromy produces.
    """

    def __init__(self, degree: int, generators: Iterable[Permutation] = ()):
        self.degree = int(degree)
        gens = tuple(generators)
        for g in gens:
            if g.degree != self.degree:
                raise ValueError(f"generator degree {g.degree} != group degree {self.degree}")
        self.generators = gens
        self._chain: _Chain | None = None
        self._reduced: list[tuple] | None = None

    def _ensure_chain(self) -> _Chain:
        if self._chain is None:
            ident = tuple(range(self.degree))
            reduced: list[tuple] = []
            chain = _schreier_sims(self.degree, [])
            for g in self.generators:
                t = g.images
                if t == ident or chain.contains(t):
                    continue
                reduced.append(t)
                chain = _schreier_sims(self.degree, reduced)
            self._chain = chain
            self._reduced = reduced
        return self._chain

    def reduced_generators(self) -> list[Permutation]:
        """A sub-list of the generators that still generates the group."""
        self._ensure_chain()
        return [Permutation(t) for t in self._reduced]

    def order(self) -> int:
        return self._ensure_chain().order()

    def contains(self, p: Permutation) -> bool:
        if p.degree != self.degree:
            return False
        return self._ensure_chain().contains(p.images)

    def is_trivial(self) -> bool:
        return self.order() == 1

    def __repr__(self) -> str:
        return f"PermGroup(degree={self.degree}, generators={len(self.generators)})"


def order(group: PermGroup) -> int:
    """Exact order of the generated group (arbitrary precision)."""
    return group.order()


def orbits(group: PermGroup) -> list[tuple[int, ...]]:
    """Orbit partition of {0..d-1}; cells sorted, ordered by minimal element."""
    remaining = set(range(group.degree))
    cells = []
    while remaining:
        start = min(remaining)
        orbit = {start}
        queue = [start]
        while queue:
            p = queue.pop(0)
            for g in group.generators:
                q = g(p)
                if q not in orbit:
                    orbit.add(q)
                    queue.append(q)
        cells.append(tuple(sorted(orbit)))
        remaining -= orbit
    return cells


@dataclass(frozen=True)
class BlockSystem:
    """Partition of {0..d-1} into equal-size cells permuted by the group."""

    cells: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        sizes = {len(c) for c in self.cells}
        if len(sizes) != 1:
            raise ValueError("block cells must have equal size")
        pts = sorted(p for c in self.cells for p in c)
        if pts != list(range(len(pts))):
            raise ValueError("block cells must partition 0..d-1")

    @property
    def degree(self) -> int:
        return sum(len(c) for c in self.cells)

    @property
    def block_size(self) -> int:
        return len(self.cells[0])

    @property
    def num_cells(self) -> int:
        return len(self.cells)


def _check_transitive(group: PermGroup) -> None:
    if group.degree > 1 and len(orbits(group)) != 1:
        raise NotTransitive(f"group has {len(orbits(group))} orbits")


def minimal_blocks(group: PermGroup, pair: tuple[int, int]) -> BlockSystem | None:
    """Minimal block system with the two given points co-celled.

    Union-find refinement: start from the merged pair and close under the
    generators until the partition is group-invariant. Returns None when the
    closure is the trivial single cell of all points.

    Raises:
        NotTransitive: the group is not transitive.
    """
    _check_transitive(group)
    a, b = pair
    d = group.degree
    if not (0 <= a < d and 0 <= b < d) or a == b:
        raise ValueError(f"bad point pair {pair}")
    parent = list(range(d))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> int:
        rx, ry = find(x), find(y)
        if rx == ry:
            return rx
        if rx > ry:
            rx, ry = ry, rx
        parent[ry] = rx
        return ry  # the absorbed representative

    gens = [g.images for g in group.generators]
    queue = [union(a, b)]
    while queue:
        c = queue.pop()
        r = find(c)
        for g in gens:
            x, y = g[c], g[r]
            if find(x) != find(y):
                queue.append(union(x, y))
    cells_by_root: dict[int, list[int]] = {}
    for p in range(d):
        cells_by_root.setdefault(find(p), []).append(p)
    if len(cells_by_root) == 1:
        return None
    cells = sorted((tuple(sorted(c)) for c in cells_by_root.values()), key=lambda c: c[0])
    return BlockSystem(tuple(cells))


def minimal_nontrivial_blocks(group: PermGroup) -> BlockSystem | None:
    """Scans pairs (0, j); returns a minimal nontrivial block system if any.

    When several exist, picks the one whose lexicographically smallest cell
    is smallest (deterministic). Returns None for a primitive group.
    """
    _check_transitive(group)
    best: BlockSystem | None = None
    for j in range(1, group.degree):
        system = minimal_blocks(group, (0, j))
        if system is not None and (best is None or system.cells[0] < best.cells[0]):
            best = system
    return best


def block_action(group: PermGroup, blocks: BlockSystem) -> tuple[PermGroup, PermGroup]:
    """Induced action on cells plus its kernel on points.

    Each generator is paired with its induced cell permutation on a combined
    domain (cells first, then points) and a stabilizer chain is built with
    every cell position seeded into the base. Strong generators below the
    cell levels act trivially on every cell, so their point parts generate
    the kernel. |image| * |kernel| = |G|.

    Raises:
        InvalidBlocks: the partition is not preserved by some generator.
    """
    d = group.degree
    if blocks.degree != d:
        raise InvalidBlocks(f"block system degree {blocks.degree} != group degree {d}")
    k = blocks.num_cells
    cell_of = [0] * d
    for idx, cell in enumerate(blocks.cells):
        for p in cell:
            cell_of[p] = idx

    image_gens = []
    pair_gens = []
    for g in group.generators:
        cell_img = [-1] * k
        for idx, cell in enumerate(blocks.cells):
            targets = {cell_of[g(p)] for p in cell}
            if len(targets) != 1:
                raise InvalidBlocks(f"generator splits cell {cell}")
            cell_img[idx] = targets.pop()
        if sorted(cell_img) != list(range(k)):
            raise InvalidBlocks("induced cell map is not a bijection")
        image_gens.append(Permutation(cell_img))
        pair_gens.append(tuple(cell_img) + tuple(k + g(p) for p in range(d)))

    chain = _schreier_sims(k + d, pair_gens, seed_base=range(k))
    kernel_gens = []
    seen = set()
    for g in chain.levels[k] if len(chain.levels) > k else []:
        point_part = tuple(v - k for v in g[k:])
        if point_part not in seen:
            seen.add(point_part)
            kernel_gens.append(Permutation(point_part))
    image = PermGroup(k, image_gens)
    kernel = PermGroup(d, kernel_gens)
    return image, kernel


def is_natural_sym_or_alt(group: PermGroup) -> tuple[str, int] | None:
    """("Sym", n) or ("Alt", n) when the group is the full symmetric or
    alternating group on its n-point support; None otherwise."""
    support = sorted({p for g in group.generators for p in g.moved_points()})
    n = len(support)
    if n < 2:
        return None
    reached = {support[0]}
    queue = [support[0]]
    while queue:
        p = queue.pop()
        for g in group.generators:
            q = g(p)
            if q not in reached:
                reached.add(q)
                queue.append(q)
    if reached != set(support):
        return None
    size = group.order()
    if size == math.factorial(n):
        return ("Sym", n)
    if size * 2 == math.factorial(n) and all(g.is_even() for g in group.generators):
        return ("Alt", n)
    return None


def _normal_closure(group: PermGroup, elements: list[Permutation]) -> PermGroup:
    """Smallest normal subgroup of `group` containing the elements."""
    ident = tuple(range(group.degree))
    gens: list[tuple] = []
    for e in elements:
        if e.images != ident and e.images not in gens:
            gens.append(e.images)
    chain = _schreier_sims(group.degree, gens)
    conj_by = [(g.images, _inv(g.images)) for g in group.reduced_generators()]
    queue = list(gens)
    while queue:
        n = queue.pop(0)
        for g, ginv in conj_by:
            c = _mul(_mul(ginv, n), g)
            if not chain.contains(c):
                gens.append(c)
                chain = _schreier_sims(group.degree, gens)
                queue.append(c)
    result = PermGroup(group.degree, [Permutation(t) for t in gens])
    result._chain = chain
    result._reduced = list(gens)
    return result


def _derived_subgroup(group: PermGroup) -> PermGroup:
    gens = group.reduced_generators()
    comms = []
    for i, a in enumerate(gens):
        for b in gens[i + 1 :]:
            comms.append(a.inverse() * b.inverse() * a * b)
    return _normal_closure(group, comms)


def is_solvable(group: PermGroup) -> bool:
    """True iff the derived series reaches the trivial group."""
    current = group
    size = current.order()
    while size > 1:
        derived = _derived_subgroup(current)
        dsize = derived.order()
        if dsize == size:
            return False
        current, size = derived, dsize
    return True


def is_even_subgroup(group: PermGroup) -> bool:
    """True iff every generator is an even permutation."""
    return all(g.is_even() for g in group.generators)


def _largest_prime_factor(n: int, degree: int) -> int:
    # Prime factors of |G| for G <= S_d never exceed d.
    largest = 1
    for p in range(2, degree + 1):
        while n % p == 0:
            n //= p
            largest = p
    if n != 1:
        raise ValueError(f"leftover factor {n} exceeds the degree bound")
    return largest


def _restrict_to_orbit(group: PermGroup, orbit: tuple[int, ...]) -> PermGroup:
    index = {p: i for i, p in enumerate(orbit)}
    gens = [Permutation(tuple(index[g(p)] for p in orbit)) for g in group.generators]
    return PermGroup(len(orbit), gens)


def galois_width(group: PermGroup) -> int:
    """Minimax of subgroup indices over unrefinable subgroup chains.

    Recursion: trivial group -> 1; intransitive -> max over orbit images;
    natural Sym(n)/Alt(n) -> n, except 3 when n = 4; solvable -> largest
    prime factor of the order; transitive imprimitive -> max of the widths
    of the kernel and image of a minimal nontrivial block action.

    Raises:
        UnsupportedGroup: primitive non-solvable group that is not a natural
            symmetric/alternating group (carries order and degree).
    """
    size = group.order()
    if size == 1:
        return 1
    orbs = orbits(group)
    if len(orbs) > 1:
        return max(galois_width(_restrict_to_orbit(group, orbit)) for orbit in orbs)
    natural = is_natural_sym_or_alt(group)
    if natural is not None:
        n = natural[1]
        return 3 if n == 4 else n
    if is_solvable(group):
        return _largest_prime_factor(size, group.degree)
    blocks = minimal_nontrivial_blocks(group)
    if blocks is not None:
        image, kernel = block_action(group, blocks)
        return max(galois_width(kernel), galois_width(image))
    raise UnsupportedGroup(size, group.degree)


# ============================================================
# Perm-script parsing
# ============================================================

_PERMLIST_RE = re.compile(r"^\s*\w+\s*:=\s*PermList\(\[([^\]]*)\]\)\s*;\s*$")
_GROUP_RE = re.compile(r"^\s*\w+\s*:=\s*Group\(.*\)\s*;\s*$")


def parse_perm_script(text: str) -> list[Permutation]:
    """Parses PermList lines (1-based images) into 0-based Permutations.

    Raises:
        ValueError: unrecognized line or a non-bijective image list.
    """
    perms = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        m = _PERMLIST_RE.match(line)
        if m:
            body = m.group(1).strip()
            if not body:
                raise ValueError(f"line {lineno}: empty image list")
            try:
                images = [int(tok) for tok in body.split(",")]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: bad image list: {exc}") from None
            if sorted(images) != list(range(1, len(images) + 1)):
                raise ValueError(f"line {lineno}: image list is not a bijection on 1..{len(images)}")
            perms.append(Permutation([v - 1 for v in images]))
        elif _GROUP_RE.match(line):
            continue
        else:
            raise ValueError(f"line {lineno}: unrecognized perm-script line")
    return perms
