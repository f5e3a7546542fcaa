"""Finite relational structures over explicit vocabularies.

Universes are 1-based index ranges 1..size.  Relation tables are sets of
index tuples.  The distinguished binary symbol ``<=`` is the order; when it
is exactly the natural order on 1..size it is stored implicitly (flag
``leq_natural``), which keeps paper-scale structures (tens of thousands of
elements) cheap to build, compare and serialize.

Structures are immutable value objects; every operation returns a new
structure, so they are safe to share across threads without coordination.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

ORDER = "<="

Tuple_ = tuple[int, ...]
Table = frozenset[Tuple_]


class StructureError(ValueError):
    """Base for structure construction and operation errors."""


class VocabularyError(StructureError):
    """Invalid vocabulary, or an operation applied over the wrong vocabulary."""


class MissingSymbolError(VocabularyError):
    """A required symbol is absent from the vocabulary."""


class NotOrderedError(StructureError):
    """The order relation is not a linear order where one is required."""


class StructureParseError(StructureError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Vocabulary:
    """Relation symbols (name, arity 1 or 2) and constant names, all unique."""

    relations: tuple[tuple[str, int], ...]
    constants: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        names = [n for n, _ in self.relations] + list(self.constants)
        if len(names) != len(set(names)):
            raise VocabularyError(f"duplicate symbol names in vocabulary: {names}")
        for name, arity in self.relations:
            if arity not in (1, 2):
                raise VocabularyError(f"relation {name}: arity must be 1 or 2, got {arity}")

    def arity(self, name: str) -> int:
        for rel, arity in self.relations:
            if rel == name:
                return arity
        raise MissingSymbolError(f"relation {name!r} not in vocabulary")

    def has_relation(self, name: str) -> bool:
        return any(rel == name for rel, _ in self.relations)

    def has_constant(self, name: str) -> bool:
        return name in self.constants

    def issubset(self, other: "Vocabulary") -> bool:
        return set(self.relations) <= set(other.relations) and set(self.constants) <= set(
            other.constants
        )

    def with_relation(self, name: str, arity: int) -> "Vocabulary":
        if self.has_relation(name):
            if self.arity(name) != arity:
                raise VocabularyError(f"relation {name} already declared with arity {self.arity(name)}")
            return self
        if self.has_constant(name):
            raise VocabularyError(f"{name!r} already names a constant")
        return Vocabulary(self.relations + ((name, arity),), self.constants)

    def with_constants(self, *names: str) -> "Vocabulary":
        vocab = self
        for name in names:
            if vocab.has_constant(name):
                continue
            if vocab.has_relation(name):
                raise VocabularyError(f"{name!r} already names a relation")
            vocab = Vocabulary(vocab.relations, vocab.constants + (name,))
        return vocab


def _natural_table(size: int) -> Table:
    return frozenset((i, j) for i in range(1, size + 1) for j in range(i, size + 1))


@dataclass(frozen=True, eq=False)
class Structure:
    """A finite structure: vocabulary, universe 1..size, tables, constants.

    ``leq_natural`` means the ``<=`` table is implicitly {(i,j) : i <= j};
    in that case ``tables`` has no ``<=`` entry.  Construction normalizes an
    explicit table equal to the natural order into the implicit form.
    """

    vocab: Vocabulary
    size: int
    tables: Mapping[str, Table] = field(default_factory=dict)
    consts: Mapping[str, int] = field(default_factory=dict)
    leq_natural: bool = False

    def __post_init__(self) -> None:
        if self.size < 1:
            raise StructureError(f"size must be positive, got {self.size}")
        tables: dict[str, Table] = {}
        for name, tups in self.tables.items():
            if not self.vocab.has_relation(name):
                raise VocabularyError(f"table for undeclared relation {name!r}")
            arity = self.vocab.arity(name)
            norm = frozenset(tuple(t) for t in tups)
            for t in norm:
                if len(t) != arity:
                    raise StructureError(f"{name}: tuple {t} does not match arity {arity}")
                if not all(1 <= i <= self.size for i in t):
                    raise StructureError(f"{name}: tuple {t} out of range 1..{self.size}")
            tables[name] = norm
        if self.leq_natural:
            if not self.vocab.has_relation(ORDER):
                raise MissingSymbolError("leq_natural requires <= in the vocabulary")
            tables.pop(ORDER, None)
        elif ORDER in tables and len(tables[ORDER]) == self.size * (self.size + 1) // 2:
            if all(a <= b for a, b in tables[ORDER]):
                del tables[ORDER]
                object.__setattr__(self, "leq_natural", True)
        for name, idx in self.consts.items():
            if not self.vocab.has_constant(name):
                raise VocabularyError(f"value for undeclared constant {name!r}")
            if not 1 <= idx <= self.size:
                raise StructureError(f"constant {name} = {idx} out of range 1..{self.size}")
        missing = set(self.vocab.constants) - set(self.consts)
        if missing:
            raise StructureError(f"constants without values: {sorted(missing)}")
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "consts", dict(self.consts))

    # -- queries ---------------------------------------------------------

    def universe(self) -> range:
        return range(1, self.size + 1)

    def has(self, rel: str, tup: Tuple_) -> bool:
        if rel == ORDER and self.leq_natural:
            return tup[0] <= tup[1]
        return tup in self.tables.get(rel, ())

    def leq(self, a: int, b: int) -> bool:
        if self.leq_natural:
            return a <= b
        return (a, b) in self.tables.get(ORDER, ())

    def table(self, rel: str) -> Table:
        """Explicit table; materializes the natural order (small sizes only)."""
        if rel == ORDER and self.leq_natural:
            return _natural_table(self.size)
        return self.tables.get(rel, frozenset())

    def table_size(self, rel: str) -> int:
        if rel == ORDER and self.leq_natural:
            return self.size * (self.size + 1) // 2
        return len(self.tables.get(rel, ()))

    def order_ranks(self) -> list[int] | None:
        """rank[i-1] = position of element i in the order, or None if <= is
        not a linear order.  For natural orders, rank(i) = i."""
        if self.leq_natural:
            return list(self.universe())
        if not self.vocab.has_relation(ORDER):
            raise MissingSymbolError("vocabulary lacks <=")
        table = self.tables.get(ORDER, frozenset())
        n = self.size
        if len(table) != n * (n + 1) // 2:
            return None
        down = [0] * (n + 1)
        for a, b in table:
            down[b] += 1
        ranks = down[1:]
        if sorted(ranks) != list(range(1, n + 1)):
            return None
        # ranks consistent iff membership coincides with rank comparison
        for a in self.universe():
            for b in self.universe():
                if ((a, b) in table) != (ranks[a - 1] <= ranks[b - 1]):
                    return None
        return ranks

    def order_min(self) -> int:
        return self._extreme(min)

    def order_max(self) -> int:
        return self._extreme(max)

    def _extreme(self, pick) -> int:
        if self.leq_natural:
            return pick(self.universe())
        ranks = self.order_ranks()
        if ranks is None:
            raise NotOrderedError("<= is not a linear order")
        target = pick(ranks)
        return ranks.index(target) + 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Structure):
            return NotImplemented
        return (
            self.vocab == other.vocab
            and self.size == other.size
            and self.leq_natural == other.leq_natural
            and self.tables == other.tables
            and self.consts == other.consts
        )

    def __repr__(self) -> str:
        rels = ", ".join(f"{n}:{self.table_size(n)}" for n, _ in self.vocab.relations)
        return f"Structure(size={self.size}, {rels})"


# -- predicates ------------------------------------------------------------


def check_ordered(a: Structure) -> bool:
    """True iff <= is a reflexive, antisymmetric, transitive, total order."""
    if not a.vocab.has_relation(ORDER):
        raise MissingSymbolError("vocabulary lacks <=")
    if a.leq_natural:
        return True
    return a.order_ranks() is not None


def check_partial_successor(a: Structure) -> bool:
    """True iff every S-pair (x, y) has y the immediate order successor of x."""
    if not a.vocab.has_relation("S"):
        raise MissingSymbolError("vocabulary lacks S")
    ranks = a.order_ranks()
    if ranks is None:
        raise NotOrderedError("<= is not a linear order")
    return all(ranks[y - 1] == ranks[x - 1] + 1 for x, y in a.table("S"))


def is_partial_isomorphism(
    a: Structure,
    b: Structure,
    pairs: Iterable[tuple[int, int]],
    respect_constants: bool = True,
) -> bool:
    """Check that the pair set is an injective map preserving and reflecting
    every relation in both directions on its domain.

    With ``respect_constants``, every constant name shared by both
    vocabularies contributes an implicit pair (c^a, c^b).
    """
    mapping: dict[int, int] = {}
    inverse: dict[int, int] = {}
    items = list(pairs)
    if respect_constants:
        for name in a.vocab.constants:
            if b.vocab.has_constant(name):
                items.append((a.consts[name], b.consts[name]))
    for x, y in items:
        if mapping.get(x, y) != y or inverse.get(y, x) != x:
            return False
        mapping[x] = y
        inverse[y] = x
    rels = set(a.vocab.relations) & set(b.vocab.relations)
    dom = list(mapping.items())
    for name, arity in rels:
        if arity == 1:
            for x, y in dom:
                if a.has(name, (x,)) != b.has(name, (y,)):
                    return False
        else:
            for x1, y1 in dom:
                for x2, y2 in dom:
                    if a.has(name, (x1, x2)) != b.has(name, (y1, y2)):
                        return False
    return True


# -- composition and expansion ---------------------------------------------


def _require_ordered(a: Structure) -> list[int]:
    ranks = a.order_ranks() if a.vocab.has_relation(ORDER) else None
    if ranks is None:
        raise NotOrderedError("operand is not ordered")
    return ranks


def _by_rank(a: Structure) -> list[int]:
    """elements of ``a`` listed in increasing order position."""
    ranks = _require_ordered(a)
    out = [0] * a.size
    for elem, r in zip(a.universe(), ranks):
        out[r - 1] = elem
    return out


def ordered_sum(a: Structure, b: Structure) -> Structure:
    """Concatenate two ordered structures, identifying max(a) with min(b).

    The result's universe is 1..(|a|+|b|-1) labeled by order position, so its
    order is natural.  All non-order tables are unions of the relabeled
    operand tables; tuples through the identified element merge.
    """
    return ordered_sum_seq([a, b])


def ordered_sum_seq(items: Sequence[Structure]) -> Structure:
    """Ordered sum of a nonempty sequence (associative, done in one pass)."""
    if not items:
        raise StructureError("ordered sum of an empty sequence")
    vocab = items[0].vocab
    for s in items[1:]:
        if s.vocab != vocab:
            raise VocabularyError("ordered sum requires identical vocabularies")
    if vocab.constants:
        raise StructureError("ordered sum is not defined for structures with constants")
    if len(items) == 1:
        s = items[0]
        relabel = {e: r + 1 for r, e in enumerate(_by_rank(s))}
        tables = {
            name: frozenset(tuple(relabel[i] for i in t) for t in s.table(name))
            for name, _ in vocab.relations
            if name != ORDER
        }
        return Structure(vocab, s.size, tables, {}, leq_natural=True)

    tables: dict[str, set[Tuple_]] = {name: set() for name, _ in vocab.relations if name != ORDER}
    offset = 0
    total = 0
    for k, s in enumerate(items):
        order = _by_rank(s)
        relabel = {e: offset + r + 1 for r, e in enumerate(order)}
        for name in tables:
            add = tables[name].update
            add(tuple(relabel[i] for i in t) for t in s.table(name))
        total = offset + s.size
        offset = total - 1  # next structure's minimum lands on this maximum
    return Structure(
        vocab,
        total,
        {name: frozenset(tups) for name, tups in tables.items()},
        {},
        leq_natural=True,
    )


def star_expand(a: Structure) -> Structure:
    """Expand with constants ``min`` and ``max`` bound to the order extremes."""
    _require_ordered(a)
    vocab = a.vocab.with_constants("min", "max")
    if a.vocab.has_constant("min") or a.vocab.has_constant("max"):
        raise VocabularyError("structure already has min/max constants")
    consts = dict(a.consts)
    consts["min"] = a.order_min()
    consts["max"] = a.order_max()
    return Structure(vocab, a.size, a.tables, consts, a.leq_natural)


def minmax_expand(a: Structure, unary: str | None = None, binary: str | None = None) -> Structure:
    """Add the order extremes to a unary relation and/or the pair
    (min, max) to a binary relation, declaring absent symbols as needed."""
    _require_ordered(a)
    lo, hi = a.order_min(), a.order_max()
    vocab = a.vocab
    tables = {name: set(t) for name, t in a.tables.items()}
    if unary is not None:
        vocab = vocab.with_relation(unary, 1)
        tables.setdefault(unary, set()).update({(lo,), (hi,)})
    if binary is not None:
        vocab = vocab.with_relation(binary, 2)
        tables.setdefault(binary, set()).add((lo, hi))
    return Structure(vocab, a.size, {k: frozenset(v) for k, v in tables.items()}, a.consts, a.leq_natural)


def add_relation(a: Structure, name: str, arity: int, tuples: Iterable[Tuple_] = ()) -> Structure:
    """Declare a relation (if absent) and union the given tuples into it."""
    vocab = a.vocab.with_relation(name, arity)
    tables = {k: set(v) for k, v in a.tables.items()}
    tables.setdefault(name, set()).update(tuple(t) for t in tuples)
    return Structure(vocab, a.size, {k: frozenset(v) for k, v in tables.items()}, a.consts, a.leq_natural)


def induced_substructure(a: Structure, lo: int, hi: int) -> Structure:
    """Substructure on the order interval [lo, hi], relabeled to 1..m by
    order position (so the result's order is natural)."""
    ranks = _require_ordered(a)
    if not a.leq(lo, hi):
        raise StructureError(f"empty interval: {lo} is not <= {hi}")
    rlo, rhi = ranks[lo - 1], ranks[hi - 1]
    keep = {e for e in a.universe() if rlo <= ranks[e - 1] <= rhi}
    relabel = {e: ranks[e - 1] - rlo + 1 for e in keep}
    tables = {}
    for name, _ in a.vocab.relations:
        if name == ORDER:
            continue
        tables[name] = frozenset(
            tuple(relabel[i] for i in t) for t in a.table(name) if all(i in keep for i in t)
        )
    consts = {}
    for name, idx in a.consts.items():
        if idx not in keep:
            raise StructureError(f"constant {name} = {idx} falls outside the interval")
        consts[name] = relabel[idx]
    return Structure(a.vocab, len(keep), tables, consts, leq_natural=True)


def reduct(a: Structure, vocab: Vocabulary) -> Structure:
    """Drop the tables and constants not present in the smaller vocabulary."""
    if not vocab.issubset(a.vocab):
        raise VocabularyError("reduct vocabulary is not a subset")
    tables = {name: a.tables[name] for name, _ in vocab.relations if name in a.tables}
    consts = {name: a.consts[name] for name in vocab.constants}
    natural = a.leq_natural and vocab.has_relation(ORDER)
    if not natural and a.leq_natural and vocab.has_relation(ORDER):
        tables[ORDER] = a.table(ORDER)
    return Structure(vocab, a.size, tables, consts, natural)


# -- isomorphism (test-scale helper) ----------------------------------------


def find_isomorphism(a: Structure, b: Structure) -> dict[int, int] | None:
    """An isomorphism a -> b, or None.  Ordered structures use the unique
    order-preserving candidate; otherwise backtracking (intended for small
    test inputs only)."""
    if a.vocab != b.vocab or a.size != b.size:
        return None
    ra = a.order_ranks() if a.vocab.has_relation(ORDER) else None
    rb = b.order_ranks() if b.vocab.has_relation(ORDER) else None
    if ra is not None and rb is not None:
        by_rank_b = {r: e for e, r in zip(b.universe(), rb)}
        mapping = {e: by_rank_b[ra[e - 1]] for e in a.universe()}
        pairs = list(mapping.items())
        if is_partial_isomorphism(a, b, pairs, respect_constants=True):
            return mapping
        return None
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def extend(e: int) -> bool:
        if e > a.size:
            return is_partial_isomorphism(a, b, list(mapping.items()), respect_constants=True)
        for cand in b.universe():
            if cand in used:
                continue
            mapping[e] = cand
            used.add(cand)
            if is_partial_isomorphism(a, b, list(mapping.items()), respect_constants=True) and extend(e + 1):
                return True
            del mapping[e]
            used.discard(cand)
        return False

    return dict(mapping) if extend(1) else None


def isomorphic(a: Structure, b: Structure) -> bool:
    return find_isomorphism(a, b) is not None


# -- random extensions -------------------------------------------------------


def random_extension(
    a: Structure,
    rng: random.Random,
    max_new: int = 3,
    keep_order: bool = True,
) -> Structure:
    """A random extension of an ordered structure: new elements inserted at
    random order positions, plus random tuples that touch a new element.
    Tuples among the original elements are never added or removed, so the
    original embeds as a substructure."""
    ranks = _require_ordered(a)
    n_new = rng.randint(1, max_new)
    positions = sorted(rng.randint(0, a.size) for _ in range(n_new))
    # old element with rank r moves to r + (number of insertions at positions < r)
    new_size = a.size + n_new
    shift = []
    for e in a.universe():
        r = ranks[e - 1]
        bump = sum(1 for p in positions if p < r)
        shift.append(r + bump)
    relabel = {e: shift[e - 1] for e in a.universe()}
    new_elems = sorted(set(range(1, new_size + 1)) - set(relabel.values()))

    tables: dict[str, set[Tuple_]] = {}
    for name, arity in a.vocab.relations:
        if name == ORDER:
            continue
        tables[name] = {tuple(relabel[i] for i in t) for t in a.table(name)}
    for e in new_elems:
        for name, arity in a.vocab.relations:
            if name == ORDER or rng.random() > 0.6:
                continue
            if arity == 1:
                tables[name].add((e,))
            else:
                other = rng.randint(1, new_size)
                tables[name].add((e, other) if rng.random() < 0.5 else (other, e))
    consts = {name: relabel[idx] for name, idx in a.consts.items()}
    if keep_order:
        return Structure(a.vocab, new_size, tables, consts, leq_natural=True)
    # break linearity on the new elements only: drop some comparabilities
    pairs = set(_natural_table(new_size))
    for e in new_elems:
        for other in range(1, new_size + 1):
            if other != e and rng.random() < 0.5:
                pairs.discard((min(e, other), max(e, other)))
    tables[ORDER] = pairs
    return Structure(a.vocab, new_size, tables, consts, leq_natural=False)


# -- serialization -----------------------------------------------------------


def serialize(a: Structure) -> str:
    """Deterministic, line-oriented text form (see parse_structure)."""
    lines: list[str] = []
    for name, arity in a.vocab.relations:
        lines.append(f"vocab rel {name} {arity}")
    for name in a.vocab.constants:
        lines.append(f"vocab const {name}")
    lines.append(f"size {a.size}")
    if a.leq_natural:
        lines.append("order natural")
    for name, _ in a.vocab.relations:
        if name == ORDER and a.leq_natural:
            continue
        for t in sorted(a.tables.get(name, ())):
            lines.append(f"rel {name} " + " ".join(str(i) for i in t))
    for name in a.vocab.constants:
        lines.append(f"const {name} {a.consts[name]}")
    return "\n".join(lines) + "\n"


def parse_structure(text: str) -> Structure:
    """Parse the serialize() format.

    Lines: ``vocab rel NAME ARITY``, ``vocab const NAME``, ``size N``,
    ``order natural``, ``rel NAME I [J]``, ``const NAME I``; ``#`` comments.
    """
    relations: list[tuple[str, int]] = []
    constants: list[str] = []
    size: int | None = None
    natural = False
    tables: dict[str, set[Tuple_]] = {}
    consts: dict[str, int] = {}

    def err(msg: str, ln: int):
        raise StructureParseError(msg, ln)

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "vocab":
            if size is not None:
                err("vocab line after size", ln)
            if len(parts) == 4 and parts[1] == "rel":
                try:
                    relations.append((parts[2], int(parts[3])))
                except ValueError:
                    err(f"bad arity {parts[3]!r}", ln)
            elif len(parts) == 3 and parts[1] == "const":
                constants.append(parts[2])
            else:
                err(f"bad vocab line: {line!r}", ln)
        elif kind == "size":
            if len(parts) != 2 or not parts[1].isdigit():
                err(f"bad size line: {line!r}", ln)
            size = int(parts[1])
        elif kind == "order":
            if parts[1:] != ["natural"]:
                err(f"bad order line: {line!r}", ln)
            natural = True
        elif kind == "rel":
            if size is None:
                err("rel line before size", ln)
            name = parts[1]
            known = dict(relations)
            if name not in known:
                err(f"unknown relation {name!r}", ln)
            try:
                tup = tuple(int(p) for p in parts[2:])
            except ValueError:
                err(f"bad indices in {line!r}", ln)
            if len(tup) != known[name]:
                err(f"{name} expects {known[name]} indices, got {len(tup)}", ln)
            if not all(1 <= i <= size for i in tup):
                err(f"index out of range 1..{size} in {line!r}", ln)
            tables.setdefault(name, set()).add(tup)
        elif kind == "const":
            if size is None:
                err("const line before size", ln)
            if len(parts) != 3:
                err(f"bad const line: {line!r}", ln)
            name = parts[1]
            if name not in constants:
                err(f"unknown constant {name!r}", ln)
            try:
                idx = int(parts[2])
            except ValueError:
                err(f"bad index {parts[2]!r}", ln)
            if not 1 <= idx <= size:
                err(f"index out of range 1..{size}", ln)
            consts[name] = idx
        else:
            err(f"unknown directive {kind!r}", ln)
    if size is None:
        raise StructureParseError("missing size line", 1)
    try:
        vocab = Vocabulary(tuple(relations), tuple(constants))
        return Structure(vocab, size, tables, consts, leq_natural=natural)
    except StructureError as exc:
        raise StructureParseError(str(exc), 0) from exc
