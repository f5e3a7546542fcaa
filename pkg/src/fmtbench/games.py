"""Prefix-class implication by memoized game search.

``prefix_implies(A, B, spec)`` decides whether every prefix-class sentence
(at most ``rounds`` quantifier blocks of width ``width``, leading
existential) true in A is true in B, by the round-alternating tuple game:
the challenger picks a width-tuple on one side each round, the matcher
answers on the other, and the matcher wins iff the accumulated pair map is
a partial isomorphism.

Game states collapse to (rounds left, direction, partial map): the winning
condition depends only on the map, so histories inducing the same map are
shared through the memo table.  Positions whose map already fails the
partial isomorphism check lose immediately, which both prunes the search
and keeps the memo keyed on consistent maps only.  A naive history-based
search (no memo, no pruning, final-map check only) is provided as an
independent oracle for tiny inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

from .structures import Structure, is_partial_isomorphism, minmax_expand

DEFAULT_BUDGET = 10**8
NAIVE_BUDGET = 10**7


class BudgetExceededError(RuntimeError):
    """The state-space estimate (or the visited count) exceeds the budget;
    the search refuses rather than risk an unfinished wrong answer."""

    def __init__(self, estimate: int, budget: int):
        super().__init__(f"estimated {estimate} states exceeds budget {budget}")
        self.estimate = estimate
        self.budget = budget


@dataclass(frozen=True)
class GameSpec:
    rounds: int
    width: int
    starred: bool = False
    initial: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.rounds < 0 or self.width < 1:
            raise ValueError("rounds must be >= 0 and width >= 1")


@dataclass(frozen=True)
class GameVerdict:
    holds: bool
    witness: tuple[int, ...] | None = None


def _implicit_pairs(a: Structure, b: Structure, starred: bool) -> tuple[tuple[int, int], ...]:
    pairs = [
        (a.consts[name], b.consts[name])
        for name in a.vocab.constants
        if b.vocab.has_constant(name)
    ]
    if starred:
        pairs.append((a.order_min(), b.order_min()))
        pairs.append((a.order_max(), b.order_max()))
    return tuple(dict.fromkeys(pairs))


def _estimate(sa: int, sb: int, rounds: int, width: int) -> int:
    total = 1
    for r in range(1, rounds + 1):
        s = r * width
        total += comb(sa, min(s, sa)) * comb(sb, min(s, sb))
    return total


class _Search:
    def __init__(self, a: Structure, b: Structure, spec: GameSpec, budget: int):
        if a.vocab.relations != b.vocab.relations:
            raise ValueError("game requires matching relation vocabularies")
        est = _estimate(a.size, b.size, spec.rounds, spec.width)
        if est > budget:
            raise BudgetExceededError(est, budget)
        self.a = a
        self.b = b
        self.k = spec.width
        self.implicit_ab = _implicit_pairs(a, b, spec.starred)
        self.implicit_ba = tuple((y, x) for x, y in self.implicit_ab)
        self.budget = budget
        self.visited = 0
        self.memo: dict[tuple, bool] = {}

    def _pi(self, left_is_a: bool, pairs: tuple[tuple[int, int], ...]) -> bool:
        left, right = (self.a, self.b) if left_is_a else (self.b, self.a)
        implicit = self.implicit_ab if left_is_a else self.implicit_ba
        return is_partial_isomorphism(left, right, pairs + implicit, respect_constants=False)

    def _candidates(self, right: Structure, a_tuple: tuple[int, ...], left_size: int):
        """All width-tuples on the answering side, likeliest matches first."""
        tuples = list(itertools.product(right.universe(), repeat=self.k))
        scale_a, scale_b = right.size, left_size

        def key(bt: tuple[int, ...]) -> int:
            return sum(abs(bv * scale_b - av * scale_a) for av, bv in zip(a_tuple, bt))

        tuples.sort(key=key)
        return tuples

    def decide(self, left_is_a: bool, pairs: tuple[tuple[int, int], ...], rounds: int) -> bool:
        if not self._pi(left_is_a, pairs):
            return False
        if rounds == 0:
            return True
        key = (rounds, left_is_a, pairs)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.visited += 1
        if self.visited > self.budget:
            raise BudgetExceededError(self.visited, self.budget)
        left, right = (self.a, self.b) if left_is_a else (self.b, self.a)
        inverted = tuple(sorted((y, x) for x, y in pairs))
        result = True
        for a_tuple in itertools.combinations_with_replacement(left.universe(), self.k):
            answered = False
            for b_tuple in self._candidates(right, a_tuple, left.size):
                new_pairs = tuple(sorted(set(inverted) | set(zip(b_tuple, a_tuple))))
                if self.decide(not left_is_a, new_pairs, rounds - 1):
                    answered = True
                    break
            if not answered:
                result = False
                self._last_witness = a_tuple
                break
        self.memo[key] = result
        return result


def prefix_implies(a: Structure, b: Structure, spec: GameSpec, budget: int = DEFAULT_BUDGET) -> GameVerdict:
    """Decide the prefix-class implication from a to b by game search.

    The verdict's witness, present iff the implication fails, is a
    challenger tuple at the top level with no valid answer (empty when the
    initial map is already inconsistent).
    """
    search = _Search(a, b, spec, budget)
    initial = tuple(sorted(set(spec.initial)))
    if not search._pi(True, initial):
        return GameVerdict(False, ())
    if search.decide(True, initial, spec.rounds):
        return GameVerdict(True, None)
    witness = getattr(search, "_last_witness", ())
    return GameVerdict(False, tuple(witness))


def prefix_equiv(a: Structure, b: Structure, spec: GameSpec, budget: int = DEFAULT_BUDGET) -> bool:
    """Both directions of prefix_implies."""
    back = GameSpec(spec.rounds, spec.width, spec.starred, tuple((y, x) for x, y in spec.initial))
    return prefix_implies(a, b, spec, budget).holds and prefix_implies(b, a, back, budget).holds


def rank_equiv(a: Structure, b: Structure, m: int, budget: int = DEFAULT_BUDGET) -> bool:
    """Back-and-forth equivalence up to quantifier rank m (single-element
    rounds, challenger free to pick the side)."""
    if a.vocab.relations != b.vocab.relations:
        raise ValueError("game requires matching relation vocabularies")
    est = _estimate(a.size, b.size, m, 1) * 2
    if est > budget:
        raise BudgetExceededError(est, budget)
    implicit = _implicit_pairs(a, b, starred=False)
    memo: dict[tuple, bool] = {}
    visited = [0]

    def candidates(side: Structure, other_val: int, other_size: int) -> list[int]:
        vals = list(side.universe())
        vals.sort(key=lambda v: abs(v * other_size - other_val * side.size))
        return vals

    def eq(pairs: tuple[tuple[int, int], ...], rounds: int) -> bool:
        if not is_partial_isomorphism(a, b, pairs + implicit, respect_constants=False):
            return False
        if rounds == 0:
            return True
        key = (rounds, pairs)
        hit = memo.get(key)
        if hit is not None:
            return hit
        visited[0] += 1
        if visited[0] > budget:
            raise BudgetExceededError(visited[0], budget)
        result = True
        for x in a.universe():
            if not any(eq(tuple(sorted(set(pairs) | {(x, y)})), rounds - 1) for y in candidates(b, x, a.size)):
                result = False
                break
        if result:
            for y in b.universe():
                if not any(eq(tuple(sorted(set(pairs) | {(x, y)})), rounds - 1) for x in candidates(a, y, b.size)):
                    result = False
                    break
        memo[key] = result
        return result

    return eq((), m)


def naive_game_search(a: Structure, b: Structure, spec: GameSpec, budget: int = NAIVE_BUDGET) -> GameVerdict:
    """History-based search over full tuple sequences: no memoization, no
    map collapse, no intermediate consistency pruning; the partial
    isomorphism condition is checked on the final map only.  An independent
    oracle for prefix_implies on tiny inputs."""
    if a.vocab.relations != b.vocab.relations:
        raise ValueError("game requires matching relation vocabularies")
    est = (a.size**spec.width * b.size**spec.width) ** spec.rounds
    if est > budget:
        raise BudgetExceededError(est, budget)
    implicit_ab = _implicit_pairs(a, b, spec.starred)

    def play(left_is_a: bool, history: tuple[tuple[int, int], ...], rounds: int) -> bool:
        left, right = (a, b) if left_is_a else (b, a)
        if rounds == 0:
            ab = history if left_is_a else tuple((y, x) for x, y in history)
            return is_partial_isomorphism(a, b, ab + implicit_ab, respect_constants=False)
        inverted = tuple((y, x) for x, y in history)
        for a_tuple in itertools.product(left.universe(), repeat=spec.width):
            answered = False
            for b_tuple in itertools.product(right.universe(), repeat=spec.width):
                if play(not left_is_a, inverted + tuple(zip(b_tuple, a_tuple)), rounds - 1):
                    answered = True
                    break
            if not answered:
                return False
        return True

    initial = tuple(spec.initial)
    if spec.rounds == 0:
        holds = play(True, initial, 0)
        return GameVerdict(holds, None if holds else ())
    holds = play(True, initial, spec.rounds)
    return GameVerdict(holds, None if holds else ())


# -- composition checkers (theorem oracles) -----------------------------------


def _shift_pairs(tuples_a, tuples_b, offset_a: int, offset_b: int):
    return tuple((x + offset_a, y + offset_b) for x, y in zip(tuples_a, tuples_b))


def check_ordered_sum_composition(
    a1: Structure,
    a2: Structure,
    b1: Structure,
    b2: Structure,
    spec: GameSpec,
    a1_tuple: tuple[int, ...] = (),
    a2_tuple: tuple[int, ...] = (),
    b1_tuple: tuple[int, ...] = (),
    b2_tuple: tuple[int, ...] = (),
    budget: int = DEFAULT_BUDGET,
) -> bool:
    """Ordered sums compose implications: if the starred games hold
    componentwise (with parameters), they hold for the sums.  This is a
    theorem, so a False return indicates an engine bug.  Vacuously True
    when a hypothesis game fails.  Inputs must carry natural orders."""
    from .structures import ordered_sum

    for s in (a1, a2, b1, b2):
        if not s.leq_natural:
            raise ValueError("composition check expects naturally ordered inputs")
    h1 = GameSpec(spec.rounds, spec.width, True, tuple(zip(a1_tuple, b1_tuple)))
    h2 = GameSpec(spec.rounds, spec.width, True, tuple(zip(a2_tuple, b2_tuple)))
    if not prefix_implies(a1, b1, h1, budget).holds:
        return True
    if not prefix_implies(a2, b2, h2, budget).holds:
        return True
    sum_a = ordered_sum(a1, a2)
    sum_b = ordered_sum(b1, b2)
    initial = tuple(zip(a1_tuple, b1_tuple)) + _shift_pairs(a2_tuple, b2_tuple, a1.size - 1, b1.size - 1)
    conclusion = GameSpec(spec.rounds, spec.width, True, initial)
    return prefix_implies(sum_a, sum_b, conclusion, budget).holds


def check_minmax_composition(
    a: Structure,
    b: Structure,
    spec: GameSpec,
    unary: str | None = None,
    binary: str | None = None,
    budget: int = DEFAULT_BUDGET,
) -> bool:
    """Marking the order extremes preserves implications: if the starred
    game holds, the game on the minmax-expanded structures holds (without
    stars).  A theorem; False indicates an engine bug."""
    if unary is None and binary is None:
        raise ValueError("need a unary or binary symbol to expand")
    hyp = GameSpec(spec.rounds, spec.width, True, spec.initial)
    if not prefix_implies(a, b, hyp, budget).holds:
        return True
    ea = minmax_expand(a, unary=unary, binary=binary)
    eb = minmax_expand(b, unary=unary, binary=binary)
    conclusion = GameSpec(spec.rounds, spec.width, False, spec.initial)
    return prefix_implies(ea, eb, conclusion, budget).holds
