"""LTL formulas and deterministic Rabin automata.

Formulas are parsed into a small immutable AST. A conjunction of simple
templates (``G !b``, ``G F a``, ``F G a``, ``F a``, ``G a``, ``a U b``) is
translated into a DRA by composing hand-checked template automata; anything
else should come in through :func:`import_hoa`.

Letters are integers: bit ``k`` is set iff ``dra.ap[k]`` holds.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class LtlSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnsupportedFormula(ValueError):
    """Raised when a formula lies outside the template fragment."""

    def __init__(self, subformula: "LtlFormula"):
        super().__init__(
            f"unsupported subformula {format_ltl(subformula)!r}; "
            "translate it externally and load it with import_hoa"
        )
        self.subformula = subformula


class HoaError(ValueError):
    pass


class LassoError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AST


class LtlFormula:
    __slots__ = ()


@dataclass(frozen=True)
class Const(LtlFormula):
    value: bool


@dataclass(frozen=True)
class Atom(LtlFormula):
    name: str


@dataclass(frozen=True)
class Not(LtlFormula):
    arg: LtlFormula


@dataclass(frozen=True)
class And(LtlFormula):
    left: LtlFormula
    right: LtlFormula


@dataclass(frozen=True)
class Or(LtlFormula):
    left: LtlFormula
    right: LtlFormula


@dataclass(frozen=True)
class Implies(LtlFormula):
    left: LtlFormula
    right: LtlFormula


@dataclass(frozen=True)
class Next(LtlFormula):
    arg: LtlFormula


@dataclass(frozen=True)
class Until(LtlFormula):
    left: LtlFormula
    right: LtlFormula


@dataclass(frozen=True)
class Eventually(LtlFormula):
    arg: LtlFormula


@dataclass(frozen=True)
class Always(LtlFormula):
    arg: LtlFormula


TRUE = Const(True)
FALSE = Const(False)


def atoms(f: LtlFormula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, Const):
        return set()
    out: set[str] = set()
    for child in _children(f):
        out |= atoms(child)
    return out


def _children(f: LtlFormula) -> tuple[LtlFormula, ...]:
    if isinstance(f, (Not, Next, Eventually, Always)):
        return (f.arg,)
    if isinstance(f, (And, Or, Implies, Until)):
        return (f.left, f.right)
    return ()


def normalize(f: LtlFormula) -> LtlFormula:
    """Rewrite derived connectives into True/atom/not/and/next/until."""
    if isinstance(f, Const):
        return TRUE if f.value else Not(TRUE)
    if isinstance(f, Atom):
        return f
    if isinstance(f, Not):
        return Not(normalize(f.arg))
    if isinstance(f, And):
        return And(normalize(f.left), normalize(f.right))
    if isinstance(f, Or):
        return Not(And(Not(normalize(f.left)), Not(normalize(f.right))))
    if isinstance(f, Implies):
        return normalize(Or(Not(f.left), f.right))
    if isinstance(f, Next):
        return Next(normalize(f.arg))
    if isinstance(f, Until):
        return Until(normalize(f.left), normalize(f.right))
    if isinstance(f, Eventually):
        return Until(TRUE, normalize(f.arg))
    if isinstance(f, Always):
        return Not(Until(TRUE, Not(normalize(f.arg))))
    raise TypeError(f"not a formula: {f!r}")


_PREC = {Implies: 1, Or: 2, And: 3, Until: 4}
_BINOP = {Implies: "->", Or: "|", And: "&", Until: "U"}
_UNOP = {Not: "!", Next: "X ", Eventually: "F ", Always: "G "}


def format_ltl(f: LtlFormula) -> str:
    """Render a formula in the concrete syntax accepted by :func:`parse_ltl`."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f.name
    if type(f) in _UNOP:
        inner = format_ltl(f.arg)
        if type(f.arg) in _BINOP:
            inner = f"({inner})"
        return _UNOP[type(f)] + inner
    op = _BINOP[type(f)]
    return f"({format_ltl(f.left)} {op} {format_ltl(f.right)})"


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>->|[!&|()]))")
_KEYWORDS = {"X", "U", "F", "G", "true", "false"}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise LtlSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = "ident" if m.group("ident") else "op"
        value = m.group(kind)
        start = m.start(kind)
        if kind == "ident" and value in _KEYWORDS:
            kind = "kw"
        tokens.append((kind, value, start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, ap: Iterable[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.ap = None if ap is None else set(ap)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, v, pos = self.take()
        if v != value:
            raise LtlSyntaxError(f"expected {value!r}, found {v or 'end of input'!r}", pos)

    def parse(self) -> LtlFormula:
        f = self.implies()
        kind, v, pos = self.peek()
        if kind != "end":
            raise LtlSyntaxError(f"unexpected token {v!r}", pos)
        return f

    def implies(self):
        left = self.disj()
        if self.peek()[1] == "->":
            self.take()
            return Implies(left, self.implies())
        return left

    def disj(self):
        left = self.conj()
        while self.peek()[1] == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.until()
        while self.peek()[1] == "&":
            self.take()
            left = And(left, self.until())
        return left

    def until(self):
        left = self.unary()
        if self.peek()[1] == "U":
            self.take()
            return Until(left, self.until())
        return left

    def unary(self):
        kind, v, pos = self.take()
        if v == "!":
            return Not(self.unary())
        if v == "X":
            return Next(self.unary())
        if v == "F":
            return Eventually(self.unary())
        if v == "G":
            return Always(self.unary())
        if v == "(":
            f = self.implies()
            self.expect(")")
            return f
        if v == "true":
            return TRUE
        if v == "false":
            return FALSE
        if kind == "ident":
            if self.ap is not None and v not in self.ap:
                raise LtlSyntaxError(f"undeclared atom {v!r}", pos)
            return Atom(v)
        raise LtlSyntaxError(f"unexpected token {v or 'end of input'!r}", pos)


def parse_ltl(text: str, ap: Iterable[str] | None = None) -> LtlFormula:
    """Parse ``text``; precedence is unary > U > & > | > ->, U and -> bind right.

    If ``ap`` is given, atoms outside it are rejected.
    """
    return _Parser(text, ap).parse()


# ---------------------------------------------------------------------------
# DRA


@dataclass(frozen=True)
class Dra:
    """Deterministic Rabin automaton over letters ``0 .. 2**len(ap) - 1``.

    ``delta[q][letter]`` is the successor; ``pairs`` is a tuple of
    ``(L, K)`` frozensets. A run is accepting iff for some pair it visits
    ``L`` finitely often and ``K`` infinitely often.
    """

    ap: tuple[str, ...]
    delta: tuple[tuple[int, ...], ...]
    initial: int
    pairs: tuple[tuple[frozenset[int], frozenset[int]], ...]
    state_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = len(self.delta)
        if n == 0:
            raise ValueError("a DRA needs at least one state")
        width = 1 << len(self.ap)
        for q, row in enumerate(self.delta):
            if len(row) != width:
                raise ValueError(f"state {q} has {len(row)} transitions, expected {width}")
            if any(not 0 <= t < n for t in row):
                raise ValueError(f"state {q} has a successor outside the state set")
        if not 0 <= self.initial < n:
            raise ValueError("initial state outside the state set")
        if len(self.pairs) < 1:
            raise ValueError("a DRA needs at least one acceptance pair")
        for L, K in self.pairs:
            if not (L <= set(range(n)) and K <= set(range(n))):
                raise ValueError("acceptance pair mentions unknown states")
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"q{i}" for i in range(n)))

    @property
    def num_states(self) -> int:
        return len(self.delta)

    @property
    def num_letters(self) -> int:
        return 1 << len(self.ap)

    def letter(self, props: Iterable[str]) -> int:
        """Bitset of the atoms in ``props`` that belong to this automaton's AP."""
        props = set(props)
        return sum(1 << k for k, a in enumerate(self.ap) if a in props)

    def step(self, q: int, letter: int) -> int:
        return self.delta[q][letter]

    def run(self, letters: Iterable[int], start: int | None = None) -> list[int]:
        q = self.initial if start is None else start
        out = [q]
        for a in letters:
            q = self.delta[q][a]
            out.append(q)
        return out


def _letters_of(word: Sequence) -> list[int]:
    return [int(a) for a in word]


def dra_accepts_lasso(
    dra: Dra, prefix: Sequence[int], cycle: Sequence[int], unroll: bool = False
) -> bool:
    """Decide acceptance of ``prefix . cycle^omega``.

    Letters are bitsets (see :meth:`Dra.letter`). The cycle must bring the
    automaton back to the state it had when the cycle started. Pass
    ``unroll=True`` to have :func:`unroll_lasso` fix that up first.
    """
    cycle = _letters_of(cycle)
    if not cycle:
        raise LassoError("cycle must be nonempty")
    if unroll:
        prefix, cycle = unroll_lasso(dra, prefix, cycle)
    q = dra.run(_letters_of(prefix))[-1]
    visited = dra.run(cycle, start=q)
    if visited[-1] != q:
        raise LassoError(
            f"cycle does not close: starts in {dra.state_names[q]}, "
            f"ends in {dra.state_names[visited[-1]]}"
        )
    inf = set(visited)
    return any(not (inf & L) and (inf & K) for L, K in dra.pairs)


def unroll_lasso(dra: Dra, prefix: Sequence[int], cycle: Sequence[int]) -> tuple[list[int], list[int]]:
    """Rewrite a lasso so that its cycle closes on a DRA state."""
    prefix, cycle = _letters_of(prefix), _letters_of(cycle)
    q = dra.run(prefix)[-1]
    seen = {q: 0}
    k = 0
    while True:
        q = dra.run(cycle, start=q)[-1]
        k += 1
        if q in seen:
            j = seen[q]
            return prefix + cycle * j, cycle * (k - j)
        seen[q] = k


# ---------------------------------------------------------------------------
# Templates and the fragment translator


def _dra_from_fn(ap, n, fn, pairs, initial=0, names=()):
    width = 1 << len(ap)
    delta = tuple(tuple(fn(q, a) for a in range(width)) for q in range(n))
    pairs = tuple((frozenset(L), frozenset(K)) for L, K in pairs)
    return Dra(tuple(ap), delta, initial, pairs, tuple(names))


def _literal(ap, arg):
    """Return a predicate on letters for an atom, negated atom or constant."""
    if isinstance(arg, Const):
        return lambda a, v=arg.value: v
    if isinstance(arg, Atom):
        k = ap.index(arg.name)
        return lambda a, k=k: bool(a >> k & 1)
    if isinstance(arg, Not) and isinstance(arg.arg, (Atom, Const)):
        inner = _literal(ap, arg.arg)
        return lambda a, inner=inner: not inner(a)
    return None


def _template(f: LtlFormula, ap: tuple[str, ...]) -> Dra | None:
    lit = _literal(ap, f)
    if isinstance(f, Const):
        K = {0} if f.value else set()
        return _dra_from_fn(ap, 1, lambda q, a: 0, [(set(), K)])
    if isinstance(f, Always):
        inner = f.arg
        if isinstance(inner, Eventually) and (p := _literal(ap, inner.arg)):
            # GF p: remember whether the last letter satisfied p
            return _dra_from_fn(ap, 2, lambda q, a: int(p(a)), [(set(), {1})])
        if (p := _literal(ap, inner)) is not None:
            return _dra_from_fn(
                ap, 2, lambda q, a: 0 if q == 0 and p(a) else 1, [(set(), {0})], names=("ok", "dead")
            )
        return None
    if isinstance(f, Eventually):
        inner = f.arg
        if isinstance(inner, Always) and (p := _literal(ap, inner.arg)):
            return _dra_from_fn(ap, 2, lambda q, a: int(p(a)), [({0}, {1})])
        if (p := _literal(ap, inner)) is not None:
            return _dra_from_fn(
                ap, 2, lambda q, a: 1 if q == 1 or p(a) else 0, [(set(), {1})], names=("wait", "done")
            )
        return None
    if isinstance(f, Until):
        p, r = _literal(ap, f.left), _literal(ap, f.right)
        if p is None or r is None:
            return None

        def step(q, a):
            if q != 0:
                return q
            if r(a):
                return 1
            return 0 if p(a) else 2

        return _dra_from_fn(ap, 3, step, [(set(), {1})], names=("wait", "done", "dead"))
    if lit is not None:
        # a bare literal constrains only the first letter
        def first(q, a):
            if q != 0:
                return q
            return 1 if lit(a) else 2

        return _dra_from_fn(ap, 3, first, [(set(), {1})], names=("init", "ok", "dead"))
    return None


def _conjuncts(f: LtlFormula) -> list[LtlFormula]:
    if isinstance(f, And):
        return _conjuncts(f.left) + _conjuncts(f.right)
    return [f]


def ltl_to_dra(formula: LtlFormula, ap: Sequence[str] | None = None) -> Dra:
    """Translate a conjunction of template formulas into a DRA.

    ``ap`` fixes the letter encoding; by default it is the sorted set of
    atoms in the formula. Raises :class:`UnsupportedFormula` outside the
    fragment.
    """
    ap = tuple(sorted(atoms(formula))) if ap is None else tuple(ap)
    missing = atoms(formula) - set(ap)
    if missing:
        raise ValueError(f"atoms {sorted(missing)} not in AP {list(ap)}")
    parts = []
    for c in _conjuncts(formula):
        t = _template(c, ap)
        if t is None:
            raise UnsupportedFormula(c)
        parts.append(t)
    dra = parts[0]
    for other in parts[1:]:
        dra = dra_conjunction(dra, other)
    return simplify_dra(dra)


def _closed_complement(dra: Dra, K: frozenset[int]) -> bool:
    """True iff no transition leaves the complement of ``K``."""
    outside = set(range(dra.num_states)) - K
    return all(t in outside for q in outside for t in dra.delta[q])


def dra_conjunction(a: Dra, b: Dra) -> Dra:
    """Product automaton accepting the intersection of two Rabin languages.

    Each pair combination is a generalized Rabin condition
    ``Fin(L1 | L2) & Inf(K1) & Inf(K2)``. An ``Inf(K)`` whose complement is
    closed is rewritten as ``Fin(Q \\ K)``; the remaining double ``Inf``
    conditions get one alternation bit each.
    """
    if a.ap != b.ap:
        raise ValueError("conjunction needs automata over the same AP")
    na, nb = a.num_states, b.num_states
    combos = []
    for (L1, K1), (L2, K2) in itertools.product(a.pairs, b.pairs):
        fin_a = set()
        fin_b = set()
        infs = []
        if _closed_complement(a, K1):
            fin_a |= set(range(na)) - K1
        else:
            infs.append(("a", K1))
        if _closed_complement(b, K2):
            fin_b |= set(range(nb)) - K2
        else:
            infs.append(("b", K2))
        combos.append((L1 | fin_a, L2 | fin_b, infs))
    nbits = sum(1 for *_, infs in combos if len(infs) == 2)
    bit_of = {}
    for k, (*_, infs) in enumerate(combos):
        if len(infs) == 2:
            bit_of[k] = len(bit_of)

    def member(side, K, qa, qb):
        return (qa if side == "a" else qb) in K

    states = list(itertools.product(range(na), range(nb), range(1 << nbits)))
    index = {s: i for i, s in enumerate(states)}
    width = a.num_letters
    delta = []
    for qa, qb, bits in states:
        nbits_next = bits
        for k, bit in bit_of.items():
            (s1, K1), (s2, K2) = combos[k][2]
            cur = bits >> bit & 1
            if cur == 0 and member(s1, K1, qa, qb):
                nbits_next |= 1 << bit
            elif cur == 1 and member(s2, K2, qa, qb):
                nbits_next &= ~(1 << bit)
        delta.append(
            tuple(index[(a.delta[qa][x], b.delta[qb][x], nbits_next)] for x in range(width))
        )
    pairs = []
    for k, (La, Lb, infs) in enumerate(combos):
        L = {index[s] for s in states if s[0] in La or s[1] in Lb}
        if not infs:
            K = set(range(len(states)))
        elif len(infs) == 1:
            side, Kx = infs[0]
            K = {index[s] for s in states if member(side, Kx, s[0], s[1])}
        else:
            (s2, K2) = infs[1]
            bit = bit_of[k]
            K = {index[s] for s in states if s[2] >> bit & 1 and member(s2, K2, s[0], s[1])}
        pairs.append((frozenset(L), frozenset(K)))
    names = tuple(
        f"{a.state_names[qa]}.{b.state_names[qb]}" + (f".{bits}" if nbits else "")
        for qa, qb, bits in states
    )
    return Dra(a.ap, tuple(delta), index[(a.initial, b.initial, 0)], tuple(pairs), names)


def _reachable(dra: Dra) -> list[int]:
    order = [dra.initial]
    seen = {dra.initial}
    for q in order:
        for t in dra.delta[q]:
            if t not in seen:
                seen.add(t)
                order.append(t)
    return order


def _nontrivial_sccs(nodes: set[int], succ) -> list[set[int]]:
    """SCCs (with at least one internal edge) of the subgraph on ``nodes``."""
    index, low, on, stack, out = {}, {}, set(), [], []
    counter = [0]

    def visit(v):
        work = [(v, iter(sorted(set(succ(v)) & nodes)))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on.add(v)
        while work:
            u, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on.add(w)
                    work.append((w, iter(sorted(set(succ(w)) & nodes))))
                    advanced = True
                    break
                if w in on:
                    low[u] = min(low[u], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[u])
            if low[u] == index[u]:
                comp = set()
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.add(w)
                    if w == u:
                        break
                if len(comp) > 1 or u in set(succ(u)):
                    out.append(comp)

    for v in sorted(nodes):
        if v not in index:
            visit(v)
    return out


def simplify_dra(dra: Dra) -> Dra:
    """Drop unreachable states and merge hopeless states into one sink.

    A state is hopeless when no accepting cycle is reachable from it; such
    states are language-equivalent, so they collapse into a single trap that
    belongs to no acceptance set.
    """
    reach = _reachable(dra)
    succ = lambda q: dra.delta[q]
    good = set()
    for L, K in dra.pairs:
        allowed = set(reach) - L
        for comp in _nontrivial_sccs(allowed, succ):
            if comp & K:
                good |= comp
    # backward closure of the accepting cycles
    alive = set(good)
    changed = True
    while changed:
        changed = False
        for q in reach:
            if q not in alive and any(t in alive for t in dra.delta[q]):
                alive.add(q)
                changed = True
    keep = [q for q in reach if q in alive]
    hopeless = [q for q in reach if q not in alive]
    new_index = {q: i for i, q in enumerate(keep)}
    trap = None
    if hopeless:
        trap = len(keep)
        for q in hopeless:
            new_index[q] = trap
    n = len(keep) + (1 if hopeless else 0)
    delta = []
    for q in keep:
        delta.append(tuple(new_index[t] for t in dra.delta[q]))
    if hopeless:
        delta.append(tuple([trap] * dra.num_letters))
    pairs = []
    for L, K in dra.pairs:
        L2 = frozenset(new_index[q] for q in L if q in alive and q in new_index)
        K2 = frozenset(new_index[q] for q in K if q in alive and q in new_index)
        pairs.append((L2, K2))
    # keep pair count stable but drop exact duplicates
    uniq = tuple(dict.fromkeys(pairs))
    names = [dra.state_names[q] for q in keep] + (["trap"] if hopeless else [])
    return Dra(dra.ap, tuple(delta), new_index[dra.initial], uniq, tuple(names))


def canonical_form(dra: Dra):
    """BFS relabelling from the initial state; equal forms mean isomorphic automata."""
    order = _reachable(dra)
    # BFS order is already canonical for a deterministic automaton with ordered letters
    idx = {q: i for i, q in enumerate(order)}
    delta = tuple(tuple(idx[t] for t in dra.delta[q]) for q in order)
    pairs = frozenset(
        (frozenset(idx[q] for q in L if q in idx), frozenset(idx[q] for q in K if q in idx))
        for L, K in dra.pairs
    )
    return dra.ap, delta, pairs


def dra_isomorphic(a: Dra, b: Dra) -> bool:
    return canonical_form(a) == canonical_form(b)


# ---------------------------------------------------------------------------
# HOA


def export_hoa(dra: Dra, name: str = "") -> str:
    """Serialize as HOA v1 with state-based Rabin acceptance and explicit labels."""
    m = len(dra.pairs)
    acc = " | ".join(f"(Fin({2 * i})&Inf({2 * i + 1}))" for i in range(m))
    lines = ["HOA: v1"]
    if name:
        lines.append(f'name: "{name}"')
    lines += [
        f"States: {dra.num_states}",
        f"Start: {dra.initial}",
        "AP: " + " ".join([str(len(dra.ap))] + [f'"{a}"' for a in dra.ap]),
        f"acc-name: Rabin {m}",
        f"Acceptance: {2 * m} {acc}",
        "properties: deterministic complete state-acc explicit-labels",
        "--BODY--",
    ]
    for q in range(dra.num_states):
        sets = []
        for i, (L, K) in enumerate(dra.pairs):
            if q in L:
                sets.append(2 * i)
            if q in K:
                sets.append(2 * i + 1)
        mark = " {" + " ".join(map(str, sets)) + "}" if sets else ""
        lines.append(f"State: {q}{mark}")
        for a in range(dra.num_letters):
            if dra.ap:
                lits = [(str(k) if a >> k & 1 else f"!{k}") for k in range(len(dra.ap))]
                label = "&".join(lits)
            else:
                label = "t"
            lines.append(f"[{label}] {dra.delta[q][a]}")
    lines.append("--END--")
    return "\n".join(lines) + "\n"


_HOA_TOKEN = re.compile(r'\s*("(?:[^"\\]|\\.)*"|--BODY--|--END--|--ABORT--|[A-Za-z_][A-Za-z0-9_-]*:|[A-Za-z_@][A-Za-z0-9_-]*|\d+|[\[\]{}()!&|])')


def _hoa_tokens(text: str) -> list[str]:
    text = re.sub(r"/\*.*?\*/", " ", text, flags=re.S)
    out = []
    pos = 0
    while pos < len(text):
        if not text[pos:].strip():
            break
        m = _HOA_TOKEN.match(text, pos)
        if m is None:
            raise HoaError(f"cannot tokenize near {text[pos:pos + 20]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


def _parse_label(tokens: list[str], nap: int):
    """Parse a bracketed label into a predicate over letters."""
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take():
        t = tokens[pos[0]]
        pos[0] += 1
        return t

    def disj():
        terms = [conj()]
        while peek() == "|":
            take()
            terms.append(conj())
        return lambda a: any(t(a) for t in terms)

    def conj():
        terms = [atom()]
        while peek() == "&":
            take()
            terms.append(atom())
        return lambda a: all(t(a) for t in terms)

    def atom():
        t = take()
        if t == "!":
            inner = atom()
            return lambda a: not inner(a)
        if t == "(":
            inner = disj()
            if take() != ")":
                raise HoaError("unbalanced parenthesis in label")
            return inner
        if t == "t":
            return lambda a: True
        if t == "f":
            return lambda a: False
        if t.isdigit():
            k = int(t)
            if k >= nap:
                raise HoaError(f"label refers to AP index {k} out of range")
            return lambda a: bool(a >> k & 1)
        raise HoaError(f"unexpected token {t!r} in label")

    pred = disj()
    if pos[0] != len(tokens):
        raise HoaError("trailing tokens in label")
    return pred


def _parse_acceptance(tokens: list[str], nsets: int):
    """Parse a Rabin-shaped acceptance condition into ``[(fin, inf)]`` set indices."""
    text = " ".join(tokens)
    if text.strip() == "t":
        return [(None, None)]
    disjuncts = [d.strip() for d in text.split("|")]
    pairs = []
    for d in disjuncts:
        d = d.replace("(", " ").replace(")", " ")
        fin = inf = None
        for part in [p.strip() for p in d.split("&") if p.strip()]:
            m = re.fullmatch(r"(Fin|Inf)\s+(\d+)", part)
            if m is None:
                raise HoaError(f"acceptance term {part!r} is not Rabin-shaped")
            k = int(m.group(2))
            if k >= nsets:
                raise HoaError(f"acceptance set {k} out of range")
            if m.group(1) == "Fin":
                if fin is not None:
                    raise HoaError("acceptance disjunct has two Fin terms")
                fin = k
            else:
                if inf is not None:
                    raise HoaError("acceptance disjunct has two Inf terms")
                inf = k
        pairs.append((fin, inf))
    return pairs


def import_hoa(text: str) -> Dra:
    """Load a deterministic, complete, state-based Rabin automaton from HOA v1 text."""
    tokens = _hoa_tokens(text)
    if not tokens or tokens[0] != "HOA:":
        raise HoaError("missing 'HOA:' header")
    try:
        body_at = tokens.index("--BODY--")
    except ValueError:
        raise HoaError("missing --BODY--") from None
    header = tokens[:body_at]
    body = tokens[body_at + 1:]
    if "--END--" not in body:
        raise HoaError("missing --END--")
    body = body[: body.index("--END--")]

    fields: dict[str, list[str]] = {}
    key = None
    for t in header:
        if t.endswith(":"):
            key = t[:-1]
            fields.setdefault(key, [])
            if key == "Start":
                fields[key].append("|")
        elif key is not None:
            fields[key].append(t)
    if fields.get("HOA") != ["v1"]:
        raise HoaError("only HOA v1 is supported")
    try:
        nstates = int(fields["States"][0])
    except (KeyError, IndexError, ValueError):
        raise HoaError("missing or malformed 'States:'") from None
    starts = [int(t) for t in fields.get("Start", []) if t.isdigit()]
    if len(starts) != 1:
        raise HoaError("exactly one initial state is required")
    ap_field = fields.get("AP", ["0"])
    nap = int(ap_field[0])
    ap = tuple(a.strip('"') for a in ap_field[1:])
    if len(ap) != nap:
        raise HoaError("AP count does not match the listed names")
    acc_name = fields.get("acc-name", [])
    if not acc_name or acc_name[0] != "Rabin":
        raise HoaError("acc-name must be Rabin")
    acc = fields.get("Acceptance")
    if not acc:
        raise HoaError("missing 'Acceptance:'")
    nsets = int(acc[0])
    acc_pairs = _parse_acceptance(acc[1:], nsets)

    width = 1 << nap
    delta: list[list[int | None]] = [[None] * width for _ in range(nstates)]
    marks: dict[int, set[int]] = {}
    i = 0
    q = None
    implicit_count = 0
    while i < len(body):
        t = body[i]
        if t == "State:":
            q = int(body[i + 1])
            if not 0 <= q < nstates:
                raise HoaError(f"state {q} out of range")
            i += 2
            if i < len(body) and body[i].startswith('"'):
                i += 1
            marks[q] = set()
            if i < len(body) and body[i] == "{":
                j = body.index("}", i)
                marks[q] = {int(x) for x in body[i + 1:j]}
                i = j + 1
            implicit_count = 0
            continue
        if q is None:
            raise HoaError("edge before any 'State:'")
        if t == "[":
            j = body.index("]", i)
            pred = _parse_label(body[i + 1:j], nap)
            i = j + 1
            letters = [a for a in range(width) if pred(a)]
        else:
            letters = [implicit_count]
            implicit_count += 1
        dest = int(body[i])
        i += 1
        if i < len(body) and body[i] == "{":
            raise HoaError("transition-based acceptance is not supported")
        if "&" == (body[i] if i < len(body) else None):
            raise HoaError("alternating transitions are not supported")
        if not 0 <= dest < nstates:
            raise HoaError(f"destination {dest} out of range")
        for a in letters:
            if delta[q][a] is not None and delta[q][a] != dest:
                raise HoaError(f"nondeterministic: state {q} has two successors on letter {a}")
            delta[q][a] = dest
    for q in range(nstates):
        for a in range(width):
            if delta[q][a] is None:
                raise HoaError(f"incomplete: state {q} has no transition on letter {a}")

    everything = frozenset(range(nstates))
    pairs = []
    for fin, inf in acc_pairs:
        L = frozenset(s for s in range(nstates) if fin is not None and fin in marks.get(s, ()))
        K = everything if inf is None else frozenset(s for s in range(nstates) if inf in marks.get(s, ()))
        pairs.append((L, K))
    return Dra(ap, tuple(tuple(r) for r in delta), starts[0], tuple(pairs))
