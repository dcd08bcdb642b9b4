"""Seeded random instances shared by several test files."""
from __future__ import annotations

import itertools

import numpy as np

from posg_ltl_synth import logic as L
from posg_ltl_synth.model import Fsc, Posg, example1_grid
from posg_ltl_synth.product import build_product

PHI = "G F tar & G !obs"


def rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([2024, seed])))


def random_posg(r, S, Ud=2, Ua=2, Od=2, Oa=2, density=0.5) -> Posg:
    T = r.random((S, Ud, Ua, S)) * (r.random((S, Ud, Ua, S)) < density)
    for idx in np.ndindex(S, Ud, Ua):
        if T[idx].sum() == 0:
            T[idx][r.integers(S)] = 1.0
    T /= T.sum(axis=3, keepdims=True)

    def kernel(O):
        K = r.random((S, O)) * (r.random((S, O)) < 0.7)
        K[K.sum(axis=1) == 0, 0] = 1.0
        return K / K.sum(axis=1, keepdims=True)

    labels = tuple(frozenset({"a"}) if r.random() < 0.5 else frozenset() for _ in range(S))
    return Posg(tuple(f"s{i}" for i in range(S)), 0, tuple(f"d{u}" for u in range(Ud)),
                tuple(f"a{u}" for u in range(Ua)), tuple(f"o{o}" for o in range(Od)),
                tuple(f"p{o}" for o in range(Oa)), ("a",), labels, T, kernel(Od), kernel(Oa))


def random_dra2(r) -> L.Dra:
    """Two-state automaton over one atom with a random transition table and pair."""
    delta = tuple(tuple(int(x) for x in r.integers(0, 2, size=2)) for _ in range(2))
    Lset = frozenset(q for q in range(2) if r.random() < 0.3)
    Kset = frozenset(q for q in range(2) if r.random() < 0.6 and q not in Lset) or frozenset({1})
    return L.Dra(("a",), delta, 0, ((Lset - Kset, Kset),))


def random_product(seed, max_states=4):
    r = rng(seed)
    m = random_posg(r, int(r.integers(2, max_states + 1)))
    return build_product(m, random_dra2(r)), r


def random_fsc(r, G, O, U, agent="defender", density=0.6) -> Fsc:
    mask = r.random((G, O, G, U)) < density
    for g, o in np.ndindex(G, O):
        if not mask[g, o].any():
            mask[g, o].flat[r.integers(G * U)] = True
    mu = r.random(mask.shape) * mask
    mu /= mu.reshape(G, O, -1).sum(axis=2)[:, :, None, None]
    return Fsc(mu, mask, 0, agent)


def running_product(model=None):
    m = model or example1_grid()
    return build_product(m, L.ltl_to_dra(L.parse_ltl(PHI), ap=m.ap))


def weighted_fsc(r, mask, agent="defender"):
    """Random positive weights on exactly the entries of ``mask``."""
    G, O = mask.shape[:2]
    mu = (r.random(mask.shape) + 0.1) * mask
    mu /= mu.reshape(G, O, -1).sum(axis=2)[:, :, None, None]
    return Fsc(mu, mask.copy(), 0, agent)


def grid_pairs():
    """Three controller pairs on the 3x2 grid whose satisfaction values lie strictly inside (0, 1)."""
    from posg_ltl_synth.experiments import example1_start_masks
    from posg_ltl_synth.model import full_mask, uniform_fsc
    from posg_ltl_synth.structure import candidate_structures

    p = running_product()
    ru = example1_start_masks(2)
    ma = full_mask(1, 2, 2)
    cand = candidate_structures(p, 2, 1, ru, ma)[0]
    r = rng(42)
    return p, [
        (uniform_fsc(cand.mask_d), uniform_fsc(cand.mask_a, agent="adversary")),
        (weighted_fsc(r, ru), uniform_fsc(ma, agent="adversary")),
        (weighted_fsc(r, ru), weighted_fsc(r, ma, "adversary")),
    ]


def example1_structures():
    """The 3x2 grid with the single structure pair the search emits from the R/U start."""
    from posg_ltl_synth.experiments import example1_start_masks
    from posg_ltl_synth.model import full_mask
    from posg_ltl_synth.structure import candidate_structures
    from posg_ltl_synth.vi import Structures

    p = running_product()
    c = candidate_structures(p, 2, 1, example1_start_masks(2), full_mask(1, 2, 2))[0]
    return p, Structures(c.mask_d, c.mask_a)


def one_action_adversary_instances(count=15):
    from posg_ltl_synth.structure import candidate_structures
    from posg_ltl_synth.vi import Structures

    out = []
    seed = 0
    while len(out) < count:
        r = rng(1000 + seed)
        seed += 1
        m = random_posg(r, int(r.integers(2, 5)), Ud=3, Ua=1)
        p = build_product(m, random_dra2(r))
        cands = candidate_structures(p, 2, 1)
        if cands:
            out.append((p, Structures(cands[0].mask_d, cands[0].mask_a)))
    return out


def stripped_grid_instances():
    from posg_ltl_synth.experiments import (draw_trial, example1_start_masks, example2_grid, grid_product,
                                            strip_adversary)
    from posg_ltl_synth.model import full_mask
    from posg_ltl_synth.structure import candidate_structures
    from posg_ltl_synth.vi import Structures

    out = []
    p1 = grid_product(strip_adversary(running_product().model))
    for c in candidate_structures(p1, 2, 1, example1_start_masks(2), full_mask(1, 2, 1)):
        out.append((p1, Structures(c.mask_d, c.mask_a)))
    full = grid_product(example2_grid())
    p2 = grid_product(strip_adversary(example2_grid()))
    for t in range(3):
        ts = draw_trial(full, 2, 1, 5, t)
        for mask_d in ts.defender:
            cands = candidate_structures(p2, mask_d.shape[0], 1, mask_d, full_mask(1, 2, 1))
            out += [(p2, Structures(c.mask_d, c.mask_a)) for c in cands[:1]]
    return out


# formulas of the supported fragment, each with its atom set
FRAGMENT = [
    ("F a", ("a",)),
    ("G a", ("a",)),
    ("G !b", ("b",)),
    ("G F a", ("a",)),
    ("F G a", ("a",)),
    ("a U b", ("a", "b")),
    ("G F a & G !b", ("a", "b")),
    ("F G a & G F b", ("a", "b")),
    ("F a & G !b", ("a", "b")),
    ("a U b & G F a", ("a", "b")),
]


def letters_over(ap):
    return [frozenset(a for k, a in enumerate(ap) if bits >> k & 1) for bits in range(1 << len(ap))]


def all_lassos(ap, max_len=4):
    alphabet = letters_over(ap)
    for total in range(1, max_len + 1):
        for plen in range(total):
            for prefix in itertools.product(alphabet, repeat=plen):
                for cycle in itertools.product(alphabet, repeat=total - plen):
                    yield list(prefix), list(cycle)


def agrees_on_lassos(f, ap, max_len=4):
    from oracles import ltl_holds

    dra = L.ltl_to_dra(f, ap=ap)
    for prefix, cycle in all_lassos(ap, max_len):
        want = ltl_holds(f, prefix, cycle)
        p = [dra.letter(x) for x in prefix]
        c = [dra.letter(x) for x in cycle]
        if L.dra_accepts_lasso(dra, p, c, unroll=True) != want:
            return False, (prefix, cycle, want)
    return True, None
