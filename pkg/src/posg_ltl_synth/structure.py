"""Search for FSC support structures whose chain has a feasible recurrent set.

Masks have the FSC layout ``I[g, o, g2, u]``. Each (component, Rabin pair)
pass starts from the initial masks, walks the component's Bad states in
ascending order and

* forbids defender actions that can push the chain from the component into
  the current Bad state, and
* removes adversary actions that cannot steer away from the first Good state.

A pass contributes its masks when a Good state ends up in a feasible
recurrent class of the resulting chain.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import decompose, gmc_matrix, induce_digraph, reparam, sccs
from .model import full_mask, uniform_fsc
from .product import ProductPosg


@dataclass
class StructurePair:
    mask_d: np.ndarray
    mask_a: np.ndarray
    witness: int  # GMC index of the recurrent Good state
    pair_index: int
    component: int

    def key(self):
        return self.mask_d.tobytes(), self.mask_a.tobytes()


@dataclass
class SearchStats:
    passes: int = 0
    aborted: int = 0
    skipped_no_good: int = 0
    emitted: int = 0
    duplicates: int = 0
    log: list = field(default_factory=list)


def uniform_chain(product: ProductPosg, mask_d: np.ndarray, mask_a: np.ndarray) -> np.ndarray:
    """Transition matrix of the chain under the uniform FSCs of two masks."""
    fd = uniform_fsc(mask_d)
    fa = uniform_fsc(mask_a, agent="adversary")
    return gmc_matrix(product.T, reparam(fd, product.Od), reparam(fa, product.Oa))


def lifted_pairs(product: ProductPosg, Gd: int, Ga: int):
    r = Gd * Ga
    return np.repeat(product.L, r, axis=1), np.repeat(product.K, r, axis=1)


def bad_good_sets(component, pair_index: int, adj, L: np.ndarray, K: np.ndarray):
    """Bad and Good sets for one component and Rabin pair, as sorted index lists.

    Bad holds the successors outside the component plus the component's
    states in ``L[pair_index]``; Good holds the component's states in
    ``K[pair_index]``.
    """
    comp = set(component)
    bad = set()
    for v in component:
        bad.update(int(w) for w in adj[v] if int(w) not in comp)
    bad.update(v for v in component if L[pair_index, v])
    good = [v for v in component if K[pair_index, v]]
    return sorted(bad), sorted(good)


def _split(i, Gd, Ga):
    x, rest = divmod(i, Gd * Ga)
    gd, ga = divmod(rest, Ga)
    return x, gd, ga


def forbid_defender(I_d, I_a, src, dst, product: ProductPosg, Gd: int, Ga: int):
    """Zero defender entries for every action that can move ``src`` to ``dst``.

    Positivity of the product of observation, policy and kernel terms is read
    off the masks, since uniform policies are positive exactly on them.
    Returns the list of (u_d, o_d) pairs that were zeroed.
    """
    x, gd, ga = _split(src, Gd, Ga)
    x2, gd2, ga2 = _split(dst, Gd, Ga)
    od_ok = product.Od[x] > 0
    oa_ok = product.Oa[x] > 0
    t_pos = product.T[x, :, :, x2] > 0  # (ud, ua)
    # adversary side: some (o_a, u_a) with mask and kernel positive
    a_pos = (oa_ok[:, None] & I_a[ga, :, ga2, :]).any(axis=0)  # (ua,)
    reach = (t_pos & a_pos[None, :]).any(axis=1)  # (ud,)
    hit = od_ok[:, None] & I_d[gd, :, gd2, :] & reach[None, :]  # (od, ud)
    zeroed = []
    for od, ud in zip(*np.nonzero(hit)):
        I_d[:, od, :, ud] = False
        zeroed.append((int(ud), int(od)))
    return zeroed


def prune_adversary(I_d, I_a, src, good, product: ProductPosg, Gd: int, Ga: int):
    """Zero adversary entries that reach ``good`` from ``src`` whatever the defender plays."""
    x, gd, ga = _split(src, Gd, Ga)
    x2, gd2, ga2 = _split(good, Gd, Ga)
    od_ok = product.Od[x] > 0
    oa_ok = product.Oa[x] > 0
    t_pos = product.T[x, :, :, x2] > 0  # (ud, ua)
    d_pos = (od_ok[:, None] & I_d[gd, :, gd2, :]).any(axis=0)  # (ud,)
    forced = (d_pos[:, None] & t_pos).all(axis=0)  # (ua,)
    hit = oa_ok[:, None] & I_a[ga, :, ga2, :] & forced[None, :]  # (oa, ua)
    zeroed = []
    for oa, ua in zip(*np.nonzero(hit)):
        I_a[ga, oa, ga2, ua] = False
        zeroed.append((int(ua), int(oa)))
    return zeroed


def _live(mask):
    G, O = mask.shape[:2]
    return mask.reshape(G, O, -1).any(axis=2).all()


def candidate_structures(
    product: ProductPosg,
    Gd: int,
    Ga: int,
    init_d: np.ndarray | None = None,
    init_a: np.ndarray | None = None,
    stats: SearchStats | None = None,
) -> list[StructurePair]:
    """Run the structure search and return the deduplicated admissible pairs."""
    Od, Oa = product.Od.shape[1], product.Oa.shape[1]
    Ud, Ua = product.T.shape[1], product.T.shape[2]
    init_d = full_mask(Gd, Od, Ud) if init_d is None else np.asarray(init_d, bool)
    init_a = full_mask(Ga, Oa, Ua) if init_a is None else np.asarray(init_a, bool)
    if not (_live(init_d) and _live(init_a)):
        raise ValueError("initial masks must leave every (g, o) row nonempty")
    stats = stats if stats is not None else SearchStats()
    P = uniform_chain(product, init_d, init_a)
    adj = induce_digraph(P)
    comps = sccs(adj)
    L, K = lifted_pairs(product, Gd, Ga)
    out: list[StructurePair] = []
    seen = set()
    for ci, comp in enumerate(comps):
        for i in range(product.num_pairs):
            bad, good = bad_good_sets(comp, i, adj, L, K)
            if not good:
                # the closing recurrence test needs a Good state, so the pass cannot emit
                stats.skipped_no_good += 1
                continue
            stats.passes += 1
            I_d, I_a = init_d.copy(), init_a.copy()
            bad_set = set(bad)
            inner = [v for v in comp if v not in bad_set]
            target = good[0]
            alive = True
            for dst in bad:
                for src in inner:
                    forbid_defender(I_d, I_a, src, dst, product, Gd, Ga)
                    if not _live(I_d):
                        alive = False
                        break
                    prune_adversary(I_d, I_a, src, target, product, Gd, Ga)
                    if not _live(I_a):
                        alive = False
                        break
                if not alive:
                    break
            if not alive:
                stats.aborted += 1
                stats.log.append((ci, i, "aborted"))
                continue
            P_new = uniform_chain(product, I_d, I_a)
            dec = decompose(P_new, L, K)
            witness = None
            for g in good:
                c = dec.class_of[g]
                if c in dec.feasible:
                    witness = g
                    break
            if witness is None:
                stats.log.append((ci, i, "no recurrent good state"))
                continue
            pair = StructurePair(I_d, I_a, witness, i, ci)
            if pair.key() in seen:
                stats.duplicates += 1
                continue
            seen.add(pair.key())
            out.append(pair)
            stats.emitted += 1
            stats.log.append((ci, i, "emitted"))
    return out


def random_sparse_mask(rng: np.random.Generator, G: int, O: int, U: int, keep: float) -> np.ndarray:
    """Random mask keeping each entry with probability ``keep``; empty rows get one entry."""
    mask = rng.random((G, O, G, U)) < keep
    flat = mask.reshape(G, O, G * U)
    for g in range(G):
        for o in range(O):
            if not flat[g, o].any():
                flat[g, o, rng.integers(G * U)] = True
    return flat.reshape(G, O, G, U)
