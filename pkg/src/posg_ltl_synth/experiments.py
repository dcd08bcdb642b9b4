"""Grid-world experiment harness: structure draws, value tables and success curves.

Each trial owns a Philox stream keyed by ``(seed, trial, role, attempt)``.
A trial grows one defender mask and one adversary mask node by node, so the
cells of a table share their random draws (common random numbers): the
structure used for ``|G_d| = k`` is the one for ``k - 1`` plus a node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .logic import ltl_to_dra, parse_ltl
from .model import Posg, grid_world
from .product import ProductPosg, build_product
from .structure import candidate_structures, random_sparse_mask
from .vi import Structures, evaluate_defender, refine_defender, structure_targets, value_iterate

FORMULA = "G F tar & G !obs"
EXAMPLE2_OBSTACLES = frozenset({7, 12, 16})
EXAMPLE2_TARGET = 19

# keep probabilities of the structure sampler
KEEP_D = 0.6
KEEP_A = 0.4
KEEP_LINK = 0.5
MAX_ATTEMPTS = 2000


class HarnessError(RuntimeError):
    pass


def example2_grid(**kw) -> Posg:
    """5x4 grid, target in the far corner, labeled cells observed correctly."""
    return grid_world(5, 4, obstacles=EXAMPLE2_OBSTACLES, targets={EXAMPLE2_TARGET},
                      sure_labels=True, **kw)


def grid_product(model: Posg, formula: str = FORMULA) -> ProductPosg:
    return build_product(model, ltl_to_dra(parse_ltl(formula), ap=model.ap))


def trial_rng(seed: int, trial: int, role: int, attempt: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, role, attempt])))


def grow_mask(rng: np.random.Generator, mask: np.ndarray | None, U: int, O: int,
              keep: float, link: float) -> np.ndarray:
    """Append one node to ``mask``.

    Old rows keep their entries and may also jump to the new node with any
    action they already use (probability ``link`` per entry). The new node's
    rows are drawn entrywise with probability ``keep``.
    """
    if mask is None:
        return random_sparse_mask(rng, 1, O, U, keep)
    G = mask.shape[0]
    out = np.zeros((G + 1, O, G + 1, U), dtype=bool)
    out[:G, :, :G, :] = mask
    used = mask.any(axis=2)  # (G, O, U)
    out[:G, :, G, :] = used & (rng.random((G, O, U)) < link)
    out[G] = random_sparse_mask(rng, G + 1, O, U, keep)[G]
    return out


@dataclass
class TrialStructures:
    """Nested masks of one trial: ``defender[k-1]`` has k nodes."""

    defender: list
    adversary: list
    attempts: list = field(default_factory=list)


def _admissible(product, mask_d, adversaries):
    found = []
    for mask_a in adversaries:
        c = candidate_structures(product, mask_d.shape[0], mask_a.shape[0], mask_d, mask_a)
        if not c:
            return None
        found.append(c)
    return found


def draw_trial(product: ProductPosg, gd_max: int, ga_max: int, seed: int, trial: int,
               keep_d: float | None = None, keep_a: float | None = None, link: float | None = None,
               max_attempts: int | None = None) -> TrialStructures:
    """Grow adversary masks up to ``ga_max`` nodes, then defender masks up to ``gd_max``.

    A defender node is kept once the structure search emits a pair against
    every adversary mask of the trial; otherwise it is redrawn from the next
    attempt stream.
    """
    keep_d = KEEP_D if keep_d is None else keep_d
    keep_a = KEEP_A if keep_a is None else keep_a
    link = KEEP_LINK if link is None else link
    max_attempts = MAX_ATTEMPTS if max_attempts is None else max_attempts
    Ud, Ua = product.T.shape[1:3]
    Od, Oa = product.Od.shape[1], product.Oa.shape[1]
    adv = []
    mask = None
    for k in range(ga_max):
        mask = grow_mask(trial_rng(seed, trial, 100 + k, 0), mask, Ua, Oa, keep_a, link)
        adv.append(mask)
    out = TrialStructures([], adv)
    mask = None
    for k in range(gd_max):
        for attempt in range(max_attempts):
            cand = grow_mask(trial_rng(seed, trial, k, attempt), mask, Ud, Od, keep_d, link)
            if _admissible(product, cand, adv) is not None:
                break
        else:
            raise HarnessError(f"trial {trial}: no admissible {k + 1}-node defender mask "
                               f"after {max_attempts} attempts")
        mask = cand
        out.defender.append(mask)
        out.attempts.append(attempt + 1)
    return out


def best_structure(product: ProductPosg, mask_d: np.ndarray, mask_a: np.ndarray,
                   eps: float, variant: str):
    """Solve every emitted candidate and keep the one with the largest initial value."""
    best = None
    for c in candidate_structures(product, mask_d.shape[0], mask_a.shape[0], mask_d, mask_a):
        st = Structures(c.mask_d, c.mask_a)
        res = value_iterate(product, st, eps=eps, variant=variant)
        if best is None or res.value > best[1].value:
            best = (st, res)
    if best is None:
        raise HarnessError("structure search emitted nothing")
    return best


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
            "n": int(len(v)), "values": [float(x) for x in v]}


def table1(trials: int = 100, gds=(1, 2, 3, 4), gas=(1, 2), seed: int = 7,
           eps: float = 1e-4, variant: str = "guarded", model: Posg | None = None,
           progress=None) -> dict:
    """Mean and spread of the initial value for each (|G_d|, |G_a|) cell."""
    model = model or example2_grid()
    product = grid_product(model)
    gd_max, ga_max = max(gds), max(gas)
    vals = {(gd, ga): [] for gd in gds for ga in gas}
    attempts = []
    for t in range(trials):
        ts = draw_trial(product, gd_max, ga_max, seed, t)
        attempts.append(ts.attempts)
        for gd in gds:
            for ga in gas:
                _, res = best_structure(product, ts.defender[gd - 1], ts.adversary[ga - 1], eps, variant)
                vals[(gd, ga)].append(res.value)
        if progress:
            progress(t)
    cells = [{"gd": gd, "ga": ga, **summarize(vals[(gd, ga)])} for gd in gds for ga in gas]
    return {"experiment": "table1", "seed": seed, "trials": trials, "eps": eps, "variant": variant,
            "cells": cells, "attempts": attempts}


def strip_adversary(model: Posg, keep: str = "NA") -> Posg:
    """Copy of ``model`` in which the adversary has the single action ``keep``."""
    a = model.actions_a.index(keep)
    return Posg(states=model.states, initial=model.initial, actions_d=model.actions_d,
                actions_a=(keep,), obs_d=model.obs_d, obs_a=model.obs_a, ap=model.ap,
                labels=model.labels, T=model.T[:, :, [a], :].copy(), Od=model.Od, Oa=model.Oa)


def table2_trial(product: ProductPosg, benign: ProductPosg, mask_d: np.ndarray, mask_a: np.ndarray,
                 eps: float, variant: str) -> dict:
    """The three columns for one defender mask against a one-node adversary mask."""
    one = np.ones((1, mask_a.shape[1], 1, 1), dtype=bool)
    st_b, res_b = best_structure(benign, mask_d, one, eps, variant)
    # greedy strategies can stall on ties, so both defenders are refined before scoring
    strat_b, _, _ = refine_defender(benign, st_b, res_b.strat_d, res_b.targets)
    # the benign defender, frozen, against a best-responding adversary
    st = Structures(st_b.mask_d, mask_a)
    targets = structure_targets(product, st)
    vals, _ = evaluate_defender(product, st, strat_b, targets)
    init = product.initial * st.Gd * st.Ga
    st_w, res_w = best_structure(product, mask_d, mask_a, eps, variant)
    _, vals_w, _ = refine_defender(product, st_w, res_w.strat_d, res_w.targets)
    return {"benign": res_b.value, "adversarial_baseline": float(vals[init]),
            "aware": float(vals_w[init]), "aware_vi": res_w.value}


def table2(trials: int = 100, gds=(1, 2, 3, 4), seed: int = 7, eps: float = 1e-4,
           variant: str = "guarded", model: Posg | None = None, progress=None) -> dict:
    """Benign baseline, adversarial baseline and adversary-aware values with |G_a| = 1."""
    model = model or example2_grid()
    product = grid_product(model)
    benign = grid_product(strip_adversary(model))
    cols = ("benign", "adversarial_baseline", "aware", "aware_vi")
    vals = {(gd, c): [] for gd in gds for c in cols}
    for t in range(trials):
        ts = draw_trial(product, max(gds), 1, seed, t)
        for gd in gds:
            row = table2_trial(product, benign, ts.defender[gd - 1], ts.adversary[0], eps, variant)
            for c in cols:
                vals[(gd, c)].append(row[c])
        if progress:
            progress(t)
    rows = [{"gd": gd, **{c: summarize(vals[(gd, c)]) for c in cols}} for gd in gds]
    return {"experiment": "table2", "seed": seed, "trials": trials, "eps": eps, "variant": variant,
            "rows": rows}


def adversary_projection(product: ProductPosg, fsc_d, mask_a: np.ndarray, targets: np.ndarray, weights):
    """Adversary controller averaging the worst-case local maps over its chain states."""
    from .improve import map_kernels
    from .model import Fsc
    from .vi import min_reach

    K, ok, maps = map_kernels(product, fsc_d, mask_a)
    _, policy = min_reach(K, ok, targets)
    Ga, Oa, _, Ua = mask_a.shape
    Gd = fsc_d.num_states
    mu = np.zeros((Ga, Oa, Ga * Ua))
    ga_of = np.arange(len(policy)) % Ga
    for i in np.nonzero(weights > 0)[0]:
        for o, c in enumerate(maps[ga_of[i]][policy[i]]):
            mu[ga_of[i], o, c] += weights[i]
    for g in range(Ga):
        for o in range(Oa):
            if mu[g, o].sum() == 0:
                mu[g, o] = mask_a[g, o].reshape(-1)
            mu[g, o] /= mu[g, o].sum()
    model = product.model
    return Fsc(mu.reshape(mask_a.shape), mask_a.copy(), 0, "adversary", model.obs_a, model.actions_a)


def synthesize_pair(product: ProductPosg, mask_d: np.ndarray, mask_a: np.ndarray, eps: float,
                    variant: str):
    """Realizable defender and adversary controllers for one structure pair.

    The refined value-iteration strategy is projected onto an
    observation-based defender controller, whose rows are then improved by
    the robust LP until every node is tangent. The adversary is the
    projection of the worst-case response to that controller. Returns
    ``(fsc_d, fsc_a, info)``.
    """
    from .improve import improve_to_fixpoint, recover_fsc

    st, res = best_structure(product, mask_d, mask_a, eps, variant)
    strat_d, W, rounds = refine_defender(product, st, res.strat_d, res.targets)
    X = product.num_states
    model = product.model
    w = np.repeat(product.reachable.astype(float), st.Gd * st.Ga) * ~res.targets
    fsc_d, resid = recover_fsc(strat_d, product.Od, st.mask_d, X, st.Gd, st.Ga, "defender", w,
                               names={"obs_names": model.obs_d, "action_names": model.actions_d})
    fsc_d, V, hist, _ = improve_to_fixpoint(product, fsc_d, st.mask_a, res.targets)
    fsc_a = adversary_projection(product, fsc_d, st.mask_a, res.targets, w)
    init = (product.initial * st.Gd + st.init_d) * st.Ga + st.init_a
    info = {"vi_value": res.value, "refined_value": float(W[init]), "fsc_value": float(V[init]),
            "improve_sweeps": len(hist), "residual_d": resid}
    return fsc_d, fsc_a, info


def fig5(structures: int = 20, runs: int = 100, caps=(40, 80), gds=(1, 2, 3, 4), gas=(1, 2),
         seed: int = 7, eps: float = 1e-4, variant: str = "guarded", model: Posg | None = None,
         progress=None) -> dict:
    """First-arrival success fractions per step cap for every (|G_d|, |G_a|) with |G_d| >= |G_a|.

    Each configuration pools ``runs`` simulated paths over each of
    ``structures`` drawn structure pairs. Counts are exact integers.
    """
    from .simulate import first_hits

    model = model or example2_grid()
    product = grid_product(model)
    caps = sorted(int(c) for c in caps)
    configs = [(gd, ga) for ga in gas for gd in gds if gd >= ga]
    counts = {cfg: {c: 0 for c in caps} for cfg in configs}
    values = {cfg: [] for cfg in configs}
    for t in range(structures):
        ts = draw_trial(product, max(gds), max(gas), seed, t)
        for gd, ga in configs:
            fd, fa, info = synthesize_pair(product, ts.defender[gd - 1], ts.adversary[ga - 1], eps, variant)
            values[(gd, ga)].append(info)
            hits = first_hits(model, fd, fa, "tar", "obs", caps[-1], runs, seed * 1000003 + t * runs)
            for c in caps:
                counts[(gd, ga)][c] += sum(h is not None and h <= c for h in hits)
        if progress:
            progress(t)
    total = structures * runs
    curves = [{"gd": gd, "ga": ga, "total": total,
               "successes": {str(c): counts[(gd, ga)][c] for c in caps},
               "fraction": {str(c): counts[(gd, ga)][c] / total for c in caps},
               "fsc_value_mean": float(np.mean([v["fsc_value"] for v in values[(gd, ga)]])),
               "vi_value_mean": float(np.mean([v["vi_value"] for v in values[(gd, ga)]]))}
              for gd, ga in configs]
    return {"experiment": "fig5", "seed": seed, "structures": structures, "runs": runs,
            "caps": caps, "eps": eps, "variant": variant, "curves": curves}


def example1_start_masks(Gd: int = 2) -> np.ndarray:
    """Defender start mask for the 3x2 example: only R and U under both observations.

    With every entry allowed the search finds nothing on this grid (see
    ``example1``), so the walkthrough needs a sparser start.
    """
    mask = np.zeros((Gd, 2, Gd, 4), dtype=bool)
    mask[:, :, :, [0, 2]] = True
    return mask


def example1(eps: float = 1e-6) -> dict:
    """Sizes, structure search and values on the 3x2 grid with |G_d| = 2, |G_a| = 1."""
    from .chain import build_gmc, satisfaction_probability
    from .model import example1_grid, full_mask, uniform_fsc
    from .structure import SearchStats

    model = example1_grid()
    product = grid_product(model)
    Gd, Ga = 2, 1
    out = {"experiment": "example1", "num_states": model.num_states,
           "dra_states": product.num_dra_states, "product_states": product.num_states,
           "gmc_states": product.num_states * Gd * Ga}
    runs = {}
    for name, init_d in (("all_ones", full_mask(Gd, 2, 4)), ("right_up", example1_start_masks(Gd))):
        stats = SearchStats()
        cands = candidate_structures(product, Gd, Ga, init_d, full_mask(Ga, 2, 2), stats=stats)
        entry = {"passes": stats.passes, "aborted": stats.aborted, "emitted": stats.emitted,
                 "candidates": []}
        for c in cands:
            gmc = build_gmc(product, uniform_fsc(c.mask_d), uniform_fsc(c.mask_a, agent="adversary"))
            p, dec = satisfaction_probability(gmc)
            st = Structures(c.mask_d, c.mask_a)
            res = value_iterate(product, st, eps=eps)
            entry["candidates"].append({
                "witness": list(gmc.state_tuple(c.witness)), "pair": c.pair_index,
                "uniform_value": p, "vi_value": res.value, "sweeps": res.sweeps,
                "feasible_classes": len(dec.feasible)})
        runs[name] = entry
    out["search"] = runs
    return out
