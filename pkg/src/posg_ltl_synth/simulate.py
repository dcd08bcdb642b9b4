"""Monte Carlo execution of a POSG closed by two finite state controllers.

All randomness comes from Philox streams. ``simulate`` seeds its stream with
``SeedSequence(seed)``; ``success_rate`` runs trial ``i`` with ``seed + i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .logic import Dra
from .model import Fsc, Posg
from .product import dra_letters


def make_rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass
class Trace:
    """Sampled path. ``states`` has ``steps + 1`` entries; the per-step arrays have ``steps``."""

    states: np.ndarray
    obs_d: np.ndarray
    obs_a: np.ndarray
    g_d: np.ndarray  # node before each step, plus the final node
    g_a: np.ndarray
    u_d: np.ndarray
    u_a: np.ndarray
    seed: int
    steps: int

    def rows(self):
        """Per-step tuples ``(s, o_d, o_a, g_d, g_a, u_d, u_a)``."""
        for k in range(self.steps):
            yield (int(self.states[k]), int(self.obs_d[k]), int(self.obs_a[k]), int(self.g_d[k]),
                   int(self.g_a[k]), int(self.u_d[k]), int(self.u_a[k]))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "steps": self.steps,
                **{k: getattr(self, k).tolist() for k in
                   ("states", "obs_d", "obs_a", "g_d", "g_a", "u_d", "u_a")}}


def _check_pair(model: Posg, fsc_d: Fsc, fsc_a: Fsc):
    if fsc_d.num_obs != model.Od.shape[1] or fsc_a.num_obs != model.Oa.shape[1]:
        raise ValueError("controller observation sets do not match the model")
    if fsc_d.num_actions != model.T.shape[1] or fsc_a.num_actions != model.T.shape[2]:
        raise ValueError("controller action sets do not match the model")


def _draw(rng, p):
    # inverse-cdf draw that never lands on a zero-probability index
    c = np.cumsum(p)
    k = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    k = min(k, len(p) - 1)
    while p[k] <= 0:
        k -= 1
    return k


class _Walker:
    """Step-by-step sampler shared by ``simulate`` and ``success_rate``."""

    def __init__(self, model: Posg, fsc_d: Fsc, fsc_a: Fsc, seed: int):
        _check_pair(model, fsc_d, fsc_a)
        self.m = model
        self.rng = make_rng(seed)
        self.Ud = model.T.shape[1]
        self.Ua = model.T.shape[2]
        self.mu_d = fsc_d.mu.reshape(fsc_d.num_states, fsc_d.num_obs, -1)
        self.mu_a = fsc_a.mu.reshape(fsc_a.num_states, fsc_a.num_obs, -1)
        self.s, self.gd, self.ga = model.initial, fsc_d.initial, fsc_a.initial

    def step(self):
        m, rng = self.m, self.rng
        od = _draw(rng, m.Od[self.s])
        oa = _draw(rng, m.Oa[self.s])
        gd2, ud = divmod(_draw(rng, self.mu_d[self.gd, od]), self.Ud)
        ga2, ua = divmod(_draw(rng, self.mu_a[self.ga, oa]), self.Ua)
        rec = (self.s, od, oa, self.gd, self.ga, ud, ua)
        self.s = _draw(rng, m.T[self.s, ud, ua])
        self.gd, self.ga = gd2, ga2
        return rec


def simulate(model: Posg, fsc_d: Fsc, fsc_a: Fsc, steps: int, seed: int) -> Trace:
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    w = _Walker(model, fsc_d, fsc_a, seed)
    recs = [w.step() for _ in range(steps)]
    cols = list(zip(*recs)) if recs else [()] * 7
    states = np.array(list(cols[0]) + [w.s], dtype=int)
    return Trace(states, np.array(cols[1], dtype=int), np.array(cols[2], dtype=int),
                 np.array(list(cols[3]) + [w.gd], dtype=int), np.array(list(cols[4]) + [w.ga], dtype=int),
                 np.array(cols[5], dtype=int), np.array(cols[6], dtype=int), seed, steps)


def _atom_states(model: Posg, atom: str | None) -> np.ndarray:
    if atom is None:
        return np.zeros(model.num_states, dtype=bool)
    if atom not in model.ap:
        raise ValueError(f"unknown atomic proposition {atom!r}")
    return np.array([atom in lab for lab in model.labels])


def first_hits(model: Posg, fsc_d: Fsc, fsc_a: Fsc, target: str, forbidden: str | None,
               horizon: int, trials: int, seed: int) -> list:
    """Step of first target arrival per trial, or ``None`` (missed or hit a forbidden state first)."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    tgt = _atom_states(model, target)
    bad = _atom_states(model, forbidden)
    out = []
    for i in range(trials):
        w = _Walker(model, fsc_d, fsc_a, seed + i)
        hit = None
        for k in range(horizon + 1):
            if bad[w.s]:
                break
            if tgt[w.s]:
                hit = k
                break
            if k < horizon:
                w.step()
        out.append(hit)
    return out


def success_rate(model: Posg, fsc_d: Fsc, fsc_a: Fsc, target: str, forbidden: str | None,
                 caps, trials: int, seed: int) -> dict:
    """Fraction of trials reaching ``target`` within each cap while avoiding ``forbidden``.

    Counts are exact; the returned fractions are ``Fraction`` objects keyed by cap.
    """
    caps = sorted(int(c) for c in caps)
    hits = first_hits(model, fsc_d, fsc_a, target, forbidden, caps[-1], trials, seed)
    return {c: Fraction(sum(h is not None and h <= c for h in hits), trials) for c in caps}


# ---------------------------------------------------------------------------
# Vectorized runs with the automaton in the loop


class _CdfTable:
    """Categorical rows flattened for one ``searchsorted`` call per batch.

    Row ``r`` occupies the interval ``[r, r + 1)``; its cumulative weights are
    normalized and shifted by ``r``.
    """

    def __init__(self, probs: np.ndarray):
        p = probs.reshape(-1, probs.shape[-1])
        self.k = p.shape[1]
        c = np.cumsum(p, axis=1)
        c = c / np.where(c[:, -1:] > 0, c[:, -1:], 1.0)
        c[:, -1] = 1.0
        self.flat = (c + np.arange(len(p))[:, None]).ravel()
        self.shape = probs.shape[:-1]

    def draw(self, rng, rows: np.ndarray) -> np.ndarray:
        u = rng.random(len(rows))
        j = np.searchsorted(self.flat, rows + u, side="right")
        return np.minimum(j - rows * self.k, self.k - 1)


def rabin_batch(model: Posg, dra: Dra, fsc_d: Fsc, fsc_a: Fsc, steps: int, trials: int,
                seed: int, window: int | None = None) -> np.ndarray:
    """Simulate ``trials`` runs for ``steps`` steps and judge Rabin acceptance on the tail.

    A run counts as accepting when, over its last ``window`` steps, some pair
    sees a state of K and none of L. The automaton reads each destination
    label and starts in its initial state, matching the product construction.
    """
    _check_pair(model, fsc_d, fsc_a)
    window = window or max(1, steps // 10)
    if window > steps:
        raise ValueError("window longer than the run")
    rng = make_rng(seed)
    letters = dra_letters(model, dra)
    delta = np.array(dra.delta)
    M = len(dra.pairs)
    Lq = np.array([[q in L for q in range(len(dra.delta))] for L, _ in dra.pairs]).reshape(M, -1)
    Kq = np.array([[q in K for q in range(len(dra.delta))] for _, K in dra.pairs]).reshape(M, -1)
    Ud, Ua = model.T.shape[1:3]
    tOd, tOa = _CdfTable(model.Od), _CdfTable(model.Oa)
    tmd = _CdfTable(fsc_d.mu.reshape(fsc_d.num_states, fsc_d.num_obs, -1))
    tma = _CdfTable(fsc_a.mu.reshape(fsc_a.num_states, fsc_a.num_obs, -1))
    tT = _CdfTable(model.T)
    Od_n, Oa_n = model.Od.shape[1], model.Oa.shape[1]
    s = np.full(trials, model.initial)
    q = np.full(trials, dra.initial)
    gd = np.full(trials, fsc_d.initial)
    ga = np.full(trials, fsc_a.initial)
    seenL = np.zeros((M, trials), bool)
    seenK = np.zeros((M, trials), bool)
    for k in range(steps):
        od = tOd.draw(rng, s)
        oa = tOa.draw(rng, s)
        gd2, ud = np.divmod(tmd.draw(rng, gd * Od_n + od), Ud)
        ga2, ua = np.divmod(tma.draw(rng, ga * Oa_n + oa), Ua)
        s = tT.draw(rng, (s * Ud + ud) * Ua + ua)
        q = delta[q, letters[s]]
        gd, ga = gd2, ga2
        if k >= steps - window:
            seenL |= Lq[:, q]
            seenK |= Kq[:, q]
    return (seenK & ~seenL).any(axis=0)
