"""Synchronous product of a POSG with a deterministic Rabin automaton."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .logic import Dra
from .model import Posg


@dataclass(frozen=True, eq=False)
class ProductPosg:
    """Product game over pairs ``(s, q)`` flattened as ``s * Q + q``.

    ``T[x, ud, ua, x2]`` is the lifted kernel, ``Od``/``Oa`` the lifted
    observation kernels, ``L``/``K`` boolean arrays of shape ``(M, S*Q)``
    holding the lifted Rabin pairs.
    """

    model: Posg
    dra: Dra
    T: np.ndarray
    Od: np.ndarray
    Oa: np.ndarray
    L: np.ndarray
    K: np.ndarray
    reachable: np.ndarray

    @property
    def num_model_states(self) -> int:
        return self.model.num_states

    @property
    def num_dra_states(self) -> int:
        return self.dra.num_states

    @property
    def num_states(self) -> int:
        return self.T.shape[0]

    @property
    def num_pairs(self) -> int:
        return self.L.shape[0]

    @property
    def initial(self) -> int:
        return self.index(self.model.initial, self.dra.initial)

    def index(self, s: int, q: int) -> int:
        return s * self.dra.num_states + q

    def split(self, x: int) -> tuple[int, int]:
        return divmod(x, self.dra.num_states)

    def state_name(self, x: int) -> str:
        s, q = self.split(x)
        return f"({self.model.states[s]},{self.dra.state_names[q]})"


def dra_letters(model: Posg, dra: Dra) -> np.ndarray:
    """Letter of each model state in the automaton's encoding."""
    missing = set(dra.ap) - set(model.ap)
    if missing:
        raise ValueError(f"automaton atoms {sorted(missing)} are not declared by the model")
    return np.array([dra.letter(lab) for lab in model.labels], dtype=int)


def build_product(model: Posg, dra: Dra) -> ProductPosg:
    """Lift ``model`` by ``dra``; the automaton reads the label of the destination state."""
    letters = dra_letters(model, dra)
    S, Q = model.num_states, dra.num_states
    delta = np.asarray(dra.delta)
    # nxt[q, s2] = delta(q, L(s2))
    nxt = delta[:, letters]
    Ud, Ua = len(model.actions_d), len(model.actions_a)
    T = np.zeros((S, Q, Ud, Ua, S, Q))
    for q in range(Q):
        for s2 in range(S):
            T[:, q, :, :, s2, nxt[q, s2]] = model.T[:, :, :, s2]
    T = T.reshape(S * Q, Ud, Ua, S * Q)
    Od = np.repeat(model.Od, Q, axis=0)
    Oa = np.repeat(model.Oa, Q, axis=0)
    M = len(dra.pairs)
    L = np.zeros((M, S * Q), dtype=bool)
    K = np.zeros((M, S * Q), dtype=bool)
    for i, (Li, Ki) in enumerate(dra.pairs):
        for q in Li:
            L[i, q::Q] = True
        for q in Ki:
            K[i, q::Q] = True
    # forward reachability from the initial pair over the union of all actions
    adj = T.sum(axis=(1, 2)) > 0
    reach = np.zeros(S * Q, dtype=bool)
    frontier = [model.initial * Q + dra.initial]
    reach[frontier[0]] = True
    while frontier:
        x = frontier.pop()
        for y in np.nonzero(adj[x] & ~reach)[0]:
            reach[y] = True
            frontier.append(int(y))
    return ProductPosg(model, dra, T, Od, Oa, L, K, reach)


def product_to_dict(prod: ProductPosg) -> dict:
    """Serialize in the model file layout, with a ``dra_state`` entry per product state."""
    from .model import posg_to_dict

    m = prod.model
    names = [prod.state_name(x) for x in range(prod.num_states)]
    flat = Posg(
        states=tuple(names),
        initial=prod.initial,
        actions_d=m.actions_d,
        actions_a=m.actions_a,
        obs_d=m.obs_d,
        obs_a=m.obs_a,
        ap=m.ap,
        labels=tuple(m.labels[prod.split(x)[0]] for x in range(prod.num_states)),
        T=prod.T,
        Od=prod.Od,
        Oa=prod.Oa,
    )
    doc = posg_to_dict(flat)
    doc["dra_state"] = {names[x]: prod.dra.state_names[prod.split(x)[1]] for x in range(prod.num_states)}
    doc["pairs"] = [
        {"L": [names[x] for x in np.nonzero(prod.L[i])[0]], "K": [names[x] for x in np.nonzero(prod.K[i])[0]]}
        for i in range(prod.num_pairs)
    ]
    return doc
