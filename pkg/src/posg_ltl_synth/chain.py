"""Global Markov chain, recurrent-class analysis and reachability."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Fsc
from .product import ProductPosg

EDGE_TOL = 1e-12


def reparam(fsc: Fsc, obs_kernel: np.ndarray) -> np.ndarray:
    """Observation-marginalized policy ``mu_hat[g, s, g2, u] = sum_o O(o|s) mu[g, o, g2, u]``."""
    if obs_kernel.shape[1] != fsc.num_obs:
        raise ValueError("observation kernel and FSC disagree on the number of observations")
    return np.einsum("so,gohu->gshu", obs_kernel, fsc.mu)


def reparam_mask(mask: np.ndarray, obs_kernel: np.ndarray) -> np.ndarray:
    """Support of :func:`reparam` for any policy respecting ``mask``."""
    return np.einsum("so,gohu->gshu", obs_kernel > 0, mask.astype(float)) > 0


@dataclass(frozen=True, eq=False)
class Gmc:
    """Chain over ``(x, g_d, g_a)`` with ``x`` a product state, flattened as
    ``(x * Gd + g_d) * Ga + g_a``."""

    product: ProductPosg
    Gd: int
    Ga: int
    P: np.ndarray
    initial: int

    @property
    def num_states(self) -> int:
        return self.P.shape[0]

    def index(self, x: int, gd: int, ga: int) -> int:
        return (x * self.Gd + gd) * self.Ga + ga

    def split(self, i: int) -> tuple[int, int, int]:
        x, rest = divmod(i, self.Gd * self.Ga)
        gd, ga = divmod(rest, self.Ga)
        return x, gd, ga

    def state_tuple(self, i: int) -> tuple[int, int, int, int]:
        x, gd, ga = self.split(i)
        s, q = self.product.split(x)
        return s, q, gd, ga

    @property
    def L(self) -> np.ndarray:
        return np.repeat(self.product.L, self.Gd * self.Ga, axis=1)

    @property
    def K(self) -> np.ndarray:
        return np.repeat(self.product.K, self.Gd * self.Ga, axis=1)


def gmc_matrix(T: np.ndarray, mu_d_hat: np.ndarray, mu_a_hat: np.ndarray) -> np.ndarray:
    """Transition matrix from the lifted kernel and two reparameterized policies."""
    X = T.shape[0]
    Gd, Ga = mu_d_hat.shape[0], mu_a_hat.shape[0]
    P = np.einsum("gxhu,kxlv,xuvy->xgkyhl", mu_d_hat, mu_a_hat, T, optimize=True)
    n = X * Gd * Ga
    return P.reshape(n, n)


def build_gmc(product: ProductPosg, fsc_d: Fsc, fsc_a: Fsc) -> Gmc:
    if fsc_d.num_obs != product.Od.shape[1] or fsc_a.num_obs != product.Oa.shape[1]:
        raise ValueError("FSC observation sets do not match the model")
    if fsc_d.num_actions != product.T.shape[1] or fsc_a.num_actions != product.T.shape[2]:
        raise ValueError("FSC action sets do not match the model")
    P = gmc_matrix(product.T, reparam(fsc_d, product.Od), reparam(fsc_a, product.Oa))
    Gd, Ga = fsc_d.num_states, fsc_a.num_states
    init = (product.initial * Gd + fsc_d.initial) * Ga + fsc_a.initial
    return Gmc(product, Gd, Ga, P, init)


def induce_digraph(P: np.ndarray) -> list[np.ndarray]:
    """Adjacency lists of the entries of ``P`` above the edge threshold."""
    P = P.P if isinstance(P, Gmc) else P
    return [np.nonzero(row > EDGE_TOL)[0] for row in P]


def sccs(adj: list) -> list[list[int]]:
    """Tarjan's algorithm, iterative; components come out in reverse topological order."""
    n = len(adj)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, i = work[-1]
            succ = adj[v]
            if i < len(succ):
                work[-1] = (v, i + 1)
                w = int(succ[i])
                if index[w] < 0:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp))
    return out


@dataclass
class RecurrenceDecomposition:
    classes: list[list[int]]
    recurrent: list[bool]
    feasible: dict[int, int]  # class index -> witnessing pair index
    class_of: np.ndarray

    @property
    def feasible_states(self) -> np.ndarray:
        mask = np.zeros(len(self.class_of), dtype=bool)
        for c in self.feasible:
            mask[self.classes[c]] = True
        return mask

    @property
    def recurrent_states(self) -> np.ndarray:
        mask = np.zeros(len(self.class_of), dtype=bool)
        for c, r in enumerate(self.recurrent):
            if r:
                mask[self.classes[c]] = True
        return mask


def decompose(P: np.ndarray, L: np.ndarray, K: np.ndarray) -> RecurrenceDecomposition:
    """Communicating classes of ``P`` with recurrence and Rabin-feasibility flags."""
    adj = induce_digraph(P)
    classes = sccs(adj)
    class_of = np.empty(len(adj), dtype=int)
    for c, comp in enumerate(classes):
        class_of[comp] = c
    recurrent = []
    feasible = {}
    for c, comp in enumerate(classes):
        closed = all((class_of[adj[v]] == c).all() for v in comp)
        recurrent.append(closed)
        if not closed:
            continue
        for i in range(L.shape[0]):
            if K[i, comp].any() and not L[i, comp].any():
                feasible[c] = i
                break
    return RecurrenceDecomposition(classes, recurrent, feasible, class_of)


def phi_feasible_recsets(gmc: Gmc) -> RecurrenceDecomposition:
    return decompose(gmc.P, gmc.L, gmc.K)


def reach_probability(P: np.ndarray, targets: np.ndarray, recurrent: np.ndarray | None = None) -> np.ndarray:
    """Absorption probability into ``targets`` (a union of recurrent classes).

    ``recurrent`` marks all recurrent states; it is computed when omitted.
    """
    P = P.P if isinstance(P, Gmc) else P
    n = P.shape[0]
    targets = np.asarray(targets, dtype=bool)
    if recurrent is None:
        dec = decompose(P, np.zeros((0, n), bool), np.zeros((0, n), bool))
        recurrent = dec.recurrent_states
        for c, r in enumerate(dec.recurrent):
            members = dec.classes[c]
            if targets[members].any() and not (r and targets[members].all()):
                raise ValueError("targets must be a union of recurrent classes")
    x = np.zeros(n)
    x[targets] = 1.0
    tr = np.nonzero(~recurrent)[0]
    if len(tr):
        A = np.eye(len(tr)) - P[np.ix_(tr, tr)]
        b = P[np.ix_(tr, np.nonzero(targets)[0])].sum(axis=1)
        try:
            sol = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as e:
            raise RuntimeError("singular absorption system") from e
        resid = np.abs(A @ sol - b).max()
        if resid > 1e-9:
            raise RuntimeError(f"absorption solve residual {resid:.2e}")
        x[tr] = np.clip(sol, 0.0, 1.0)
    return x


def satisfaction_probability(gmc: Gmc) -> tuple[float, RecurrenceDecomposition]:
    """Probability, from the initial state, of reaching a feasible recurrent set."""
    dec = phi_feasible_recsets(gmc)
    x = reach_probability(gmc.P, dec.feasible_states, dec.recurrent_states)
    return float(x[gmc.initial]), dec
