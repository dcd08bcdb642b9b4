"""Max-min value iteration over FSC structures, and exact policy evaluation.

The chain state ``(x, g_d, g_a)`` (``x`` a product state) owns a small
zero-sum game. Rows are the defender's allowed ``(g_d', u_d)`` labels,
columns the adversary's allowed ``(g_a', u_a)`` labels, and the payoff is
the expected next value. Row label ``(g', u)`` is stored at ``g' * U + u``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import decompose, reparam_mask
from .optim import batch_game_values
from .product import ProductPosg
from .structure import lifted_pairs, uniform_chain

SNAP_TOL = 1e-12


@dataclass
class Structures:
    """Support masks for both controllers (layout ``[g, o, g2, u]``)."""

    mask_d: np.ndarray
    mask_a: np.ndarray
    init_d: int = 0
    init_a: int = 0

    @property
    def Gd(self) -> int:
        return self.mask_d.shape[0]

    @property
    def Ga(self) -> int:
        return self.mask_a.shape[0]


@dataclass
class ViResult:
    V: np.ndarray
    sweeps: int
    converged: bool
    targets: np.ndarray
    strat_d: np.ndarray
    strat_a: np.ndarray
    increments: list = field(default_factory=list)
    monotone: bool = True
    vmin: float = 1.0
    variant: str = "plain"
    eps: float = 1e-6
    initial: int = 0
    Gd: int = 1
    Ga: int = 1

    @property
    def value(self) -> float:
        return float(self.V[self.initial])


def allowed_labels(product: ProductPosg, st: Structures):
    """Boolean (n, R) and (n, C) arrays of playable labels per chain state."""
    X = product.num_states
    Gd, Ga = st.Gd, st.Ga
    ad = reparam_mask(st.mask_d, product.Od)  # (Gd, X, Gd, Ud)
    aa = reparam_mask(st.mask_a, product.Oa)  # (Ga, X, Ga, Ua)
    R = ad.shape[2] * ad.shape[3]
    C = aa.shape[2] * aa.shape[3]
    rows = ad.reshape(Gd, X, R).transpose(1, 0, 2)  # (X, Gd, R)
    cols = aa.reshape(Ga, X, C).transpose(1, 0, 2)  # (X, Ga, C)
    rows = np.broadcast_to(rows[:, :, None, :], (X, Gd, Ga, R)).reshape(-1, R)
    cols = np.broadcast_to(cols[:, None, :, :], (X, Gd, Ga, C)).reshape(-1, C)
    return rows, cols


def payoff_tensor(product: ProductPosg, V: np.ndarray, Gd: int, Ga: int) -> np.ndarray:
    """Per product state game matrices ``(X, Gd*Ud, Ga*Ua)`` for value vector ``V``."""
    X, Ud, Ua = product.T.shape[:3]
    W = np.einsum("xuvy,yhl->xhulv", product.T, V.reshape(X, Gd, Ga), optimize=True)
    return W.reshape(X, Gd * Ud, Ga * Ua)


def state_game(product: ProductPosg, st: Structures, V: np.ndarray, i: int):
    """Matrix game of chain state ``i`` restricted to its playable labels.

    Returns ``(matrix, row_labels, col_labels)`` where labels are ``(g', u)``.
    """
    rows, cols = allowed_labels(product, st)
    x = i // (st.Gd * st.Ga)
    A = payoff_tensor(product, V, st.Gd, st.Ga)[x]
    ri, ci = np.nonzero(rows[i])[0], np.nonzero(cols[i])[0]
    if len(ri) == 0 or len(ci) == 0:
        raise ValueError(f"chain state {i} has no playable label for one side")
    Ud, Ua = product.T.shape[1:3]
    return A[np.ix_(ri, ci)], [divmod(int(r), Ud) for r in ri], [divmod(int(c), Ua) for c in ci]


def bellman(product: ProductPosg, st: Structures, V: np.ndarray, rows=None, cols=None, states=None):
    """Apply the max-min operator at ``states`` (default: all); returns values and strategies."""
    if rows is None:
        rows, cols = allowed_labels(product, st)
    n = len(V)
    states = np.arange(n) if states is None else np.asarray(states)
    per_x = st.Gd * st.Ga
    M = payoff_tensor(product, V, st.Gd, st.Ga)[states // per_x]
    ro, co = rows[states], cols[states]
    # pure saddle points first; they need no LP
    rmin = np.where(co[:, None, :], M, np.inf).min(axis=2)
    lower = np.where(ro, rmin, -np.inf).max(axis=1)
    cmax = np.where(ro[:, :, None], M, -np.inf).max(axis=1)
    upper = np.where(co, cmax, np.inf).min(axis=1)
    pure = upper - lower <= 1e-14
    values = np.empty(len(states))
    P = np.zeros(ro.shape)
    Q = np.zeros(co.shape)
    k = np.nonzero(pure)[0]
    values[k] = lower[k]
    P[k, np.argmax(np.where(ro[k], rmin[k], -np.inf), axis=1)] = 1.0
    Q[k, np.argmin(np.where(co[k], cmax[k], np.inf), axis=1)] = 1.0
    k = np.nonzero(~pure)[0]
    if len(k):
        v, p, q = batch_game_values(M[k], ro[k], co[k])
        values[k] = np.clip(v, lower[k], upper[k])
        P[k], Q[k] = p, q
    return values, P, Q


def structure_targets(product: ProductPosg, st: Structures) -> np.ndarray:
    """Feasible recurrent states of the chain under the uniform FSCs of the structures."""
    P = uniform_chain(product, st.mask_d, st.mask_a)
    L, K = lifted_pairs(product, st.Gd, st.Ga)
    return decompose(P, L, K).feasible_states


def termination_bound(num_states: int, num_dra: int, Gd: int, Ga: int, eps: float, vmin: float) -> int:
    """Sweep bound for the guarded variant: |S||Q||Gd||Ga| * log(1/vmin) / log(1+eps), rounded up."""
    if eps <= 0 or vmin <= 0:
        raise ValueError("eps and vmin must be positive")
    if vmin > 1:
        raise ValueError("vmin must not exceed 1")
    val = num_states * num_dra * Gd * Ga * math.log(1.0 / vmin) / math.log1p(eps)
    # guard against float noise just above an integer
    return int(math.ceil(val - 1e-9))


def value_iterate(
    product: ProductPosg,
    st: Structures,
    eps: float | None = None,
    variant: str = "plain",
    targets: np.ndarray | None = None,
    max_sweeps: int = 100000,
) -> ViResult:
    """Iterate the max-min operator from the indicator of the target states.

    ``plain`` stops once the largest increment is at most ``eps``;
    ``guarded`` only accepts a new value above ``(1 + eps)`` times the old
    one and stops when a sweep changes nothing.
    """
    if variant not in ("plain", "guarded"):
        raise ValueError(f"unknown variant {variant!r}")
    if eps is None:
        eps = 1e-6 if variant == "plain" else 1e-4
    if eps <= 0:
        raise ValueError("eps must be positive")
    Gd, Ga = st.Gd, st.Ga
    n = product.num_states * Gd * Ga
    init = (product.initial * Gd + st.init_d) * Ga + st.init_a
    if targets is None:
        targets = structure_targets(product, st)
    rows, cols = allowed_labels(product, st)
    free = np.nonzero(~targets)[0]
    V = targets.astype(float)
    res = ViResult(V, 0, False, targets, np.zeros(rows.shape), np.zeros(cols.shape),
                   variant=variant, eps=eps, initial=init, Gd=Gd, Ga=Ga)
    if not targets.any():
        res.converged = True
        return res
    vmin = 1.0
    for sweep in range(1, max_sweeps + 1):
        tv, _, _ = bellman(product, st, V, rows, cols, free)
        old = V[free]
        if variant == "plain":
            new = tv
        else:
            new = np.where(tv > (1.0 + eps) * old, tv, old)
        # float dust from the einsum may dip a hair below the previous iterate
        new = np.where((new < old) & (old - new <= SNAP_TOL), old, new)
        if (new < old).any():
            res.monotone = False
        inc = float(np.max(new - old, initial=0.0))
        V = V.copy()
        V[free] = new
        pos = V[V > 0]
        if len(pos):
            vmin = min(vmin, float(pos.min()))
        res.increments.append(inc)
        res.sweeps = sweep
        done = inc <= eps if variant == "plain" else not (new != old).any()
        if done:
            res.converged = True
            break
    res.V = V
    res.vmin = vmin
    _, P, Q = bellman(product, st, V, rows, cols)
    res.strat_d, res.strat_a = P, Q
    return res


def fixed_point_residual(product: ProductPosg, st: Structures, res: ViResult) -> float:
    tv, _, _ = bellman(product, st, res.V)
    free = ~res.targets
    return float(np.max(np.abs(tv[free] - res.V[free]), initial=0.0))


# ---------------------------------------------------------------------------
# Exact evaluation against a best-responding adversary


def response_kernels(product: ProductPosg, Gd: int, Ga: int, strat_d: np.ndarray) -> np.ndarray:
    """Transition rows ``K[i, c, j]`` when the defender plays ``strat_d`` and the adversary plays label ``c``."""
    X, Ud, Ua = product.T.shape[:3]
    n = X * Gd * Ga
    pd = strat_d.reshape(X, Gd, Ga, Gd, Ud)
    # K[x,gd,ga, ga2,ua, y,gd2] = sum_ud pd[x,gd,ga,gd2,ud] T[x,ud,ua,y]
    Kt = np.einsum("xkahu,xuvy->xkavyh", pd, product.T, optimize=True)  # (X,Gd,Ga,Ua,Y,Gd2)
    out = np.zeros((X, Gd, Ga, Ga, Ua, X, Gd, Ga))
    for a2 in range(Ga):
        out[:, :, :, a2, :, :, :, a2] = Kt
    return out.reshape(n, Ga * Ua, n)


def min_reach(Kc: np.ndarray, col_ok: np.ndarray, targets: np.ndarray, max_iter: int = 1000):
    """Minimal probability of reaching ``targets`` when the controller of ``Kc`` minimizes.

    Solved by policy iteration on the states that cannot avoid the targets
    almost surely; returns ``(values, policy)``.
    """
    n, C, _ = Kc.shape
    pos = Kc > 1e-15
    # states from which every choice keeps a positive chance of reaching targets
    Y = targets.copy()
    while True:
        hit = (pos & Y[None, None, :]).any(axis=2)  # (n, C)
        forced = np.where(col_ok, hit, True).all(axis=1) | Y
        if (forced == Y).all():
            break
        Y = forced
    free = np.nonzero(Y & ~targets)[0]
    x = np.zeros(n)
    x[targets] = 1.0
    # start from a choice that leaves the attractor when possible
    score = np.where(col_ok, (Kc * Y[None, None, :]).sum(axis=2), np.inf)
    policy = np.argmin(score, axis=1)
    for _ in range(max_iter):
        P = Kc[np.arange(n), policy]
        if len(free):
            A = np.eye(len(free)) - P[np.ix_(free, free)]
            b = P[np.ix_(free, np.nonzero(targets)[0])].sum(axis=1)
            x[free] = np.linalg.solve(A, b)
        q = np.einsum("icj,j->ic", Kc, x)
        q = np.where(col_ok, q, np.inf)
        cur = q[np.arange(n), policy]
        better = q.min(axis=1) < cur - 1e-12
        better[~Y | targets] = False
        if not better.any():
            break
        policy = np.where(better, np.argmin(q, axis=1), policy)
    return np.clip(x, 0.0, 1.0), policy


def evaluate_defender(product: ProductPosg, st: Structures, strat_d: np.ndarray, targets: np.ndarray):
    """Value of a frozen defender strategy against the best-responding adversary."""
    _, cols = allowed_labels(product, st)
    Kc = response_kernels(product, st.Gd, st.Ga, strat_d)
    return min_reach(Kc, cols, targets)


def refine_defender(product: ProductPosg, st: Structures, strat_d: np.ndarray, targets: np.ndarray,
                    max_iter: int = 200, tol: float = 1e-9):
    """Strategy improvement for the defender under exact best-response evaluation.

    A strategy read off a converged value vector can stall: where several
    labels tie, it may pick a self-loop or a jump between equivalent nodes and
    never reach the targets. Each round evaluates the current strategy
    exactly and switches to the one-step optimal mix only where that is
    strictly better, so the evaluated values never decrease. Returns
    ``(strategy, values, rounds)``.
    """
    rows, cols = allowed_labels(product, st)
    free = ~targets
    strat = np.array(strat_d, dtype=float, copy=True)
    W, _ = evaluate_defender(product, st, strat, targets)
    for k in range(max_iter):
        tv, P, _ = bellman(product, st, W, rows, cols)
        better = free & (tv > W + tol)
        if not better.any():
            return strat, W, k
        strat[better] = P[better]
        W, _ = evaluate_defender(product, st, strat, targets)
    return strat, W, max_iter
