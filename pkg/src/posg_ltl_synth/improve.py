"""Belief look-ahead, robust node improvement and controller growth."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .chain import induce_digraph, reparam
from .model import Fsc, Posg
from .optim import LinearProgram, solve_lp
from .product import ProductPosg, dra_letters
from .structure import uniform_chain
from .vi import Structures, ViResult, min_reach, structure_targets, value_iterate

TANGENT_TOL = 1e-8
EPS_SNAP = 1e-10
VERTEX_CAP = 10**6


# ---------------------------------------------------------------------------
# Beliefs over model states


def obs_likelihood(b: np.ndarray, o: int, model: Posg) -> float:
    return float(model.Od[:, o] @ b)


def belief_update(b: np.ndarray, ud: int, ua: int, o: int, model: Posg) -> np.ndarray:
    """Posterior-normalized look-ahead belief; the observation is of the current state."""
    z = obs_likelihood(b, o, model)
    if z <= 0:
        raise ValueError(f"observation {model.obs_d[o]} has zero likelihood under this belief")
    w = model.Od[:, o] * b
    return (w @ model.T[:, ud, ua, :]) / z


def node_values(product: ProductPosg, V: np.ndarray, Gd: int, Ga: int, init_a: int = 0) -> np.ndarray:
    """Alpha vectors ``V_g(s) = V(s, delta(q0, L(s)), g, g0_a)``, shape ``(Gd, S)``."""
    dra = product.dra
    letters = dra_letters(product.model, dra)
    S, Q = product.num_model_states, dra.num_states
    q = np.asarray(dra.delta)[dra.initial, letters]
    x = np.arange(S) * Q + q
    V3 = V.reshape(S * Q, Gd, Ga)
    return V3[x, :, init_a].T.copy()


def belief_value(b: np.ndarray, alphas: np.ndarray) -> tuple[float, int]:
    vals = alphas @ b
    g = int(np.argmax(vals))
    return float(vals[g]), g


def lookahead_value(b: np.ndarray, alphas: np.ndarray, model: Posg):
    """One-step max-min backup over pure action pairs.

    Returns ``(value, u_d*, g_d*)`` where ``g_d*`` is the node that is best
    for the predicted next belief under the equilibrium action pair.
    """
    Ud, Ua = len(model.actions_d), len(model.actions_a)
    table = np.zeros((Ud, Ua))
    pred = np.zeros((Ud, Ua, model.num_states))
    for ud in range(Ud):
        for ua in range(Ua):
            for o in range(len(model.obs_d)):
                z = obs_likelihood(b, o, model)
                if z <= 0:
                    continue
                bo = belief_update(b, ud, ua, o, model)
                table[ud, ua] += z * belief_value(bo, alphas)[0]
                pred[ud, ua] += z * bo
    worst = table.min(axis=1)
    ud = int(np.argmax(worst))
    ua = int(np.argmin(table[ud]))
    g = belief_value(pred[ud, ua], alphas)[1]
    return float(worst[ud]), ud, g


# ---------------------------------------------------------------------------
# Exact evaluation of a defender FSC


def adversary_maps(mask_a: np.ndarray, g: int) -> list[tuple[int, ...]]:
    """Deterministic local responses at adversary node ``g``: one label ``g2 * Ua + u`` per observation."""
    Ga, Oa, _, Ua = mask_a.shape
    per_obs = [np.nonzero(mask_a[g, o].reshape(-1))[0].tolist() for o in range(Oa)]
    return list(itertools.product(*per_obs))


def count_adversary_vertices(mask_a: np.ndarray) -> int:
    Ga, Oa = mask_a.shape[:2]
    total = 1
    for g in range(Ga):
        for o in range(Oa):
            total *= int(mask_a[g, o].sum())
    return total


def map_kernels(product: ProductPosg, fsc_d: Fsc, mask_a: np.ndarray):
    """Chain rows for each adversary local map: ``(K, ok)`` with ``K[i, m, j]``."""
    X, Ud, Ua = product.T.shape[:3]
    Gd, Ga = fsc_d.num_states, mask_a.shape[0]
    n = X * Gd * Ga
    mhat = reparam(fsc_d, product.Od)  # (Gd, X, Gd2, Ud)
    # Kd[x, gd, ua, y, gd2]
    Kd = np.einsum("gxhu,xuvy->xgvyh", mhat, product.T, optimize=True)
    maps = [adversary_maps(mask_a, ga) for ga in range(Ga)]
    nm = max(len(m) for m in maps)
    K = np.zeros((X, Gd, Ga, nm, X, Gd, Ga))
    ok = np.zeros((X, Gd, Ga, nm), dtype=bool)
    Oa = product.Oa
    for ga in range(Ga):
        for k, mp in enumerate(maps[ga]):
            ok[:, :, ga, k] = True
            for o, c in enumerate(mp):
                ga2, ua = divmod(c, Ua)
                K[:, :, ga, k, :, :, ga2] += Oa[:, o][:, None, None, None] * Kd[:, :, ua]
    return K.reshape(n, nm, n), ok.reshape(n, nm), maps


def evaluate_fsc(product: ProductPosg, fsc_d: Fsc, mask_a: np.ndarray, targets: np.ndarray):
    """Satisfaction value of ``fsc_d`` against the worst adversary response at every chain state."""
    K, ok, _ = map_kernels(product, fsc_d, mask_a)
    V, _ = min_reach(K, ok, targets)
    return V


# ---------------------------------------------------------------------------
# Robust LP


@dataclass
class NodeImprovement:
    node: int
    eps: float
    row: np.ndarray  # mu[g, :, :, :] replacement, shape (O, G, U)
    belief: np.ndarray
    status: str = "optimal"
    constraints: int = 0


def relevant_states(product: ProductPosg, st: Structures, targets: np.ndarray,
                    from_start: bool = False) -> np.ndarray:
    """Non-target chain states that can still reach a target.

    Every other state has value 0 under any controller within the masks, so
    it cannot constrain the robust LP. With ``from_start`` the set is cut
    down to states reachable from the initial one; the LP then protects only
    the values that matter for the start state.
    """
    P = uniform_chain(product, st.mask_d, st.mask_a)
    adj = induce_digraph(P)
    n = len(adj)
    fwd = np.ones(n, bool)
    if from_start:
        init = (product.initial * st.Gd + st.init_d) * st.Ga + st.init_a
        fwd[:] = False
        fwd[init] = True
        stack = [init]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not fwd[w]:
                    fwd[w] = True
                    stack.append(int(w))
    radj = [[] for _ in range(n)]
    for v in range(n):
        for w in adj[v]:
            radj[w].append(v)
    back = targets.copy()
    stack = list(np.nonzero(targets)[0])
    while stack:
        v = stack.pop()
        for w in radj[v]:
            if not back[w]:
                back[w] = True
                stack.append(w)
    return fwd & back & ~targets


def closure_forbidden(product: ProductPosg, mask_d: np.ndarray, mask_a: np.ndarray, g: int,
                      targets: np.ndarray) -> np.ndarray:
    """Entries ``(o, g2, u)`` of node ``g`` that could move a target state out of the target set."""
    X, Ud, Ua = product.T.shape[:3]
    Gd, Ga = mask_d.shape[0], mask_a.shape[0]
    tg = targets.reshape(X, Gd, Ga)
    Od, Oa = product.Od, product.Oa
    bad = np.zeros(mask_d.shape[1:], dtype=bool)
    for x, ga in zip(*np.nonzero(tg[:, g, :])):
        # adversary labels possible at (x, ga)
        alab = (Oa[x][:, None, None] > 0) & mask_a[ga]  # (Oa, Ga2, Ua)
        alab = alab.any(axis=0)
        for g2 in range(Gd):
            for ud in range(Ud):
                for ga2, ua in zip(*np.nonzero(alab)):
                    dest = product.T[x, ud, ua] > 0
                    if (~tg[dest, g2, ga2]).any():
                        bad[Od[x] > 0, g2, ud] = True
    return bad


def improve_node(product: ProductPosg, fsc_d: Fsc, mask_a: np.ndarray, V: np.ndarray, g: int,
                 targets: np.ndarray, relevant: np.ndarray | None = None,
                 protected: np.ndarray | None = None, vertex_cap: int = VERTEX_CAP) -> NodeImprovement:
    """Robust LP for node ``g``: the largest uniform gain over all adversary local responses.

    The gain ``eps`` is demanded at the ``relevant`` states (default: those
    reachable from the start that can still reach a target). At the other
    ``protected`` states (default: every non-target state that can reach a
    target) the new row only has to do no worse than ``V``. A state whose
    value is already maximal would otherwise pin ``eps`` to zero.
    """
    X, Ud, Ua = product.T.shape[:3]
    Gd, Ga = fsc_d.num_states, mask_a.shape[0]
    Od_n = product.Od.shape[1]
    if count_adversary_vertices(mask_a) > vertex_cap:
        raise ValueError("adversary vertex count exceeds the configured cap")
    st = Structures(fsc_d.mask, mask_a, fsc_d.initial, 0)
    if relevant is None:
        relevant = relevant_states(product, st, targets, from_start=True)
    if protected is None:
        protected = relevant_states(product, st, targets)
    protected = protected | relevant
    forb = closure_forbidden(product, fsc_d.mask, mask_a, g, targets)
    var_mask = fsc_d.mask[g] & ~forb  # (O, G2, U)
    var_idx = np.argwhere(var_mask)  # rows (o, g2, u)
    nv = len(var_idx)
    V3 = V.reshape(X, Gd, Ga)
    # next[x, u, ua, g2, ga2] = sum_y T[x,u,ua,y] V[y,g2,ga2]
    nxt = np.einsum("xuvy,yhl->xuvhl", product.T, V3, optimize=True)
    rows, rhs, owners = [], [], []
    seen = set()
    rel3 = relevant.reshape(X, Gd, Ga)
    for ga in range(Ga):
        maps = adversary_maps(mask_a, ga)
        xs = np.nonzero(protected.reshape(X, Gd, Ga)[:, g, ga])[0]
        for x in xs:
            gain = 1.0 if rel3[x, g, ga] else 0.0
            for mp in maps:
                # value of choosing (g2, u) under this adversary map, mixed over o'
                val = np.zeros((Gd, Ud))
                for o2, c in enumerate(mp):
                    if product.Oa[x, o2] == 0:
                        continue
                    ga2, ua = divmod(c, Ua)
                    val += product.Oa[x, o2] * nxt[x, :, ua, :, ga2].T
                coef = product.Od[x, var_idx[:, 0]] * val[var_idx[:, 1], var_idx[:, 2]]
                key = (x, ga, coef.round(14).tobytes())
                if key in seen:
                    continue
                seen.add(key)
                rows.append(np.concatenate([[gain], -coef]))
                rhs.append(-V3[x, g, ga])
                owners.append(x if gain else -1)
    S = product.num_model_states
    if not any(o >= 0 for o in owners):
        # nothing to improve on: the node never sits where a target is still reachable
        return NodeImprovement(g, 0.0, fsc_d.mu[g].copy(), np.full(S, 1.0 / S), "vacuous", 0)
    A_eq = np.zeros((Od_n, nv + 1))
    for k, (o, _, _) in enumerate(var_idx):
        A_eq[o, k + 1] = 1.0
    live = A_eq[:, 1:].sum(axis=1) > 0
    if not live.all():
        raise ValueError(f"node {g} has an observation with no admissible entry")
    c = np.zeros(nv + 1)
    c[0] = 1.0
    lb = np.zeros(nv + 1)
    lb[0] = -1.0
    ub = np.full(nv + 1, np.inf)
    ub[0] = 1.0
    A_ub = np.array(rows)
    lp = LinearProgram(c, A_ub, np.array(rhs), A_eq, np.ones(Od_n), lb, ub)
    res = solve_lp(lp)
    if res.status != "optimal":
        return NodeImprovement(g, 0.0, fsc_d.mu[g].copy(), np.full(S, 1.0 / S), res.status, len(rows))
    eps = res.x[0]
    eps = 0.0 if eps <= EPS_SNAP else float(eps)
    row = np.zeros(fsc_d.mu.shape[1:])
    mu = np.clip(res.x[1:], 0.0, None)
    row[tuple(var_idx.T)] = mu
    row /= row.reshape(Od_n, -1).sum(axis=1)[:, None, None]
    belief = np.zeros(S)
    Q = product.num_dra_states
    own = np.array(owners)
    gain_rows = own >= 0
    np.add.at(belief, own[gain_rows] // Q, res.y_ub[gain_rows])
    belief = belief / belief.sum() if belief.sum() > 0 else np.full(S, 1.0 / S)
    return NodeImprovement(g, eps, row, belief, "optimal", len(rows))


def _state_sets(product, fsc_d, mask_a, targets):
    st = Structures(fsc_d.mask, mask_a, fsc_d.initial, 0)
    return relevant_states(product, st, targets, True), relevant_states(product, st, targets)


def tangency_report(product: ProductPosg, fsc_d: Fsc, mask_a: np.ndarray, V: np.ndarray,
                    targets: np.ndarray) -> tuple[list[float], bool]:
    rel, prot = _state_sets(product, fsc_d, mask_a, targets)
    eps = [improve_node(product, fsc_d, mask_a, V, g, targets, rel, prot).eps
           for g in range(fsc_d.num_states)]
    return eps, all(e <= TANGENT_TOL for e in eps)


# ---------------------------------------------------------------------------
# Growing the controller


def add_states(fsc_d: Fsc, beliefs: list[np.ndarray], max_new: int, alphas: np.ndarray,
               model: Posg) -> tuple[Fsc, list[dict]]:
    """Add deterministic nodes for look-ahead beliefs whose value beats the current belief value."""
    added: list[dict] = []
    mu, mask = fsc_d.mu, fsc_d.mask
    Ud, Ua, Od = len(model.actions_d), len(model.actions_a), len(model.obs_d)
    for b in beliefs:
        vb, _ = belief_value(b, alphas)
        ahead = []
        for ud in range(Ud):
            for ua in range(Ua):
                for o in range(Od):
                    if obs_likelihood(b, o, model) > 0:
                        ahead.append(belief_update(b, ud, ua, o, model))
        for ba in ahead:
            if len(added) >= max_new:
                break
            va, ud, g = lookahead_value(ba, alphas, model)
            if va > vb + 1e-12:
                mu, mask = _append_node(mu, mask, g, ud)
                added.append({"node": mu.shape[0] - 1, "target": g, "action": ud, "value": va, "base": vb})
        if len(added) >= max_new:
            break
    grown = Fsc(mu, mask, fsc_d.initial, fsc_d.agent, fsc_d.obs_names, fsc_d.action_names)
    return grown, added


def _append_node(mu: np.ndarray, mask: np.ndarray, g: int, ud: int):
    G, O, _, U = mu.shape
    new_mu = np.zeros((G + 1, O, G + 1, U))
    new_mu[:G, :, :G] = mu
    new_mu[G, :, g, ud] = 1.0
    new_mask = np.zeros(new_mu.shape, dtype=bool)
    new_mask[:G, :, :G] = mask
    # existing nodes may later route into the new node with any action they already allow
    new_mask[:G, :, G] = mask.any(axis=2)
    new_mask[G, :, :G] = mask[g]
    new_mask[G, :, G] = mask[g].any(axis=1)
    new_mask[G, :, g, ud] = True
    return new_mu, new_mask


def extend_targets(targets: np.ndarray, X: int, Gd_old: int, Gd_new: int, Ga: int) -> np.ndarray:
    t = targets.reshape(X, Gd_old, Ga)
    out = np.zeros((X, Gd_new, Ga), dtype=bool)
    out[:, :Gd_old] = t
    return out.reshape(-1)


# ---------------------------------------------------------------------------
# Recovering an observation-based controller from per-state strategies


def _project_simplex_masked(v: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    w = v[allowed]
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    out[allowed] = np.maximum(w - css[rho] / (rho + 1), 0.0)
    return out


def recover_fsc(strat: np.ndarray, obs_kernel: np.ndarray, mask: np.ndarray, X: int, Gd: int, Ga: int,
                side: str = "defender", weights: np.ndarray | None = None, iters: int = 500,
                initial: int = 0, names=None) -> tuple[Fsc, float]:
    """Least-squares controller whose observation mixture matches per-state strategies.

    For the defender, ``strat`` has shape ``(X*Gd*Ga, Gd*Ud)``; each node
    ``g`` fits ``sum_o O(o|x) mu(.|g,o)`` to the strategies at all states
    with defender node ``g``, subject to each ``mu(.|g,o)`` lying on the
    mask-restricted simplex. Returns the controller and the root-mean-square
    residual.
    """
    G, O = mask.shape[:2]
    R = mask.shape[2] * mask.shape[3]
    S3 = strat.reshape(X, Gd, Ga, R)
    W = np.ones((X, Gd, Ga)) if weights is None else weights.reshape(X, Gd, Ga)
    mu = np.zeros((G, O, R))
    allowed = mask.reshape(G, O, R)
    sq, total = 0.0, 0.0
    for g in range(G):
        if side == "defender":
            targ, w = S3[:, g, :, :].reshape(-1, R), W[:, g, :].reshape(-1)
            Ok = np.repeat(obs_kernel, Ga, axis=0)
        else:
            targ, w = S3[:, :, g, :].reshape(-1, R), W[:, :, g].reshape(-1)
            Ok = np.repeat(obs_kernel, Gd, axis=0)
        keep = w > 0
        targ, w, Ok = targ[keep], w[keep], Ok[keep]
        # start: weighted least squares, then projected gradient
        if len(w):
            sol, *_ = np.linalg.lstsq(Ok * np.sqrt(w)[:, None], targ * np.sqrt(w)[:, None], rcond=None)
        else:
            sol = allowed[g].astype(float)
        cur = np.stack([_project_simplex_masked(sol[o], allowed[g, o]) for o in range(O)])
        if len(w):
            H = (Ok * w[:, None]).T @ Ok
            step = 1.0 / max(np.linalg.eigvalsh(H).max(), 1e-12)
            rhs = (Ok * w[:, None]).T @ targ
            y, t = cur.copy(), 1.0
            for _ in range(iters):
                grad = H @ y - rhs
                nxt = np.stack([_project_simplex_masked(y[o] - step * grad[o], allowed[g, o]) for o in range(O)])
                t2 = (1 + np.sqrt(1 + 4 * t * t)) / 2
                y = nxt + (t - 1) / t2 * (nxt - cur)
                cur, t = nxt, t2
            r = Ok @ cur - targ
            sq += float((w[:, None] * r * r).sum())
            total += float(w.sum())
        mu[g] = cur
    mu = mu.reshape(mask.shape)
    names = names or {}
    fsc = Fsc(mu, mask, initial, side, **names)
    return fsc, float(np.sqrt(sq / total)) if total else 0.0


# ---------------------------------------------------------------------------
# Bounded policy iteration


@dataclass
class BpiReport:
    vi_values: list = field(default_factory=list)
    fsc_values: list = field(default_factory=list)
    rounds: list = field(default_factory=list)
    recovery_residual: float = 0.0


def improve_to_fixpoint(product: ProductPosg, fsc_d: Fsc, mask_a: np.ndarray, targets: np.ndarray,
                        max_sweeps: int = 20):
    """Install robust-LP rows until every node is tangent (or the sweep cap is hit).

    Returns ``(fsc_d, V, eps_history, tangent_beliefs)``.
    """
    rel, prot = _state_sets(product, fsc_d, mask_a, targets)
    V = evaluate_fsc(product, fsc_d, mask_a, targets)
    history = []
    imps = []
    for _ in range(max_sweeps):
        imps = [improve_node(product, fsc_d, mask_a, V, g, targets, rel, prot)
                for g in range(fsc_d.num_states)]
        history.append([i.eps for i in imps])
        if all(i.eps <= TANGENT_TOL for i in imps):
            break
        mu = fsc_d.mu.copy()
        for i in imps:
            if i.eps > TANGENT_TOL:
                mu[i.node] = i.row
        fsc_d = Fsc(mu, fsc_d.mask, fsc_d.initial, fsc_d.agent, fsc_d.obs_names, fsc_d.action_names)
        V = evaluate_fsc(product, fsc_d, mask_a, targets)
    return fsc_d, V, history, [i.belief for i in imps]


def bounded_policy_iteration(product: ProductPosg, st: Structures, max_new: int = 2, rounds: int = 1,
                             eps: float = 1e-6, targets: np.ndarray | None = None):
    """Alternate evaluation, robust improvement and controller growth.

    Returns ``(fsc_d, vi_result, report)``. Targets are fixed from the
    initial structures for the whole run.
    """
    X = product.num_states
    if targets is None:
        targets = structure_targets(product, st)
    vi = value_iterate(product, st, eps, targets=targets)
    report = BpiReport()
    report.vi_values.append(vi.value)
    weights = (~targets).astype(float)
    fsc_d, resid = recover_fsc(vi.strat_d, product.Od, st.mask_d, X, st.Gd, st.Ga, "defender", weights,
                               initial=st.init_d,
                               names={"obs_names": product.model.obs_d, "action_names": product.model.actions_d})
    report.recovery_residual = resid
    V = evaluate_fsc(product, fsc_d, st.mask_a, targets)
    init = (product.initial * st.Gd + st.init_d) * st.Ga + st.init_a
    report.fsc_values.append(float(V[init]))
    for r in range(rounds):
        Gd_old = fsc_d.num_states
        fsc_d, V, hist, duals = improve_to_fixpoint(product, fsc_d, st.mask_a, targets)
        S = product.num_model_states
        beliefs = duals + [np.eye(S)[s] for s in range(S)] + [np.full(S, 1.0 / S)]
        alphas = node_values(product, V, Gd_old, st.Ga, st.init_a)
        fsc_d, added = add_states(fsc_d, beliefs, max_new, alphas, product.model)
        Gd_new = fsc_d.num_states
        targets = extend_targets(targets, X, Gd_old, Gd_new, st.Ga)
        st = Structures(fsc_d.mask, st.mask_a, st.init_d, st.init_a)
        vi = value_iterate(product, st, eps, targets=targets)
        V = evaluate_fsc(product, fsc_d, st.mask_a, targets)
        init = (product.initial * Gd_new + st.init_d) * st.Ga + st.init_a
        report.vi_values.append(vi.value)
        report.fsc_values.append(float(V[init]))
        report.rounds.append({"eps_history": hist, "added": added, "Gd": Gd_new})
    return fsc_d, vi, report
