"""POSG and FSC data models, validation, JSON I/O and the grid-world generator."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROW_TOL = 1e-9


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(ValueError):
    def __init__(self, report: list[str]):
        super().__init__("; ".join(report))
        self.report = report


@dataclass(frozen=True, eq=False)
class Posg:
    """Two-player POSG.

    ``T[s, ud, ua, s2]`` is the transition kernel; ``Od[s, o]`` and
    ``Oa[s, o]`` are the observation kernels; ``labels[s]`` is a frozenset of
    atoms.
    """

    states: tuple[str, ...]
    initial: int
    actions_d: tuple[str, ...]
    actions_a: tuple[str, ...]
    obs_d: tuple[str, ...]
    obs_a: tuple[str, ...]
    ap: tuple[str, ...]
    labels: tuple[frozenset, ...]
    T: np.ndarray
    Od: np.ndarray
    Oa: np.ndarray

    @property
    def num_states(self) -> int:
        return len(self.states)

    def structurally_equal(self, other: "Posg") -> bool:
        names = ("states", "initial", "actions_d", "actions_a", "obs_d", "obs_a", "ap", "labels")
        if any(getattr(self, n) != getattr(other, n) for n in names):
            return False
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("T", "Od", "Oa"))


def validate_posg(m: Posg) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    report = []
    S, Ud, Ua = m.num_states, len(m.actions_d), len(m.actions_a)
    if S == 0:
        return ["model has no states"]
    if not 0 <= m.initial < S:
        report.append(f"initial state {m.initial} out of range")
    if m.T.shape != (S, Ud, Ua, S):
        return report + [f"transition kernel has shape {m.T.shape}, expected {(S, Ud, Ua, S)}"]
    for name, O, obs in (("O_d", m.Od, m.obs_d), ("O_a", m.Oa, m.obs_a)):
        if O.shape != (S, len(obs)):
            report.append(f"{name} has shape {O.shape}, expected {(S, len(obs))}")
            continue
        for s, o in zip(*np.nonzero(O < 0)):
            report.append(f"{name}({m.obs_d[o] if name == 'O_d' else m.obs_a[o]}|{m.states[s]}) = {O[s, o]} is negative")
        sums = O.sum(axis=1)
        for s in np.nonzero(np.abs(sums - 1) > ROW_TOL)[0]:
            report.append(f"{name}(.|{m.states[s]}) sums to {sums[s]!r}")
    for idx in zip(*np.nonzero(m.T < 0)):
        s, ud, ua, s2 = idx
        report.append(
            f"T({m.states[s2]}|{m.states[s]},{m.actions_d[ud]},{m.actions_a[ua]}) = {m.T[idx]} is negative"
        )
    sums = m.T.sum(axis=3)
    for s, ud, ua in zip(*np.nonzero(np.abs(sums - 1) > ROW_TOL)):
        report.append(
            f"T(.|{m.states[s]},{m.actions_d[ud]},{m.actions_a[ua]}) sums to {sums[s, ud, ua]!r}"
        )
    if len(m.labels) != S:
        report.append("labeling is not total on states")
    else:
        for s, lab in enumerate(m.labels):
            extra = set(lab) - set(m.ap)
            if extra:
                report.append(f"label of {m.states[s]} uses undeclared atoms {sorted(extra)}")
    return report


# ---------------------------------------------------------------------------
# JSON


def _require(doc, key, path):
    if key not in doc:
        raise SchemaError(f"{path}/{key}", "missing field")
    return doc[key]


def _name_list(doc, key, allow_empty=False):
    v = _require(doc, key, "")
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise SchemaError(f"/{key}", "expected an array of strings")
    if not v and not allow_empty:
        raise SchemaError(f"/{key}", "must not be empty")
    if len(set(v)) != len(v):
        dup = next(x for x in v if v.count(x) > 1)
        raise SchemaError(f"/{key}", f"duplicate name {dup!r}")
    return tuple(v)


def _lookup(names, value, path):
    try:
        return names.index(value)
    except ValueError:
        raise SchemaError(path, f"unknown name {value!r}") from None


def posg_from_dict(doc: dict) -> Posg:
    if not isinstance(doc, dict):
        raise SchemaError("", "expected a JSON object")
    states = _name_list(doc, "states")
    actions_d = _name_list(doc, "actions_d")
    actions_a = _name_list(doc, "actions_a")
    obs_d = _name_list(doc, "obs_d")
    obs_a = _name_list(doc, "obs_a")
    ap = _name_list(doc, "ap", allow_empty=True)
    initial = _lookup(states, _require(doc, "initial", ""), "/initial")
    label_doc = _require(doc, "label", "")
    labels = []
    for s in states:
        atoms = label_doc.get(s, [])
        for a in atoms:
            _lookup(ap, a, f"/label/{s}")
        labels.append(frozenset(atoms))
    S, Ud, Ua = len(states), len(actions_d), len(actions_a)
    T = np.zeros((S, Ud, Ua, S))
    seen = np.zeros((S, Ud, Ua), dtype=bool)
    for k, row in enumerate(_require(doc, "transitions", "")):
        path = f"/transitions/{k}"
        s = _lookup(states, _require(row, "s", path), path + "/s")
        ud = _lookup(actions_d, _require(row, "ud", path), path + "/ud")
        ua = _lookup(actions_a, _require(row, "ua", path), path + "/ua")
        if seen[s, ud, ua]:
            raise SchemaError(path, "duplicate transition row")
        seen[s, ud, ua] = True
        for s2, p in _require(row, "dist", path).items():
            T[s, ud, ua, _lookup(states, s2, f"{path}/dist/{s2}")] = float(p)
    if not seen.all():
        s, ud, ua = map(int, np.argwhere(~seen)[0])
        raise SchemaError(
            "/transitions", f"missing row for ({states[s]}, {actions_d[ud]}, {actions_a[ua]})"
        )
    kernels = []
    for key, obs in (("obs_kernel_d", obs_d), ("obs_kernel_a", obs_a)):
        kd = _require(doc, key, "")
        O = np.zeros((S, len(obs)))
        for s_name in states:
            if s_name not in kd:
                raise SchemaError(f"/{key}/{s_name}", "missing row")
            for o, p in kd[s_name].items():
                O[states.index(s_name), _lookup(obs, o, f"/{key}/{s_name}/{o}")] = float(p)
        kernels.append(O)
    m = Posg(states, initial, actions_d, actions_a, obs_d, obs_a, ap, tuple(labels), T, *kernels)
    report = validate_posg(m)
    if report:
        raise ValidationError(report)
    return m


def load_posg(text: str) -> Posg:
    """Parse and validate a model JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError("", f"invalid JSON: {e}") from None
    return posg_from_dict(doc)


def posg_to_dict(m: Posg) -> dict:
    S = m.states
    transitions = []
    for s in range(m.num_states):
        for ud in range(len(m.actions_d)):
            for ua in range(len(m.actions_a)):
                row = m.T[s, ud, ua]
                transitions.append({
                    "s": S[s], "ud": m.actions_d[ud], "ua": m.actions_a[ua],
                    "dist": {S[j]: float(row[j]) for j in np.nonzero(row)[0]},
                })

    def kernel(O, obs):
        return {S[s]: {obs[o]: float(O[s, o]) for o in range(len(obs))} for s in range(m.num_states)}

    return {
        "states": list(S),
        "initial": S[m.initial],
        "actions_d": list(m.actions_d),
        "actions_a": list(m.actions_a),
        "obs_d": list(m.obs_d),
        "obs_a": list(m.obs_a),
        "ap": list(m.ap),
        "label": {S[s]: sorted(m.labels[s]) for s in range(m.num_states)},
        "transitions": transitions,
        "obs_kernel_d": kernel(m.Od, m.obs_d),
        "obs_kernel_a": kernel(m.Oa, m.obs_a),
    }


def save_posg(m: Posg) -> str:
    return json.dumps(posg_to_dict(m), indent=1)


# ---------------------------------------------------------------------------
# Grid world

GRID_ACTIONS = ("R", "L", "U", "D")
_DELTA = {"R": (1, 0), "L": (-1, 0), "U": (0, 1), "D": (0, -1)}


def grid_neighbors(i: int, M: int, N: int) -> list[int]:
    x, y = i % M, i // M
    out = []
    for dx, dy in _DELTA.values():
        if 0 <= x + dx < M and 0 <= y + dy < N:
            out.append(x + dx + M * (y + dy))
    return sorted(out)


def grid_world(
    M: int,
    N: int,
    obstacles=(),
    targets=(),
    p_d_correct: float = 0.8,
    p_a_correct: float = 0.6,
    p_move_na: float = 0.8,
    p_move_a: float = 0.6,
    sure_labels: bool = False,
    initial: int = 0,
) -> Posg:
    """M x N grid; state i sits at column ``i % M``, row ``i // M``.

    The intended move succeeds with ``p_move_na`` (adversary plays NA) or
    ``p_move_a`` (adversary plays A); the rest is split evenly over the
    current cell and its other 4-neighbours. A move off the grid leaves the
    agent in place. With ``sure_labels`` the defender observes ``correct``
    with certainty on obstacle and target cells.
    """
    if M < 1 or N < 1:
        raise ValueError("grid dimensions must be positive")
    S = M * N
    obstacles, targets = set(obstacles), set(targets)
    for i in obstacles | targets:
        if not 0 <= i < S:
            raise ValueError(f"cell {i} is outside the {M}x{N} grid")
    for p in (p_d_correct, p_a_correct, p_move_na, p_move_a):
        if not 0 <= p <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
    T = np.zeros((S, 4, 2, S))
    for i in range(S):
        x, y = i % M, i // M
        for a, name in enumerate(GRID_ACTIONS):
            dx, dy = _DELTA[name]
            if not (0 <= x + dx < M and 0 <= y + dy < N):
                T[i, a, :, i] = 1.0
                continue
            j = x + dx + M * (y + dy)
            spread = [i] + [k for k in grid_neighbors(i, M, N) if k != j]
            for ua, p in enumerate((p_move_a, p_move_na)):
                T[i, a, ua, j] = p
                T[i, a, ua, spread] += (1 - p) / len(spread)
    labels = tuple(
        frozenset({"obs"} if i in obstacles else {"tar"} if i in targets else set()) for i in range(S)
    )
    Od = np.tile([p_d_correct, 1 - p_d_correct], (S, 1))
    if sure_labels:
        Od[sorted(obstacles | targets)] = [1.0, 0.0]
    Oa = np.tile([p_a_correct, 1 - p_a_correct], (S, 1))
    return Posg(
        states=tuple(f"s{i}" for i in range(S)),
        initial=initial,
        actions_d=GRID_ACTIONS,
        actions_a=("A", "NA"),
        obs_d=("correct", "wrong"),
        obs_a=("correct", "wrong"),
        ap=("obs", "tar"),
        labels=labels,
        T=T,
        Od=Od,
        Oa=Oa,
    )


def example1_grid() -> Posg:
    """The 3 x 2 grid with an unsafe cell at s4 and the goal at s5."""
    return grid_world(3, 2, obstacles={4}, targets={5})


# ---------------------------------------------------------------------------
# FSC


@dataclass(eq=False)
class Fsc:
    """Finite state controller.

    ``mu[g, o, g2, u]`` is the probability of moving to node ``g2`` and
    playing ``u`` after observing ``o`` in node ``g``. ``mask`` has the same
    shape and marks the allowed support.
    """

    mu: np.ndarray
    mask: np.ndarray
    initial: int = 0
    agent: str = "defender"
    obs_names: tuple[str, ...] = field(default=())
    action_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mu.ndim != 4 or self.mu.shape[0] != self.mu.shape[2]:
            raise ValueError(f"mu must have shape (G, O, G, U), got {self.mu.shape}")
        if self.mask.shape != self.mu.shape:
            raise ValueError("mask and mu shapes differ")
        if self.agent not in ("defender", "adversary"):
            raise ValueError(f"unknown agent {self.agent!r}")
        if not 0 <= self.initial < self.num_states:
            raise ValueError("initial node out of range")

    @property
    def num_states(self) -> int:
        return self.mu.shape[0]

    @property
    def num_obs(self) -> int:
        return self.mu.shape[1]

    @property
    def num_actions(self) -> int:
        return self.mu.shape[3]

    def check(self) -> list[str]:
        report = []
        flat = self.mu.reshape(self.num_states, self.num_obs, -1)
        if (self.mu < 0).any():
            report.append("negative entries in mu")
        sums = flat.sum(axis=2)
        for g, o in zip(*np.nonzero(np.abs(sums - 1) > ROW_TOL)):
            report.append(f"mu(.|g{g},o{o}) sums to {sums[g, o]!r}")
        if ((self.mu > 0) & ~self.mask).any():
            report.append("mu puts mass outside the structure mask")
        live = self.mask.reshape(self.num_states, self.num_obs, -1).any(axis=2)
        for g, o in zip(*np.nonzero(~live)):
            report.append(f"mask row (g{g},o{o}) is empty")
        return report


def uniform_fsc(mask: np.ndarray, initial: int = 0, agent: str = "defender", **names) -> Fsc:
    """FSC spreading each row uniformly over the mask-allowed (g', u) pairs."""
    mask = np.asarray(mask, dtype=bool)
    G, O = mask.shape[:2]
    counts = mask.reshape(G, O, -1).sum(axis=2)
    if (counts == 0).any():
        g, o = map(int, np.argwhere(counts == 0)[0])
        raise ValueError(f"mask row (g{g},o{o}) is empty")
    mu = mask / counts[:, :, None, None]
    return Fsc(mu, mask, initial, agent, **names)


def full_mask(G: int, O: int, U: int) -> np.ndarray:
    return np.ones((G, O, G, U), dtype=bool)


def fsc_to_dict(f: Fsc) -> dict:
    obs = f.obs_names or tuple(str(o) for o in range(f.num_obs))
    acts = f.action_names or tuple(str(u) for u in range(f.num_actions))
    mu = []
    for g in range(f.num_states):
        for o in range(f.num_obs):
            dist = {}
            for g2, u in zip(*np.nonzero(f.mu[g, o])):
                dist[f"{g2},{acts[u]}"] = float(f.mu[g, o, g2, u])
            mu.append({"g": g, "o": obs[o], "dist": dist})
    doc = {
        "num_states": f.num_states,
        "initial": f.initial,
        "agent": f.agent,
        "obs": list(obs),
        "actions": list(acts),
        "mu": mu,
    }
    doc["mask"] = [
        {"g": g, "o": obs[o], "allowed": [f"{g2},{acts[u]}" for g2, u in zip(*np.nonzero(f.mask[g, o]))]}
        for g in range(f.num_states)
        for o in range(f.num_obs)
    ]
    return doc


def fsc_from_dict(doc: dict, obs_names=None, action_names=None) -> Fsc:
    """Load an FSC document; observation/action names come from the document or the caller."""
    G = int(_require(doc, "num_states", ""))
    obs = tuple(doc.get("obs") or obs_names or ())
    acts = tuple(doc.get("actions") or action_names or ())
    if not obs or not acts:
        raise SchemaError("/obs", "observation and action names are required")
    mu = np.zeros((G, len(obs), G, len(acts)))
    for k, row in enumerate(_require(doc, "mu", "")):
        path = f"/mu/{k}"
        g = int(_require(row, "g", path))
        o = _lookup(obs, _require(row, "o", path), path + "/o")
        for key, p in _require(row, "dist", path).items():
            g2, u = key.split(",", 1)
            mu[g, o, int(g2), _lookup(acts, u, f"{path}/dist/{key}")] = float(p)
    if "mask" in doc:
        mask = np.zeros(mu.shape, dtype=bool)
        for k, row in enumerate(doc["mask"]):
            g = int(row["g"])
            o = _lookup(obs, row["o"], f"/mask/{k}/o")
            for key in row["allowed"]:
                g2, u = key.split(",", 1)
                mask[g, o, int(g2), _lookup(acts, u, f"/mask/{k}")] = True
    else:
        mask = mu > 0
    f = Fsc(mu, mask, int(doc.get("initial", 0)), doc.get("agent", "defender"), obs, acts)
    report = f.check()
    if report:
        raise ValidationError(report)
    return f
