"""SVG figures drawn from the JSON documents of ``reproduce``."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "posg-ltl-synth"


def _table1(doc, ax):
    for ga in sorted({c["ga"] for c in doc["cells"]}):
        cells = sorted((c for c in doc["cells"] if c["ga"] == ga), key=lambda c: c["gd"])
        ax.errorbar([c["gd"] for c in cells], [c["mean"] for c in cells], yerr=[c["std"] for c in cells],
                    marker="o", capsize=3, label=f"|G_a| = {ga}")
    ax.set_ylabel("V(s0), mean over trials")


def _table2(doc, ax):
    rows = sorted(doc["rows"], key=lambda r: r["gd"])
    gds = [r["gd"] for r in rows]
    for key, label in (("benign", "benign baseline"), ("aware", "adversary-aware"),
                       ("adversarial_baseline", "adversarial baseline")):
        ax.plot(gds, [r[key]["mean"] for r in rows], marker="o", label=label)
    ax.set_ylabel("satisfaction probability")


def _fig5(doc, ax):
    for cap in doc["caps"]:
        for ga in sorted({c["ga"] for c in doc["curves"]}):
            curve = sorted((c for c in doc["curves"] if c["ga"] == ga), key=lambda c: c["gd"])
            ax.plot([c["gd"] for c in curve], [c["fraction"][str(cap)] for c in curve], marker="o",
                    label=f"|G_a| = {ga}, {cap} steps")
    ax.set_ylabel("fraction of runs reaching the target")


DRAWERS = {"table1": _table1, "table2": _table2, "fig5": _fig5}


def render(doc: dict, path: str) -> None:
    kind = doc["experiment"]
    if kind not in DRAWERS:
        raise KeyError(f"no plot for experiment {kind!r}")
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    DRAWERS[kind](doc, ax)
    ax.set_xlabel("|G_d|")
    ax.set_title(f"{kind} (seed {doc.get('seed')})")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
