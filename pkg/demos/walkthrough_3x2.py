"""Step through the small 3x2 grid: automaton, product, structure search, values and a controller.

Run with ``python3 demos/walkthrough_3x2.py``. Everything is deterministic.
"""
import numpy as np

from posg_ltl_synth import chain as C
from posg_ltl_synth.experiments import FORMULA, example1_start_masks, grid_product
from posg_ltl_synth.improve import bounded_policy_iteration
from posg_ltl_synth.model import example1_grid, full_mask, uniform_fsc
from posg_ltl_synth.simulate import success_rate
from posg_ltl_synth.structure import SearchStats, candidate_structures
from posg_ltl_synth.vi import Structures, value_iterate


def main():
    model = example1_grid()
    product = grid_product(model)
    print(f"goal: {FORMULA}")
    print(f"grid states {model.num_states}, automaton states {product.num_dra_states}, "
          f"product states {product.num_states}")

    # with every action allowed, noise near the obstacle rules each action out somewhere
    stats = SearchStats()
    none = candidate_structures(product, 2, 1, full_mask(2, 2, 4), full_mask(1, 2, 2), stats=stats)
    print(f"all-ones start: {len(none)} pairs after {stats.passes} passes ({stats.aborted} aborted)")

    cands = candidate_structures(product, 2, 1, example1_start_masks(2), full_mask(1, 2, 2))
    print(f"right/up start: {len(cands)} pair(s)")
    c = cands[0]
    st = Structures(c.mask_d, c.mask_a)
    gmc = C.build_gmc(product, uniform_fsc(c.mask_d), uniform_fsc(c.mask_a, agent="adversary"))
    p_uniform, dec = C.satisfaction_probability(gmc)
    print(f"chain states {gmc.num_states}, feasible classes {len(dec.feasible)}, "
          f"uniform controllers satisfy with probability {p_uniform:.4f}")

    res = value_iterate(product, st, eps=1e-6)
    print(f"max-min value {res.value:.4f} after {res.sweeps} sweeps")

    fsc_d, vi, report = bounded_policy_iteration(product, st, max_new=2, rounds=1)
    print("value iteration per round:", [round(v, 4) for v in report.vi_values])
    print("controller value per round:", [round(v, 4) for v in report.fsc_values])
    print(f"defender controller now has {fsc_d.num_states} nodes")

    # the controller value above is against the worst adversary; here the adversary flips a coin
    adversary = uniform_fsc(st.mask_a, agent="adversary")
    rates = success_rate(model, fsc_d, adversary, "tar", "obs", [10, 40], trials=500, seed=1)
    print("reach-target-before-obstacle fractions:", {k: float(v) for k, v in rates.items()})
    np.set_printoptions(precision=3, suppress=True)
    print("node 0, observation 'correct', per (next node, action):")
    print(fsc_d.mu[0, 0])


if __name__ == "__main__":
    main()
