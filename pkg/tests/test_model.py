import json

import numpy as np
import pytest

from posg_ltl_synth import model as M


@pytest.fixture
def grid():
    return M.example1_grid()


def test_example_grid_validates(grid):
    assert M.validate_posg(grid) == []
    assert grid.num_states == 6


def test_move_right_from_corner(grid):
    # s0 has neighbours s1 (right) and s3 (up); residual goes to {s0, s3}
    assert grid.T[0, 0, 1, 1] == pytest.approx(0.8)
    assert grid.T[0, 0, 1, 0] == pytest.approx(0.1)
    assert grid.T[0, 0, 1, 3] == pytest.approx(0.1)
    assert grid.T[0, 0, 0, 1] == pytest.approx(0.6)
    assert grid.T[0, 0, 0, 0] == pytest.approx(0.2)


def test_right_edge_is_certain_self_loop(grid):
    for ua in range(2):
        assert grid.T[2, 0, ua, 2] == 1.0


def test_left_edge_and_vertical_edges(grid):
    assert grid.T[0, 1, :, 0].tolist() == [1.0, 1.0]  # L at x = 0
    assert grid.T[4, 2, :, 4].tolist() == [1.0, 1.0]  # U on the top row
    assert grid.T[1, 3, :, 1].tolist() == [1.0, 1.0]  # D on the bottom row


def test_default_observation_kernels(grid):
    assert np.allclose(grid.Od, [[0.8, 0.2]] * 6)
    assert np.allclose(grid.Oa, [[0.6, 0.4]] * 6)


def test_labels(grid):
    assert grid.labels[4] == {"obs"}
    assert grid.labels[5] == {"tar"}
    assert all(not grid.labels[i] for i in range(4))


def test_sure_labels_only_on_labeled_cells():
    g = M.grid_world(3, 2, obstacles={4}, targets={5}, sure_labels=True)
    assert g.Od[4].tolist() == [1.0, 0.0]
    assert np.allclose(g.Od[0], [0.8, 0.2])


def test_residual_mass_matches_neighbourhood_count():
    g = M.grid_world(5, 4)
    for i in range(20):
        for u in range(4):
            for ua in range(2):
                row = g.T[i, u, ua]
                assert row.sum() == pytest.approx(1.0)
                assert set(np.nonzero(row)[0]) <= set(M.grid_neighbors(i, 5, 4)) | {i}


def test_grid_errors():
    with pytest.raises(ValueError):
        M.grid_world(3, 2, obstacles={6})
    with pytest.raises(ValueError):
        M.grid_world(3, 2, p_move_na=1.5)


def test_validation_reports_bad_row(grid):
    T = grid.T.copy()
    T[1, 2, 0] *= 0.9
    bad = M.Posg(grid.states, 0, grid.actions_d, grid.actions_a, grid.obs_d, grid.obs_a, grid.ap,
                 grid.labels, T, grid.Od, grid.Oa)
    report = M.validate_posg(bad)
    assert len(report) == 1
    assert "s1,U,A" in report[0]


def test_validation_reports_negative_observation(grid):
    Od = grid.Od.copy()
    Od[3] = [1.1, -0.1]
    bad = M.Posg(grid.states, 0, grid.actions_d, grid.actions_a, grid.obs_d, grid.obs_a, grid.ap,
                 grid.labels, grid.T, Od, grid.Oa)
    report = M.validate_posg(bad)
    assert any("wrong|s3" in r and "negative" in r for r in report)


def test_json_roundtrip(grid):
    back = M.load_posg(M.save_posg(grid))
    assert back.structurally_equal(grid)
    assert back.num_states == 6


def test_empty_states_is_schema_error(grid):
    doc = M.posg_to_dict(grid)
    doc["states"] = []
    with pytest.raises(M.SchemaError):
        M.posg_from_dict(doc)


def test_duplicate_state_is_schema_error(grid):
    doc = M.posg_to_dict(grid)
    doc["states"][1] = doc["states"][0]
    with pytest.raises(M.SchemaError, match="duplicate"):
        M.posg_from_dict(doc)


def test_bad_json_and_invalid_rows(grid):
    with pytest.raises(M.SchemaError):
        M.load_posg("{not json")
    doc = M.posg_to_dict(grid)
    doc["transitions"][0]["dist"] = {"s0": 0.5}
    with pytest.raises(M.ValidationError):
        M.load_posg(json.dumps(doc))


# -- controllers ------------------------------------------------------------------


def test_uniform_two_actions():
    f = M.uniform_fsc(M.full_mask(1, 2, 2))
    assert np.allclose(f.mu, 0.5)


def test_uniform_single_entry():
    mask = np.zeros((2, 1, 2, 3), bool)
    mask[0, 0, 1, 2] = True
    mask[1, 0, 0, 0] = True
    f = M.uniform_fsc(mask)
    assert f.mu[0, 0, 1, 2] == 1.0
    assert f.check() == []


def test_uniform_two_nodes_four_actions():
    f = M.uniform_fsc(M.full_mask(2, 2, 4))
    assert np.allclose(f.mu, 0.125)


def test_uniform_rejects_empty_row():
    mask = M.full_mask(1, 2, 2)
    mask[0, 1] = False
    with pytest.raises(ValueError, match="empty"):
        M.uniform_fsc(mask)


def test_fsc_check_flags_mass_outside_mask():
    mask = M.full_mask(1, 1, 2)
    mask[0, 0, 0, 1] = False
    f = M.Fsc(np.full((1, 1, 1, 2), 0.5), mask)
    assert any("outside" in r for r in f.check())


def test_fsc_json_roundtrip():
    f = M.uniform_fsc(M.full_mask(2, 2, 4), obs_names=("correct", "wrong"), action_names=M.GRID_ACTIONS)
    back = M.fsc_from_dict(M.fsc_to_dict(f))
    assert np.array_equal(back.mu, f.mu)
    assert np.array_equal(back.mask, f.mask)
