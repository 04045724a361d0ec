import numpy as np
import pytest

from dgcris import bdris as bd
from dgcris.grouping import Grouping, uniform_adjacent

from conftest import crandn, random_channels, random_pair


def test_init_diagonal(rng):
    g = uniform_adjacent(6, 2)
    pair = bd.init_diagonal(6, g, rng)
    assert np.allclose(np.abs(np.diag(pair.phi_t)), 1 / np.sqrt(2))
    assert np.allclose(np.abs(np.diag(pair.phi_r)), 1 / np.sqrt(2))
    assert np.count_nonzero(pair.phi_t - np.diag(np.diag(pair.phi_t))) == 0
    assert bd.validate_structure(pair).valid


def test_restore_extract_roundtrip(rng):
    g = Grouping([[0, 3, 5], [1], [2, 4]])
    pair = random_pair(rng, g, 6)
    assert bd.validate_structure(pair).valid
    blocks = [bd.extract_block(pair, i) for i in range(3)]
    again = bd.restore(blocks, g, 6)
    assert np.array_equal(again.phi_t, pair.phi_t) and np.array_equal(again.phi_r, pair.phi_r)
    # entries outside the pattern are exact zeros
    mask = bd.block_mask(g, 6)
    assert not pair.phi_t[~mask].any() and not pair.phi_r[~mask].any()
    assert mask[0, 3] and mask[3, 5] and not mask[0, 1]


def test_restore_rejects_wrong_sizes(rng):
    g = uniform_adjacent(4, 2)
    with pytest.raises(ValueError):
        bd.restore([(np.eye(2), np.eye(2))], g)
    with pytest.raises(ValueError):
        bd.restore([(np.eye(3), np.eye(3)), (np.eye(2), np.eye(2))], g)


def test_validate_structure_flags_violations(rng):
    g = uniform_adjacent(4, 2)
    pair = random_pair(rng, g)
    bad = pair.phi_t.copy()
    bad[0, 3] = 1e-3
    rep = bd.validate_structure(bd.BdRisPair(bad, pair.phi_r, g))
    assert not rep.valid and rep.max_off_pattern == pytest.approx(1e-3)
    scaled = bd.BdRisPair(pair.phi_t * 1.01, pair.phi_r, g)
    rep = bd.validate_structure(scaled)
    assert not rep.valid and any("group" in m for m in rep.messages())


def test_effective_channel_matches_scalar_loops(rng):
    ch = random_channels(rng, num_cells=5, num_users=3, num_bs=2, num_reflective=1)
    pair = random_pair(rng, Grouping([[0, 2], [1, 3, 4]]), 5)
    heff = bd.effective_channels(pair, ch)
    for k in range(3):
        phi = pair.phi_r if ch.user_side[k] == "reflective" else pair.phi_t
        for n in range(2):
            val = sum(np.conj(ch.ris_user[k, a]) * phi[a, b] * ch.bs_ris[b, n]
                      for a in range(5) for b in range(5))
            assert heff[k, n] == pytest.approx(val, abs=1e-12)
        vec = bd.effective_channel(pair, ch.ris_user[k], ch.bs_ris, ch.user_side[k])
        assert np.allclose(vec.conj(), heff[k], atol=1e-12)


def test_activated_links_and_hardware_cost():
    # sum over groups of |D_g| (2 |D_g| + 1)
    assert bd.activated_links(Grouping([[0], [1, 2, 3]])) == 1 * 3 + 3 * 7
    assert bd.activated_links(uniform_adjacent(36, 12)) == 12 * 3 * 7
    assert bd.activated_links(uniform_adjacent(5, 1)) == bd.hardware_cost(5)[0] == 55
    assert bd.hardware_cost(3) == (21, 12)
    with pytest.raises(ValueError):
        bd.hardware_cost(0)


def test_matrices_csv_roundtrip(rng, tmp_path):
    g = Grouping([[0, 2], [1]])
    pair = random_pair(rng, g, 3)
    path = tmp_path / "phi.csv"
    bd.write_matrices_csv(pair, path)
    back = bd.read_matrices_csv(path, g)
    assert np.array_equal(back.phi_t, pair.phi_t) and np.array_equal(back.phi_r, pair.phi_r)
    rows = path.read_text().splitlines()
    assert len(rows) == 6 and len(rows[0].split(",")) == 6


def test_stack_split():
    t, r = crandn(np.random.default_rng(0), 2, 2), np.eye(2)
    s = bd.stack_block(t, r)
    assert s.shape == (4, 2)
    t2, r2 = bd.split_block(s)
    assert np.array_equal(t2, t) and np.array_equal(r2, r)
