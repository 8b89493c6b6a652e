from __future__ import annotations

import numpy as np
import pytest

from assortgen.errors import ConfigError
from assortgen.generators import FAMILIES, ModelSpec, generate, spec_for_mean_degree


def test_every_family_produces_valid_graph():
    for fam in FAMILIES:
        spec = spec_for_mean_degree(fam, 120, 6.0)
        g = generate(spec, seed=3)
        g.check()
        assert g.n == 120


def test_generate_deterministic_in_seed():
    for fam in FAMILIES:
        spec = spec_for_mean_degree(fam, 80, 6.0)
        a = generate(spec, seed=11)
        b = generate(spec, seed=11)
        assert a.to_edge_list() == b.to_edge_list()
        c = generate(spec, seed=12)
        assert c != a or fam == "ws"  # ws with p=0.1 can occasionally coincide


def test_ba_edge_count_formula():
    # (m+1)-clique seed plus m edges per later node:
    # E = C(m+1,2) + (n-m-1)*m = m*(n-m-1) + m*(m+1)/2.
    g = generate(ModelSpec("ba", 100, {"m": 3}), seed=5)
    assert g.num_edges == 3 * (100 - 3) + 3  # = 294 = C(4,2) + 96*3
    assert g.num_edges == 6 + 96 * 3


def test_ba_rejects_m_too_large():
    with pytest.raises(ConfigError):
        generate(ModelSpec("ba", 5, {"m": 5}), seed=1)


def test_er_mean_edges():
    vals = [generate(ModelSpec("er", 100, {"p": 6 / 99}), seed=s).num_edges for s in range(100)]
    assert np.mean(vals) == pytest.approx(300, abs=20)


def test_er_exact_edges():
    g = generate(ModelSpec("er", 200, {"edges": 600}), seed=2)
    assert g.num_edges == 600


def test_ws_no_rewire_is_ring_lattice():
    g = generate(ModelSpec("ws", 100, {"ring_k": 6, "rewire_p": 0.0}), seed=1)
    assert all(d == 6 for d in g.deg)
    assert g.num_edges == 300


def test_ws_requires_even_k():
    with pytest.raises(ConfigError):
        generate(ModelSpec("ws", 10, {"ring_k": 3, "rewire_p": 0.1}), seed=1)


@pytest.mark.parametrize("family", FAMILIES)
def test_mean_degree_within_ten_percent(family):
    target = 6.0
    n = 150
    degs = []
    for s in range(50):
        g = generate(spec_for_mean_degree(family, n, target), seed=s)
        degs.append(2 * g.num_edges / n)
    assert np.mean(degs) == pytest.approx(target, rel=0.10)


def test_rgg_periodic_degree():
    # On the torus the expected degree is (n-1) * pi r^2 for every node.
    n = 400
    g = generate(spec_for_mean_degree("rgg", n, 8.0), seed=4)
    assert 2 * g.num_edges / n == pytest.approx(8.0, rel=0.25)


def test_sbm_blocks_denser_inside():
    spec = spec_for_mean_degree("sbm", 200, 8.0)
    g = generate(spec, seed=9)
    blocks = np.arange(200) * 4 // 200
    inside = outside = 0
    for u, v in g.edges():
        if blocks[u] == blocks[v]:
            inside += 1
        else:
            outside += 1
    assert inside > outside  # ratio 10:1 on ~1:3 pair counts


def test_model_spec_round_trip():
    spec = spec_for_mean_degree("cl", 64, 5.0)
    again = ModelSpec.from_dict(spec.to_dict())
    assert again == spec


def test_model_spec_rejects_unknown_family():
    with pytest.raises(ConfigError):
        ModelSpec("grid", 10, {})
