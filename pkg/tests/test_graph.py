import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsegraph.graph import (
    Bond,
    CouplingPair,
    GraphConfigError,
    GraphTopology,
    GseDoublingSpec,
    PhaseShifterSetting,
    apply_phase_shifter,
    build_gse_graph,
    check_mirror_symmetry,
    default_gse_graph,
    down,
    four_coupling_variant,
    frequency_to_wavenumber,
    load_graph_config,
    mirrored_shifter,
    parse_graph_config,
    shifter_phase,
    up,
    wavenumber_to_frequency,
)
from scipy.constants import c as SPEED_OF_LIGHT


def minimal_doc():
    return {
        "vertices": [{"index": 1, "sector": "up"}, {"index": 2, "sector": "up"}],
        "bonds": [{"from": 1, "to": 2, "length_m": 1.0}],
    }


def test_minimal_document():
    g = parse_graph_config(json.dumps(minimal_doc()))
    assert g.total_length == 1.0
    assert np.array_equal(g.connectivity, [[0, 1], [1, 0]])
    assert g.leads == ()


def test_self_loop_rejected():
    doc = minimal_doc()
    doc["bonds"].append({"from": 1, "to": 1, "length_m": 0.5})
    with pytest.raises(GraphConfigError, match="self-loop not supported"):
        parse_graph_config(doc)


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d["bonds"].append({"from": 2, "to": 1, "length_m": 0.3}), "duplicate"),
        (lambda d: d["bonds"].__setitem__(0, {"from": 1, "to": 2, "length_m": -1}), "positive"),
        (lambda d: d["vertices"].append({"index": 3, "sector": "up"}), "disconnected"),
        (lambda d: d.update(extra=1), "unknown top-level"),
        (lambda d: d["bonds"].append({"from": 1, "to": 7, "length_m": 1}), "missing vertex"),
    ],
)
def test_schema_errors(mutate, message):
    doc = minimal_doc()
    mutate(doc)
    with pytest.raises(GraphConfigError, match=message):
        parse_graph_config(doc)


def test_default_graph_counts():
    g = default_gse_graph()
    assert g.n_vertices == 18
    assert g.n_bonds == 22
    assert sum(v.sector == "up" for v in g.vertices) == 9
    assert g.ports == ("1", "2", "1bar", "2bar")
    cross = [b for b in g.bonds if b.is_cross_sector]
    assert len(cross) == 2
    assert sum(math.isclose(b.static_phase, math.pi) for b in cross) == 1
    assert all(b.potential == 0 for b in cross)
    assert check_mirror_symmetry(g) == []


def test_shipped_document_matches_default():
    assert load_graph_config().digest == default_gse_graph().digest


def test_json_roundtrip():
    g = default_gse_graph()
    assert parse_graph_config(g.to_json()).digest == g.digest


def test_smallest_doubling():
    sub = GraphTopology((up(1), up(2)), (Bond(up(1), up(2), 0.7, 0.3),))
    g = build_gse_graph(GseDoublingSpec(sub, (CouplingPair(up(1), down(2), 0.4),
                                              CouplingPair(up(2), down(1), 0.4))))
    assert g.n_vertices == 4 and g.n_bonds == 4
    mirrored = g.bonds[g.find_bond(down(1), down(2))]
    assert mirrored.length == 0.7 and mirrored.potential == -0.3


def test_doubling_errors():
    sub = GraphTopology((up(1), up(2)), (Bond(up(1), up(2), 0.7),))
    with pytest.raises(GraphConfigError, match="missing vertex"):
        build_gse_graph(GseDoublingSpec(sub, (CouplingPair(up(1), down(5), 0.4),
                                              CouplingPair(up(5), down(1), 0.4))))
    with pytest.raises(GraphConfigError, match="length"):
        build_gse_graph(GseDoublingSpec(sub, (CouplingPair(up(1), down(2), 0.4),
                                              CouplingPair(up(2), down(1), 0.5))))


def test_four_coupling_variant():
    g = default_gse_graph()
    g4 = four_coupling_variant(g)
    assert g4.n_bonds == 22
    assert sum(b.is_cross_sector for b in g4.bonds) == 4
    with pytest.raises(GraphConfigError):
        g4.find_bond(up(7), up(8))
    assert g4.find_bond(up(7), down(8)) >= 0
    assert math.isclose(g4.total_length, g.total_length)


def test_phase_shifter():
    g = default_gse_graph()
    assert apply_phase_shifter(g, mirrored_shifter(5, 9, 0.0)) is g
    n = g.find_bond(up(5), up(9))
    g2 = apply_phase_shifter(g, mirrored_shifter(5, 9, 0.1))
    assert math.isclose(g2.bonds[n].length, g.bonds[n].length + 0.1)
    assert check_mirror_symmetry(g2) == []
    assert math.isclose(shifter_phase(31.4159, 0.1), 3.14159, rel_tol=1e-12)
    with pytest.raises(GraphConfigError):
        PhaseShifterSetting(((up(5), up(9)),), -0.1)
    with pytest.raises(GraphConfigError):
        apply_phase_shifter(g, PhaseShifterSetting(((up(1), up(9)),), 0.1))


def test_frequency_conversion():
    assert frequency_to_wavenumber(0.0) == 0.0
    assert math.isclose(frequency_to_wavenumber(SPEED_OF_LIGHT / (2 * math.pi)), 1.0)
    with pytest.raises(ValueError):
        frequency_to_wavenumber(-1.0)


@given(st.floats(min_value=0, max_value=1e11, allow_nan=False))
def test_frequency_roundtrip(f):
    assert math.isclose(wavenumber_to_frequency(frequency_to_wavenumber(f)), f, rel_tol=1e-15, abs_tol=1e-300)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(22)))
def test_total_length_invariant_under_bond_order(perm):
    g = default_gse_graph()
    shuffled = g.with_bonds([g.bonds[i] for i in perm])
    assert math.isclose(shuffled.total_length, g.total_length, rel_tol=1e-14)
