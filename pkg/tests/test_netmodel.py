import json
import math

import numpy as np
import pytest

from gridfreq.data import case_path
from gridfreq.errors import CaseParseError, CaseValidationError, UnknownAreaError
from gridfreq.netmodel import (
    Area,
    AreaPartition,
    Line,
    Network,
    Node,
    NodeKind,
    aggregate_constants,
    boundary_lines,
    load_case,
    load_partition,
    parse_case,
    save_case,
    serialize_case,
)


def test_ieee39_counts():
    net = load_case(case_path("ieee39"))
    assert net.n == 39
    assert net.n_machine == 10
    assert net.n_freq == 29
    assert net.n_passive == 0
    # 10 generators at nodes 30..39
    assert tuple(net.node_ids[:10]) == tuple(range(30, 40))
    # netted demand of tens of p.u. on the 100 MVA base (generation and load
    # are merged per node, so the netted figure is below the 6 GW gross load)
    demand = -sum(nd.power for nd in net.nodes if nd.power < 0)
    assert 40.0 < demand < 70.0


def test_ieee39_droop_sum():
    net = load_case(case_path("ieee39"))
    _, d_s, p_s = aggregate_constants(net)
    assert d_s == pytest.approx(39.0)
    assert abs(p_s) < 1e-12


def test_two_node_valid(two_node):
    assert two_node.n == 2
    assert two_node.node_ids == (1, 2)
    assert aggregate_constants(two_node) == (1.0, 2.0, 0.0)


def test_canonical_order_machines_first():
    net = Network(
        nodes=(
            Node(5, NodeKind.FREQ, droop=1.0, power=-1.0),
            Node(2, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=1.0),
            Node(9, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=0.0),
        ),
        lines=(Line(5, 2, 1.0), Line(2, 9, 1.0)),
    )
    assert net.node_ids == (2, 9, 5)


def test_passive_droop_rejected():
    with pytest.raises(CaseValidationError, match="Passive node has nonzero droop"):
        Network(
            nodes=(
                Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=1.0),
                Node(2, NodeKind.PASSIVE, droop=1.0, power=-1.0),
            ),
            lines=(Line(1, 2, 1.0),),
        )


def test_machine_needs_inertia():
    with pytest.raises(CaseValidationError, match="positive inertia"):
        Network(
            nodes=(Node(1, NodeKind.MACHINE, inertia=0.0, droop=1.0),),
            lines=(),
        )


def test_disconnected_rejected():
    with pytest.raises(CaseValidationError, match="not connected"):
        Network(
            nodes=(
                Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0),
                Node(2, NodeKind.FREQ, droop=1.0),
                Node(3, NodeKind.FREQ, droop=1.0),
            ),
            lines=(Line(1, 2, 1.0),),
        )


def test_duplicate_line_rejected():
    with pytest.raises(CaseValidationError, match="duplicate line"):
        Network(
            nodes=(
                Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0),
                Node(2, NodeKind.FREQ, droop=1.0),
            ),
            lines=(Line(1, 2, 1.0), Line(2, 1, 2.0)),
        )


def test_controller_bounds_must_straddle_zero():
    with pytest.raises(CaseValidationError, match="straddle zero"):
        Network(
            nodes=(
                Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0,
                     has_controller=True, alpha=1.0, u_lo=0.5, u_hi=2.0),
                Node(2, NodeKind.FREQ, droop=1.0),
            ),
            lines=(Line(1, 2, 1.0),),
        )


def test_unknown_field_rejected(tmp_path):
    doc = json.loads(case_path("two_node").read_text())
    doc["nodes"][0]["frobnicate"] = 1
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(CaseParseError, match="frobnicate"):
        load_case(p)


def test_bad_kind_rejected(tmp_path):
    doc = json.loads(case_path("two_node").read_text())
    doc["nodes"][0]["kind"] = "windmill"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(CaseParseError, match="kind"):
        load_case(p)


def test_missing_file():
    with pytest.raises(CaseParseError, match="cannot read"):
        load_case("/nonexistent/case.json")


def test_round_trip(tmp_path, ieee39, ieee39_partition):
    p = tmp_path / "roundtrip.json"
    save_case(ieee39, p, ieee39_partition)
    net2, part2 = parse_case(p)
    assert net2.nodes == ieee39.nodes
    assert net2.lines == ieee39.lines
    assert net2.base_mva == ieee39.base_mva
    assert net2.base_hz == ieee39.base_hz
    assert serialize_case(net2, part2) == serialize_case(ieee39, ieee39_partition)


def test_aggregate_linear_in_injections(two_node):
    _, _, p1 = aggregate_constants(two_node)
    scaled = two_node.with_injections(two_node.injection_vec * 3.0)
    _, _, p3 = aggregate_constants(scaled)
    assert p3 == 3.0 * p1


def test_boundary_lines_paper_split(ieee39, ieee39_partition):
    lines = boundary_lines(ieee39, ieee39_partition, "A1")
    pairs = {frozenset((ln.i, ln.j)) for ln, _ in lines}
    assert pairs == {frozenset((1, 39)), frozenset((3, 4)), frozenset((17, 16))}


def test_boundary_single_area(two_node):
    part = AreaPartition((Area("all", frozenset({1, 2}), 0.0),))
    part.validate(two_node)
    assert boundary_lines(two_node, part, 0) == []


def test_boundary_opposite_orientations(two_node):
    part = AreaPartition((
        Area("a", frozenset({1}), 1.0),
        Area("b", frozenset({2}), -1.0),
    ))
    part.validate(two_node)
    (l1, s1), = boundary_lines(two_node, part, "a")
    (l2, s2), = boundary_lines(two_node, part, "b")
    assert l1 == l2
    assert s1 == -s2


def test_unknown_area(two_node):
    part = AreaPartition((Area("all", frozenset({1, 2}), 0.0),))
    with pytest.raises(UnknownAreaError):
        boundary_lines(two_node, part, "nope")
    with pytest.raises(UnknownAreaError):
        boundary_lines(two_node, part, 5)


def test_partition_must_cover(two_node):
    part = AreaPartition((Area("a", frozenset({1}), 0.0),))
    with pytest.raises(CaseValidationError, match="does not cover"):
        part.validate(two_node)


def test_partition_disjoint(two_node):
    part = AreaPartition((
        Area("a", frozenset({1, 2}), 0.0),
        Area("b", frozenset({2}), 0.0),
    ))
    with pytest.raises(CaseValidationError, match="overlaps"):
        part.validate(two_node)


def test_flow_antisymmetry_random(two_node, rng):
    for _ in range(20):
        theta = rng.normal(size=two_node.n)
        flows = two_node.flow_sums(theta)
        # exact cancellation of the single line's two endpoint contributions
        assert flows.sum() == pytest.approx(0.0, abs=1e-15)


def test_flow_sums_match_dense(ieee39, rng):
    theta = rng.normal(scale=0.2, size=ieee39.n)
    dense = (ieee39.b_matrix * np.sin(theta[:, None] - theta[None, :])).sum(axis=1)
    assert np.allclose(ieee39.flow_sums(theta), dense, atol=1e-12)


def test_infinite_bounds_serialize_to_null(two_node):
    doc = serialize_case(two_node)
    ctrl = doc["nodes"][0]["controller"]
    assert ctrl["u_lo"] is None and ctrl["u_hi"] is None
    assert math.isinf(two_node.nodes[0].u_hi)
