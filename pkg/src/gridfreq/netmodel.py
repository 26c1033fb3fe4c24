"""Network model for lossless swing-equation grids.

A grid is a connected graph of typed nodes (synchronous machines,
frequency-dependent devices, passive buses) joined by lines that carry
effective susceptances.  :class:`Network` is immutable after construction
and stores its nodes in canonical order -- machines first, then
frequency-dependent, then passive, each group ascending by id -- which
fixes the layout of every vector and matrix used elsewhere in the package.

Case files are single JSON documents; see :func:`load_case` for the schema.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import CaseParseError, CaseValidationError, UnknownAreaError


class NodeKind(str, Enum):
    MACHINE = "machine"
    FREQ = "freq"
    PASSIVE = "passive"


_KIND_RANK = {NodeKind.MACHINE: 0, NodeKind.FREQ: 1, NodeKind.PASSIVE: 2}


@dataclass(frozen=True)
class Node:
    """One bus of the grid.

    ``inertia`` (p.u. s^2) is positive for machines and zero otherwise;
    ``droop`` (p.u. power per p.u. frequency deviation) is positive for
    machines and frequency-dependent nodes and zero for passive ones.
    ``power`` is the net injection in p.u. (negative for demand).
    """

    id: int
    kind: NodeKind
    inertia: float = 0.0
    droop: float = 0.0
    power: float = 0.0
    voltage: float = 1.0
    has_controller: bool = False
    alpha: float | None = None
    u_lo: float = -math.inf
    u_hi: float = math.inf

    def validate(self) -> None:
        if self.kind == NodeKind.MACHINE:
            if not self.inertia > 0.0:
                raise CaseValidationError(
                    f"Machine node must have positive inertia (node {self.id})")
            if not self.droop > 0.0:
                raise CaseValidationError(
                    f"Machine node must have positive droop (node {self.id})")
        elif self.kind == NodeKind.FREQ:
            if self.inertia != 0.0:
                raise CaseValidationError(
                    f"Frequency-dependent node has nonzero inertia (node {self.id})")
            if not self.droop > 0.0:
                raise CaseValidationError(
                    f"Frequency-dependent node must have positive droop (node {self.id})")
        else:
            if self.droop != 0.0:
                raise CaseValidationError(
                    f"Passive node has nonzero droop (node {self.id})")
            if self.inertia != 0.0:
                raise CaseValidationError(
                    f"Passive node has nonzero inertia (node {self.id})")
            if self.has_controller:
                raise CaseValidationError(
                    f"Passive node cannot carry a controller (node {self.id})")
        if self.voltage <= 0.0:
            raise CaseValidationError(f"Voltage must be positive (node {self.id})")
        if self.has_controller:
            if not (self.u_lo <= 0.0 <= self.u_hi):
                raise CaseValidationError(
                    f"Input bounds must straddle zero (node {self.id})")
            if self.alpha is not None and self.alpha <= 0.0:
                raise CaseValidationError(
                    f"Cost weight alpha must be positive (node {self.id})")


@dataclass(frozen=True)
class Line:
    """Undirected line with effective susceptance ``b`` (p.u. power)."""

    i: int
    j: int
    b: float


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    base_mva: float = 100.0
    base_hz: float = 60.0

    def __post_init__(self):
        ordered = tuple(sorted(self.nodes, key=lambda nd: (_KIND_RANK[nd.kind], nd.id)))
        object.__setattr__(self, "nodes", ordered)
        object.__setattr__(self, "lines", tuple(self.lines))
        self._validate()

    # -- validation ---------------------------------------------------

    def _validate(self) -> None:
        if self.base_mva <= 0 or self.base_hz <= 0:
            raise CaseValidationError("base_mva and base_hz must be positive")
        if not self.nodes:
            raise CaseValidationError("network has no nodes")
        ids = [nd.id for nd in self.nodes]
        if len(set(ids)) != len(ids):
            raise CaseValidationError("duplicate node ids")
        for nd in self.nodes:
            nd.validate()
        if self.n_machine == 0:
            raise CaseValidationError("network must contain at least one machine node")
        idx = {nd.id: k for k, nd in enumerate(self.nodes)}
        seen: set[frozenset] = set()
        for ln in self.lines:
            if ln.i not in idx or ln.j not in idx:
                raise CaseValidationError(f"line ({ln.i},{ln.j}) references unknown node")
            if ln.i == ln.j:
                raise CaseValidationError(f"self-loop at node {ln.i}")
            key = frozenset((ln.i, ln.j))
            if key in seen:
                raise CaseValidationError(f"duplicate line between {ln.i} and {ln.j}")
            seen.add(key)
            if not ln.b > 0.0:
                raise CaseValidationError(
                    f"line ({ln.i},{ln.j}) must have positive susceptance")
        if not self._connected(idx):
            raise CaseValidationError("network graph is not connected")
        if not self.droop_vec.sum() > 0.0:
            raise CaseValidationError("total droop over machine and freq nodes must be positive")

    def _connected(self, idx) -> bool:
        n = len(self.nodes)
        if n == 1:
            return True
        adj: list[list[int]] = [[] for _ in range(n)]
        for ln in self.lines:
            a, b = idx[ln.i], idx[ln.j]
            adj[a].append(b)
            adj[b].append(a)
        seen = [False] * n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            a = stack.pop()
            for b in adj[a]:
                if not seen[b]:
                    seen[b] = True
                    count += 1
                    stack.append(b)
        return count == n

    # -- canonical layout ---------------------------------------------

    @cached_property
    def index_of(self) -> dict[int, int]:
        return {nd.id: k for k, nd in enumerate(self.nodes)}

    @cached_property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(nd.id for nd in self.nodes)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def n_machine(self) -> int:
        return sum(1 for nd in self.nodes if nd.kind == NodeKind.MACHINE)

    @cached_property
    def n_freq(self) -> int:
        return sum(1 for nd in self.nodes if nd.kind == NodeKind.FREQ)

    @cached_property
    def n_passive(self) -> int:
        return sum(1 for nd in self.nodes if nd.kind == NodeKind.PASSIVE)

    @cached_property
    def machine_idx(self) -> np.ndarray:
        return np.arange(self.n_machine)

    @cached_property
    def freq_idx(self) -> np.ndarray:
        return np.arange(self.n_machine, self.n_machine + self.n_freq)

    @cached_property
    def passive_idx(self) -> np.ndarray:
        return np.arange(self.n_machine + self.n_freq, self.n)

    @cached_property
    def mf_idx(self) -> np.ndarray:
        return np.arange(self.n_machine + self.n_freq)

    @cached_property
    def controller_idx(self) -> np.ndarray:
        return np.array([k for k, nd in enumerate(self.nodes) if nd.has_controller], int)

    @cached_property
    def inertia_vec(self) -> np.ndarray:
        return np.array([nd.inertia for nd in self.nodes])

    @cached_property
    def droop_vec(self) -> np.ndarray:
        return np.array([nd.droop for nd in self.nodes])

    @cached_property
    def injection_vec(self) -> np.ndarray:
        return np.array([nd.power for nd in self.nodes])

    @cached_property
    def _edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        li = np.array([self.index_of[ln.i] for ln in self.lines], int)
        lj = np.array([self.index_of[ln.j] for ln in self.lines], int)
        lb = np.array([ln.b for ln in self.lines])
        return li, lj, lb

    @cached_property
    def b_matrix(self) -> np.ndarray:
        bm = np.zeros((self.n, self.n))
        li, lj, lb = self._edge_arrays
        bm[li, lj] = lb
        bm[lj, li] = lb
        return bm

    # -- physics helpers ----------------------------------------------

    def line_flows(self, theta: np.ndarray) -> np.ndarray:
        """Per-line flow b_ij * sin(theta_i - theta_j), oriented i -> j."""
        li, lj, lb = self._edge_arrays
        return lb * np.sin(theta[li] - theta[lj])

    def flow_sums(self, theta: np.ndarray) -> np.ndarray:
        """Per-node net outflow sum_j b_ij sin(theta_i - theta_j)."""
        li, lj, _ = self._edge_arrays
        s = self.line_flows(theta)
        return (np.bincount(li, weights=s, minlength=self.n)
                - np.bincount(lj, weights=s, minlength=self.n))

    def with_injections(self, power: np.ndarray) -> "Network":
        """New network with per-node injections replaced (canonical order)."""
        power = np.asarray(power, float)
        if power.shape != (self.n,):
            raise ValueError("injection vector has wrong length")
        nodes = tuple(dataclasses.replace(nd, power=float(p))
                      for nd, p in zip(self.nodes, power))
        return Network(nodes, self.lines, self.base_mva, self.base_hz)


def aggregate_constants(net: Network) -> tuple[float, float, float]:
    """Total inertia over machines, total droop, total injection."""
    m_s = float(net.inertia_vec[net.machine_idx].sum())
    d_s = float(net.droop_vec.sum())
    p_s = float(net.injection_vec.sum())
    return m_s, d_s, p_s


# ---------------------------------------------------------------------------
# Area partitions


@dataclass(frozen=True)
class Area:
    name: str
    node_ids: frozenset[int]
    export_nominal: float


@dataclass(frozen=True)
class AreaPartition:
    areas: tuple[Area, ...]

    def validate(self, net: Network) -> None:
        all_ids = set(net.node_ids)
        seen: set[int] = set()
        for area in self.areas:
            unknown = area.node_ids - all_ids
            if unknown:
                raise CaseValidationError(
                    f"area {area.name!r} references unknown nodes {sorted(unknown)}")
            overlap = area.node_ids & seen
            if overlap:
                raise CaseValidationError(
                    f"area {area.name!r} overlaps another area at nodes {sorted(overlap)}")
            seen |= area.node_ids
        if seen != all_ids:
            missing = sorted(all_ids - seen)
            raise CaseValidationError(f"partition does not cover nodes {missing}")

    def area_index(self, area) -> int:
        if isinstance(area, str):
            for k, a in enumerate(self.areas):
                if a.name == area:
                    return k
            raise UnknownAreaError(f"no area named {area!r}")
        k = int(area)
        if not 0 <= k < len(self.areas):
            raise UnknownAreaError(f"area index {k} out of range")
        return k


def boundary_lines(net: Network, part: AreaPartition, area) -> list[tuple[Line, int]]:
    """Lines with exactly one endpoint inside ``area``.

    The sign is +1 when the line's stored orientation i -> j points out of
    the area (flow b sin(theta_i - theta_j) counts as export), -1 otherwise.
    """
    k = part.area_index(area)
    inside = part.areas[k].node_ids
    out = []
    for ln in net.lines:
        i_in = ln.i in inside
        j_in = ln.j in inside
        if i_in != j_in:
            out.append((ln, 1 if i_in else -1))
    return out


def export_flow(net: Network, part: AreaPartition, theta: np.ndarray) -> np.ndarray:
    """Net power export of every area at angles ``theta``."""
    out = np.zeros(len(part.areas))
    for k in range(len(part.areas)):
        total = 0.0
        for ln, sign in boundary_lines(net, part, k):
            a, b = net.index_of[ln.i], net.index_of[ln.j]
            total += sign * ln.b * math.sin(theta[a] - theta[b])
        out[k] = total
    return out


# ---------------------------------------------------------------------------
# Case file I/O
#
# Schema (one JSON document):
# {
#   "base_mva": number, "base_hz": number,
#   "nodes": [{"id": int, "kind": "machine"|"freq"|"passive",
#              "M": number, "D": number, "P": number, "V": number,
#              "controller": {"alpha": number,
#                             "u_lo": number|null, "u_hi": number|null} | null}],
#   "lines": [{"from": int, "to": int, "B": number}],
#   "areas": [{"name": str, "nodes": [int], "p_ex_nominal": number}] | null
# }
# All powers are p.u. on base_mva.  Unknown fields are rejected.

_TOP_KEYS = {"base_mva", "base_hz", "nodes", "lines", "areas"}
_NODE_KEYS = {"id", "kind", "M", "D", "P", "V", "controller"}
_CTRL_KEYS = {"alpha", "u_lo", "u_hi"}
_LINE_KEYS = {"from", "to", "B"}
_AREA_KEYS = {"name", "nodes", "p_ex_nominal"}


def _require_keys(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise CaseParseError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise CaseParseError(f"{where}: unknown field {sorted(unknown)[0]!r}")


def _number(obj: dict, key: str, where: str, default=None, required=False):
    if key not in obj or obj[key] is None:
        if required:
            raise CaseParseError(f"{where}: missing field {key!r}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseParseError(f"{where}.{key}: expected a number")
    return float(v)


def _parse_node(entry: dict, where: str) -> Node:
    _require_keys(entry, _NODE_KEYS, where)
    if "id" not in entry or not isinstance(entry["id"], int) or isinstance(entry["id"], bool):
        raise CaseParseError(f"{where}: missing or non-integer field 'id'")
    kind_raw = entry.get("kind")
    try:
        kind = NodeKind(kind_raw)
    except ValueError:
        raise CaseParseError(
            f"{where}.kind: expected one of 'machine', 'freq', 'passive', got {kind_raw!r}")
    ctrl = entry.get("controller")
    has_ctrl = ctrl is not None
    alpha = None
    u_lo, u_hi = -math.inf, math.inf
    if has_ctrl:
        _require_keys(ctrl, _CTRL_KEYS, f"{where}.controller")
        alpha = _number(ctrl, "alpha", f"{where}.controller", required=True)
        lo = _number(ctrl, "u_lo", f"{where}.controller")
        hi = _number(ctrl, "u_hi", f"{where}.controller")
        if (lo is None) != (hi is None):
            raise CaseParseError(f"{where}.controller: u_lo and u_hi must both be set or both null")
        if lo is not None:
            u_lo, u_hi = lo, hi
    return Node(
        id=entry["id"],
        kind=kind,
        inertia=_number(entry, "M", where, default=0.0),
        droop=_number(entry, "D", where, default=0.0),
        power=_number(entry, "P", where, default=0.0),
        voltage=_number(entry, "V", where, default=1.0),
        has_controller=has_ctrl,
        alpha=alpha,
        u_lo=u_lo,
        u_hi=u_hi,
    )


def _parse_document(doc: dict) -> tuple[Network, AreaPartition | None]:
    _require_keys(doc, _TOP_KEYS, "case")
    if "nodes" not in doc or not isinstance(doc["nodes"], list) or not doc["nodes"]:
        raise CaseParseError("case: 'nodes' must be a non-empty list")
    if "lines" not in doc or not isinstance(doc["lines"], list):
        raise CaseParseError("case: 'lines' must be a list")
    nodes = tuple(_parse_node(e, f"nodes[{k}]") for k, e in enumerate(doc["nodes"]))
    lines = []
    for k, e in enumerate(doc["lines"]):
        where = f"lines[{k}]"
        _require_keys(e, _LINE_KEYS, where)
        for key in ("from", "to"):
            if key not in e or not isinstance(e[key], int) or isinstance(e[key], bool):
                raise CaseParseError(f"{where}: missing or non-integer field {key!r}")
        lines.append(Line(e["from"], e["to"], _number(e, "B", where, required=True)))
    net = Network(
        nodes=nodes,
        lines=tuple(lines),
        base_mva=_number(doc, "base_mva", "case", default=100.0),
        base_hz=_number(doc, "base_hz", "case", default=60.0),
    )
    part = None
    if doc.get("areas") is not None:
        if not isinstance(doc["areas"], list) or not doc["areas"]:
            raise CaseParseError("case: 'areas' must be null or a non-empty list")
        areas = []
        for k, e in enumerate(doc["areas"]):
            where = f"areas[{k}]"
            _require_keys(e, _AREA_KEYS, where)
            if not isinstance(e.get("name"), str):
                raise CaseParseError(f"{where}: missing string field 'name'")
            ids = e.get("nodes")
            if not isinstance(ids, list) or not all(
                    isinstance(i, int) and not isinstance(i, bool) for i in ids):
                raise CaseParseError(f"{where}: 'nodes' must be a list of integers")
            areas.append(Area(e["name"], frozenset(ids),
                              _number(e, "p_ex_nominal", where, required=True)))
        part = AreaPartition(tuple(areas))
        part.validate(net)
    return net, part


def parse_case(path) -> tuple[Network, AreaPartition | None]:
    """Load and validate a case file, returning network and optional areas."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseParseError(f"cannot read case file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return _parse_document(doc)


def load_case(path) -> Network:
    """Load a case file and return the validated network."""
    return parse_case(path)[0]


def load_partition(path) -> AreaPartition | None:
    """Load the area partition from a case file (None when absent)."""
    return parse_case(path)[1]


def serialize_case(net: Network, part: AreaPartition | None = None) -> dict:
    """Dict form of a network (and areas) matching the case schema."""
    nodes = []
    for nd in net.nodes:
        ctrl = None
        if nd.has_controller:
            ctrl = {
                "alpha": nd.alpha,
                "u_lo": None if math.isinf(nd.u_lo) else nd.u_lo,
                "u_hi": None if math.isinf(nd.u_hi) else nd.u_hi,
            }
        nodes.append({
            "id": nd.id, "kind": nd.kind.value, "M": nd.inertia, "D": nd.droop,
            "P": nd.power, "V": nd.voltage, "controller": ctrl,
        })
    doc = {
        "base_mva": net.base_mva,
        "base_hz": net.base_hz,
        "nodes": nodes,
        "lines": [{"from": ln.i, "to": ln.j, "B": ln.b} for ln in net.lines],
        "areas": None,
    }
    if part is not None:
        doc["areas"] = [
            {"name": a.name, "nodes": sorted(a.node_ids), "p_ex_nominal": a.export_nominal}
            for a in part.areas
        ]
    return doc


def save_case(net: Network, path, part: AreaPartition | None = None) -> None:
    Path(path).write_text(json.dumps(serialize_case(net, part), indent=2) + "\n")
