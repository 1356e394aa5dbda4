"""Network model parsing and compact-form matrix assembly.

A network is described by a JSON document with buses (generator /
frequency-dependent load / infinite) and lines (susceptance, optional
conductance).  From a parsed model and an equilibrium this module builds
the constant matrices of the compact-form dynamics

    x' = A x - B F(C x)

with state x = [generator angle deviations, generator velocities,
load angle deviations].
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

GENERATOR = "generator"
LOAD = "load"
INFINITE = "infinite"

_BUS_KEYS = {"id", "kind", "voltage", "inertia", "damping", "power"}
_LINE_KEYS = {"from", "to", "susceptance", "conductance"}

#: tolerance on the lossless power balance sum(P_k) = 0
BALANCE_TOL = 1e-9


class NetworkError(ValueError):
    """Raised for malformed or physically invalid network documents."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    voltage: float
    damping: float = 0.0
    inertia: float = 0.0
    power: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    conductance: float = 0.0

    @property
    def pair(self):
        return frozenset((self.from_bus, self.to_bus))


@dataclass(frozen=True)
class NetworkModel:
    """Parsed network with deterministic bus and edge ordering.

    Buses are ordered generators first, then loads, then infinite buses,
    ascending id within each kind.  Edges are sorted by (min id, max id)
    and oriented from the lower bus id to the higher.
    """

    buses: tuple
    lines: tuple
    fluctuation_rho: float | None = None
    source_text: str = field(default="", compare=False)

    @property
    def generators(self):
        return [b for b in self.buses if b.kind == GENERATOR]

    @property
    def loads(self):
        return [b for b in self.buses if b.kind == LOAD]

    @property
    def infinite_buses(self):
        return [b for b in self.buses if b.kind == INFINITE]

    @property
    def m(self):
        """Number of generators."""
        return len(self.generators)

    @property
    def n(self):
        """Number of state-carrying (non-infinite) buses."""
        return len(self.buses) - len(self.infinite_buses)

    @property
    def state_buses(self):
        return [b for b in self.buses if b.kind != INFINITE]

    @property
    def edges(self):
        """Canonical edge list: (low id, high id) pairs, sorted."""
        pairs = sorted((min(l.from_bus, l.to_bus), max(l.from_bus, l.to_bus))
                       for l in self.lines)
        return pairs

    @property
    def lossy(self):
        return any(l.conductance > 0 for l in self.lines)

    def line_for_edge(self, pair):
        key = frozenset(pair)
        for l in self.lines:
            if l.pair == key:
                return l
        raise NetworkError("unknown line {}".format(sorted(pair)))

    def edge_index(self, pair):
        key = (min(pair), max(pair))
        try:
            return self.edges.index(key)
        except ValueError:
            raise NetworkError("unknown line {}".format(sorted(pair))) from None

    def bus(self, bus_id):
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise NetworkError("unknown bus {}".format(bus_id))

    def document_hash(self):
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def coupling(self, pair):
        """a_kj = V_k V_j B_kj (lossless coupling of one edge)."""
        line = self.line_for_edge(pair)
        return self.bus(line.from_bus).voltage * self.bus(line.to_bus).voltage \
            * line.susceptance

    def edge_alpha(self, pair):
        """Phase shift arctan(G/B) of one edge (0 for lossless lines)."""
        line = self.line_for_edge(pair)
        return math.atan2(line.conductance, line.susceptance)

    def edge_magnitude(self, pair):
        """V_k V_j sqrt(G^2 + B^2); equals the coupling when lossless."""
        line = self.line_for_edge(pair)
        y = math.hypot(line.susceptance, line.conductance)
        mag = self.bus(line.from_bus).voltage * self.bus(line.to_bus).voltage * y
        if self.fluctuation_rho is not None:
            mag *= (1.0 + self.fluctuation_rho) ** 2
        return mag

    @property
    def alphas(self):
        return np.array([self.edge_alpha(e) for e in self.edges])

    @property
    def couplings(self):
        return np.array([self.edge_magnitude(e) for e in self.edges])


@dataclass(frozen=True)
class SystemMatrices:
    """Constant matrices of the compact form x' = A x - B F(C x)."""

    E: np.ndarray          # |E| x n incidence over state buses
    C: np.ndarray          # |E| x (n+m)
    A: np.ndarray          # (n+m) x (n+m)
    B: np.ndarray          # (n+m) x |E|
    S: np.ndarray          # |E| diagonal coupling magnitudes
    S1: np.ndarray         # m x n generator selector
    S2: np.ndarray         # (n-m) x n load selector
    M1: np.ndarray         # m generator inertias
    D1: np.ndarray         # m generator dampings
    D2: np.ndarray         # n-m load dampings
    alphas: np.ndarray     # |E| lossy phase shifts

    @property
    def n_edges(self):
        return self.E.shape[0]

    @property
    def n(self):
        return self.E.shape[1]

    @property
    def m(self):
        return len(self.M1)

    @property
    def CB(self):
        return self.C @ self.B


@dataclass(frozen=True)
class LineSelector:
    """Unit selector of one faulted edge, or a diagonal robust selector."""

    vector: np.ndarray           # |E| unit vector (single line), or None
    robust: np.ndarray | None    # |E| x |E| diagonal PSD matrix, or None

    @property
    def matrix(self):
        """Diagonal selector D with gamma-term  gamma * QB D B'Q."""
        if self.robust is not None:
            return self.robust
        return np.outer(self.vector, self.vector)

    @property
    def half(self):
        """A matrix R with R R' = D, used in the Schur assembly column."""
        if self.robust is not None:
            return np.sqrt(self.robust)
        return np.outer(self.vector, self.vector)


def _require(cond, msg):
    if not cond:
        raise NetworkError(msg)


def parse_network(text, fluctuation_rho=None):
    """Parse a JSON network document into a validated NetworkModel."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError("malformed document: {}".format(exc)) from exc
    _require(isinstance(doc, dict), "document must be a JSON object")
    unknown = set(doc) - {"buses", "lines"}
    _require(not unknown, "unknown top-level keys: {}".format(sorted(unknown)))
    _require("buses" in doc and "lines" in doc,
             "document requires 'buses' and 'lines'")

    buses = []
    seen_ids = set()
    for raw in doc["buses"]:
        _require(isinstance(raw, dict), "bus entries must be objects")
        unknown = set(raw) - _BUS_KEYS
        _require(not unknown, "unknown bus keys: {}".format(sorted(unknown)))
        _require("id" in raw and "kind" in raw, "bus requires 'id' and 'kind'")
        bid = raw["id"]
        _require(isinstance(bid, int), "bus id must be an integer")
        _require(bid not in seen_ids, "duplicate bus id {}".format(bid))
        seen_ids.add(bid)
        kind = raw["kind"]
        _require(kind in (GENERATOR, LOAD, INFINITE),
                 "unknown bus kind {!r}".format(kind))
        voltage = float(raw.get("voltage", 1.0))
        _require(voltage > 0, "bus {}: voltage must be > 0".format(bid))
        damping = float(raw.get("damping", 0.0))
        inertia = float(raw.get("inertia", 0.0))
        power = float(raw.get("power", 0.0))
        if kind == GENERATOR:
            _require(damping > 0, "generator {}: damping must be > 0".format(bid))
            _require(inertia > 0, "generator {}: inertia must be > 0".format(bid))
        elif kind == LOAD:
            _require(damping > 0, "load {}: damping must be > 0".format(bid))
            _require("inertia" not in raw, "load {}: inertia not allowed".format(bid))
        else:
            _require("inertia" not in raw and "damping" not in raw,
                     "infinite bus {}: carries no dynamics".format(bid))
        buses.append(Bus(id=bid, kind=kind, voltage=voltage,
                         damping=damping, inertia=inertia, power=power))

    kind_rank = {GENERATOR: 0, LOAD: 1, INFINITE: 2}
    buses.sort(key=lambda b: (kind_rank[b.kind], b.id))

    lines = []
    seen_pairs = set()
    for raw in doc["lines"]:
        _require(isinstance(raw, dict), "line entries must be objects")
        unknown = set(raw) - _LINE_KEYS
        _require(not unknown, "unknown line keys: {}".format(sorted(unknown)))
        _require("from" in raw and "to" in raw and "susceptance" in raw,
                 "line requires 'from', 'to', 'susceptance'")
        u, v = raw["from"], raw["to"]
        _require(u in seen_ids and v in seen_ids,
                 "line references unknown bus ({}, {})".format(u, v))
        _require(u != v, "line endpoints must be distinct")
        pair = frozenset((u, v))
        _require(pair not in seen_pairs, "duplicate line {}".format(sorted(pair)))
        seen_pairs.add(pair)
        b = float(raw["susceptance"])
        g = float(raw.get("conductance", 0.0))
        _require(b > 0, "line {}: susceptance must be > 0".format(sorted(pair)))
        _require(g >= 0, "line {}: conductance must be >= 0".format(sorted(pair)))
        lines.append(Line(from_bus=u, to_bus=v, susceptance=b, conductance=g))

    if fluctuation_rho is not None:
        _require(0 < fluctuation_rho < 1, "fluctuation ratio must be in (0, 1)")

    model = NetworkModel(buses=tuple(buses), lines=tuple(lines),
                         fluctuation_rho=fluctuation_rho, source_text=text)

    # connectivity over non-infinite buses (edges between state buses only;
    # a single state bus is trivially connected)
    state_ids = [b.id for b in model.state_buses]
    _require(len(state_ids) >= 1, "network needs at least one state bus")
    adj = {i: set() for i in state_ids}
    for l in lines:
        if l.from_bus in adj and l.to_bus in adj:
            adj[l.from_bus].add(l.to_bus)
            adj[l.to_bus].add(l.from_bus)
    seen = {state_ids[0]}
    stack = [state_ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    _require(len(seen) == len(state_ids),
             "network graph is disconnected over non-infinite buses")

    # lossless power balance; an infinite bus absorbs any imbalance, so the
    # check applies only when every bus carries state
    if not model.lossy and not model.infinite_buses:
        total = sum(b.power for b in model.state_buses)
        _require(abs(total) <= BALANCE_TOL,
                 "lossless power imbalance {:.3e} exceeds {:.0e}".format(
                     total, BALANCE_TOL))
    return model


def incidence_matrix(model):
    """|E| x n incidence over state buses, +1 at the lower-id endpoint.

    Columns follow the model's bus ordering; infinite buses have no column.
    """
    state_ids = [b.id for b in model.state_buses]
    col = {bid: i for i, bid in enumerate(state_ids)}
    E = np.zeros((len(model.edges), len(state_ids)))
    for r, (k, j) in enumerate(model.edges):
        if k in col:
            E[r, col[k]] = 1.0
        if j in col:
            E[r, col[j]] = -1.0
    return E


def build_system_matrices(model, eq=None):
    """Assemble A, B, C, E, S and companion diagonals of the compact form."""
    m, n = model.m, model.n
    ne = len(model.edges)
    E = incidence_matrix(model)
    M1 = np.array([b.inertia for b in model.generators])
    D1 = np.array([b.damping for b in model.generators])
    D2 = np.array([b.damping for b in model.loads])
    S = model.couplings
    alphas = model.alphas

    nx = n + m
    A = np.zeros((nx, nx))
    A[:m, m:2 * m] = np.eye(m)
    A[m:2 * m, m:2 * m] = -np.diag(D1 / M1)

    ETS = E.T * S            # n x |E|, columns scaled by S
    B = np.zeros((nx, ne))
    B[m:2 * m, :] = ETS[:m, :] / M1[:, None]
    if n > m:
        B[2 * m:, :] = ETS[m:, :] / D2[:, None]

    C = np.zeros((ne, nx))
    C[:, :m] = E[:, :m]
    C[:, 2 * m:] = E[:, m:]

    S1 = np.hstack([np.eye(m), np.zeros((m, n - m))])
    S2 = np.hstack([np.zeros((n - m, m)), np.eye(n - m)])
    return SystemMatrices(E=E, C=C, A=A, B=B, S=S, S1=S1, S2=S2,
                          M1=M1, D1=D1, D2=D2, alphas=alphas)


def line_selector(model, pair):
    """Unit selector D_{u,v} for one faulted line."""
    idx = model.edge_index(pair)
    vec = np.zeros(len(model.edges))
    vec[idx] = 1.0
    return LineSelector(vector=vec, robust=None)


def robust_selector(model, pairs):
    """Diagonal selector dominating every rank-one selector of `pairs`."""
    pairs = list(pairs)
    if not pairs:
        raise NetworkError("robust selector requires a nonempty line set")
    D = np.zeros((len(model.edges), len(model.edges)))
    for p in pairs:
        idx = model.edge_index(p)
        D[idx, idx] = 1.0
    return LineSelector(vector=None, robust=D)
