"""Petri-net modeling of filter workflows and the property analyses.

The net is the classical completion (P, T, Pre, Post, M0). Firing follows
the standard rule: t is enabled at M iff M(p) >= Pre(t, p) for every p,
and firing moves M to M - Pre(t) + Post(t).

Analyses are decided on the reachability graph (breadth-first, canonical
order, explicit exploration cap). Unboundedness is only ever claimed with
a covering-pair witness: a path from M to a strictly larger M' pumps the
strictly-increased places forever. Cap exhaustion is reported separately
as "within explored prefix".

The six-category deficiency taxonomy implemented here (dead operation,
deadlock, unbounded accumulation, unreachable pool, disconnected
workflow, no-progress cycle) is this artifact's own construction; every
positive finding carries a concrete witness.

All analyses are pure over immutable nets and thread-safe.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import (BadValue, DanglingReference, NetFormatError, NotEnabled,
                     UnknownTransition)
from .dsl import FilterOp

Marking = tuple[int, ...]


@dataclass(frozen=True)
class PetriNet:
    places: tuple[str, ...]
    transitions: tuple[str, ...]
    pre: dict[str, dict[str, int]]   # transition -> {place: weight}
    post: dict[str, dict[str, int]]
    m0: Marking

    def __post_init__(self):
        if not self.places or not self.transitions:
            raise BadValue("net needs at least one place and one transition")
        if set(self.places) & set(self.transitions):
            raise BadValue("place and transition ids must be disjoint")
        if len(set(self.places)) != len(self.places) \
                or len(set(self.transitions)) != len(self.transitions):
            raise BadValue("duplicate ids")
        if len(self.m0) != len(self.places) or any(v < 0 for v in self.m0):
            raise BadValue("initial marking malformed")
        for table in (self.pre, self.post):
            for t, arcs in table.items():
                if t not in self.transitions:
                    raise BadValue(f"arc table references unknown transition {t!r}")
                for p, w in arcs.items():
                    if p not in self.places:
                        raise BadValue(f"arc references unknown place {p!r}")
                    if w < 0:
                        raise BadValue("arc weights must be >= 0")

    def place_index(self, p: str) -> int:
        return self.places.index(p)

    def pre_weight(self, t: str, p: str) -> int:
        return self.pre.get(t, {}).get(p, 0)

    def post_weight(self, t: str, p: str) -> int:
        return self.post.get(t, {}).get(p, 0)


def build_net(places: list[tuple[str, int]], transitions: list[str],
              arcs: list[tuple[str, str, int]]) -> PetriNet:
    """Convenience constructor from (source, target, weight) arcs."""
    names = tuple(p for p, _ in places)
    m0 = tuple(tok for _, tok in places)
    pre: dict[str, dict[str, int]] = {t: {} for t in transitions}
    post: dict[str, dict[str, int]] = {t: {} for t in transitions}
    pset = set(names)
    for src, dst, w in arcs:
        if src in pset and dst in pre:
            pre[dst][src] = pre[dst].get(src, 0) + w
        elif src in post and dst in pset:
            post[src][dst] = post[src].get(dst, 0) + w
        else:
            raise BadValue(f"arc {src!r} -> {dst!r} is not place->transition "
                           f"or transition->place")
    return PetriNet(names, tuple(transitions), pre, post, m0)


def is_enabled(net: PetriNet, m: Marking, t: str) -> bool:
    if t not in net.transitions:
        raise UnknownTransition(t)
    return all(m[net.place_index(p)] >= w for p, w in net.pre.get(t, {}).items())


def fire_transition(net: PetriNet, m: Marking, t: str) -> Marking:
    """Successor marking M - Pre(t) + Post(t); NotEnabled if t cannot fire."""
    if not is_enabled(net, m, t):
        raise NotEnabled(f"{t} not enabled at {m}")
    out = list(m)
    for p, w in net.pre.get(t, {}).items():
        out[net.place_index(p)] -= w
    for p, w in net.post.get(t, {}).items():
        out[net.place_index(p)] += w
    return tuple(out)


@dataclass(frozen=True)
class CoveringPair:
    """Witness of unboundedness: smaller -> larger along one firing path."""

    smaller: Marking
    larger: Marking
    pumped_places: tuple[str, ...]


@dataclass
class ReachabilityGraph:
    net: PetriNet
    nodes: list[Marking] = field(default_factory=list)
    edges: list[tuple[int, str, int]] = field(default_factory=list)
    truncated: bool = False
    covering: CoveringPair | None = None

    def index(self, m: Marking) -> int:
        return self.nodes.index(m)

    def out_degree(self, i: int) -> int:
        return sum(1 for src, _, _ in self.edges if src == i)


def build_reachability(net: PetriNet, cap: int) -> ReachabilityGraph:
    """Breadth-first reachability up to cap markings.

    Node order is discovery order with transitions tried in declaration
    order, so equal nets give identical graphs. When more than cap
    markings exist the graph comes back partial with truncated set. The
    first covering pair seen on any path is recorded as the
    unboundedness witness.
    """
    if cap < 1:
        raise BadValue("cap must be >= 1")
    graph = ReachabilityGraph(net)
    graph.nodes.append(net.m0)
    index = {net.m0: 0}
    parent: dict[int, int] = {0: -1}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        m = graph.nodes[i]
        for t in net.transitions:
            if not is_enabled(net, m, t):
                continue
            nxt = fire_transition(net, m, t)
            j = index.get(nxt)
            if j is None:
                if len(graph.nodes) >= cap:
                    graph.truncated = True
                    continue
                j = len(graph.nodes)
                graph.nodes.append(nxt)
                index[nxt] = j
                parent[j] = i
                queue.append(j)
                if graph.covering is None:
                    anc = i
                    while anc != -1:
                        small = graph.nodes[anc]
                        if small != nxt and all(a <= b for a, b in zip(small, nxt)):
                            pumped = tuple(p for p, a, b in
                                           zip(net.places, small, nxt) if b > a)
                            graph.covering = CoveringPair(small, nxt, pumped)
                            break
                        anc = parent[anc]
            graph.edges.append((i, t, j))
    return graph


def _strongly_connected(node_count: int, edges: list[tuple[int, int]]) -> tuple[bool, tuple[int, int] | None]:
    """Kosaraju-style check; on failure returns one unreachable (u, v) pair."""
    if node_count <= 1:
        return True, None
    fwd: list[list[int]] = [[] for _ in range(node_count)]
    rev: list[list[int]] = [[] for _ in range(node_count)]
    for a, b in edges:
        fwd[a].append(b)
        rev[b].append(a)

    def reach(adj, start):
        seen = {start}
        stack = [start]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen

    from_zero = reach(fwd, 0)
    if len(from_zero) != node_count:
        missing = min(set(range(node_count)) - from_zero)
        return False, (0, missing)
    to_zero = reach(rev, 0)
    if len(to_zero) != node_count:
        missing = min(set(range(node_count)) - to_zero)
        return False, (missing, 0)
    return True, None


def net_graph_edges(net: PetriNet) -> list[tuple[int, int]]:
    """Bipartite arc graph: places then transitions, indices in declaration order."""
    offset = len(net.places)
    edges = []
    for ti, t in enumerate(net.transitions):
        for p, w in net.pre.get(t, {}).items():
            if w > 0:
                edges.append((net.place_index(p), offset + ti))
        for p, w in net.post.get(t, {}).items():
            if w > 0:
                edges.append((offset + ti, net.place_index(p)))
    return edges


@dataclass(frozen=True)
class PropertyReport:
    marking_count: int
    truncated: bool               # analyses then hold within the explored prefix
    max_tokens: dict[str, int]    # per-place peak over explored markings
    k_bound: int
    unbounded: bool               # proven by covering pair only
    covering: CoveringPair | None
    live_transitions: tuple[str, ...]   # L1: fire on at least one edge
    dead_transitions: tuple[str, ...]
    deadlock_markings: tuple[Marking, ...]
    net_strongly_connected: bool
    net_disconnect_witness: tuple[str, str] | None
    reachability_strongly_connected: bool


def analyze_properties(net: PetriNet, cap: int) -> PropertyReport:
    """Boundedness, L1-liveness, deadlock, and both strong connectivities."""
    graph = build_reachability(net, cap)
    max_tokens = {p: max(m[i] for m in graph.nodes)
                  for i, p in enumerate(net.places)}
    fired = {t for _, t, _ in graph.edges}
    deadlocks = tuple(graph.nodes[i] for i in range(len(graph.nodes))
                      if graph.out_degree(i) == 0)
    net_edges = net_graph_edges(net)
    net_sc, witness_idx = _strongly_connected(
        len(net.places) + len(net.transitions), net_edges)
    witness = None
    if witness_idx is not None:
        names = net.places + net.transitions
        witness = (names[witness_idx[0]], names[witness_idx[1]])
    reach_sc, _ = _strongly_connected(
        len(graph.nodes), [(a, b) for a, _, b in graph.edges])
    return PropertyReport(
        marking_count=len(graph.nodes),
        truncated=graph.truncated,
        max_tokens=max_tokens,
        k_bound=max(max_tokens.values()),
        unbounded=graph.covering is not None,
        covering=graph.covering,
        live_transitions=tuple(t for t in net.transitions if t in fired),
        dead_transitions=tuple(t for t in net.transitions if t not in fired),
        deadlock_markings=deadlocks,
        net_strongly_connected=net_sc,
        net_disconnect_witness=witness,
        reachability_strongly_connected=reach_sc,
    )


@dataclass(frozen=True)
class Finding:
    present: bool
    witness: object = None
    detail: str = ""


@dataclass(frozen=True)
class DeficiencyReport:
    """Six workflow deficiencies, each with a witness when positive."""

    dead_operation: Finding
    deadlock: Finding
    unbounded_accumulation: Finding
    unreachable_pool: Finding
    disconnected_workflow: Finding
    no_progress_cycle: Finding
    truncated: bool

    def findings(self) -> dict[str, Finding]:
        return {
            "dead_operation": self.dead_operation,
            "deadlock": self.deadlock,
            "unbounded_accumulation": self.unbounded_accumulation,
            "unreachable_pool": self.unreachable_pool,
            "disconnected_workflow": self.disconnected_workflow,
            "no_progress_cycle": self.no_progress_cycle,
        }


def _find_no_progress_cycle(graph: ReachabilityGraph) -> Finding:
    """A reachability cycle from which no terminal marking is reachable.

    Nets with no terminal marking at all are perpetual by design and
    report negative.
    """
    n = len(graph.nodes)
    out: list[list[int]] = [[] for _ in range(n)]
    rev: list[list[int]] = [[] for _ in range(n)]
    for a, _, b in graph.edges:
        out[a].append(b)
        rev[b].append(a)
    terminals = [i for i in range(n) if not out[i]]
    if not terminals:
        return Finding(False, detail="net has no terminal marking; "
                                     "perpetual workflow")
    can_finish = set(terminals)
    stack = list(terminals)
    while stack:
        for prv in rev[stack.pop()]:
            if prv not in can_finish:
                can_finish.add(prv)
                stack.append(prv)
    stuck = [i for i in range(n) if i not in can_finish]
    for start in stuck:
        # every stuck node with an outgoing edge sits on or leads into a
        # cycle of stuck nodes; walk until a repeat to extract one
        path, seen = [], {}
        node = start
        while node not in seen and out[node]:
            seen[node] = len(path)
            path.append(node)
            node = out[node][0]
        if out[node] or node in seen:
            cycle_start = seen.get(node, 0)
            cycle = [graph.nodes[i] for i in path[cycle_start:]]
            if cycle:
                return Finding(True, tuple(cycle),
                               "cycle cannot reach any terminal marking")
    return Finding(False)


def deficiency_report(net: PetriNet, cap: int) -> DeficiencyReport:
    props = analyze_properties(net, cap)
    graph = build_reachability(net, cap)
    initially_marked = {p for p, tok in zip(net.places, net.m0) if tok > 0}
    never_marked = tuple(p for p in net.places
                         if props.max_tokens[p] == 0 and p not in initially_marked)
    return DeficiencyReport(
        dead_operation=Finding(bool(props.dead_transitions),
                               props.dead_transitions or None,
                               "enabled in no reachable marking"),
        deadlock=Finding(bool(props.deadlock_markings),
                         props.deadlock_markings or None,
                         "reachable marking enabling nothing"),
        unbounded_accumulation=Finding(props.unbounded, props.covering,
                                       "token count provably pumps"),
        unreachable_pool=Finding(bool(never_marked), never_marked or None,
                                 "never marked in any reachable marking"),
        disconnected_workflow=Finding(not props.net_strongly_connected,
                                      props.net_disconnect_witness,
                                      "net graph not strongly connected"),
        no_progress_cycle=_find_no_progress_cycle(graph),
        truncated=props.truncated,
    )


# -- workflow mapping ----------------------------------------------------------

@dataclass(frozen=True)
class PoolWiring:
    """Declared data pools and how each filter op consumes and feeds them."""

    pools: tuple[str, ...]
    op_inputs: dict[str, tuple[str, ...]]
    op_outputs: dict[str, str]
    initial_tokens: dict[str, int]


def workflow_to_net(ops: list[FilterOp], wiring: PoolWiring) -> PetriNet:
    """One transition per filter op, one place per data pool.

    An op consumes one token from each declared input pool and produces
    one into its output pool; M0 marks pools per the wiring (the raw
    stream in the common case).
    """
    op_ids = [op.op_id for op in ops]
    declared = set(op_ids)
    pool_set = set(wiring.pools)
    for op_id in list(wiring.op_inputs) + list(wiring.op_outputs):
        if op_id not in declared:
            raise DanglingReference(f"wiring names undeclared op {op_id!r}")
    for op_id in op_ids:
        if op_id not in wiring.op_inputs or op_id not in wiring.op_outputs:
            raise DanglingReference(f"op {op_id!r} missing wiring")
        for p in wiring.op_inputs[op_id]:
            if p not in pool_set:
                raise DanglingReference(f"wiring names undeclared pool {p!r}")
        if wiring.op_outputs[op_id] not in pool_set:
            raise DanglingReference(
                f"wiring names undeclared pool {wiring.op_outputs[op_id]!r}")
    for p in wiring.initial_tokens:
        if p not in pool_set:
            raise DanglingReference(f"initial marking names undeclared pool {p!r}")
    places = [(p, wiring.initial_tokens.get(p, 0)) for p in wiring.pools]
    arcs: list[tuple[str, str, int]] = []
    for op_id in op_ids:
        for p in wiring.op_inputs[op_id]:
            arcs.append((p, op_id, 1))
        arcs.append((op_id, wiring.op_outputs[op_id], 1))
    return build_net(places, op_ids, arcs)


def linear_wiring(ops: list[FilterOp], raw: str = "raw",
                  final: str = "escalations") -> PoolWiring:
    """Pipeline wiring: raw -> op1 -> pool1 -> op2 -> ... -> escalations."""
    pools = [raw] + [f"{op.op_id}.out" for op in ops[:-1]] + [final]
    op_inputs = {}
    op_outputs = {}
    for i, op in enumerate(ops):
        op_inputs[op.op_id] = (pools[i],)
        op_outputs[op.op_id] = pools[i + 1]
    return PoolWiring(tuple(pools), op_inputs, op_outputs, {raw: 1})


# -- net file format -----------------------------------------------------------

def parse_net_file(text: str) -> PetriNet:
    """Parse the documented line format.

        place <id> <initial-tokens>
        trans <id>
        arc <src> -> <dst> [weight]
    """
    places: list[tuple[str, int]] = []
    transitions: list[str] = []
    arcs: list[tuple[str, str, int]] = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "place" and len(parts) == 3:
                places.append((parts[1], int(parts[2])))
            elif parts[0] == "trans" and len(parts) == 2:
                transitions.append(parts[1])
            elif parts[0] == "arc" and parts[2] == "->" and len(parts) in (4, 5):
                weight = int(parts[4]) if len(parts) == 5 else 1
                arcs.append((parts[1], parts[3], weight))
            else:
                raise NetFormatError(f"line {n}: cannot parse {raw!r}")
        except (ValueError, IndexError):
            raise NetFormatError(f"line {n}: cannot parse {raw!r}") from None
    try:
        return build_net(places, transitions, arcs)
    except BadValue as exc:
        raise NetFormatError(str(exc)) from None


def format_net(net: PetriNet) -> str:
    lines = [f"place {p} {tok}" for p, tok in zip(net.places, net.m0)]
    lines += [f"trans {t}" for t in net.transitions]
    for t in net.transitions:
        for p, w in net.pre.get(t, {}).items():
            lines.append(f"arc {p} -> {t}" + (f" {w}" if w != 1 else ""))
        for p, w in net.post.get(t, {}).items():
            lines.append(f"arc {t} -> {p}" + (f" {w}" if w != 1 else ""))
    return "\n".join(lines) + "\n"
