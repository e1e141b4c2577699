"""Call graph, SCC condensation in topological order, base-case check."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Set, Tuple

from .cfg import CallEdge, Procedure, Program


@dataclass
class CallGraph:
    nodes: List[str]
    edges: Set[Tuple[str, str]]  # caller -> callee
    sccs: List[List[str]]        # callees before callers
    recursive: List[bool]

    def scc_of(self, name: str) -> int:
        for i, comp in enumerate(self.sccs):
            if name in comp:
                return i
        raise KeyError(name)


def build_call_graph(p: Program) -> CallGraph:
    nodes = list(p.procedures)
    edges = set()
    succ: Dict[str, List[str]] = {n: [] for n in nodes}
    for name, proc in p.procedures.items():
        for e in proc.cfg.calls:
            if (name, e.callee) not in edges:
                edges.add((name, e.callee))
                succ[name].append(e.callee)
    # Tarjan; emits an SCC only after all SCCs it reaches, i.e. callees first
    index: Dict[str, int] = {}
    low: Dict[str, int] = {}
    on: Set[str] = set()
    stack: List[str] = []
    sccs: List[List[str]] = []
    counter = [0]

    def strongconnect(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on.add(v)
        for w in succ[v]:
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif w in on:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on.discard(w)
                comp.append(w)
                if w == v:
                    break
            sccs.append(sorted(comp))

    for v in nodes:
        if v not in index:
            strongconnect(v)
    recursive = []
    for comp in sccs:
        if len(comp) > 1:
            recursive.append(True)
        else:
            n = comp[0]
            recursive.append((n, n) in edges)
    return CallGraph(nodes, edges, sccs, recursive)


def reject_missing_base_case(scc: List[str], p: Program) -> Optional[str]:
    """None if every SCC member has a call-free-in-SCC entry->exit path,
    else a diagnostic naming the first offending procedure."""
    members = set(scc)
    for name in scc:
        proc = p.procedures[name]
        seen = {proc.entry}
        work = [proc.entry]
        ok = False
        while work:
            v = work.pop()
            if v == proc.exit:
                ok = True
                break
            for e in proc.cfg.out_edges(v):
                if isinstance(e, CallEdge) and e.callee in members:
                    continue
                if e.dst not in seen:
                    seen.add(e.dst)
                    work.append(e.dst)
        if not ok:
            return "%s has no base case" % name
    return None
