"""Graph helpers over the closed-line subgraph of a power network."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import networkx as nx


@dataclass(frozen=True)
class Component:
    buses: tuple[str, ...]
    lines: tuple[str, ...]


def closed_graph(net, line_state: Mapping[str, int]) -> nx.MultiGraph:
    g = nx.MultiGraph()
    g.add_nodes_from(net.buses)
    for k, line in net.lines.items():
        if line_state.get(k, 0):
            g.add_edge(line.from_bus, line.to_bus, key=k)
    return g


def closed_components(net, line_state: Mapping[str, int]) -> list[Component]:
    """Connected components of the closed-line subgraph, sorted by first bus."""
    g = closed_graph(net, line_state)
    out = []
    for buses in nx.connected_components(g):
        lines = sorted(k for _, _, k in g.subgraph(buses).edges(keys=True))
        out.append(Component(tuple(sorted(buses)), tuple(lines)))
    return sorted(out, key=lambda c: c.buses[0])
