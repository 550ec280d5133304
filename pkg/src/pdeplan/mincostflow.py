"""Successive shortest augmenting paths with Johnson potentials.

Costs must be nonnegative integers on the original arcs, so zero initial
potentials are valid and Dijkstra works on reduced costs throughout.
"""

from __future__ import annotations

import heapq


class MinCostFlow:
    def __init__(self, n: int):
        self.n = n
        self.graph: list[list[int]] = [[] for _ in range(n)]
        # parallel arrays indexed by arc id; arc ^ 1 is the reverse arc
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[int] = []

    def add_edge(self, u: int, v: int, cap: int, cost: int) -> int:
        if cost < 0:
            raise ValueError("arc costs must be nonnegative")
        eid = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.graph[u].append(eid)
        self.graph[v].append(eid + 1)
        return eid

    def flow_on(self, eid: int) -> int:
        return self.cap[eid ^ 1]

    def solve(self, s: int, t: int, amount: int) -> tuple[int, int]:
        """Send up to ``amount`` units from s to t at minimum cost.

        Returns (units sent, total cost).
        """
        n = self.n
        pot = [0] * n
        sent = 0
        total = 0
        INF = float("inf")
        while sent < amount:
            dist = [INF] * n
            prev = [-1] * n
            dist[s] = 0
            heap = [(0, s)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist[u]:
                    continue
                pu = pot[u]
                for e in self.graph[u]:
                    if self.cap[e] <= 0:
                        continue
                    v = self.to[e]
                    nd = d + self.cost[e] + pu - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        prev[v] = e
                        heapq.heappush(heap, (nd, v))
            if dist[t] == INF:
                break
            for v in range(n):
                if dist[v] < INF:
                    pot[v] += dist[v]
            push = amount - sent
            v = t
            while v != s:
                e = prev[v]
                push = min(push, self.cap[e])
                v = self.to[e ^ 1]
            v = t
            while v != s:
                e = prev[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                total += push * self.cost[e]
                v = self.to[e ^ 1]
            sent += push
        return sent, total
