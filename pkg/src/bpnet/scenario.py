"""Scenario documents: topology, commodities, policies, engine and sweep settings.

A scenario is a JSON tree.  Node references accept a plain node id, a
global 1-based ``[row, col]`` on the assembled clustered grid, or
``{"cluster": k, "row": r, "col": c}`` with 0-based cluster and 1-based
cluster-local row/col.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import NetworkGraph, build_clustered_grid, grid_node, wireline_rate_model
from .policy import ALGORITHMS, FlowControlSpec, PolicySpec, make_policy
from .sim import SWEEP_PARAMETERS, Experiment
from .traffic import ArrivalSpec, Distribution

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6")


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _need(doc, key, path, kind=None):
    if not isinstance(doc, dict):
        raise ScenarioError(path, "expected an object")
    if key not in doc:
        raise ScenarioError(f"{path}.{key}", "missing")
    v = doc[key]
    if kind is not None and not isinstance(v, kind):
        raise ScenarioError(f"{path}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return v


def _num(v, path, positive=False, allow_inf=False):
    if v is None and allow_inf:
        return float("inf")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, "expected a number")
    if positive and not v > 0:
        raise ScenarioError(path, "must be positive")
    return float(v)


@dataclass
class Scenario:
    name: str
    topology: dict
    commodities: list
    policies: list
    link_rate: float = 1.0
    flow_control: dict | None = None
    engine: dict = field(default_factory=lambda: {"slots": 100_000, "warmup": None, "seed": 0})
    sweep: dict | None = None
    output: dict = field(default_factory=dict)

    # serialisation
    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        if not isinstance(doc, dict):
            raise ScenarioError("$", "scenario must be an object")
        known = {"name", "topology", "commodities", "policies", "policy", "link_rate", "flow_control",
                 "engine", "sweep", "output"}
        for k in doc:
            if k not in known:
                raise ScenarioError(f"$.{k}", "unknown field")
        policies = doc.get("policies")
        if policies is None and "policy" in doc:
            policies = [doc["policy"]]
        if not policies:
            raise ScenarioError("$.policies", "at least one policy is required")
        engine = {"slots": 100_000, "warmup": None, "seed": 0}
        engine.update(doc.get("engine") or {})
        sc = cls(
            name=str(doc.get("name", "scenario")),
            topology=_need(doc, "topology", "$", dict),
            commodities=_need(doc, "commodities", "$", list),
            policies=list(policies),
            link_rate=_num(doc.get("link_rate", 1.0), "$.link_rate", positive=True),
            flow_control=doc.get("flow_control"),
            engine=engine,
            sweep=doc.get("sweep"),
            output=dict(doc.get("output") or {}),
        )
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "topology": self.topology,
            "link_rate": self.link_rate,
            "commodities": self.commodities,
            "policies": self.policies,
            "engine": self.engine,
        }
        if self.flow_control is not None:
            doc["flow_control"] = self.flow_control
        if self.sweep is not None:
            doc["sweep"] = self.sweep
        if self.output:
            doc["output"] = self.output
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("$", f"invalid JSON ({exc})") from exc
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.loads(Path(path).read_text())

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.to_dict() == other.to_dict()

    # construction
    def base_graph(self) -> NetworkGraph:
        t = self.topology
        if "generator" in t:
            if t["generator"] != "clustered_grid":
                raise ScenarioError("$.topology.generator", f"unknown generator {t['generator']!r}")
            args = {k: t.get(k, d) for k, d in (("clusters", 4), ("grid_side", 4),
                                                  ("random_links_per_cluster", 2),
                                                  ("inter_cluster_links", 2), ("seed", 0))}
            for k, v in args.items():
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ScenarioError(f"$.topology.{k}", "expected an integer")
            try:
                return build_clustered_grid(**args)
            except ValueError as exc:
                raise ScenarioError("$.topology", str(exc)) from exc
        n = _need(t, "nodes", "$.topology", int)
        links = _need(t, "links", "$.topology", list)
        out = []
        for i, l in enumerate(links):
            if not (isinstance(l, list) and len(l) == 2 and all(isinstance(x, int) for x in l)):
                raise ScenarioError(f"$.topology.links[{i}]", "expected [tail, head]")
            out.append(tuple(l))
            if t.get("bidirectional", False):
                out.append((l[1], l[0]))
        try:
            return NetworkGraph(n, tuple(out))
        except ValueError as exc:
            raise ScenarioError("$.topology.links", str(exc)) from exc

    def _node(self, ref, path, g: NetworkGraph) -> int:
        t = self.topology
        gen = "generator" in t
        clusters, side = t.get("clusters", 4), t.get("grid_side", 4)
        try:
            if isinstance(ref, bool):
                raise ScenarioError(path, "expected a node reference")
            if isinstance(ref, int):
                node = ref
            elif isinstance(ref, list) and len(ref) == 2 and gen:
                node = grid_node(int(ref[0]), int(ref[1]), clusters, side)
            elif isinstance(ref, dict) and gen:
                k, r, c = int(ref["cluster"]), int(ref["row"]), int(ref["col"])
                if not (0 <= k < clusters and 1 <= r <= side and 1 <= c <= side):
                    raise ScenarioError(path, "cluster coordinate out of range")
                node = k * side * side + (r - 1) * side + (c - 1)
            else:
                raise ScenarioError(path, "expected a node id, [row, col] or {cluster, row, col}")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(path, str(exc)) from exc
        if not 0 <= node < g.N:
            raise ScenarioError(path, f"node {node} does not exist")
        return node

    def build(self):
        """(graph with commodities, rate model, arrivals, [PolicySpec])."""
        g = self.base_graph()
        sources, dests, entries = [], [], []
        for c, com in enumerate(self.commodities):
            p = f"$.commodities[{c}]"
            s = self._node(_need(com, "source", p), f"{p}.source", g)
            d = self._node(_need(com, "destination", p), f"{p}.destination", g)
            if s == d:
                raise ScenarioError(p, "source equals destination")
            try:
                dist = Distribution.from_dict(_need(com, "arrival", p, dict))
            except (TypeError, ValueError, KeyError) as exc:
                raise ScenarioError(f"{p}.arrival", str(exc)) from exc
            sources.append(s)
            dests.append(d)
            entries.append((s, c, dist))
        g = g.with_commodities(dests)
        rates = wireline_rate_model(g, self.link_rate)
        fc = self._flow_control(g, sources)
        policies = [self._policy(p, f"$.policies[{i}]", fc) for i, p in enumerate(self.policies)]
        return g, rates, ArrivalSpec(tuple(entries)), policies

    def _flow_control(self, g: NetworkGraph, sources) -> FlowControlSpec | None:
        doc = self.flow_control
        if doc is None:
            return None
        p = "$.flow_control"
        mask = None
        if doc.get("utility_at", "sources") == "sources":
            mask = np.zeros((g.N, g.C), dtype=bool)
            mask[sources, np.arange(g.C)] = True
        elif doc.get("utility_at") != "all":
            raise ScenarioError(f"{p}.utility_at", "expected 'sources' or 'all'")
        try:
            return FlowControlSpec(
                M=_num(doc.get("M", 1.0), f"{p}.M", positive=True),
                r_max=_num(doc.get("r_max", 1.0), f"{p}.r_max"),
                utility=str(doc.get("utility", "log")),
                weight=_num(doc.get("weight", 1.0), f"{p}.weight"),
                utility_mask=mask,
                Q_max=_num(doc.get("Q_max"), f"{p}.Q_max", allow_inf=True),
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(p, str(exc)) from exc

    def _policy(self, doc, path, fc) -> PolicySpec:
        alg = _need(doc, "algorithm", path, str)
        if alg.lower() not in ALGORITHMS or alg.lower() == "custom":
            raise ScenarioError(f"{path}.algorithm", f"unknown algorithm {alg!r}")
        z = _num(doc.get("z"), f"{path}.z", positive=True, allow_inf=True)
        B = _num(doc.get("B", 0.0), f"{path}.B")
        if B < 0:
            raise ScenarioError(f"{path}.B", "must be non-negative")
        return make_policy(alg, z, B, fc)

    def experiments(self, seed: int | None = None, slots: int | None = None) -> list[Experiment]:
        g, rates, arrivals, policies = self.build()
        e = self.engine
        out = []
        for p in policies:
            out.append(Experiment(g, rates, arrivals, p,
                                  slots=int(slots if slots is not None else e.get("slots", 100_000)),
                                  warmup=e.get("warmup"),
                                  seed=int(seed if seed is not None else e.get("seed", 0)),
                                  name=self.name))
        return out

    def validate(self):
        self.build()
        e = self.engine
        if not isinstance(e.get("slots"), int) or e["slots"] < 1:
            raise ScenarioError("$.engine.slots", "expected a positive integer")
        w = e.get("warmup")
        if w is not None and (not isinstance(w, int) or not 0 <= w < e["slots"]):
            raise ScenarioError("$.engine.warmup", "need 0 <= warmup < slots")
        if not isinstance(e.get("seed"), int):
            raise ScenarioError("$.engine.seed", "expected an integer")
        if self.sweep is not None:
            param = _need(self.sweep, "parameter", "$.sweep", str)
            if param not in SWEEP_PARAMETERS:
                raise ScenarioError("$.sweep.parameter", f"choose from {SWEEP_PARAMETERS}")
            values = _need(self.sweep, "values", "$.sweep", list)
            for i, v in enumerate(values):
                _num(v, f"$.sweep.values[{i}]")
            reps = self.sweep.get("replications", 1)
            if not isinstance(reps, int) or reps < 1:
                raise ScenarioError("$.sweep.replications", "expected a positive integer")
            if param == "M" and self.flow_control is None:
                raise ScenarioError("$.sweep.parameter", "an M sweep needs flow_control")


def shipped(name: str) -> Scenario:
    """Scenario bundled with the package, e.g. ``shipped("fig2")``."""
    path = resources.files("bpnet") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise KeyError(name)
    return Scenario.loads(path.read_text())


def shipped_names() -> list[str]:
    root = resources.files("bpnet") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
