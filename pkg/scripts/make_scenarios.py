"""Regenerate the scenario files bundled under src/bpnet/scenarios."""
from pathlib import Path

from bpnet.scenario import Scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "bpnet" / "scenarios"

PAIRS = [((1, 3), (2, 5)), ((2, 3), (2, 7)), ((2, 2), (1, 6)), ((3, 4), (2, 7)),
         ((1, 1), (1, 7)), ((4, 3), (5, 4)), ((4, 6), (6, 6)), ((5, 3), (5, 6))]
GRID = {"generator": "clustered_grid", "clusters": 4, "grid_side": 4,
        "random_links_per_cluster": 2, "inter_cluster_links": 2, "seed": 0}
LAMBDAS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
MS = [1, 5, 10, 50, 100]


def commodities(rate):
    return [{"source": list(s), "destination": list(d), "arrival": {"kind": "poisson", "rate": rate}}
            for s, d in PAIRS]


def pol(alg, **kw):
    return {"algorithm": alg, **kw}


def bias_family(z):
    out = [pol("bp")]
    out += [pol("bpbias", B=B) for B in (1, 2, 10)]
    out += [pol("bpnxtbias", z=z, B=B) for B in (1, 2, 10)]
    out += [pol("bpminbias", z=z, B=B) for B in (1, 2, 10)]
    return out


def delay_figure(name, policies):
    return Scenario(name=name, topology=GRID, commodities=commodities(0.1), policies=policies,
                    engine={"slots": 100_000, "warmup": None, "seed": 0},
                    sweep={"parameter": "lambda", "values": LAMBDAS, "replications": 1},
                    output={"csv": f"{name}.csv", "plot": f"{name}.png"})


def tradeoff_figure(name, policies):
    return Scenario(name=name, topology=GRID, commodities=commodities(3.0), policies=policies,
                    flow_control={"M": 10, "r_max": 1.0, "utility": "log", "utility_at": "sources",
                                  "Q_max": None},
                    engine={"slots": 100_000, "warmup": None, "seed": 0},
                    sweep={"parameter": "M", "values": MS, "replications": 1},
                    output={"csv": f"{name}.csv", "plot": f"{name}.png"})


def main():
    scenarios = [
        delay_figure("fig2", [pol("bp")] + [pol("bpbias", B=B) for B in (1, 2, 10)]
                     + [pol("bpnxt", z=z) for z in (1, 2, 5)] + [pol("bpmin", z=z) for z in (1, 2, 5)]),
        delay_figure("fig3", bias_family(1)),
        delay_figure("fig4", bias_family(5)),
        tradeoff_figure("fig5", [pol("bp")] + [pol("bpnxt", z=z) for z in (1, 2, 5)]
                        + [pol("bpmin", z=z) for z in (1, 2, 5)]),
        tradeoff_figure("fig6", [pol("bp"), pol("bpbias", B=1), pol("bpnxtbias", z=1, B=1),
                                 pol("bpminbias", z=1, B=1)]),
        Scenario(name="single_link", topology={"nodes": 2, "links": [[0, 1]]},
                 commodities=[{"source": 0, "destination": 1, "arrival": {"kind": "constant", "rate": 0.5}}],
                 policies=[pol("bp")], engine={"slots": 1000, "warmup": 0, "seed": 0},
                 output={"csv": "single_link.csv"}),
        Scenario(name="tandem4", topology={"nodes": 4, "links": [[0, 1], [1, 2], [2, 3]]},
                 commodities=[{"source": 0, "destination": 3,
                               "arrival": {"kind": "bernoulli", "p": 0.3, "batch": 1.0}}],
                 policies=[pol("bp"), pol("bpnxt", z=30), pol("bpmin", z=30)],
                 engine={"slots": 100_000, "warmup": 0, "seed": 0},
                 output={"csv": "tandem4.csv"}),
    ]
    OUT.mkdir(parents=True, exist_ok=True)
    for sc in scenarios:
        sc.validate()
        text = sc.dumps()
        assert Scenario.loads(text) == sc
        (OUT / f"{sc.name}.json").write_text(text + "\n")
        print("wrote", OUT / f"{sc.name}.json")


if __name__ == "__main__":
    main()
