"""Synthetic 271-area / 701-edge geography used as a regression fixture.

Delaunay triangulation of seeded points, then the longest edges are dropped
(keeping the graph connected and every degree >= 2) until 701 remain.
Writes the edge list, centroids, a Poisson data file and a template table.
"""
import sys
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.spatial import Delaunay

N, EDGES, SEED = 271, 701, 2005


def main(out: Path) -> None:
    rng = np.random.default_rng(SEED)
    pts = rng.uniform(0.0, 30.0, size=(N, 2)).round(4)
    tri = Delaunay(pts)
    g = nx.Graph()
    g.add_nodes_from(range(N))
    for s in tri.simplices:
        for a, b in ((s[0], s[1]), (s[1], s[2]), (s[0], s[2])):
            g.add_edge(int(a), int(b))
    by_length = sorted(g.edges, key=lambda e: -np.hypot(*(pts[e[0]] - pts[e[1]])))
    for a, b in by_length:
        if g.number_of_edges() == EDGES:
            break
        if g.degree[a] <= 2 or g.degree[b] <= 2:
            continue
        g.remove_edge(a, b)
        if not nx.is_connected(g):
            g.add_edge(a, b)
    assert g.number_of_edges() == EDGES

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "city_scale.adj", "w") as f:
        f.write(f"# synthetic geography: {N} areas, {EDGES} border pairs\n")
        for a, b in sorted(tuple(sorted(e)) for e in g.edges):
            f.write(f"{a} {b}\n")
    with open(out / "city_scale.xy", "w") as f:
        for k, (x, y) in enumerate(pts):
            f.write(f"{k} {x:.4f} {y:.4f}\n")

    # Smooth log-risk with one step region, expected counts around 30.
    centre = np.array([12.0, 18.0])
    grey = np.hypot(*(pts - centre).T) < 5.0
    x = rng.normal(size=N).round(4)
    log_e = np.log(rng.uniform(20.0, 40.0, size=N)).round(6)
    risk = 0.3 * np.sin(pts[:, 0] / 6.0) + 0.2 * np.cos(pts[:, 1] / 5.0) + 0.8 * grey + 0.1 * x
    y = rng.poisson(np.exp(log_e + risk - 0.3))
    with open(out / "city_scale.csv", "w") as f:
        f.write("area_id,y,offset,x\n")
        for k in range(N):
            f.write(f"{k},{y[k]},{log_e[k]},{x[k]}\n")
    with open(out / "city_scale_template.csv", "w") as f:
        f.write("area_id,x,y,group\n")
        for k in range(N):
            f.write(f"{k},{pts[k, 0]:.4f},{pts[k, 1]:.4f},{int(grey[k])}\n")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("tests/data"))
