"""Regenerate the TUDataset-style test fixtures under tests/fixtures/."""

from pathlib import Path

import numpy as np

from otcompress.io import write_tudataset

ROOT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def random_connected(rng, n, extra):
    edges = {(int(rng.integers(0, v)), v) for v in range(1, n)}
    while len(edges) < n - 1 + extra:
        u, v = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        edges.add((u, v))
    return sorted(edges)


def main():
    # toy: a labeled triangle with a tail, and a labeled 3-path
    toy = [
        (4, [(0, 1), (1, 2), (0, 2), (2, 3)], [0, 0, 1, 1]),
        (3, [(0, 1), (1, 2)], [2, 0, 2]),
    ]
    write_tudataset(ROOT / "toy", "TOY", toy, graph_labels=[1, -1])

    rng = np.random.default_rng(20240611)
    graphs, glabels = [], []
    for _ in range(20):
        n = int(rng.integers(8, 26))
        edges = random_connected(rng, n, int(rng.integers(0, n // 3 + 1)))
        labels = [int(x) for x in rng.integers(0, 4, n)]
        graphs.append((n, edges, labels))
        glabels.append(int(rng.integers(0, 2)))
    write_tudataset(ROOT / "labeled20", "LAB20", graphs, graph_labels=glabels)


if __name__ == "__main__":
    main()
