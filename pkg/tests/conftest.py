import numpy as np
import pytest

from stix.bench.data import SyntheticSpec, synthetic_dataset
from stix.core import Dataset, KnnQuery, WindowQuery
from stix.geometry import Mbr
from stix.mlmodel import TrainConfig

# short training keeps unit tests quick; completeness does not depend on fit quality
FAST = TrainConfig(epochs=30)

DINER_WINDOW = Mbr(0.3, 0.3, 0.6, 0.6)


@pytest.fixture
def diner():
    """Ten objects around a window; only o2 is inside it with both pizza and bar."""
    records = [
        (1, (0.45, 0.40), ["pizza"]),
        (2, (0.40, 0.50), ["pizza", "bar"]),
        (3, (0.55, 0.35), ["bar", "cafe"]),
        (4, (0.80, 0.80), ["pizza", "bar"]),
        (5, (0.10, 0.90), ["pizza", "bar", "wine"]),
        (6, (0.35, 0.58), ["cafe"]),
        (7, (0.70, 0.20), ["bar"]),
        (8, (0.20, 0.15), ["pizza", "wine"]),
        (9, (0.65, 0.62), ["pizza", "bar"]),
        (10, (0.50, 0.52), []),
    ]
    ids, pts, kws = zip(*records)
    return Dataset.from_records(ids, np.array(pts), kws, normalize=False)


def random_dataset(seed: int, n: int, vocab: int, mean_keywords: float = 2.0, distribution="uniform") -> Dataset:
    return synthetic_dataset(
        SyntheticSpec(count=n, keywords=vocab, mean_keywords=mean_keywords, distribution=distribution, seed=seed)
    )


def random_window_queries(ds: Dataset, rng: np.random.Generator, count: int) -> list[WindowQuery]:
    """Mix of object-centred windows with the object's keywords and fully random ones."""
    out = []
    for i in range(count):
        side = float(rng.choice([0.01, 0.05, 0.1, 0.15, 0.2, 0.5]))
        row = int(rng.integers(len(ds)))
        if i % 4 == 3:
            c = rng.random(2)
            kws = rng.choice(ds.vocab.size, size=int(rng.integers(0, 3)), replace=False)
        else:
            c = ds.xy[row]
            own = sorted(ds.keywords[row])
            kws = rng.choice(own, size=min(len(own), int(rng.integers(0, 4))), replace=False) if own else []
        h = side / 2
        w = Mbr(c[0] - h, c[1] - h, c[0] + h, c[1] + h)
        out.append(WindowQuery(w, frozenset(int(k) for k in kws)))
    return out


def random_knn_queries(ds: Dataset, rng: np.random.Generator, count: int, k=None) -> list[KnnQuery]:
    out = []
    for i in range(count):
        kk = int(rng.choice([1, 5, 10, 20])) if k is None else k
        if i % 4 == 3:
            p = rng.random(2)
            kws = rng.choice(ds.vocab.size, size=int(rng.integers(0, 3)), replace=False)
        else:
            row = int(rng.integers(len(ds)))
            p = ds.xy[row]
            own = sorted(ds.keywords[row])
            kws = rng.choice(own, size=min(len(own), int(rng.integers(1, 3))), replace=False) if own else []
        out.append(KnnQuery((float(p[0]), float(p[1])), frozenset(int(x) for x in kws), kk))
    return out


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, ok: bool, text: str) -> str:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
