import numpy as np
import pytest

from mapweld.elements import MapClass, MapElement, Point2, VectorMap


def quantized(v: float) -> float:
    return round(float(v), 4)


def random_element(rng: np.random.Generator, eid: str, cls_=None, n_points: int = 20,
                   span: float = 50.0, three_d: bool = False) -> MapElement:
    """Random jagged polyline with file-precision coordinates."""
    cls_ = cls_ or MapClass(rng.choice([c.value for c in MapClass]))
    start = rng.uniform(-span, span, size=2)
    steps = rng.uniform(-3.0, 3.0, size=(n_points - 1, 2))
    pts = np.vstack([start, start + np.cumsum(steps, axis=0)])
    out = []
    for p in pts:
        q = (quantized(p[0]), quantized(p[1]))
        if out and abs(q[0] - out[-1][0]) < 1e-9 and abs(q[1] - out[-1][1]) < 1e-9:
            q = (q[0] + 0.01, q[1])
        out.append(q)
    if three_d:
        points = tuple((x, y, quantized(rng.uniform(-2, 2))) for x, y in out)
    else:
        points = tuple(Point2(x, y) for x, y in out)
    conf = None if rng.uniform() < 0.5 else quantized(rng.uniform(0, 1))
    return MapElement(id=eid, cls=cls_, points=points, confidence=conf)


def random_map(rng: np.random.Generator, n_elements: int = 5, **kw) -> VectorMap:
    elements = [random_element(rng, f"el_{k}", **kw) for k in range(n_elements)]
    return VectorMap.from_elements(elements, frame_id="map", pad=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
