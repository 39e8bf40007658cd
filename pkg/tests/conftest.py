import numpy as np
import pytest

import geoq

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])

_EMB_CACHE = {}


def build_embedding(n_nodes: int, seed: int) -> geoq.SphericalEmbedding:
    """Session-cached square-deployment embedding."""
    key = (n_nodes, seed)
    if key not in _EMB_CACHE:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0]))
        pts = geoq.generate_deployment(SQUARE, n_nodes, rng)
        mesh = geoq.triangulate(pts, boundary=SQUARE)
        _EMB_CACHE[key] = geoq.harmonic_sphere_map(geoq.double_cover(mesh))
    return _EMB_CACHE[key]


@pytest.fixture(scope="session")
def emb400():
    return build_embedding(400, 3)


@pytest.fixture(scope="session")
def emb800():
    return build_embedding(800, 3)


def random_unit(rng, n=None):
    v = rng.normal(size=(n or 1, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v[0] if n is None else v
