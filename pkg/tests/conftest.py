import math

import numpy as np
import pytest

from toricstab.polytope import AffineFunction, interval, square, standard_simplex


def one(dim):
    return AffineFunction.constant_function(1.0, dim)


# (id, polytope factory, weight, extremal constant) -- closed-form oracles:
#   interval, f = 1      moments (1, 1/2, 1/3), boundary (2, 1)      -> s = 4
#   interval, f = 1 + x  moments (3/8, 1/8, ln2 - 5/8), bd (3/2, 1/2) -> s = 8
#   square, f = 1        s = 2 sigma(bd) / mu = 2 * 8 / 4             -> s = 4
#   simplex, f = 1       s = 2 * 3 / (1/2)                             -> s = 12
CASES = [
    ("interval", interval, one(1), 4.0),
    ("interval_weighted", interval, AffineFunction([1.0], 1.0), 8.0),
    ("square", square, one(2), 4.0),
    ("simplex", lambda: standard_simplex(2), one(2), 12.0),
]

# m * int dmu / f^(2m-1) for the solution identity
SOLUTION_IDENTITY = {"interval": 1.0, "interval_weighted": math.log(2.0), "square": 8.0,
                     "simplex": 1.0}


@pytest.fixture(params=CASES, ids=[c[0] for c in CASES])
def case(request):
    name, make, f, s = request.param
    return name, make(), f, s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_interior_points(p, n, rng, margin=0.02):
    """Uniform-ish interior points at least `margin` (in label value) inside."""
    V = p.vertices
    out = []
    while len(out) < n:
        lam = rng.dirichlet(np.ones(len(V)))
        x = lam @ V
        if np.min(p.label_values(x)) > margin:
            out.append(x)
    return np.array(out)
