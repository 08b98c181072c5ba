"""Multivariate polynomials with closed-form derivative tensors up to order 4."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def monomial_exponents(dim: int, max_degree: int, min_degree: int = 0) -> list:
    """All exponent tuples with min_degree <= |alpha| <= max_degree, graded-lex."""
    out = []
    for deg in range(min_degree, max_degree + 1):
        for alpha in itertools.product(range(deg + 1), repeat=dim):
            if sum(alpha) == deg:
                out.append(alpha)
    out.sort(key=lambda a: (sum(a), tuple(-k for k in a)))
    return out


@lru_cache(maxsize=None)
def _index_tuples(dim: int, order: int):
    return list(itertools.product(range(dim), repeat=order))


class Polynomial:
    """sum_alpha c_alpha x^alpha, stored as a dict {exponent tuple: coeff}."""

    def __init__(self, terms: dict, dim: int):
        self.dim = int(dim)
        clean = {}
        for alpha, c in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim or min(alpha, default=0) < 0:
                raise ValueError(f"bad exponent {alpha} for dimension {dim}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + c
        self.terms = {a: c for a, c in sorted(clean.items()) if c != 0.0}

    @classmethod
    def zero(cls, dim):
        return cls({}, dim)

    @classmethod
    def monomial(cls, alpha, coeff=1.0):
        return cls({tuple(alpha): coeff}, len(alpha))

    @classmethod
    def from_affine(cls, phi):
        dim = phi.dim
        terms = {(0,) * dim: phi.constant}
        for k in range(dim):
            e = [0] * dim
            e[k] = 1
            terms[tuple(e)] = phi.gradient[k]
        return cls(terms, dim)

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial({(0,) * self.dim: float(other)}, self.dim)
        terms = dict(self.terms)
        for a, c in other.terms.items():
            terms[a] = terms.get(a, 0.0) + c
        return Polynomial(terms, self.dim)

    __radd__ = __add__

    def __mul__(self, scalar):
        return Polynomial({a: scalar * c for a, c in self.terms.items()}, self.dim)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.dim == other.dim and self.terms == other.terms

    def __hash__(self):
        return hash((self.dim, tuple(self.terms.items())))

    def __repr__(self):
        return f"Polynomial({self.terms}, dim={self.dim})"

    def split_affine(self):
        """(nonlinear part, constant, gradient) with the degree <= 1 terms removed."""
        const = self.terms.get((0,) * self.dim, 0.0)
        grad = np.zeros(self.dim)
        rest = {}
        for a, c in self.terms.items():
            s = sum(a)
            if s == 1:
                grad[a.index(1)] = c
            elif s > 1:
                rest[a] = c
        return Polynomial(rest, self.dim), const, grad

    # -- evaluation ---------------------------------------------------------

    def _powers(self, x, max_exp):
        # pw[k][e] = x_k ** e
        return [[np.ones(x.shape[:-1])] + [x[..., k] ** e for e in range(1, max_exp + 1)]
                for k in range(self.dim)]

    def _eval_terms(self, terms, pw, shape):
        out = np.zeros(shape)
        for alpha, c in terms:
            v = c
            for k, e in enumerate(alpha):
                if e:
                    v = v * pw[k][e]
            out = out + v
        return out

    def _derivative_terms(self, beta):
        res = []
        for alpha, c in self.terms.items():
            coef = c
            new = []
            for a, b in zip(alpha, beta):
                if b > a:
                    coef = 0.0
                    break
                for t in range(b):
                    coef *= (a - t)
                new.append(a - b)
            if coef != 0.0:
                res.append((tuple(new), coef))
        return res

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pw = self._powers(x, self.degree)
        return self._eval_terms(self.terms.items(), pw, x.shape[:-1])

    def derivative(self, beta) -> "Polynomial":
        return Polynomial(dict(self._derivative_terms(tuple(beta))), self.dim)

    def jet(self, x, order: int = 2) -> list:
        """[value, gradient, hessian, 3-tensor, 4-tensor] truncated at `order`.

        The k-th entry has shape x.shape[:-1] + (dim,) * k.
        """
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        m = self.dim
        pw = self._powers(x, self.degree)
        out = []
        for k in range(order + 1):
            arr = np.zeros(lead + (m,) * k)
            done = {}
            for idx in _index_tuples(m, k):
                beta = tuple(idx.count(j) for j in range(m))
                if beta not in done:
                    done[beta] = self._eval_terms(self._derivative_terms(beta), pw, lead)
                arr[(Ellipsis,) + idx] = done[beta]
            out.append(arr)
        return out

    def gradient(self, x):
        return self.jet(x, 1)[1]

    def hessian(self, x):
        return self.jet(x, 2)[2]

    def to_json(self) -> list:
        return [{"exponents": list(a), "coeff": c} for a, c in self.terms.items()]
