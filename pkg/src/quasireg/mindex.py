"""Downward-closed multi-index sets: full grid, total degree, hyperbolic cross."""
from dataclasses import dataclass
from math import comb, prod

import numpy as np

DEFAULT_MAX_SIZE = 10_000_000

FULL = "full"
TOTAL = "total"
HYPERBOLIC = "hyperbolic"
KINDS = (FULL, TOTAL, HYPERBOLIC)


class CapacityError(OverflowError):
    pass


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Immutable multi-index set in lexicographic order.

    ``indices`` is an ``(n, dim)`` int64 array; row ``r`` is the multi-index
    whose coefficient sits at position ``r`` of every coefficient vector.
    """

    dim: int
    kind: str
    params: tuple
    indices: np.ndarray

    def __len__(self):
        return self.indices.shape[0]

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.indices)

    def __contains__(self, k):
        return tuple(k) in self.position

    @property
    def position(self):
        pos = self.__dict__.get("_position")
        if pos is None:
            pos = {k: r for r, k in enumerate(self)}
            object.__setattr__(self, "_position", pos)
        return pos

    @property
    def max_degrees(self):
        """Largest index used along each coordinate."""
        return self.indices.max(axis=0)

    def describe(self):
        return {"dim": self.dim, "kind": self.kind, "params": list(self.params),
                "size": len(self)}

    def __eq__(self, other):
        return (isinstance(other, MultiIndexSet) and self.dim == other.dim
                and self.kind == other.kind and self.params == other.params)

    def __hash__(self):
        return hash((self.dim, self.kind, self.params))


def _full(dim, orders):
    grids = np.meshgrid(*[np.arange(k + 1) for k in orders], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _bounded(dim, fits, rows, prefix, state):
    # depth-first in increasing value per coordinate gives lexicographic order
    l = len(prefix)
    if l == dim:
        rows.append(tuple(prefix))
        return
    k = 0
    while True:
        nxt = fits(state, k, dim - l - 1)
        if nxt is None:
            break
        prefix.append(k)
        _bounded(dim, fits, rows, prefix, nxt)
        prefix.pop()
        k += 1


def _total_fits(budget, k, _):
    return budget - k if k <= budget else None


def _hyper_fits(budget, k, _):
    # budget is the remaining allowance for prod(max(k_l, 1))
    f = max(k, 1)
    return budget // f if f <= budget else None


def build(dim, kind, deg=None, orders=None, max_size=DEFAULT_MAX_SIZE):
    """Build a multi-index set.

    ``kind`` is ``"full"`` (``orders`` = per-coordinate maxima K_l, or ``deg``
    for the isotropic grid), ``"total"`` (sum of entries <= ``deg``) or
    ``"hyperbolic"`` (product of max(k_l, 1) <= ``deg``, ``deg`` >= 1).
    """
    dim = int(dim)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if kind not in KINDS:
        raise ValueError(f"unknown index set kind {kind!r}")
    if kind == FULL:
        if orders is None:
            if deg is None:
                raise ValueError("full index set needs orders or deg")
            orders = (int(deg),) * dim
        orders = tuple(int(k) for k in orders)
        if len(orders) != dim or min(orders) < 0:
            raise ValueError("orders must be dim non-negative integers")
        size = prod(k + 1 for k in orders)
        if size > max_size:
            raise CapacityError(f"full set has {size} indices, limit {max_size}")
        return MultiIndexSet(dim, FULL, orders, _full(dim, orders))
    if orders is not None:
        raise ValueError(f"orders only apply to the full index set, not {kind}")
    if deg is None:
        raise ValueError(f"{kind} index set needs deg")
    deg = int(deg)
    if kind == TOTAL:
        if deg < 0:
            raise ValueError("total degree must be >= 0")
        size = cardinality_total(dim, deg)
        fits, start = _total_fits, deg
    else:
        if deg < 1:
            raise ValueError("hyperbolic cross needs deg >= 1")
        size = cardinality_hyperbolic(dim, deg)
        fits, start = _hyper_fits, deg
    if size > max_size:
        raise CapacityError(f"{kind} set has {size} indices, limit {max_size}")
    rows = []
    _bounded(dim, fits, rows, [], start)
    return MultiIndexSet(dim, kind, (deg,), np.asarray(rows, dtype=np.int64).reshape(-1, dim))


def cardinality_total(dim, deg):
    """``C(deg + dim, dim)``."""
    if dim < 1 or deg < 0:
        raise ValueError("need dim >= 1 and deg >= 0")
    return comb(deg + dim, dim)


def factorize(n):
    """Prime exponents of ``n`` by trial division, as a list."""
    out = []
    p = 2
    while p * p <= n:
        v = 0
        while n % p == 0:
            n //= p
            v += 1
        if v:
            out.append(v)
        p += 1 if p == 2 else 2
    if n > 1:
        out.append(1)
    return out


def _strictly_positive_count(dim, deg, ordered_factorizations):
    # indices with every entry >= 1 and product <= deg
    return 1 + sum(ordered_factorizations(g, dim) for g in range(2, deg + 1))


def cardinality_hyperbolic(dim, deg):
    """Size of the hyperbolic cross, counted through prime factorisations.

    Indices with no zero entry and product exactly g number
    ``prod_i C(v_i + dim - 1, dim - 1)`` for ``g = prod_i p_i ** v_i``; the
    ones with c zero entries reduce to the (dim - c)-dimensional count.
    """
    if dim < 1 or deg < 1:
        raise ValueError("need dim >= 1 and deg >= 1")
    exps = {g: factorize(g) for g in range(2, deg + 1)}

    def ordered(g, d):
        return prod(comb(v + d - 1, d - 1) for v in exps[g])

    positive = _strictly_positive_count(dim, deg, ordered)
    with_zero = 1 + sum(comb(dim, c) * _strictly_positive_count(dim - c, deg, ordered)
                        for c in range(1, dim))
    return positive + with_zero


def cardinality(dim, kind, deg=None, orders=None):
    if kind == FULL:
        orders = orders if orders is not None else (deg,) * dim
        return prod(int(k) + 1 for k in orders)
    if kind == TOTAL:
        return cardinality_total(dim, deg)
    if kind == HYPERBOLIC:
        return cardinality_hyperbolic(dim, deg)
    raise ValueError(f"unknown index set kind {kind!r}")


def is_downward_closed(indices):
    present = {tuple(int(v) for v in row) for row in np.asarray(indices)}
    for k in present:
        for l, kl in enumerate(k):
            if kl > 0 and k[:l] + (kl - 1,) + k[l + 1:] not in present:
                return False
    return True
