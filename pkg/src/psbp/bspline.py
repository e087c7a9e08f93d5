"""B-spline bases for the continuous predictors.

Bases follow the Cox-de Boor recursion indexed by *order* ``k`` (``k = 4`` is
cubic).  End knots are replicated ``k`` times, so the basis is a partition of
unity over the whole closed span ``[t_min, t_max]``.  Points outside the span
evaluate to the all-zero vector.
"""

from dataclasses import dataclass, field

import numpy as np

# knot lists for the four continuous predictors
DEV_START_KNOTS = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0)
DUR_KNOTS = (1.0, 2.0, 4.0, 6.0, 8.0, 10.0)
LOG_WGT_KNOTS = (2.0, 4.0, 6.0, 8.0)
LOG_PCS_KNOTS = (1.0, 3.0, 5.0)


@dataclass(frozen=True)
class KnotSpec:
    interior: tuple
    order: int = 4
    extension: int = field(default=None)

    def __post_init__(self):
        knots = tuple(sorted(set(float(t) for t in self.interior)))
        if len(knots) < 2:
            raise ValueError("need at least two distinct knots")
        if int(self.order) < 1:
            raise ValueError("order must be >= 1")
        object.__setattr__(self, "interior", knots)
        object.__setattr__(self, "order", int(self.order))
        if self.extension is None:
            object.__setattr__(self, "extension", self.order)
        if self.extension < 1:
            raise ValueError("extension must be >= 1")

    @property
    def knots(self):
        """Extended knot vector (end knots replicated ``extension`` times)."""
        t = self.interior
        e = self.extension - 1
        return np.array((t[0],) * e + t + (t[-1],) * e)

    @property
    def n_basis(self):
        return len(self.knots) - self.order

    @property
    def span(self):
        return self.interior[0], self.interior[-1]

    def to_dict(self):
        return {"interior": list(self.interior), "order": self.order,
                "extension": self.extension}


DEFAULT_KNOTS = {
    "dev_start": KnotSpec(DEV_START_KNOTS),
    "dur": KnotSpec(DUR_KNOTS),
    "log_wgt": KnotSpec(LOG_WGT_KNOTS),
    "log_pcs": KnotSpec(LOG_PCS_KNOTS),
}


def basis_matrix(x, spec):
    """Evaluate every basis function at each point of ``x``.

    Returns an array of shape ``(len(x), spec.n_basis)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = spec.knots
    k = spec.order
    lo, hi = t[0], t[-1]
    # order-1 indicators on [t_i, t_{i+1}); the right end point is assigned to
    # the last non-degenerate interval
    B = ((t[:-1][None, :] <= x[:, None]) & (x[:, None] < t[1:][None, :]))
    B = B.astype(float)
    at_end = x == hi
    if np.any(at_end):
        last = np.nonzero(t[:-1] < t[1:])[0][-1]
        B[at_end, :] = 0.0
        B[at_end, last] = 1.0
    for j in range(2, k + 1):
        m = len(t) - j
        nxt = np.zeros((len(x), m))
        for i in range(m):
            d1 = t[i + j - 1] - t[i]
            d2 = t[i + j] - t[i + 1]
            if d1 > 0:
                nxt[:, i] += (x - t[i]) / d1 * B[:, i]
            if d2 > 0:
                nxt[:, i] += (t[i + j] - x) / d2 * B[:, i + 1]
        B = nxt
    B[(x < lo) | (x > hi) | ~np.isfinite(x), :] = 0.0
    return B


def basis_eval(x, spec):
    """Basis vector at a single point."""
    return basis_matrix([x], spec)[0]


def out_of_span(x, spec):
    x = np.asarray(x, dtype=float)
    lo, hi = spec.span
    return (x < lo) | (x > hi)
