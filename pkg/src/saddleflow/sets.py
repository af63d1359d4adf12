"""Closed convex input sets with Euclidean projections.

Supported kinds: box, nonneg-orthant, ball, full-space.  Each set also
exposes a generalized Jacobian of its projection, which the saddle-point
solver uses for semismooth Newton steps; on projection-boundary kinks the
active branch (Jacobian entry 0) is chosen.
"""

import numpy as np

from .errors import DimensionMismatch, UnsupportedSet

KINDS = ("box", "nonneg-orthant", "ball", "full-space")


class InputSet:
    """A closed convex subset of R^dim admitting a closed-form projection.

    Construct via the classmethods `box`, `nonneg`, `ball`, `full` or
    `from_config`; the raw constructor validates the parameter block for
    the requested kind.
    """

    def __init__(self, kind, dim, lower=None, upper=None, center=None, radius=None):
        if kind not in KINDS:
            raise UnsupportedSet("unknown input-set kind %r, expected one of %s"
                                 % (kind, "|".join(KINDS)))
        if dim < 1:
            raise DimensionMismatch("input set needs dim >= 1, got %d" % dim)
        self.kind = kind
        self.dim = int(dim)
        self.lower = None
        self.upper = None
        self.center = None
        self.radius = None
        if kind == "box":
            self.lower = self._bound(lower, -np.inf)
            self.upper = self._bound(upper, np.inf)
            if np.any(self.lower > self.upper):
                raise DimensionMismatch("box has lower > upper in some coordinate")
        elif kind == "nonneg-orthant":
            self.lower = np.zeros(self.dim)
            self.upper = np.full(self.dim, np.inf)
        elif kind == "ball":
            self.center = np.zeros(self.dim) if center is None else \
                np.asarray(center, dtype=float).reshape(self.dim)
            if radius is None or radius <= 0:
                raise DimensionMismatch("ball needs a positive radius, got %r" % radius)
            self.radius = float(radius)

    def _bound(self, value, default):
        if value is None:
            return np.full(self.dim, default)
        v = np.asarray(value, dtype=float)
        if v.ndim == 0:
            return np.full(self.dim, float(v))
        if v.shape != (self.dim,):
            raise DimensionMismatch("bound has shape %s, expected (%d,)" % (v.shape, self.dim))
        return v.copy()

    @classmethod
    def box(cls, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        return cls("box", lower.size, lower=lower, upper=upper)

    @classmethod
    def nonneg(cls, dim):
        return cls("nonneg-orthant", dim)

    @classmethod
    def ball(cls, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls("ball", center.size, center=center, radius=radius)

    @classmethod
    def full(cls, dim):
        return cls("full-space", dim)

    @classmethod
    def from_config(cls, spec, dim):
        """Build from a config mapping like {"kind": "box", "lower": [...], ...}."""
        if not isinstance(spec, dict) or "kind" not in spec:
            raise UnsupportedSet("input-set spec must be a mapping with a 'kind' key, "
                                 "got %r" % (spec,))
        kind = spec["kind"]
        return cls(kind, dim, lower=spec.get("lower"), upper=spec.get("upper"),
                   center=spec.get("center"), radius=spec.get("radius"))

    def project(self, v):
        """Euclidean projection of v onto the set."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise DimensionMismatch("point has shape %s, expected (%d,)" % (v.shape, self.dim))
        if self.kind == "full-space":
            return v.copy()
        if self.kind in ("box", "nonneg-orthant"):
            return np.clip(v, self.lower, self.upper)
        # ball
        d = v - self.center
        dist = np.linalg.norm(d)
        if dist <= self.radius:
            return v.copy()
        return self.center + (self.radius / dist) * d

    def projection_jacobian(self, v):
        """A generalized Jacobian of the projection at v (dim x dim)."""
        v = np.asarray(v, dtype=float)
        if self.kind == "full-space":
            return np.eye(self.dim)
        if self.kind in ("box", "nonneg-orthant"):
            inactive = (v > self.lower) & (v < self.upper)
            return np.diag(inactive.astype(float))
        d = v - self.center
        dist = np.linalg.norm(d)
        if dist <= self.radius:
            return np.eye(self.dim)
        unit = d / dist
        return (self.radius / dist) * (np.eye(self.dim) - np.outer(unit, unit))

    def contains(self, v, tol=0.0):
        return self.distance(v) <= tol

    def distance(self, v):
        """Euclidean distance from v to the set."""
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - self.project(v)))

    def __repr__(self):
        return "InputSet(kind=%r, dim=%d)" % (self.kind, self.dim)


def project(input_set, v):
    """Euclidean projection of v onto an InputSet (functional form)."""
    if not isinstance(input_set, InputSet):
        raise UnsupportedSet("project expects an InputSet, got %r" % type(input_set))
    return input_set.project(v)
