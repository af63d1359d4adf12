"""Time-varying vector signals used for references, constraints and disturbances.

Three kinds are supported: constant, sinusoid and piecewise-linear
interpolation of a knot table.  Every signal reports an essential-supremum
bound on its time derivative; analytic bounds are used where the kind
admits one, and a central finite-difference estimate on a grid is the
fallback for user callables.
"""

import numpy as np

from .errors import ConfigInvalid

#: Default grid step for finite-difference derivative estimation.
FD_STEP = 1e-3


def _as_vector(value):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.ndim != 1:
        raise ConfigInvalid("signal values must be scalars or 1-d vectors, got shape %s"
                            % (v.shape,))
    return v


class Signal:
    """Base class: a map t -> R^dim with a derivative bound."""

    is_constant = False

    def __call__(self, t):
        raise NotImplementedError

    def derivative_bound(self, t0=0.0, t1=1.0, step=FD_STEP):
        """Essential supremum of ||d/dt signal|| over [t0, t1].

        The base implementation samples central finite differences on a
        grid with the given step.  Subclasses with analytic bounds
        override this; the override must dominate any sampled slope.
        """
        if t1 <= t0:
            return 0.0
        n = max(2, int(np.ceil((t1 - t0) / step)))
        ts = np.linspace(t0, t1, n + 1)
        h = step
        best = 0.0
        for t in ts:
            slope = (self(t + h) - self(t - h)) / (2.0 * h)
            best = max(best, float(np.linalg.norm(slope)))
        return best


class ConstantSignal(Signal):
    """Signal frozen at a single vector value."""

    is_constant = True

    def __init__(self, value):
        self.value = _as_vector(value)
        self.dim = self.value.size

    def __call__(self, t):
        return self.value

    def derivative_bound(self, t0=0.0, t1=1.0, step=FD_STEP):
        return 0.0


class SinusoidSignal(Signal):
    """offset + amplitude * sin(2*pi*frequency*t + phase), per component."""

    def __init__(self, amplitude, frequency, phase=0.0, offset=0.0):
        self.amplitude = _as_vector(amplitude)
        self.dim = self.amplitude.size
        self.frequency = np.broadcast_to(np.atleast_1d(np.asarray(frequency, dtype=float)),
                                         (self.dim,)).copy()
        self.phase = np.broadcast_to(np.atleast_1d(np.asarray(phase, dtype=float)),
                                     (self.dim,)).copy()
        off = np.atleast_1d(np.asarray(offset, dtype=float))
        self.offset = np.broadcast_to(off, (self.dim,)).copy()

    def __call__(self, t):
        return self.offset + self.amplitude * np.sin(
            2.0 * np.pi * self.frequency * t + self.phase)

    def derivative_bound(self, t0=0.0, t1=1.0, step=FD_STEP):
        # Componentwise peak slopes; their 2-norm dominates the true sup.
        return float(np.linalg.norm(2.0 * np.pi * self.frequency * self.amplitude))


class PiecewiseLinearSignal(Signal):
    """Linear interpolation through (times[k], values[k]); constant outside."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[0] != self.times.size:
            raise ConfigInvalid("piecewise-linear table needs one row per knot time: "
                                "%d times, %d rows" % (self.times.size, self.values.shape[0]))
        if self.times.size < 1:
            raise ConfigInvalid("piecewise-linear table needs at least one knot")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigInvalid("piecewise-linear knot times must be strictly increasing")
        self.dim = self.values.shape[1]

    def __call__(self, t):
        out = np.empty(self.dim)
        for i in range(self.dim):
            out[i] = np.interp(t, self.times, self.values[:, i])
        return out

    def derivative_bound(self, t0=0.0, t1=1.0, step=FD_STEP):
        if self.times.size < 2:
            return 0.0
        dt = np.diff(self.times)[:, None]
        slopes = np.diff(self.values, axis=0) / dt
        return float(np.max(np.linalg.norm(slopes, axis=1)))


class CallableSignal(Signal):
    """Wrap a user callable t -> vector; derivative bound by finite differences."""

    def __init__(self, fn, dim, is_constant=False):
        self.fn = fn
        self.dim = dim
        self.is_constant = is_constant

    def __call__(self, t):
        return _as_vector(self.fn(t))


def as_signal(value, dim=None):
    """Coerce a raw array, Signal, or callable into a Signal of dimension dim."""
    if isinstance(value, Signal):
        sig = value
    elif callable(value):
        probe = _as_vector(value(0.0))
        sig = CallableSignal(value, probe.size)
    else:
        sig = ConstantSignal(value)
    if dim is not None and sig.dim != dim:
        raise ConfigInvalid("signal has dimension %d, expected %d" % (sig.dim, dim))
    return sig


def signal_from_config(spec, dim=None):
    """Build a Signal from a config mapping.

    Recognized forms::

        {"type": "constant", "value": [...]}
        {"type": "sinusoid", "amplitude": [...], "frequency": f,
         "phase": p, "offset": [...]}
        {"type": "piecewise-linear", "times": [...], "values": [[...], ...]}

    A bare number or list is shorthand for a constant signal.
    """
    if isinstance(spec, (int, float, list)):
        return as_signal(spec, dim)
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigInvalid("signal spec must be a number, list, or mapping with a "
                            "'type' key, got %r" % (spec,))
    kind = spec["type"]
    try:
        if kind == "constant":
            sig = ConstantSignal(spec["value"])
        elif kind == "sinusoid":
            sig = SinusoidSignal(spec["amplitude"], spec["frequency"],
                                 spec.get("phase", 0.0), spec.get("offset", 0.0))
        elif kind == "piecewise-linear":
            sig = PiecewiseLinearSignal(spec["times"], spec["values"])
        else:
            raise ConfigInvalid("unknown signal type %r (expected constant | sinusoid "
                                "| piecewise-linear)" % kind)
    except KeyError as exc:
        raise ConfigInvalid("signal spec %r is missing key %s" % (spec, exc)) from exc
    if dim is not None and sig.dim != dim:
        raise ConfigInvalid("signal has dimension %d, expected %d" % (sig.dim, dim))
    return sig


def seeded_piecewise_noise(dim, seed, amplitude, knot_spacing, t_end):
    """Deterministic bounded noise: piecewise-linear through seeded uniform knots.

    Knot values are drawn once from Uniform(-amplitude, amplitude) with
    numpy's default bit generator, so a fixed seed reproduces the same
    signal byte for byte.
    """
    rng = np.random.default_rng(seed)
    n_knots = int(np.floor(t_end / knot_spacing)) + 2
    times = np.arange(n_knots) * knot_spacing
    values = rng.uniform(-amplitude, amplitude, size=(n_knots, dim))
    return PiecewiseLinearSignal(times, values)
