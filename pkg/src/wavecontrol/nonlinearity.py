"""Nonlinearities g with derivative, Holder data, and growth-condition checks.

A `Nonlinearity` bundles vectorized callables g and g' with the constants
the solver's diagnostics rely on: the Holder exponent s of g' and its
Holder constant, an optional sup bound on g'' (s = 1 entries), and a
logarithmic growth bound |g'(s)| <= alpha + beta log^2(1+|s|).

Derivatives are supplied analytically by the catalog; user-supplied
entries must provide gprime and pass `validate` at registration.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "GrowthBound",
    "Nonlinearity",
    "hat_g",
    "validate",
    "catalog",
    "make",
    "zero",
    "linear",
    "sine",
    "loglimit",
    "cubic_sat",
    "sqrtcap",
]

# Unit-coefficient sup bounds, determined numerically on a dense grid
# (suprema attained near s = 1.084 and s = 0.414 respectively).
_LOGLIMIT_G2 = 1.543
_CUBIC_SAT_G2 = 1.458


@dataclass(frozen=True)
class GrowthBound:
    """Asserts |g'(s)| <= alpha + beta * log^2(1+|s|)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("growth constants must be nonnegative")

    def envelope(self, s: np.ndarray) -> np.ndarray:
        return self.alpha + self.beta * np.log1p(np.abs(s)) ** 2


@dataclass(frozen=True)
class Nonlinearity:
    name: str
    g: Callable[[np.ndarray], np.ndarray]
    gprime: Callable[[np.ndarray], np.ndarray]
    holder_exponent: float
    holder_constant: float
    gsecond_bound: float | None
    growth: GrowthBound

    def __post_init__(self):
        if not (0.0 < self.holder_exponent <= 1.0):
            raise ValueError("holder exponent must lie in (0, 1]")
        if self.holder_constant < 0:
            raise ValueError("holder constant must be nonnegative")


def hat_g(nl: Nonlinearity, s):
    """The Picard linearization coefficient (g(s) - g(0))/s, g'(0) at s = 0."""
    s = np.asarray(s, dtype=float)
    g0 = float(nl.g(np.zeros(1))[0])
    small = np.abs(s) < 1e-8
    safe = np.where(small, 1.0, s)
    out = np.where(small, nl.gprime(np.zeros_like(s)), (nl.g(safe) - g0) / safe)
    return float(out) if out.ndim == 0 else out


class ValidationError(ValueError):
    """A nonlinearity failed its registration invariants."""


def validate(nl: Nonlinearity, seed: int = 0, n_pairs: int = 10_000) -> None:
    """Run the registration invariant battery; raises ValidationError on failure.

    Checks: central-difference consistency of g against gprime, the Holder
    bound on g' over random pairs in [-50, 50], the growth envelope on
    log-spaced samples over [-1e6, 1e6], and the Taylor-remainder bound
    (quadratic for s = 1, Holder form for s < 1).
    """
    rng = np.random.default_rng(seed)
    h = 1e-5

    x = np.concatenate([np.linspace(-10, 10, 201), rng.uniform(-10, 10, 200)])
    diff = (nl.g(x + h) - nl.g(x - h)) / (2 * h)
    lip_est = (np.abs(nl.gprime(x + h) - nl.gprime(x)) +
               np.abs(nl.gprime(x) - nl.gprime(x - h))) / h
    allowed = 1e-5 * (1.0 + np.abs(nl.gprime(x))) + h * lip_est
    err = np.abs(diff - nl.gprime(x))
    if np.any(err > allowed):
        i = int(np.argmax(err - allowed))
        raise ValidationError(
            f"{nl.name}: central difference of g disagrees with gprime at "
            f"x={x[i]:.6g} (err={err[i]:.3e}, allowed={allowed[i]:.3e})")

    a = rng.uniform(-50, 50, n_pairs)
    b = rng.uniform(-50, 50, n_pairs)
    lhs = np.abs(nl.gprime(a) - nl.gprime(b))
    rhs = nl.holder_constant * np.abs(a - b) ** nl.holder_exponent
    if np.any(lhs > rhs * (1 + 1e-9) + 1e-12):
        i = int(np.argmax(lhs - rhs))
        raise ValidationError(
            f"{nl.name}: Holder bound violated at (a,b)=({a[i]:.6g},{b[i]:.6g}): "
            f"|g'(a)-g'(b)|={lhs[i]:.6g} > C|a-b|^s={rhs[i]:.6g}")

    mags = np.geomspace(1e-6, 1e6, n_pairs // 2)
    s = np.concatenate([-mags[::-1], [0.0], mags])
    gp = np.abs(nl.gprime(s))
    env = nl.growth.envelope(s)
    if np.any(gp > env * (1 + 1e-9) + 1e-12):
        i = int(np.argmax(gp - env))
        raise ValidationError(
            f"{nl.name}: growth bound violated at s={s[i]:.6g}: "
            f"|g'|={gp[i]:.6g} > {env[i]:.6g}")

    x = rng.uniform(-10, 10, n_pairs)
    step = rng.uniform(-2, 2, n_pairs)
    rem = np.abs(nl.g(x + step) - nl.g(x) - nl.gprime(x) * step)
    if nl.holder_exponent == 1.0 and nl.gsecond_bound is not None:
        bound = 0.5 * nl.gsecond_bound * step ** 2
    else:
        p = 1.0 + nl.holder_exponent
        bound = nl.holder_constant * np.abs(step) ** p / p
    if np.any(rem > bound * (1 + 1e-9) + 1e-12):
        i = int(np.argmax(rem - bound))
        raise ValidationError(
            f"{nl.name}: Taylor remainder bound violated at x={x[i]:.6g}, "
            f"h={step[i]:.6g}: {rem[i]:.6g} > {bound[i]:.6g}")


# -- catalog -------------------------------------------------------------------

def zero() -> Nonlinearity:
    return Nonlinearity(
        name="zero",
        g=np.zeros_like,
        gprime=np.zeros_like,
        holder_exponent=1.0,
        holder_constant=0.0,
        gsecond_bound=0.0,
        growth=GrowthBound(0.0, 0.0),
    )


def linear(c: float) -> Nonlinearity:
    return Nonlinearity(
        name=f"linear({c:g})",
        g=lambda s: c * s,
        gprime=lambda s: np.full_like(np.asarray(s, dtype=float), c),
        holder_exponent=1.0,
        holder_constant=0.0,
        gsecond_bound=0.0,
        growth=GrowthBound(abs(c), 0.0),
    )


def sine(a: float, b: float) -> Nonlinearity:
    """g(s) = a s + b sin s; bounded curvature |g''| <= |b|."""
    return Nonlinearity(
        name=f"sine({a:g},{b:g})",
        g=lambda s: a * s + b * np.sin(s),
        gprime=lambda s: a + b * np.cos(s),
        holder_exponent=1.0,
        holder_constant=abs(b),
        gsecond_bound=abs(b),
        growth=GrowthBound(abs(a) + abs(b), 0.0),
    )


def loglimit(alpha: float, beta: float) -> Nonlinearity:
    """g(s) = alpha + beta s log^2(1+|s|), the growth-critical catalog case.

    g' = beta (log^2(1+|s|) + 2|s| log(1+|s|)/(1+|s|)) satisfies the
    growth envelope 3 beta + (4/3) beta log^2(1+|s|) globally (AM-GM on
    the cross term).
    """

    def g(s):
        s = np.asarray(s, dtype=float)
        return alpha + beta * s * np.log1p(np.abs(s)) ** 2

    def gprime(s):
        s = np.asarray(s, dtype=float)
        t = np.abs(s)
        lg = np.log1p(t)
        return beta * (lg ** 2 + 2.0 * t * lg / (1.0 + t))

    return Nonlinearity(
        name=f"loglimit({alpha:g},{beta:g})",
        g=g,
        gprime=gprime,
        holder_exponent=1.0,
        holder_constant=abs(beta) * _LOGLIMIT_G2,
        gsecond_bound=abs(beta) * _LOGLIMIT_G2,
        growth=GrowthBound(3.0 * abs(beta), 4.0 * abs(beta) / 3.0),
    )


def cubic_sat() -> Nonlinearity:
    """g(s) = s^3/(1+s^2): cubic at the origin, saturating slope (sup g' = 9/8)."""
    return Nonlinearity(
        name="cubic_sat",
        g=lambda s: s ** 3 / (1.0 + s ** 2),
        gprime=lambda s: s ** 2 * (3.0 + s ** 2) / (1.0 + s ** 2) ** 2,
        holder_exponent=1.0,
        holder_constant=_CUBIC_SAT_G2,
        gsecond_bound=_CUBIC_SAT_G2,
        growth=GrowthBound(9.0 / 8.0, 0.0),
    )


def sqrtcap(c: float) -> Nonlinearity:
    """s = 1/2 entry: g'(s) = c sqrt(min(|s|, 1)), a square-root kink at 0.

    The derivative is 1/2-Holder with constant exactly c (capping preserves
    it), g'' is unbounded near 0, and g' is bounded by c so the growth
    condition holds trivially.
    """

    def g(s):
        s = np.asarray(s, dtype=float)
        t = np.abs(s)
        inner = (2.0 * c / 3.0) * np.minimum(t, 1.0) ** 1.5
        outer = c * np.maximum(t - 1.0, 0.0)
        return np.sign(s) * (inner + outer)

    def gprime(s):
        s = np.asarray(s, dtype=float)
        return c * np.sqrt(np.minimum(np.abs(s), 1.0))

    return Nonlinearity(
        name=f"sqrtcap({c:g})",
        g=g,
        gprime=gprime,
        holder_exponent=0.5,
        holder_constant=abs(c),
        gsecond_bound=None,
        growth=GrowthBound(abs(c), 0.0),
    )


_FACTORIES: dict[str, Callable[..., Nonlinearity]] = {
    "zero": zero,
    "linear": linear,
    "sine": sine,
    "loglimit": loglimit,
    "cubic_sat": cubic_sat,
    "sqrtcap": sqrtcap,
}


def catalog() -> list[Nonlinearity]:
    """Named test nonlinearities with representative parameters."""
    return [zero(), linear(1.0), sine(1.0, 0.5), loglimit(0.0, 0.1), cubic_sat(), sqrtcap(1.0)]


_SPEC_RE = re.compile(r"^\s*([a-z_][a-z0-9_]*)\s*(?:\(([^)]*)\))?\s*$")


def make(spec: str) -> Nonlinearity:
    """Build a catalog entry from config syntax like "sine(1,0.5)" or "zero"."""
    m = _SPEC_RE.match(spec)
    if m is None:
        raise ValueError(f"cannot parse nonlinearity spec {spec!r}")
    name, args = m.group(1), m.group(2)
    factory = _FACTORIES.get(name)
    if factory is None:
        raise ValueError(f"unknown nonlinearity {name!r}; known: {sorted(_FACTORIES)}")
    params: list[float] = []
    if args is not None and args.strip():
        try:
            params = [float(p) for p in args.split(",")]
        except ValueError as exc:
            raise ValueError(f"bad parameters in {spec!r}: {exc}") from None
    try:
        return factory(*params)
    except TypeError:
        raise ValueError(f"wrong number of parameters for {name!r} in {spec!r}") from None
