"""Power-type nonlinearities, their local Lipschitz certificate, and network surrogates.

``F_net`` is the continuous piecewise-linear interpolant of ``F`` on a
uniform knot set containing 0. It is a shallow ReLU network; its width is
the knot count. For polynomial ``F`` an exact evaluator with squared-ReLU
size accounting is provided instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NonlinearitySpec",
    "f_eval",
    "FCertificate",
    "verify_assumption_F",
    "PwlNetwork",
    "build_fnet",
    "fnet_eval",
    "RequExact",
    "SignPropertyError",
    "build_requ_exact",
    "export_fnet",
    "import_fnet",
    "SWEEP_POINTS",
]

SWEEP_POINTS = 10_000
NONLINEARITY_KINDS = ("signed_power", "abs_power", "polynomial", "zero")


@dataclass(frozen=True)
class NonlinearitySpec:
    """A nonlinearity with F(0) = 0 and power-type Lipschitz growth.

    kind
        ``signed_power``: ``sign*|z|^(p-1)*z``; ``abs_power``: ``sign*|z|^p``;
        ``polynomial``: ``sum coeffs[i] z^i`` with ``coeffs[0] == 0``;
        ``zero``: ``F = 0``.
    """

    kind: str = "signed_power"
    p: float = 2.0
    c_F: float = 2.0
    sign: float = 1.0
    coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.c_F < 0:
            raise ValueError("c_F must be nonnegative")
        if self.sign not in (1, -1, 1.0, -1.0):
            raise ValueError("sign must be +1 or -1")
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if self.kind == "polynomial":
            if not coeffs:
                raise ValueError("polynomial nonlinearity needs coefficients")
            if coeffs[0] != 0:
                raise ValueError("polynomial nonlinearity must have zero constant term (F(0) = 0)")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "polynomial" and not any(self.coeffs))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "zero":
            out = np.zeros_like(z)
        elif self.kind == "signed_power":
            out = self.sign * np.abs(z) ** (self.p - 1) * z
        elif self.kind == "abs_power":
            out = self.sign * np.abs(z) ** self.p
        else:
            out = _horner(self.coeffs, z)
        return float(out) if out.ndim == 0 else out

    def second_derivative(self, z):
        """Analytic ``F''`` where defined (used to size the knot spacing)."""
        z = np.asarray(z, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "signed_power":
            return self.sign * self.p * (self.p - 1) * np.abs(z) ** (self.p - 2) * np.sign(z)
        if self.kind == "abs_power":
            return self.sign * self.p * (self.p - 1) * np.abs(z) ** (self.p - 2)
        d2 = [i * (i - 1) * c for i, c in enumerate(self.coeffs)][2:]
        return _horner(tuple(d2) or (0.0,), z)


def _horner(coeffs, z):
    out = np.zeros_like(np.asarray(z, dtype=float))
    for c in reversed(coeffs):
        out = out * z + c
    return out


def f_eval(spec: NonlinearitySpec, z):
    return spec(z)


@dataclass(frozen=True)
class FCertificate:
    passed: bool
    max_ratio: float
    c_F: float
    M_prime: float
    witness: tuple[float, float] | None


def verify_assumption_F(spec: NonlinearitySpec, M_prime: float, samples: int = 2001) -> FCertificate:
    """Check ``|F(a)-F(b)| <= c_F max(|a|,|b|)^(p-1) |a-b|`` on a grid of ``[-M', M']^2``.

    ``samples`` points per axis; pairs with ``a == b`` are skipped.
    """
    if not M_prime > 0:
        raise ValueError("M' must be positive")
    if samples < 1000:
        raise ValueError("need at least 1000 samples per axis")
    z = np.linspace(-M_prime, M_prime, samples)
    fz = np.asarray(spec(z))
    best, witness = 0.0, None
    for i in range(samples):
        a, fa = z[i], fz[i]
        b, fb = z[i + 1:], fz[i + 1:]
        denom = np.maximum(abs(a), np.abs(b)) ** (spec.p - 1) * np.abs(a - b)
        num = np.abs(fa - fb)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(denom > 0, num / denom, np.where(num > 0, np.inf, 0.0))
        if ratio.size:
            j = int(np.argmax(ratio))
            if ratio[j] > best:
                best, witness = float(ratio[j]), (float(a), float(b[j]))
    passed = best <= spec.c_F * (1 + 1e-9)
    return FCertificate(bool(passed), best, spec.c_F, float(M_prime), None if passed else witness)


@dataclass(frozen=True, eq=False)
class PwlNetwork:
    """Continuous piecewise-linear interpolant, realized as a shallow ReLU net.

    Outside the knot range the boundary linear pieces are extended.
    """

    knots: np.ndarray
    values: np.ndarray
    depth: int = 2
    neurons: int = 0
    eps: float = math.nan
    sup_error: float = math.nan
    activation_kind: str = "relu"
    slopes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = np.array(self.knots, dtype=float)
        v = np.array(self.values, dtype=float)
        if k.ndim != 1 or k.size < 2 or k.shape != v.shape:
            raise ValueError("knots and values must be matching 1-D arrays with >= 2 entries")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        zero = np.flatnonzero(k == 0.0)
        if zero.size != 1 or v[zero[0]] != 0.0:
            raise ValueError("0 must be a knot with value 0")
        for a in (k, v):
            a.setflags(write=False)
        s = np.diff(v) / np.diff(k)
        s.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "slopes", s)
        if not self.neurons:
            object.__setattr__(self, "neurons", int(k.size))

    @property
    def zero_index(self) -> int:
        return int(np.flatnonzero(self.knots == 0.0)[0])

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        i = np.clip(np.searchsorted(self.knots, z, side="right") - 1, 0, self.knots.size - 2)
        out = self.values[i] + (z - self.knots[i]) * self.slopes[i]
        return float(out) if out.ndim == 0 else out

    def hinge_form(self):
        """ReLU expansion ``F_net(v) = sum_i a_i relu(sgn_i * v - shift_i)``.

        Returns ``(directions, shifts, weights)``: a ReLU of ``+v`` at knot 0 and
        at each positive interior knot, and of ``-v`` at knot 0 and at each
        negative interior knot.
        """
        k, s, z = self.knots, self.slopes, self.zero_index
        dirs, shifts, wts = [], [], []
        if z < s.size:
            dirs.append(1.0); shifts.append(0.0); wts.append(s[z])
        if z > 0:
            dirs.append(-1.0); shifts.append(0.0); wts.append(-s[z - 1])
        for i in range(1, k.size - 1):
            if i == z:
                continue
            jump = s[i] - s[i - 1]
            if i > z:
                dirs.append(1.0); shifts.append(k[i]); wts.append(jump)
            else:
                dirs.append(-1.0); shifts.append(-k[i]); wts.append(jump)
        return np.array(dirs), np.array(shifts), np.array(wts)

    def max_slope(self) -> float:
        return float(np.max(np.abs(self.slopes)))


def _sweep(M_prime: float) -> np.ndarray:
    return np.linspace(-M_prime, M_prime, SWEEP_POINTS)


def _sup_error(net: PwlNetwork, spec: NonlinearitySpec, M_prime: float) -> float:
    z = _sweep(M_prime)
    return float(np.max(np.abs(net(z) - spec(z))))


def _uniform_net(spec: NonlinearitySpec, M_prime: float, n_side: int, eps: float) -> PwlNetwork:
    h = M_prime / n_side
    knots = np.arange(-n_side, n_side + 1) * h
    knots[n_side] = 0.0
    knots[-1], knots[0] = M_prime, -M_prime
    values = np.asarray(spec(knots), dtype=float)
    values[n_side] = 0.0
    net = PwlNetwork(knots, values, eps=eps)
    return net


def build_fnet(spec: NonlinearitySpec, M_prime: float, eps: float, max_refinements: int = 10_000) -> PwlNetwork:
    """Uniform-knot interpolant of ``F`` on ``[-M', M']`` with sup-error at most ``eps``.

    The spacing starts from the interpolation bound ``h^2 max|F''| / 8 <= eps``
    and is refined until a dense sweep of ``SWEEP_POINTS`` points confirms it.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not M_prime > 0:
        raise ValueError("M' must be positive")
    curv = float(np.max(np.abs(spec.second_derivative(_sweep(M_prime)))))
    if curv == 0:
        n_side = 1
    else:
        h = math.sqrt(8.0 * eps / curv)
        n_side = max(1, math.ceil(M_prime / h - 1e-9))
    for _ in range(max_refinements):
        net = _uniform_net(spec, M_prime, n_side, eps)
        err = _sup_error(net, spec, M_prime)
        if err <= eps:
            return PwlNetwork(net.knots, net.values, depth=2, neurons=net.knots.size, eps=eps, sup_error=err)
        n_side += 1
    raise RuntimeError("knot refinement did not reach the requested accuracy")


def fnet_eval(net: PwlNetwork, z):
    return net(z)


def export_fnet(net: PwlNetwork, path) -> None:
    with open(path, "w") as fh:
        for k, v in zip(net.knots, net.values):
            fh.write("%.17g %.17g\n" % (k, v))


def import_fnet(path) -> PwlNetwork:
    data = np.loadtxt(path, ndmin=2)
    return PwlNetwork(data[:, 0], data[:, 1])


# ----------------------------------------------------------------------------
# exact polynomial mode


class SignPropertyError(ValueError):
    """The polynomial does not satisfy F(z) >= 0 for z >= 0 and F(z) <= 0 for z <= 0."""

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class RequExact:
    """Exact polynomial evaluator with the size of a squared-ReLU realization."""

    coeffs: tuple[float, ...]
    degree: int
    depth: int
    neurons: int
    sign_property: bool
    activation_kind: str = "requ"

    def __call__(self, z):
        out = _horner(self.coeffs, np.asarray(z, dtype=float))
        return float(out) if out.ndim == 0 else out


def _check_sign(coeffs, M: float = 10.0, n: int = 20_001):
    z = np.linspace(-M, M, n)
    fz = _horner(coeffs, z)
    bad = np.flatnonzero(((z > 0) & (fz < 0)) | ((z < 0) & (fz > 0)))
    return (bad.size == 0), (float(z[bad[0]]) if bad.size else None)


def build_requ_exact(spec: NonlinearitySpec, sign_range: float = 10.0) -> RequExact:
    """Exact evaluator for a polynomial ``F`` plus squared-ReLU size accounting.

    The sign property is sampled on ``[-sign_range, sign_range]``; a violation
    raises :class:`SignPropertyError` carrying a witness point. The size
    report uses one squared-ReLU layer per degree (repeated multiplication via
    ``xy = ((x+y)^2 - (x-y)^2)/4`` and ``z^2 = relu(z)^2 + relu(-z)^2``) with
    eight units per layer.
    """
    if spec.kind != "polynomial":
        raise ValueError("exact squared-ReLU mode needs a polynomial nonlinearity")
    coeffs = spec.coeffs
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
    degree = len(coeffs) - 1
    ok, witness = _check_sign(coeffs, sign_range)
    if not ok:
        raise SignPropertyError(
            f"sign property F(z) >= 0 for z >= 0, F(z) <= 0 for z <= 0 fails at z={witness:.6g}",
            witness,
        )
    return RequExact(coeffs, degree, max(degree, 1), 8 * max(degree, 1), True)
