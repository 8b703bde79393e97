"""Parameterized quasi-polynomials and their exact derivatives.

The characteristic function of a retarded delay differential equation is a
finite sum of polynomial-times-exponential groups

    D(lambda) = sum_k P_k(lambda) * exp(-lambda * tau_k),

with real coefficients.  Each coefficient and delay slot holds either a
numeric constant or a scaled named parameter, so D, dD/dlambda and dD/dp
are available in closed form for any parameter p.  All operations here are
pure; a :class:`QuasiPolynomial` is immutable and safe to share.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import SingularJacobian, UnknownParameter

#: A full assignment of numeric values to named parameters.
ParameterPoint = Mapping[str, float]

#: Below this |dD/dlambda| a root's continuation direction is treated as
#: rank-deficient rather than evaluated (the ratio would be meaningless).
DEFAULT_EPS_JACOBIAN = 1e-8

_SCALAR_RE = re.compile(
    r"^\s*(?:(?P<scale>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*\*\s*"
    r"|(?P<sign>[+-])\s*)?(?P<name>[A-Za-z_]\w*)\s*$"
)


@dataclass(frozen=True)
class ScalarExpr:
    """One coefficient or delay slot: a constant, or ``scale * parameter``."""

    value: float = 0.0
    name: str | None = None
    scale: float = 1.0

    @classmethod
    def constant(cls, value: float) -> "ScalarExpr":
        return cls(value=float(value))

    @classmethod
    def parameter(cls, name: str, scale: float = 1.0) -> "ScalarExpr":
        if not re.match(r"^[A-Za-z_]\w*$", name):
            raise ValueError(f"invalid parameter name {name!r}")
        return cls(name=name, scale=float(scale))

    @property
    def is_parameter(self) -> bool:
        return self.name is not None

    def resolve(self, point: ParameterPoint) -> float:
        if self.name is None:
            return self.value
        try:
            v = point[self.name]
        except KeyError:
            raise UnknownParameter(self.name) from None
        return self.scale * float(v)

    def d_dparam(self, param: str) -> float:
        """Derivative of this slot's value with respect to ``param``."""
        return self.scale if self.name == param else 0.0

    def __str__(self) -> str:
        if self.name is None:
            return repr(self.value)
        if self.scale == 1.0:
            return self.name
        if self.scale == -1.0:
            return f"-{self.name}"
        return f"{self.scale!r}*{self.name}"


def as_scalar(x: Union[ScalarExpr, float, int, str]) -> ScalarExpr:
    """Coerce a number, a ``"[scale*]name"`` string or a ScalarExpr."""
    if isinstance(x, ScalarExpr):
        return x
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return ScalarExpr.constant(x)
    if isinstance(x, str):
        m = _SCALAR_RE.match(x)
        if m is None:
            raise ValueError(f"cannot parse scalar expression {x!r}")
        scale = 1.0
        if m.group("scale") is not None:
            scale = float(m.group("scale"))
        elif m.group("sign") == "-":
            scale = -1.0
        return ScalarExpr.parameter(m.group("name"), scale)
    raise TypeError(f"cannot coerce {type(x).__name__} to a scalar expression")


@dataclass(frozen=True)
class Term:
    """One exponential group ``P(lambda) * exp(-lambda * delay)``.

    ``coeffs[j]`` multiplies ``lambda**j``; the leading coefficient must not
    be identically zero and the delay must resolve to a nonnegative value.
    """

    coeffs: tuple[ScalarExpr, ...]
    delay: ScalarExpr

    def __post_init__(self):
        if len(self.coeffs) == 0:
            raise ValueError("a term needs at least one coefficient")
        lead = self.coeffs[-1]
        if not lead.is_parameter and lead.value == 0.0:
            raise ValueError("leading coefficient is identically zero")
        if not self.delay.is_parameter and self.delay.value < 0.0:
            raise ValueError(f"negative constant delay {self.delay.value}")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def has_zero_delay(self) -> bool:
        return not self.delay.is_parameter and self.delay.value == 0.0


@dataclass(frozen=True)
class QuasiPolynomial:
    """Sum of terms forming a retarded-type characteristic function.

    Exactly one term has delay identically zero and its degree strictly
    exceeds every delayed term's degree, which guarantees finitely many
    roots to the right of any vertical line in the complex plane.
    """

    terms: tuple[Term, ...]

    def __post_init__(self):
        undelayed = [t for t in self.terms if t.has_zero_delay]
        if len(undelayed) != 1:
            raise ValueError(
                f"expected exactly one zero-delay term, found {len(undelayed)}"
            )
        m = undelayed[0].degree
        for t in self.terms:
            if t is not undelayed[0] and t.degree >= m:
                raise ValueError(
                    "delayed term degree must be strictly below the "
                    f"undelayed degree {m} (retarded type)"
                )

    @classmethod
    def from_terms(
        cls, specs: Iterable[tuple[Sequence, Union[ScalarExpr, float, str]]]
    ) -> "QuasiPolynomial":
        """Build from ``[(coeff_list, delay), ...]`` with coercible entries."""
        terms = tuple(
            Term(tuple(as_scalar(c) for c in coeffs), as_scalar(delay))
            for coeffs, delay in specs
        )
        return cls(terms)

    @property
    def param_names(self) -> frozenset[str]:
        return _param_names(self)

    @property
    def order(self) -> int:
        """Degree of the undelayed term (the differential order)."""
        return max(t.degree for t in self.terms if t.has_zero_delay)

    def bind(self, point: ParameterPoint) -> "BoundPoint":
        """Resolve every slot at ``point`` for repeated evaluation."""
        return BoundPoint(self, point)

    # -- exact analytic operations -------------------------------------

    def evaluate(self, point: ParameterPoint, lam: complex) -> complex:
        """D(lambda) with every slot resolved at ``point``."""
        return self.bind(point).value(_check_lambda(lam))

    def d_dlambda(self, point: ParameterPoint, lam: complex) -> complex:
        """dD/dlambda at fixed parameters."""
        return self.bind(point).d_dlambda(_check_lambda(lam))

    def d_dparam(self, point: ParameterPoint, lam: complex, param: str) -> complex:
        """dD/dp for the named parameter, summed over every slot it occupies."""
        if param not in self.param_names:
            raise UnknownParameter(param)
        return self.bind(point).d_dparam(_check_lambda(lam), param)

    def continuation_rhs(
        self,
        point: ParameterPoint,
        lam: complex,
        param: str,
        eps_jacobian: float = DEFAULT_EPS_JACOBIAN,
    ) -> complex:
        """-(dD/dp)/(dD/dlambda), the root-tracking ODE right-hand side.

        Raises :class:`SingularJacobian` when ``|dD/dlambda| < eps_jacobian``,
        i.e. when the tracked root sits where the implicit-function slope
        is numerically rank-deficient.
        """
        if param not in self.param_names:
            raise UnknownParameter(param)
        bp = self.bind(point)
        lam = _check_lambda(lam)
        dlam = bp.d_dlambda(lam)
        if abs(dlam) < eps_jacobian:
            raise SingularJacobian(
                f"|dD/dlambda| = {abs(dlam):.3e} < {eps_jacobian:.3e}"
            )
        return -bp.d_dparam(lam, param) / dlam


@lru_cache(maxsize=256)
def _param_names(qp: QuasiPolynomial) -> frozenset[str]:
    names = set()
    for t in qp.terms:
        for c in t.coeffs:
            if c.is_parameter:
                names.add(c.name)
        if t.delay.is_parameter:
            names.add(t.delay.name)
    return frozenset(names)


def _check_lambda(lam) -> complex:
    lam = complex(lam)
    if not (np.isfinite(lam.real) and np.isfinite(lam.imag)):
        raise ValueError(f"non-finite lambda {lam!r}")
    return lam


def _horner_pair(coeffs: np.ndarray, z: np.ndarray):
    """Evaluate P and P' by Horner's rule with a running derivative.

    ``coeffs[..., j]`` multiplies z**j; shapes broadcast against ``z``.
    """
    m = coeffs.shape[-1]
    p = coeffs[..., m - 1] * np.ones_like(z)
    dp = np.zeros_like(z)
    for j in range(m - 2, -1, -1):
        dp = dp * z + p
        p = p * z + coeffs[..., j]
    return p, dp


@lru_cache(maxsize=1024)
def _param_masks(qp: QuasiPolynomial, param: str):
    """Per-slot sensitivities of delays and coefficients to ``param``."""
    k = len(qp.terms)
    m = max(t.degree for t in qp.terms) + 1
    dmask = np.zeros(k)
    cmask = np.zeros((k, m))
    for i, t in enumerate(qp.terms):
        dmask[i] = t.delay.d_dparam(param)
        for j, c in enumerate(t.coeffs):
            cmask[i, j] = c.d_dparam(param)
    return dmask, cmask


class BoundPoint:
    """A quasi-polynomial with every slot resolved at one parameter point.

    Vectorized over lambda: all evaluation methods accept scalars or arrays.
    """

    __slots__ = ("qp", "delays", "coeffs")

    def __init__(self, qp: QuasiPolynomial, point: ParameterPoint):
        for name, v in point.items():
            if not np.isfinite(v):
                raise ValueError(f"non-finite value for parameter {name!r}")
        k = len(qp.terms)
        m = max(t.degree for t in qp.terms) + 1
        delays = np.zeros(k)
        coeffs = np.zeros((k, m))
        for i, t in enumerate(qp.terms):
            tau = t.delay.resolve(point)
            if tau < 0.0:
                raise ValueError(
                    f"delay resolved to a negative value {tau} at this point"
                )
            delays[i] = tau
            for j, c in enumerate(t.coeffs):
                coeffs[i, j] = c.resolve(point)
        self.qp = qp
        self.delays = delays
        self.coeffs = coeffs

    def _parts(self, lam):
        z = np.asarray(lam, dtype=complex)[..., None]
        e = np.exp(-z * self.delays)
        p, dp = _horner_pair(self.coeffs, z)
        return z, e, p, dp

    def value(self, lam):
        z, e, p, _ = self._parts(lam)
        return (p * e).sum(axis=-1)

    def d_dlambda(self, lam):
        z, e, p, dp = self._parts(lam)
        return ((dp - self.delays * p) * e).sum(axis=-1)

    def value_and_dlambda(self, lam):
        z, e, p, dp = self._parts(lam)
        return (p * e).sum(axis=-1), ((dp - self.delays * p) * e).sum(axis=-1)

    def d_dparam(self, lam, param: str):
        dmask, cmask = _param_masks(self.qp, param)
        z, e, p, _ = self._parts(lam)
        pp, _ = _horner_pair(cmask, z)
        return ((pp - dmask * z * p) * e).sum(axis=-1)


class BoundFamily:
    """Rows of resolved problems sharing one varying parameter.

    Row ``r`` fixes every parameter except ``vary`` at ``points[r]``;
    evaluation supplies the varying value per row.  Delay and coefficient
    slots are affine in the varying parameter, so the resolved arrays are
    a base part plus ``p`` times a mask.
    """

    __slots__ = ("delays0", "coeffs0", "dmask", "cmask")

    def __init__(self, qp: QuasiPolynomial, points: Sequence[ParameterPoint],
                 vary: str):
        if vary not in qp.param_names:
            raise UnknownParameter(vary)
        dmask, cmask = _param_masks(qp, vary)
        b = len(points)
        k = len(qp.terms)
        m = max(t.degree for t in qp.terms) + 1
        delays0 = np.zeros((b, k))
        coeffs0 = np.zeros((b, k, m))
        for r, pt in enumerate(points):
            zeroed = dict(pt)
            zeroed[vary] = 0.0
            for i, t in enumerate(qp.terms):
                delays0[r, i] = t.delay.resolve(zeroed)
                for j, c in enumerate(t.coeffs):
                    coeffs0[r, i, j] = c.resolve(zeroed)
        self.delays0 = delays0
        self.coeffs0 = coeffs0
        self.dmask = dmask
        self.cmask = cmask

    @property
    def n_rows(self) -> int:
        return self.delays0.shape[0]

    def _base(self, nbatch: int, rows):
        """Row-resolved base arrays for a batch of ``nbatch`` entries.

        A one-row family broadcasts to any batch size; otherwise ``rows``
        selects which stored rows the batch entries correspond to (the
        integrator compacts finished rows away mid-run).
        """
        if self.delays0.shape[0] == 1:
            return self.delays0, self.coeffs0
        if rows is None:
            if nbatch != self.n_rows:
                raise ValueError("batch size does not match family rows")
            return self.delays0, self.coeffs0
        return self.delays0[rows], self.coeffs0[rows]

    def d_all(self, p: np.ndarray, lam: np.ndarray, rows=None):
        """(D, dD/dlambda, dD/dp) at per-row parameter values ``p``.

        ``lam`` has shape (B,) or (B, R); ``p`` has shape (B,).
        """
        lam = np.asarray(lam, dtype=complex)
        squeeze = lam.ndim == 1
        lam2 = lam.reshape(lam.shape[0], -1)
        delays0, coeffs0 = self._base(lam.shape[0], rows)
        pcol = np.asarray(p, dtype=float)[:, None]
        delays = delays0 + pcol * self.dmask
        coeffs = coeffs0 + pcol[:, :, None] * self.cmask

        z = lam2[:, :, None]
        e = np.exp(-z * delays[:, None, :])
        p_poly, dp_poly = _horner_pair(coeffs[:, None, :, :], z)
        pp_poly, _ = _horner_pair(self.cmask, z)

        d = (p_poly * e).sum(axis=-1)
        dlam = ((dp_poly - delays[:, None, :] * p_poly) * e).sum(axis=-1)
        dp = ((pp_poly - self.dmask * z * p_poly) * e).sum(axis=-1)
        if squeeze:
            return d[:, 0], dlam[:, 0], dp[:, 0]
        return d, dlam, dp

    def rhs_and_gap(self, p: np.ndarray, lam: np.ndarray, eps_jacobian: float,
                    rows=None):
        """Continuation RHS and the singularity margin |dD/dlambda| - eps."""
        _, dlam, dp = self.d_all(p, lam, rows)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            rhs = -dp / dlam
        return rhs, np.abs(dlam) - eps_jacobian

    def residuals(self, p: np.ndarray, lam: np.ndarray, rows=None) -> np.ndarray:
        """|D| at per-row parameter values."""
        d, _, _ = self.d_all(p, lam, rows)
        return np.abs(d)
