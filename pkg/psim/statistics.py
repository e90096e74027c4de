"""Statistics functions, their inverses and the associated entropy functions.

Each carrier density is ``N * F(eta)`` for a statistics function ``F`` of the
chemical potential ``eta``. The entropy function ``phi`` is the antiderivative
of ``F^{-1}`` anchored so that its minimum is zero; it is evaluated through its
Legendre form ``phi(x) = x F^{-1}(x) - G(F^{-1}(x)) + G(0)`` where ``G`` is the
antiderivative of ``F``.

Fermi-Dirac integrals use the normalisation ``1/Gamma(j+1)`` so that
``F_j' = F_{j-1}``.
"""

import logging
from abc import ABC, abstractmethod
from enum import Enum
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from .exceptions import DomainError

logger = logging.getLogger(__name__)

FloatOrArray = Union[float, NDArray[np.float64]]

SERIES_SWITCH = -2.0
ASYMPTOTIC_SWITCH = 30.0
_SERIES_TERMS = 30
_SOMMERFELD_TERMS = 6
_GAUSS_ORDER = 32
_PANELS = 8
_TAIL = 50.0
_ENDPOINT_GUARD = 1e-300
_ETA_LIMIT = 745.0
_SUPPORTED_ORDERS = (-0.5, 0.5, 1.5)
_BRACKET_EXPANSIONS = 200
_NEWTON_ITERATIONS = 100
_BREGMAN_SERIES_SWITCH = 1e-3


class StatisticsKind(str, Enum):
    """Supported statistics functions."""

    BOLTZMANN = "boltzmann"
    FERMI_DIRAC_HALF = "fermi_dirac_half"
    FERMI_DIRAC_MINUS_ONE = "fermi_dirac_minus_one"

    @property
    def for_ions(self) -> bool:
        """True for the lattice-gas statistics admissible for vacancies only."""
        return self is StatisticsKind.FERMI_DIRAC_MINUS_ONE


def _as_array(value: ArrayLike) -> NDArray[np.float64]:
    return np.asarray(value, dtype=float)


def _like_input(result: NDArray[np.float64], template: ArrayLike) -> FloatOrArray:
    if np.ndim(template) == 0:
        return float(result)
    return result


def _scalar_or_array(result: NDArray[np.float64]) -> FloatOrArray:
    return float(result) if result.ndim == 0 else result


@lru_cache(maxsize=None)
def _gauss_legendre() -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    return np.polynomial.legendre.leggauss(_GAUSS_ORDER)


def _fd_series(eta: NDArray[np.float64], j: float) -> NDArray[np.float64]:
    k = np.arange(1, _SERIES_TERMS + 1)
    signs = np.where(k % 2 == 1, 1.0, -1.0)
    terms = signs * np.exp(np.outer(eta, k)) / k ** (j + 1.0)
    # smallest terms first
    return terms[:, ::-1].sum(axis=1)


def _fd_quadrature(eta: NDArray[np.float64], j: float) -> NDArray[np.float64]:
    # xi = t^2 removes the square-root singularity at the origin; the split at
    # the Fermi edge keeps every panel away from the integrand's poles.
    nodes, weights = _gauss_legendre()
    edge = np.sqrt(np.maximum(eta, 0.0))
    upper = np.sqrt(np.maximum(eta, 0.0) + _TAIL)
    fractions = np.linspace(0.0, 1.0, _PANELS + 1)
    total = np.zeros_like(eta)
    for start, stop in ((np.zeros_like(eta), edge), (edge, upper)):
        bounds = start[:, None] + (stop - start)[:, None] * fractions[None, :]
        half = 0.5 * (bounds[:, 1:] - bounds[:, :-1])
        centre = 0.5 * (bounds[:, 1:] + bounds[:, :-1])
        t = centre[..., None] + half[..., None] * nodes
        integrand = 2.0 * t ** (2.0 * j + 1.0) * special.expit(eta[:, None, None] - t * t)
        total += (half[..., None] * weights * integrand).sum(axis=(1, 2))
    return total / special.gamma(j + 1.0)


def _fd_sommerfeld(eta: NDArray[np.float64], j: float) -> NDArray[np.float64]:
    correction = np.ones_like(eta)
    for k in range(1, _SOMMERFELD_TERMS + 1):
        falling = np.prod([j + 1.0 - i for i in range(2 * k)])
        coefficient = 2.0 * (1.0 - 2.0 ** (1 - 2 * k)) * special.zeta(2 * k)
        correction += coefficient * falling * eta ** (-2.0 * k)
    return eta ** (j + 1.0) / special.gamma(j + 2.0) * correction


def fermi_dirac(eta: ArrayLike, j: float) -> FloatOrArray:
    """Normalised complete Fermi-Dirac integral of order ``j``.

    Args:
        eta: Chemical potential(s).
        j: One of -1/2, 1/2 or 3/2.

    Returns:
        ``1/Gamma(j+1) * int_0^inf xi^j / (exp(xi - eta) + 1) dxi`` with the shape
        of ``eta``.
    """
    if j not in _SUPPORTED_ORDERS:
        raise ValueError(f"Fermi-Dirac order {j} not supported, use one of {_SUPPORTED_ORDERS}")
    values = np.atleast_1d(_as_array(eta)).ravel()
    out = np.empty_like(values)
    low = values <= SERIES_SWITCH
    high = values >= ASYMPTOTIC_SWITCH
    middle = ~(low | high)
    if low.any():
        out[low] = _fd_series(values[low], j)
    if middle.any():
        out[middle] = _fd_quadrature(values[middle], j)
    if high.any():
        out[high] = _fd_sommerfeld(values[high], j)
    return _like_input(out.reshape(np.shape(eta)), eta)


def eval_fd_half(eta: ArrayLike) -> FloatOrArray:
    """Fermi-Dirac integral of order 1/2, ``(2/sqrt(pi)) int sqrt(xi)/(exp(xi-eta)+1)``."""
    return fermi_dirac(eta, 0.5)


def _bregman_log(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    """``x log(x/y) - x + y`` without cancellation near ``x = y``."""
    u = (x - y) / y
    small = np.abs(u) < _BREGMAN_SERIES_SWITCH
    out = np.empty_like(u)
    us = u[small]
    out[small] = us * us * (
        0.5 - us * (1.0 / 6.0 - us * (1.0 / 12.0 - us * (1.0 / 20.0 - us * (1.0 / 30.0))))
    )
    ul = u[~small]
    out[~small] = special.xlog1py(x[~small] / y[~small], ul) - ul
    return y * out


class Statistics(ABC):
    """A statistics function bundle.

    Subclasses provide the function, its derivative, antiderivative and
    inverse; the entropy machinery follows from those.
    """

    kind: StatisticsKind

    @abstractmethod
    def _eval(self, eta: NDArray[np.float64]) -> NDArray[np.float64]: ...

    @abstractmethod
    def _deriv(self, eta: NDArray[np.float64]) -> NDArray[np.float64]: ...

    @abstractmethod
    def _antiderivative(self, eta: NDArray[np.float64]) -> NDArray[np.float64]: ...

    @abstractmethod
    def _inverse(self, x: NDArray[np.float64]) -> NDArray[np.float64]: ...

    def _log_eval(self, eta: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.log(self._eval(eta))

    def _check_domain(self, x: NDArray[np.float64]) -> None:
        if not np.all(np.isfinite(x)) or np.any(x < _ENDPOINT_GUARD):
            raise DomainError(f"{self.kind.value}: density outside the image (0, inf)")

    def eval(self, eta: ArrayLike) -> FloatOrArray:
        """Density ``F(eta)``."""
        return _like_input(self._eval(_as_array(eta)), eta)

    def deriv(self, eta: ArrayLike) -> FloatOrArray:
        """Derivative ``F'(eta)``."""
        return _like_input(self._deriv(_as_array(eta)), eta)

    def log_eval(self, eta: ArrayLike) -> FloatOrArray:
        """``log F(eta)``, exact where ``F`` underflows relative to one."""
        return _like_input(self._log_eval(_as_array(eta)), eta)

    def antiderivative(self, eta: ArrayLike) -> FloatOrArray:
        """Antiderivative ``G`` of ``F`` with ``G(-inf) = 0``."""
        return _like_input(self._antiderivative(_as_array(eta)), eta)

    def inverse(self, x: ArrayLike) -> FloatOrArray:
        """Chemical potential ``eta`` with ``F(eta) = x``.

        Raises:
            DomainError: If ``x`` lies outside the image of ``F``.
        """
        values = _as_array(x)
        self._check_domain(values)
        return _like_input(self._inverse(values), x)

    def phi(self, x: ArrayLike) -> FloatOrArray:
        """Entropy function, non-negative with its unique zero at ``F(0)``."""
        values = _as_array(x)
        self._check_domain(values)
        eta = self._inverse(values)
        anchor = float(self._antiderivative(np.zeros(1))[0])
        return _like_input(values * eta - self._antiderivative(eta) + anchor, x)

    def phi_prime(self, x: ArrayLike) -> FloatOrArray:
        """Derivative of the entropy function, equal to ``F^{-1}``."""
        return self.inverse(x)

    def relative_entropy(self, x: ArrayLike, y: ArrayLike) -> FloatOrArray:
        """Bregman distance ``phi(x) - phi(y) - phi'(y)(x - y)``."""
        xs, ys = np.broadcast_arrays(_as_array(x), _as_array(y))
        h = _as_array(self.phi(xs)) - _as_array(self.phi(ys)) - _as_array(
            self.phi_prime(ys)
        ) * (xs - ys)
        # round-off
        return _scalar_or_array(np.maximum(h, 0.0))

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}()"


class Boltzmann(Statistics):
    """``F = exp``."""

    kind = StatisticsKind.BOLTZMANN

    def _eval(self, eta):
        return np.exp(eta)

    def _deriv(self, eta):
        return np.exp(eta)

    def _log_eval(self, eta):
        return np.array(eta, dtype=float, copy=True)

    def _antiderivative(self, eta):
        return np.exp(eta)

    def _inverse(self, x):
        return np.log(x)

    def phi(self, x: ArrayLike) -> FloatOrArray:
        """``x log x - x + 1``."""
        values = _as_array(x)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("boltzmann: entropy defined for x >= 0 only")
        return _like_input(special.xlogy(values, values) - values + 1.0, x)

    def relative_entropy(self, x: ArrayLike, y: ArrayLike) -> FloatOrArray:
        """``x log(x/y) - x + y``."""
        xs, ys = np.broadcast_arrays(_as_array(x), _as_array(y))
        if np.any(xs < 0) or not np.all(np.isfinite(xs)):
            raise DomainError("boltzmann: entropy defined for x >= 0 only")
        self._check_domain(ys)
        out = _bregman_log(np.atleast_1d(xs).astype(float), np.atleast_1d(ys).astype(float))
        return _scalar_or_array(np.maximum(out.reshape(xs.shape), 0.0))


class FermiDiracMinusOne(Statistics):
    """``F = 1/(exp(-eta) + 1)``, the lattice-gas statistics with image (0, 1)."""

    kind = StatisticsKind.FERMI_DIRAC_MINUS_ONE

    def _eval(self, eta):
        return special.expit(np.clip(eta, -_ETA_LIMIT, _ETA_LIMIT))

    def _deriv(self, eta):
        clipped = np.clip(eta, -_ETA_LIMIT, _ETA_LIMIT)
        return special.expit(clipped) * special.expit(-clipped)

    def _log_eval(self, eta):
        return -np.logaddexp(0.0, -np.clip(eta, -_ETA_LIMIT, _ETA_LIMIT))

    def _antiderivative(self, eta):
        return np.logaddexp(0.0, eta)

    def _check_domain(self, x):
        super()._check_domain(x)
        if np.any(1.0 - x < _ENDPOINT_GUARD):
            raise DomainError("fermi_dirac_minus_one: density outside the image (0, 1)")

    def _inverse(self, x):
        return special.logit(x)

    def phi(self, x: ArrayLike) -> FloatOrArray:
        """``x log x + (1 - x) log(1 - x) + log 2``."""
        values = _as_array(x)
        if np.any(values < 0) or np.any(values > 1) or not np.all(np.isfinite(values)):
            raise DomainError("fermi_dirac_minus_one: entropy defined on [0, 1] only")
        return _like_input(
            special.xlogy(values, values) + special.xlogy(1.0 - values, 1.0 - values) + np.log(2.0),
            x,
        )

    def relative_entropy(self, x: ArrayLike, y: ArrayLike) -> FloatOrArray:
        """``x log(x/y) + (1-x) log((1-x)/(1-y))``."""
        xs, ys = np.broadcast_arrays(_as_array(x), _as_array(y))
        if np.any(xs < 0) or np.any(xs > 1) or not np.all(np.isfinite(xs)):
            raise DomainError("fermi_dirac_minus_one: entropy defined on [0, 1] only")
        self._check_domain(ys)
        xf = np.atleast_1d(xs).astype(float)
        yf = np.atleast_1d(ys).astype(float)
        out = _bregman_log(xf, yf) + _bregman_log(1.0 - xf, 1.0 - yf)
        return _scalar_or_array(np.maximum(out.reshape(xs.shape), 0.0))


class FermiDiracHalf(Statistics):
    """Fermi-Dirac integral of order 1/2 for degenerate electrons and holes."""

    kind = StatisticsKind.FERMI_DIRAC_HALF

    def _eval(self, eta):
        return _as_array(fermi_dirac(np.clip(eta, -_ETA_LIMIT, None), 0.5))

    def _deriv(self, eta):
        return _as_array(fermi_dirac(np.clip(eta, -_ETA_LIMIT, None), -0.5))

    def _antiderivative(self, eta):
        return _as_array(fermi_dirac(np.clip(eta, -_ETA_LIMIT, None), 1.5))

    def _inverse(self, x):
        """Safeguarded Newton iteration on a bracket grown from ``log x``."""
        target = np.atleast_1d(x).astype(float)
        # F <= exp, so log x bounds the root from below
        lo = np.log(target)
        width = np.ones_like(target)
        hi = lo + width
        for _ in range(_BRACKET_EXPANSIONS):
            short = self._eval(hi) < target
            if not short.any():
                break
            lo = np.where(short, hi, lo)
            width = np.where(short, 2.0 * width, width)
            hi = np.where(short, hi + width, hi)
        eta = lo.copy()
        for _ in range(_NEWTON_ITERATIONS):
            gap = self._eval(eta) - target
            lo = np.where(gap < 0, eta, lo)
            hi = np.where(gap > 0, eta, hi)
            candidate = eta - gap / self._deriv(eta)
            inside = (candidate > lo) & (candidate < hi)
            candidate = np.where(inside | (gap == 0), candidate, 0.5 * (lo + hi))
            done = np.abs(candidate - eta) <= 4.0 * np.finfo(float).eps * (1.0 + np.abs(eta))
            eta = candidate
            if done.all():
                break
        return eta.reshape(np.shape(x))


_REGISTRY = {
    StatisticsKind.BOLTZMANN: Boltzmann,
    StatisticsKind.FERMI_DIRAC_HALF: FermiDiracHalf,
    StatisticsKind.FERMI_DIRAC_MINUS_ONE: FermiDiracMinusOne,
}


@lru_cache(maxsize=None)
def _cached_statistics(kind: StatisticsKind) -> Statistics:
    return _REGISTRY[kind]()


def make_statistics(kind: Union[StatisticsKind, str]) -> Statistics:
    """Return the shared statistics bundle for ``kind``.

    Plain names and enum members resolve to the same instance.
    """
    return _cached_statistics(StatisticsKind(kind))


def inverse(stat: Statistics, x: ArrayLike) -> FloatOrArray:
    """Inverse statistics function, see :meth:`Statistics.inverse`."""
    return stat.inverse(x)


def relative_entropy_h(stat: Statistics, x: ArrayLike, y: ArrayLike) -> FloatOrArray:
    """Relative entropy ``H(x, y)``; non-negative and zero iff ``x == y``.

    Raises:
        DomainError: If ``x`` or ``y`` lies outside the domain of the entropy.
    """
    return stat.relative_entropy(x, y)
