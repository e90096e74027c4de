"""Excess chemical potential two-point fluxes.

Every function is vectorised over faces. The flux of carrier ``alpha`` over a
face ``sigma = K|L`` is

    J = -z tau (B(-Q) n_L - B(Q) n_K),   Q = D(z phi - log n),

with ``D u = u_L - u_K``. On a boundary face ``n_L`` and ``phi_L`` are the
Dirichlet traces. Under Boltzmann statistics the scheme is the classical
Scharfetter-Gummel flux.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DegenerateFace

logger = logging.getLogger(__name__)

FloatOrArray = Union[float, NDArray[np.float64]]

_TAYLOR_SWITCH = 1e-4
_DERIVATIVE_SERIES_SWITCH = 1e-2
_OVERFLOW_SWITCH = 700.0
DEGENERATE_TOL = 1e-12
_DIVIDED_DIFFERENCE_SWITCH = 1e-5


def bernoulli(x: ArrayLike) -> FloatOrArray:
    """Bernoulli function ``B(x) = x / (exp(x) - 1)`` with ``B(0) = 1``."""
    values = np.asarray(x, dtype=float)
    flat = np.atleast_1d(values)
    out = np.empty_like(flat)
    small = np.abs(flat) < _TAYLOR_SWITCH
    large = flat > _OVERFLOW_SWITCH
    regular = ~(small | large)
    xs = flat[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0 - xs**4 / 720.0
    xl = flat[large]
    out[large] = xl * np.exp(-xl)
    xr = flat[regular]
    out[regular] = xr / np.expm1(xr)
    return float(out[0]) if values.ndim == 0 else out.reshape(values.shape)


def bernoulli_prime(x: ArrayLike) -> FloatOrArray:
    """Derivative ``B'(x) = (B(x) / x) (1 - x - B(x))``."""
    values = np.asarray(x, dtype=float)
    flat = np.atleast_1d(values)
    out = np.empty_like(flat)
    small = np.abs(flat) < _DERIVATIVE_SERIES_SWITCH
    large = flat > _OVERFLOW_SWITCH
    regular = ~(small | large)
    xs = flat[small]
    out[small] = -0.5 + xs / 6.0 - xs**3 / 180.0 + xs**5 / 5040.0
    xl = flat[large]
    out[large] = (1.0 - xl) * np.exp(-xl)
    xr = flat[regular]
    b = xr / np.expm1(xr)
    out[regular] = b / xr * (1.0 - xr - b)
    return float(out[0]) if values.ndim == 0 else out.reshape(values.shape)


@dataclass(frozen=True)
class FaceFluxInputs:
    """Face data of one carrier, vectorised over faces.

    Attributes:
        z: Charge number of the carrier.
        tau: Transmissibility times the face mobility factor.
        n_K, n_L: Densities of the two neighbours (``n_L`` is the Dirichlet
            trace on boundary faces).
        phi_K, phi_L: Quasi Fermi potentials of the two neighbours.
        log_n_K, log_n_L: Optional exact logarithms of the densities, used when
            the statistics can provide them without round-off.
    """

    z: int
    tau: NDArray[np.float64]
    n_K: NDArray[np.float64]
    n_L: NDArray[np.float64]
    phi_K: NDArray[np.float64]
    phi_L: NDArray[np.float64]
    log_n_K: Optional[NDArray[np.float64]] = None
    log_n_L: Optional[NDArray[np.float64]] = None

    @property
    def log_densities(self):
        log_K = np.log(self.n_K) if self.log_n_K is None else self.log_n_K
        log_L = np.log(self.n_L) if self.log_n_L is None else self.log_n_L
        return np.asarray(log_K, dtype=float), np.asarray(log_L, dtype=float)


class FluxDerivatives(NamedTuple):
    """Partial derivatives of ``J`` with respect to ``Q``, ``n_K`` and ``n_L``."""

    d_Q: NDArray[np.float64]
    d_n_K: NDArray[np.float64]
    d_n_L: NDArray[np.float64]


def q_value(inputs: FaceFluxInputs) -> NDArray[np.float64]:
    """``Q = (z phi_L - log n_L) - (z phi_K - log n_K)``."""
    log_K, log_L = inputs.log_densities
    return inputs.z * (np.asarray(inputs.phi_L) - np.asarray(inputs.phi_K)) - (log_L - log_K)


def sedan_flux(inputs: FaceFluxInputs) -> NDArray[np.float64]:
    """Flux ``J_{K,sigma}`` from ``K`` through ``sigma``; ``J_{L,sigma} = -J_{K,sigma}``."""
    Q = q_value(inputs)
    return -inputs.z * inputs.tau * (bernoulli(-Q) * inputs.n_L - bernoulli(Q) * inputs.n_K)


def sedan_flux_with_derivatives(inputs: FaceFluxInputs):
    """Flux, ``Q`` and :class:`FluxDerivatives` in one pass.

    ``d_n_K`` and ``d_n_L`` hold ``Q`` fixed; the dependence of ``Q`` on the
    densities is left to the caller's chain rule.
    """
    Q = q_value(inputs)
    b_plus = np.asarray(bernoulli(Q))
    b_minus = np.asarray(bernoulli(-Q))
    scale = inputs.z * inputs.tau
    flux = -scale * (b_minus * inputs.n_L - b_plus * inputs.n_K)
    derivatives = FluxDerivatives(
        d_Q=scale * (np.asarray(bernoulli_prime(-Q)) * inputs.n_L + np.asarray(bernoulli_prime(Q)) * inputs.n_K),
        d_n_K=scale * b_plus,
        d_n_L=-scale * b_minus,
    )
    return flux, Q, derivatives


def interface_density(inputs: FaceFluxInputs, allow_degenerate: bool = False) -> NDArray[np.float64]:
    """Face density ``n_bar`` with ``J = -tau z^2 n_bar D phi``.

    Evaluated as the convex combination ``(1 - c) n_K + c n_L``. The weight
    ``c`` is minus the divided difference of ``B`` between ``D log n`` and
    ``-Q``; ``1 - c`` is the divided difference of ``B(-.)`` over the same
    points. The smaller of the two is free of cancellation, so it is used
    directly and the other weight is its complement.

    Args:
        inputs: Face data.
        allow_degenerate: Return the limit value on faces with ``z D phi``
            below :data:`DEGENERATE_TOL` instead of raising.

    Raises:
        DegenerateFace: If a face has vanishing ``z D phi`` and
            ``allow_degenerate`` is false.
    """
    log_K, log_L = inputs.log_densities
    d = inputs.z * (np.asarray(inputs.phi_L, dtype=float) - np.asarray(inputs.phi_K, dtype=float))
    d = np.atleast_1d(d)
    if not allow_degenerate and np.any(np.abs(d) < DEGENERATE_TOL):
        raise DegenerateFace(
            f"{int(np.sum(np.abs(d) < DEGENERATE_TOL))} face(s) with |z D phi| < {DEGENERATE_TOL}"
        )
    x = np.atleast_1d(log_L - log_K)
    y = x - d
    close = np.abs(d) < _DIVIDED_DIFFERENCE_SWITCH
    safe = np.where(close, 1.0, d)
    mid = 0.5 * (x + y)
    weight_L = np.where(
        close,
        -np.asarray(bernoulli_prime(mid)),
        (np.asarray(bernoulli(y)) - np.asarray(bernoulli(x))) / safe,
    )
    weight_K = np.where(
        close,
        -np.asarray(bernoulli_prime(-mid)),
        (np.asarray(bernoulli(-x)) - np.asarray(bernoulli(-y))) / safe,
    )
    weight_L = np.clip(weight_L, 0.0, 1.0)
    weight_K = np.clip(weight_K, 0.0, 1.0)
    use_L = weight_L <= weight_K
    weight_L, weight_K = np.where(use_L, weight_L, 1.0 - weight_K), np.where(use_L, 1.0 - weight_L, weight_K)
    n_K = np.atleast_1d(np.asarray(inputs.n_K, dtype=float))
    n_L = np.atleast_1d(np.asarray(inputs.n_L, dtype=float))
    return weight_K * n_K + weight_L * n_L
