"""Thermal occupation and squeezing-phase-fluctuation models, plus the
closed-form large-N reference curves used for validation.

The phase noise model treats the squeezed quadrature angle as a Gaussian
random variable, fixed within a trial: the exact engine averages moments
over Gauss-Hermite nodes, the semiclassical engine samples one angle per
trajectory. All other operation phases are held at their nominal values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, IonsqError


@dataclass(frozen=True)
class NoiseSpec:
    nbar: float = 0.0
    sigma_phase: float = 0.0
    phase_quadrature_nodes: int = 41
    thermal_tail_eps: float = 1e-6

    def __post_init__(self):
        if self.nbar < 0 or self.sigma_phase < 0:
            raise IonsqError("noise parameters must be non-negative")
        if self.sigma_phase > 0 and self.phase_quadrature_nodes < 11:
            raise IonsqError("need >= 11 quadrature nodes when sigma_phase > 0")
        if self.thermal_tail_eps > 1e-6:
            raise IonsqError("thermal_tail_eps must be <= 1e-6")


def thermal_ensemble(nbar: float, eps: float = 1e-6) -> list[tuple[int, float]]:
    """Smallest prefix of the geometric distribution p_n = nbar^n/(1+nbar)^(n+1)
    with cumulative weight >= 1 - eps, weights renormalized to sum to one."""
    if nbar < 0:
        raise IonsqError("nbar must be >= 0")
    if nbar == 0.0:
        return [(0, 1.0)]
    q = nbar / (1.0 + nbar)
    weights = []
    total = 0.0
    n = 0
    while total < 1.0 - eps:
        p = (1.0 - q) * q**n
        weights.append(p)
        total += p
        n += 1
    w = np.array(weights) / total
    return [(i, float(wi)) for i, wi in enumerate(w)]


def phase_nodes(sigma: float, order: int) -> list[tuple[float, float]]:
    """Gauss-Hermite nodes/weights for averaging over phi ~ N(0, sigma^2)."""
    x, w = np.polynomial.hermite.hermgauss(order)
    phis = np.sqrt(2.0) * sigma * x
    weights = w / np.sqrt(np.pi)
    return list(zip(phis.tolist(), weights.tolist()))


def phase_average(sigma: float, evaluator, order: int = 41, self_check: bool = True):
    """Quadrature average of first and second moments over the phase distribution.

    ``evaluator(phi)`` must return (<M>, <M^2>) at fixed phase offset phi.
    Returns (mean, variance) with total variance = E_phi[Var] + Var_phi[E].
    Raises ConvergenceError when doubling the node count moves the result by
    more than 1e-6 relative.
    """
    if sigma <= 0:
        m1, m2 = evaluator(0.0)
        return m1, m2 - m1 * m1

    def moments(nodes):
        e1 = e2 = 0.0
        for phi, w in nodes:
            m1, m2 = evaluator(phi)
            e1 += w * m1
            e2 += w * m2
        return e1, e2 - e1 * e1

    mean, var = moments(phase_nodes(sigma, order))
    if self_check:
        mean2, var2 = moments(phase_nodes(sigma, 2 * order + 1))
        scale = max(abs(mean), np.sqrt(max(var, 0.0)), 1e-12)
        drift = max(abs(mean2 - mean) / scale, abs(var2 - var) / max(abs(var), 1e-12))
        if drift > 1e-6:
            raise ConvergenceError(
                f"phase quadrature with {order} nodes not converged "
                f"(node doubling moves moments by {drift:.2e})",
                residual=drift,
            )
    return mean, var


# ---------------------------------------------------------------------------
# Large-N closed forms

def analytic_nr_phase(r: float, sigma: float) -> float:
    """Large-N NR gain with phase noise:
    (e^{-2r}/2)(1+e^{-2 sigma^2}) + (e^{2r}/2)(1-e^{-2 sigma^2})."""
    c = np.exp(-2.0 * sigma**2)
    return 0.5 * np.exp(-2.0 * r) * (1.0 + c) + 0.5 * np.exp(2.0 * r) * (1.0 - c)


def analytic_nr_phase_optimum(sigma: float) -> tuple[float, float, bool]:
    """(r_opt, optimal gain, r_opt_defined) of the large-N NR phase-noise model.

    r_opt = log(sqrt(1-sigma^2)/sigma)/2 is undefined for sigma >= 1 (the
    flag is False and r_opt is NaN); the optimal gain
    sqrt((1-e^{-2 sigma^2})(1+e^{-2 sigma^2})) is always returned.
    """
    c = np.exp(-2.0 * sigma**2)
    gain = float(np.sqrt((1.0 - c) * (1.0 + c)))
    if sigma >= 1.0:
        return float("nan"), gain, False
    r_opt = 0.5 * np.log(np.sqrt(1.0 - sigma**2) / sigma)
    return float(r_opt), gain, True


def analytic_sa_phase(r: float, sigma: float) -> float:
    """Large-N SA gain with phase noise: [cosh r + e^{-2 sigma^2} sinh r]^{-2}."""
    return float((np.cosh(r) + np.exp(-2.0 * sigma**2) * np.sinh(r)) ** -2)


def analytic_thermal(nbar: float, n_ions: int) -> tuple[float, float]:
    """(r_opt, gain rescaling) for initial thermal occupation:
    r_opt = log(N^{2/3}/(2 nbar + 1))/2 and a (2 nbar + 1)^2 penalty on the
    zero-temperature optimum."""
    r_opt = 0.5 * np.log(n_ions ** (2.0 / 3.0) / (2.0 * nbar + 1.0))
    return float(r_opt), float((2.0 * nbar + 1.0) ** 2)
