"""Interior-stencil symbols, truncation-error parity, and dispersion metrics.

Acting on a unit plane wave ``exp(i k x)``, a translation-invariant stencil
replaces the wavenumber ``k`` by the complex modified wavenumber ``k~(k)``;
its real part carries the phase (dispersion) error and its imaginary part the
amplitude (dissipation) error.  For a dual pair the two one-sided symbols are
complex conjugate mirrors, and the semi-discrete 1D wave system

    dv/dt = D+ s,    ds/dt = D- v

propagates the mode with the real frequency ``omega(k) = |k~(k)|``, so the
dispersion metrics below are evaluated on the modulus of the one-sided
symbols (their geometric mean, which is symmetric in the pair).  Central
operators have purely real symbols that vanish on the grid's sawtooth mode,
hence their fixed 100% error at ``kh = pi``.

Leading-error classification is exact: the Taylor coefficients of
``k~ - k`` are stencil moments ``mu_m = sum_j c_j j^m``, odd ``m`` feeding the
phase error and even ``m`` the amplitude error.  A stencil of accuracy ``nu``
is phase-dominated when ``nu`` is even and amplitude-dominated when odd.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import SbpOperatorSet

_MOMENT_TOL = 1e-9
_MOMENT_CAP = 16


class SymbolError(ValueError):
    """Malformed (non translation-invariant or inconsistent) interior stencil."""


@dataclass(frozen=True)
class StencilSymbol:
    """Interior stencil with its plane-wave symbol and leading-error data."""

    offsets: np.ndarray
    coeffs: np.ndarray      # h-normalized: symbol(kh) = k~(k) * h
    h: float
    leading_order: int
    leading_coefficient: float

    def eval_theta(self, theta: np.ndarray) -> np.ndarray:
        """Modified wavenumber times h at nondimensional wavenumbers kh."""
        theta = np.asarray(theta, dtype=float)
        z = np.exp(1j * np.multiply.outer(theta, self.offsets.astype(float)))
        return (z @ self.coeffs) / 1j

    def __call__(self, k: np.ndarray) -> np.ndarray:
        """Modified wavenumber ``k~(k)`` for physical wavenumbers ``k``."""
        return self.eval_theta(np.asarray(k, dtype=float) * self.h) / self.h

    def moments(self, mmax: int = _MOMENT_CAP) -> np.ndarray:
        off = self.offsets.astype(float)
        return np.array([np.sum(self.coeffs * off ** m) for m in range(mmax)])


def _leading_error_term(offsets, coeffs) -> tuple[int, float]:
    """Smallest-order nonzero Taylor term of ``k~ - k`` (order, coefficient)."""
    off = offsets.astype(float)
    mu = np.array([np.sum(coeffs * off ** m) for m in range(_MOMENT_CAP)])
    if abs(mu[0]) > _MOMENT_TOL or abs(mu[1] - 1.0) > _MOMENT_TOL:
        raise SymbolError("stencil is not a consistent first-derivative rule")
    for m in range(2, _MOMENT_CAP):
        if abs(mu[m]) / math.factorial(m) > _MOMENT_TOL:
            return m - 1, mu[m] / math.factorial(m)
    raise SymbolError("no resolvable leading error term below order "
                      f"{_MOMENT_CAP - 1}")


def interior_symbol(ops: SbpOperatorSet, which: str = "plus") -> StencilSymbol:
    """Symbol of the translation-invariant interior row of ``D-``/``D+``.

    ``which='average'`` gives the symbol of ``(D+ + D-)/2``, which for a dual
    pair is the purely central (real-symbol) part.
    """
    if which == "average":
        minus = interior_symbol(ops, "minus")
        plus = interior_symbol(ops, "plus")
        lo = min(minus.offsets.min(), plus.offsets.min())
        hi = max(minus.offsets.max(), plus.offsets.max())
        offsets = np.arange(lo, hi + 1)
        coeffs = np.zeros(len(offsets))
        coeffs[minus.offsets - lo] += 0.5 * minus.coeffs
        coeffs[plus.offsets - lo] += 0.5 * plus.coeffs
        order, beta = _leading_error_term(offsets, coeffs)
        return StencilSymbol(offsets, coeffs, ops.h, order, beta)

    center = ops.n // 2
    D = ops.matrix(which) * ops.h
    for probe in (center - 1, center + 1):
        shifted = np.roll(D[probe], center - probe)
        if np.abs(shifted - D[center]).max() > 1e-12:
            raise SymbolError("interior rows are not translation invariant")
    offsets, coeffs = ops.interior_stencil(which)
    order, beta = _leading_error_term(offsets, coeffs)
    return StencilSymbol(offsets, coeffs, ops.h, order, beta)


@dataclass(frozen=True)
class ParityResult:
    kind: str                    # "PhaseDominated" | "AmplitudeDominated"
    order: int                   # leading-error order nu
    beta: float                  # leading truncation coefficient
    phase_order: int | None
    amplitude_order: int | None


def classify_parity(sym: StencilSymbol) -> ParityResult:
    """Classify the leading truncation error as phase- or amplitude-type.

    Odd stencil moments feed the real (phase) part of ``k~ - k`` and even
    moments the imaginary (amplitude) part, so the comparison is exact; the
    dominant term is the one of lower order.
    """
    mu = sym.moments()
    if abs(mu[0]) > _MOMENT_TOL or abs(mu[1] - 1.0) > _MOMENT_TOL:
        raise SymbolError("cannot classify an inconsistent symbol")

    def first(ms):
        for m in ms:
            if abs(mu[m]) / math.factorial(m) > _MOMENT_TOL:
                return m - 1, mu[m] / math.factorial(m)
        return None, None

    phase_order, phase_beta = first(range(3, _MOMENT_CAP, 2))
    amp_order, amp_beta = first(range(2, _MOMENT_CAP, 2))
    if phase_order is None and amp_order is None:
        raise SymbolError("no leading error term found")
    if amp_order is None or (phase_order is not None and phase_order < amp_order):
        return ParityResult("PhaseDominated", phase_order, phase_beta,
                            phase_order, amp_order)
    return ParityResult("AmplitudeDominated", amp_order, amp_beta,
                        phase_order, amp_order)


def effective_wavenumber(ops: SbpOperatorSet, theta: np.ndarray) -> np.ndarray:
    """Pair dispersion relation ``omega(k) h`` at nondimensional ``kh``.

    Geometric mean of the one-sided symbol moduli; reduces to ``|k~| h`` for
    central operators.
    """
    sp = interior_symbol(ops, "plus")
    sm = interior_symbol(ops, "minus")
    return np.sqrt(np.abs(sp.eval_theta(theta)) * np.abs(sm.eval_theta(theta)))


def dispersion_errors(ops: SbpOperatorSet, n_samples: int = 10_000) -> dict:
    """L2 and max relative dispersion error over ``kh`` in ``(0, pi]``."""
    theta = np.arange(1, n_samples + 1) / n_samples * math.pi
    omega = effective_wavenumber(ops, theta)
    rel = np.abs(omega - theta) / theta
    l2 = float(np.sqrt(np.sum((omega - theta) ** 2) / np.sum(theta ** 2)))
    return {"l2_relative": l2, "max_relative": float(rel.max())}


def consistency_order(ops: SbpOperatorSet, which: str = "plus") -> float:
    """Measured order of ``|k~ - k| / k`` by log-log slope.

    The window is placed where the truncation term clears double-precision
    round-off for the operator's order.
    """
    sym = interior_symbol(ops, which)
    nu = sym.leading_order
    lo = max(2e-3, (1e-13 / max(abs(sym.leading_coefficient), 1e-4)) ** (1.0 / (nu + 1)))
    theta = np.geomspace(lo, min(40 * lo, 0.5), 24)
    rel = np.abs(sym.eval_theta(theta) - theta) / theta
    slope, _ = np.polyfit(np.log(theta), np.log(np.maximum(rel, 1e-300)), 1)
    return float(slope)


def write_symbol_csv(ops: SbpOperatorSet, path, n_samples: int = 2001) -> None:
    """Dump ``kh, Re(k~ h), Im(k~ h), relative error`` for external plotting."""
    theta = np.arange(1, n_samples + 1) / n_samples * math.pi
    sp = interior_symbol(ops, "plus")
    kt = sp.eval_theta(theta)
    omega = effective_wavenumber(ops, theta)
    rel = np.abs(omega - theta) / theta
    with open(path, "w") as fh:
        fh.write("kh,re_kth,im_kth,relative_error\n")
        for row in zip(theta, kt.real, kt.imag, rel):
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
