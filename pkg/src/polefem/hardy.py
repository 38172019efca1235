"""Hardy-space machinery for the pole-condition boundary treatment.

The radiating part of the solution along each boundary ray is represented by
its Laplace transform, mapped onto the unit disc D0 by a Moebius transform
centered at a parameter s0, and expanded in the monomial basis {z^j}.  A ray
carries a boundary value f0 and n_xi expansion coefficients F_j of
F(z) = sum_j F_j z^j.

Three integer matrices act on the stacked vector (f0, F_0, ..., F_{n_xi-1}):
T- (transform of the function itself), T+ (transform of its derivative) and P
(multiplication by the distance coordinate).  By convention the integer
matrices returned here are exactly twice the corresponding monomial
coefficient maps; the assembly layer divides by two where the operators (and
not the integer patterns) are required.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HardyCoefficients:
    """Monomial representation (f0, F) of one radial profile."""

    f0: complex
    F: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=complex)
        if F.ndim != 1 or len(F) < 1:
            raise ValueError("F must be a vector of length >= 1")
        if not (np.isfinite(self.f0) and np.all(np.isfinite(F))):
            raise ValueError("non-finite Hardy coefficients")
        object.__setattr__(self, "F", F)

    @property
    def n_xi(self):
        return len(self.F)

    def stacked(self):
        """Return the length n_xi+1 vector (f0, F_0, ..., F_{n_xi-1})."""
        return np.concatenate([[complex(self.f0)], self.F])


@dataclass(frozen=True)
class HardyOperatorSet:
    """Truncated operator matrices for a fixed number of coefficients."""

    n_xi: int
    T_plus: np.ndarray
    T_minus: np.ndarray
    P: np.ndarray


@dataclass(frozen=True)
class PoleRegion:
    """Half-plane of non-physical (incoming) poles for one equation family.

    ``s0`` is the numeric Moebius parameter, or the symbolic tag "i*omega"
    for equations of second order in time.  ``c_in`` is the predicate that
    decides membership in the excluded half-plane.
    """

    s0: complex | str
    c_in: callable

    def numeric_s0(self):
        if isinstance(self.s0, str):
            raise ValueError("pole region has symbolic s0 = %r" % self.s0)
        return complex(self.s0)


def t_plus_matrix(n_xi):
    """Upper bidiagonal matrix with +1 on diagonal and superdiagonal.

    Equals twice the coefficient map (f0, F) -> coefficients of the
    transformed radial derivative.
    """
    _check_n_xi(n_xi)
    m = np.eye(n_xi + 1, dtype=np.int64)
    for j in range(n_xi):
        m[j, j + 1] = 1
    return m


def t_minus_matrix(n_xi):
    """Upper bidiagonal matrix with +1 on diagonal, -1 on superdiagonal."""
    _check_n_xi(n_xi)
    m = np.eye(n_xi + 1, dtype=np.int64)
    for j in range(n_xi):
        m[j, j + 1] = -1
    return m


def p_matrix(n_xi):
    """Tridiagonal matrix of the distance-coordinate multiplication.

    Column j holds j on the superdiagonal, -(2j+1) on the diagonal and j+1
    on the subdiagonal; twice the coefficient map of the operator.
    """
    _check_n_xi(n_xi)
    m = np.zeros((n_xi + 1, n_xi + 1), dtype=np.int64)
    for j in range(n_xi + 1):
        m[j, j] = -(2 * j + 1)
        if j >= 1:
            m[j - 1, j] = j
        if j + 1 <= n_xi:
            m[j + 1, j] = j + 1
    return m


def hardy_operator_set(n_xi):
    return HardyOperatorSet(
        n_xi=n_xi,
        T_plus=t_plus_matrix(n_xi),
        T_minus=t_minus_matrix(n_xi),
        P=p_matrix(n_xi),
    )


def mobius_pole_image(pole, s0):
    """Disc coordinate of a half-plane pole.

    Inverting s = s0 (z+1)/(z-1) gives z = (s+s0)/(s-s0).  The image lies
    inside the unit disc exactly when the pole sits in the excluded
    half-plane, i.e. when a mode with that pole violates the pole condition.
    """
    pole = complex(pole)
    s0 = complex(s0)
    if pole == s0:
        raise ValueError("pole coincides with s0; image at infinity")
    return (pole + s0) / (pole - s0)


def hardy_pairing(f, g, s0):
    """Value of the half-line product integral of two represented profiles.

    Closed form of the disc-boundary pairing: with u = T- x / (2 s0) the
    monomial coefficients of the transformed profile, the integral over
    [0, inf) of the two profiles equals -2 s0 sum_j u_j v_j.  The pairing is
    bilinear; the circle integral conjugates the argument of the first
    factor, never the coefficients.
    """
    if f.n_xi != g.n_xi:
        raise ValueError("mismatched truncations: %d vs %d" % (f.n_xi, g.n_xi))
    s0 = complex(s0)
    tm = t_minus_matrix(f.n_xi)
    u = tm @ f.stacked()
    v = tm @ g.stacked()
    return -1.0 / (2.0 * s0) * np.dot(u, v)


_POLE_REGIONS = {
    "schrodinger": PoleRegion(-1.0 - 1.0j, lambda z: z.real > -z.imag),
    "driftdiffusion": PoleRegion(-5.0, lambda z: z.real > 0),
    "heat": PoleRegion(-5.0, lambda z: z.real > 0),
    "wave": PoleRegion("i*omega", lambda z: z.imag < 0),
    "kleingordon": PoleRegion("i*omega", lambda z: z.imag < 0),
}


def pole_region(kind):
    """Excluded half-plane and default s0 for one equation family."""
    try:
        return _POLE_REGIONS[kind]
    except KeyError:
        raise ValueError("unknown equation kind: %r" % (kind,)) from None


def _check_n_xi(n_xi):
    if not isinstance(n_xi, (int, np.integer)) or n_xi < 1:
        raise ValueError("n_xi must be a positive integer, got %r" % (n_xi,))
