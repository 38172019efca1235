"""Problem families, semi-discrete operator bundles and time integrators.

Equation kinds and their parameters (drift d and dispersion k are zero
unless listed):

    schrodinger     i u_t = c^2 Lap u                s0 = -1 - i
    driftdiffusion    u_t = c^2 Lap u - d.grad u     s0 = -5
    heat              u_t = c^2 Lap u                s0 = -5
    wave             u_tt = c^2 Lap u                s0 = i omega (symbolic)
    kleingordon      u_tt = c^2 Lap u - k^2 u        s0 = i omega (symbolic)

First-order kinds are integrated with the trapezoidal rule or the
three-stage Radau IIA method of order five; the second-order kinds use the
averaged implicit scheme obtained by substituting centered differences for
the powers of s0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import linalg
from .hardy import pole_region

FIRST_ORDER_KINDS = ("schrodinger", "driftdiffusion", "heat")
SECOND_ORDER_KINDS = ("wave", "kleingordon")
KINDS = FIRST_ORDER_KINDS + SECOND_ORDER_KINDS

SYMBOLIC_S0 = "i*omega"


def s0_default(kind):
    """Half-plane parameter per equation family; symbolic tag for the
    second-order-in-time kinds."""
    return pole_region(kind).s0


@dataclass(frozen=True)
class ProblemSpec:
    """Equation kind with physical parameters and the Moebius parameter."""

    kind: str
    c: float = 1.0
    d: tuple = (0.0, 0.0)
    k: float = 0.0
    s0: complex | str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("unknown kind %r" % (self.kind,))
        if self.kind != "driftdiffusion" and any(self.d):
            raise ValueError("%s requires d = 0" % self.kind)
        if self.kind not in ("driftdiffusion", "kleingordon") and self.k != 0.0:
            raise ValueError("%s requires k = 0" % self.kind)
        if self.s0 is None:
            object.__setattr__(self, "s0", s0_default(self.kind))
        if self.kind in FIRST_ORDER_KINDS and isinstance(self.s0, str):
            raise ValueError("first-order kind %s needs a numeric s0" % self.kind)

    @property
    def second_order(self):
        return self.kind in SECOND_ORDER_KINDS


@dataclass
class StateVector:
    """Coefficient vector over all dofs at one instant."""

    values: np.ndarray
    time: float


@dataclass
class FirstOrderBundle:
    """Operators of M u' = B u with s0 substituted numerically."""

    M: object
    L: object
    D: object
    kM: object
    kind: str
    c: float
    _trap: dict = field(default_factory=dict, repr=False)
    _radau: dict = field(default_factory=dict, repr=False)

    @property
    def B(self):
        if self.kind == "schrodinger":
            return (-1j * self.c ** 2) * self.L
        return self.c ** 2 * self.L + self.D + self.kM


@dataclass
class SecondOrderBundle:
    """Raw graded matrices for the symbolic s0 = i omega substitution."""

    M0: object
    Mm1: object
    Mm2: object
    L0: object
    L1: object
    c: float
    k: float
    _wave: dict = field(default_factory=dict, repr=False)


def build_semidiscrete(gsys, spec):
    """Combine the graded global matrices for one problem.

    Numeric s0 yields M = M0 + Mm1/s0 + Mm2/s0^2, L = L0 + s0 L1 and
    D = D0 + Dm1/s0 plus the -k^2 M mass term; the symbolic tag returns the
    raw matrices for the centered-difference substitution.
    """
    s0 = spec.s0
    if isinstance(s0, str):
        if not spec.second_order:
            raise ValueError("symbolic s0 is only valid for wave/kleingordon")
        return SecondOrderBundle(
            M0=gsys.M0, Mm1=gsys.Mm1, Mm2=gsys.Mm2,
            L0=gsys.L0, L1=gsys.L1, c=spec.c, k=spec.k)
    s0 = complex(s0)
    M = (gsys.M0 + gsys.Mm1 / s0 + gsys.Mm2 / s0 ** 2).tocsr()
    L = (gsys.L0 + s0 * gsys.L1).tocsr()
    D = (gsys.D0 + gsys.Dm1 / s0).tocsr()
    kM = (-spec.k ** 2) * M
    return FirstOrderBundle(M=M, L=L, D=D, kM=kM, kind=spec.kind, c=spec.c)


# ---------------------------------------------------------------------------
# trapezoidal rule
# ---------------------------------------------------------------------------

def step_trapezoidal_first_order(bundle, u_n, h):
    """One step of M (u+ - u)/h = B (u+ + u)/2, reusing the factorization."""
    if h <= 0:
        raise ValueError("time step must be positive")
    cache = bundle._trap.get(h)
    if cache is None:
        B = bundle.B
        lhs = (bundle.M / h - 0.5 * B).tocsc()
        rhs = (bundle.M / h + 0.5 * B).tocsr()
        cache = (linalg.lu_factor(lhs), rhs)
        bundle._trap[h] = cache
    fact, rhs = cache
    return fact.solve(rhs @ u_n)


# ---------------------------------------------------------------------------
# Radau IIA, three stages, order five
# ---------------------------------------------------------------------------

_SQ6 = np.sqrt(6.0)
RADAU_A = np.array([
    [(88.0 - 7.0 * _SQ6) / 360.0, (296.0 - 169.0 * _SQ6) / 1800.0, (-2.0 + 3.0 * _SQ6) / 225.0],
    [(296.0 + 169.0 * _SQ6) / 1800.0, (88.0 + 7.0 * _SQ6) / 360.0, (-2.0 - 3.0 * _SQ6) / 225.0],
    [(16.0 - _SQ6) / 36.0, (16.0 + _SQ6) / 36.0, 1.0 / 9.0],
])
RADAU_B = RADAU_A[2].copy()
RADAU_C = np.array([(4.0 - _SQ6) / 10.0, (4.0 + _SQ6) / 10.0, 1.0])


def radau_stability_function(z):
    """R(z) = 1 + z b^T (I - z A)^{-1} 1 of the three-stage Radau IIA."""
    z = complex(z)
    core = np.eye(3) - z * RADAU_A
    return 1.0 + z * RADAU_B @ np.linalg.solve(core, np.ones(3))


def _radau_eig():
    lam, V = np.linalg.eig(RADAU_A)
    Vinv_ones = np.linalg.solve(V, np.ones(3, dtype=complex))
    return lam, V, Vinv_ones


def step_radau5(bundle, u_n, h, method="decoupled"):
    """One Radau IIA(5) step for M u' = B u.

    The last stage is the update (c3 = 1, b = last row of A).  The default
    decouples the stage system with the eigendecomposition of the tableau
    into three independent solves; "block" solves the stacked 3n system in
    one factorization.  Both agree to solver tolerance.
    """
    if h <= 0:
        raise ValueError("time step must be positive")
    key = (h, method)
    cache = bundle._radau.get(key)
    if method == "decoupled":
        if cache is None:
            lam, V, vinv1 = _radau_eig()
            facts = [linalg.lu_factor((bundle.M - (h * lam_i) * bundle.B).tocsc())
                     for lam_i in lam]
            cache = (lam, V, vinv1, facts)
            bundle._radau[key] = cache
        lam, V, vinv1, facts = cache
        mu = bundle.M @ u_n
        w = [facts[i].solve(vinv1[i] * mu) for i in range(3)]
        return V[2, 0] * w[0] + V[2, 1] * w[1] + V[2, 2] * w[2]
    if method == "block":
        n = bundle.M.shape[0]
        if cache is None:
            big = sp.kron(sp.eye(3), bundle.M) - h * sp.kron(RADAU_A, bundle.B)
            cache = linalg.lu_factor(big.tocsc())
            bundle._radau[key] = cache
        mu = bundle.M @ u_n
        rhs = np.concatenate([mu, mu, mu])
        g = cache.solve(rhs)
        return g[2 * n:]
    raise ValueError("unknown radau method %r" % (method,))


# ---------------------------------------------------------------------------
# second order in time
# ---------------------------------------------------------------------------

def _wave_operators(bundle, h):
    """Coefficient matrices of the three-level update.

    Centered differences replace the powers of s0: the second difference for
    s0^2, minus the centered first difference for s0^1, the four-point
    average for s0^0.  The dispersion term multiplies the averaged state
    through the summed mass blocks.
    """
    c2 = bundle.c ** 2
    kmat = bundle.k ** 2 * (bundle.M0 + bundle.Mm1 + bundle.Mm2) if bundle.k else None
    Ap = (bundle.M0 / h ** 2 - bundle.Mm1 / (2 * h) + bundle.Mm2 / 4
          - c2 * bundle.L0 / 4 + c2 * bundle.L1 / (2 * h))
    A0 = (-2.0 * bundle.M0 / h ** 2 + bundle.Mm2 / 2 - c2 * bundle.L0 / 2)
    Am = (bundle.M0 / h ** 2 + bundle.Mm1 / (2 * h) + bundle.Mm2 / 4
          - c2 * bundle.L0 / 4 - c2 * bundle.L1 / (2 * h))
    if kmat is not None:
        Ap = Ap + kmat / 4
        A0 = A0 + kmat / 2
        Am = Am + kmat / 4
    return Ap.tocsc(), A0.tocsr(), Am.tocsr()


def step_wave(bundle, u_n, u_nm1, h):
    """Three-level implicit step; solves A+ u_{n+1} = -(A0 u_n + A- u_{n-1})."""
    if h <= 0:
        raise ValueError("time step must be positive")
    cache = bundle._wave.get(h)
    if cache is None:
        Ap, A0, Am = _wave_operators(bundle, h)
        cache = (linalg.lu_factor(Ap), A0, Am)
        bundle._wave[h] = cache
    fact, A0, Am = cache
    return fact.solve(-(A0 @ u_n + Am @ u_nm1))


def bootstrap_wave_first_step(bundle, u0, h):
    """Generate u1 from displacement-only data by one trapezoidal step of the
    equivalent first-order system with zero initial velocity."""
    c2 = bundle.c ** 2
    S = c2 * bundle.L0 - bundle.Mm2
    if bundle.k:
        S = S - bundle.k ** 2 * (bundle.M0 + bundle.Mm1 + bundle.Mm2)
    W = bundle.Mm1 - c2 * bundle.L1
    lhs = (bundle.M0 - 0.5 * h * W - 0.25 * h ** 2 * S).tocsc()
    v1 = linalg.lu_factor(lhs).solve(h * (S @ u0))
    return u0 + 0.5 * h * v1


# ---------------------------------------------------------------------------
# analytic solutions, errors, energy
# ---------------------------------------------------------------------------

SCHRODINGER_ALPHAS = (1.4, -2.0)


def exact_schrodinger(x, y, t, alphas=SCHRODINGER_ALPHAS):
    """Superposition of two drifting Gaussian packets solving i u_t = Lap u."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    den = 4.0 * t + 1j
    out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
    for a in alphas:
        out = out + (1j / den) * np.exp(
            (-1j * (x ** 2 + y ** 2) - a * (x + y) - 2.0 * a ** 2 * t) / den)
    return out


def exact_driftdiffusion(x, y, t, d=(1.5, 1.5), c=0.5):
    """Advected spreading Gaussian solving u_t = c^2 Lap u - d.grad u."""
    if t <= 0:
        raise ValueError("drift-diffusion solution defined for t > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (1.0 / t) * np.exp(
        -((x - d[0] * t) ** 2 + (y - d[1] * t) ** 2) / (4.0 * t * c ** 2))


def exact_solution_fn(spec):
    """Nodal evaluator (x, y, t) -> values for kinds with a closed form."""
    if spec.kind == "schrodinger":
        return exact_schrodinger
    if spec.kind in ("driftdiffusion", "heat"):
        return lambda x, y, t: exact_driftdiffusion(x, y, t, d=spec.d, c=spec.c)
    return None


def initial_state(dof_map, fn, t0):
    """State with finite element dofs interpolating fn and zero exterior."""
    vals = np.zeros(dof_map.n_total, dtype=complex)
    xy = dof_map.node_xy
    vals[:dof_map.n_fe] = fn(xy[:, 0], xy[:, 1], t0)
    return StateVector(values=vals, time=t0)


def relative_l2_error(state, exact, dof_map):
    """Discrete l2 error over the interior nodal values."""
    xy = dof_map.node_xy
    ue = np.asarray(exact(xy[:, 0], xy[:, 1], state.time), dtype=complex)
    ref = np.linalg.norm(ue)
    if ref == 0.0:
        raise ValueError("exact solution vanishes; relative error undefined")
    return float(np.linalg.norm(state.values[:dof_map.n_fe] - ue) / ref)


def discrete_energy(gsys, u_n, u_nm1, h, c=1.0, k=0.0):
    """Midpoint energy (1/2) v*M0v + (c^2/2) u*(-L0)u + (k^2/2) u*M0u with
    v the backward difference and u the two-level average, interior dofs
    only.  Exactly conserved by the averaged scheme when the exterior blocks
    vanish."""
    nfe = gsys.dof_map.n_fe
    v = (u_n[:nfe] - u_nm1[:nfe]) / h
    u = 0.5 * (u_n[:nfe] + u_nm1[:nfe])
    M0 = gsys.M0[:nfe, :nfe]
    L0 = gsys.L0[:nfe, :nfe]
    e = 0.5 * np.vdot(v, M0 @ v) + 0.5 * c ** 2 * np.vdot(u, -(L0 @ u))
    if k:
        e = e + 0.5 * k ** 2 * np.vdot(u, M0 @ u)
    return float(e.real)
