"""Split ODE systems ydot = f(y, t) + g(y, t) and the benchmark problems.

A problem carries the two right-hand-side halves (f integrated
explicitly, g implicitly), their Jacobians with respect to the state,
an optional time-dependent forcing holding e.g. Dirichlet boundary
pickups, and optionally an exact solution.  The PDE benchmarks use
method-of-lines finite differences on uniform grids, assembled as dense
matrices (the largest system here is a few hundred unknowns).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm
from scipy.special import erf, erfc

Array = np.ndarray
ForcingFn = Callable[[float], tuple[Array, Array]]

QOI_KINDS = ("final-time", "time-integrated")


@dataclass
class SplitOdeProblem:
    """Autonomous split system plus optional additive time-dependent forcing.

    eval_f/eval_g take the state only; the full right-hand side halves are
    f(y, t) = eval_f(y) + forcing(t)[0] and likewise for g.  jac_f/jac_g
    are state Jacobians (the forcing does not depend on the state).
    ``linear`` declares both halves affine in y, which lets the solvers
    reuse factorizations.
    """

    name: str
    dim: int
    eval_f: Callable[[Array], Array]
    eval_g: Callable[[Array], Array]
    jac_f: Callable[[Array], Array]
    jac_g: Callable[[Array], Array]
    y0: Array
    forcing: Optional[ForcingFn] = None
    analytic: Optional[Callable[[float], Array]] = None
    pde_solution: Optional[Callable[[float], Array]] = None
    linear: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        if self.y0.shape != (self.dim,):
            raise ValueError(f"y0 shape {self.y0.shape} does not match dim {self.dim}")

    def f(self, y: Array, t: float) -> Array:
        out = self.eval_f(y)
        if self.forcing is not None:
            out = out + self.forcing(t)[0]
        return out

    def g(self, y: Array, t: float) -> Array:
        out = self.eval_g(y)
        if self.forcing is not None:
            out = out + self.forcing(t)[1]
        return out

    def rhs(self, y: Array, t: float) -> Array:
        return self.f(y, t) + self.g(y, t)


@dataclass
class QoiSpec:
    """Quantity of interest: (y(T), psi) or integral of (y(t), psi_tilde(t)) dt."""

    kind: str
    psi: Optional[Array] = None
    psi_tilde: Optional[Callable[[float], Array]] = None

    def __post_init__(self):
        if self.kind not in QOI_KINDS:
            raise ValueError(f"qoi kind must be one of {QOI_KINDS}, got {self.kind!r}")
        if self.kind == "final-time":
            if self.psi is None:
                raise ValueError("final-time qoi needs psi")
            self.psi = np.asarray(self.psi, dtype=float)
        elif self.psi_tilde is None:
            raise ValueError("time-integrated qoi needs psi_tilde")


def fd_jacobian(fn, y: Array, eps: float = 1e-6) -> Array:
    """Central finite-difference Jacobian of fn at y."""
    y = np.asarray(y, dtype=float)
    m = y.size
    out = np.empty((m, m))
    for j in range(m):
        step = eps * max(1.0, abs(y[j]))
        yp, ym = y.copy(), y.copy()
        yp[j] += step
        ym[j] -= step
        out[:, j] = (fn(yp) - fn(ym)) / (2.0 * step)
    return out


def check_jacobians(problem: SplitOdeProblem, n_samples: int = 5, seed: int = 0,
                    scale: float = 1.0, eps: float = 1e-6) -> float:
    """Max relative defect between stored and finite-difference Jacobians."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        y = problem.y0 + scale * rng.standard_normal(problem.dim)
        for jac, fn in ((problem.jac_f, problem.eval_f), (problem.jac_g, problem.eval_g)):
            j_exact = jac(y)
            j_fd = fd_jacobian(fn, y, eps)
            denom = max(1.0, np.abs(j_exact).max())
            worst = max(worst, np.abs(j_exact - j_fd).max() / denom)
    return worst


def _matrix_problem(name, f_mat, g_mat, y0, forcing=None, metadata=None) -> SplitOdeProblem:
    y0 = np.asarray(y0, dtype=float)
    f_mat = np.asarray(f_mat, dtype=float)
    g_mat = np.asarray(g_mat, dtype=float)
    return SplitOdeProblem(
        name=name,
        dim=y0.size,
        eval_f=lambda y: f_mat @ y,
        eval_g=lambda y: g_mat @ y,
        jac_f=lambda y: f_mat,
        jac_g=lambda y: g_mat,
        y0=y0,
        forcing=forcing,
        analytic=None if forcing is not None else (lambda t: expm((f_mat + g_mat) * t) @ y0),
        linear=True,
        metadata=metadata or {},
    )


def split_linear_system(f_mat, g_mat, y0, name: str = "linear-split") -> SplitOdeProblem:
    """Generic linear split system with matrix-exponential exact solution."""
    return _matrix_problem(name, f_mat, g_mat, y0)


def split_scalar_linear(lam_f: float, lam_g: float, y0: float) -> SplitOdeProblem:
    return split_linear_system([[lam_f]], [[lam_g]], [y0], name="scalar-linear-split")


def split_scalar_bernoulli(lam: float, mu: float, y0: float) -> SplitOdeProblem:
    """ydot = mu*y^2 (explicit) + lam*y (implicit), with closed-form solution.

    Substituting w = 1/y turns the equation into w' = -lam*w - mu, so
    y(t) = 1 / ((1/y0 + mu/lam) exp(-lam t) - mu/lam).  Genuinely
    nonlinear, which avoids the accidental cancellations linear test
    problems can show in convergence studies.
    """
    if lam == 0.0:
        raise ValueError("lam must be nonzero")

    def analytic(t: float) -> Array:
        w = (1.0 / y0 + mu / lam) * np.exp(-lam * t) - mu / lam
        return np.array([1.0 / w])

    return SplitOdeProblem(
        name="scalar-bernoulli-split",
        dim=1,
        eval_f=lambda y: mu * y * y,
        eval_g=lambda y: lam * y,
        jac_f=lambda y: np.array([[2.0 * mu * y[0]]]),
        jac_g=lambda y: np.array([[lam]]),
        y0=np.array([y0]),
        analytic=analytic,
        linear=False,
        metadata={"lam": lam, "mu": mu},
    )


def _periodic_d1(m: int, h: float) -> Array:
    """Centered first derivative with wraparound, (u[i+1]-u[i-1])/(2h)."""
    d1 = np.zeros((m, m))
    for i in range(m):
        d1[i, (i + 1) % m] += 1.0 / (2.0 * h)
        d1[i, (i - 1) % m] -= 1.0 / (2.0 * h)
    return d1


def _periodic_d2(m: int, h: float) -> Array:
    d2 = np.zeros((m, m))
    for i in range(m):
        d2[i, (i + 1) % m] += 1.0 / h**2
        d2[i, i] -= 2.0 / h**2
        d2[i, (i - 1) % m] += 1.0 / h**2
    return d2


def _grid_points(lo: float, hi: float, h: float) -> Array:
    n = (hi - lo) / h
    m = round(n)
    if abs(n - m) > 1e-9 * max(1.0, abs(n)):
        raise ValueError(f"h={h} does not evenly divide [{lo}, {hi}]")
    return lo + h * np.arange(m)


def linear_advection_diffusion(gamma: float, h: float,
                               swap_roles: bool = False) -> SplitOdeProblem:
    """udot + sin(2 pi x) u_x = gamma u_xx on [0,1], periodic, u0 = sin(2 pi x).

    Centered differences on the m = 1/h point grid x_i = i*h.  By default
    the advection term is explicit (f) and diffusion implicit (g);
    swap_roles exchanges them, which makes the diffusion stability limit
    bind on the explicit half.
    """
    x = _grid_points(0.0, 1.0, h)
    m = x.size
    adv = -np.diag(np.sin(2.0 * np.pi * x)) @ _periodic_d1(m, h)
    diff = gamma * _periodic_d2(m, h)
    f_mat, g_mat = (diff, adv) if swap_roles else (adv, diff)
    name = "linear-advection-diffusion" + ("-swapped" if swap_roles else "")
    prob = _matrix_problem(
        name, f_mat, g_mat, np.sin(2.0 * np.pi * x),
        metadata={
            "benchmark": name, "gamma": gamma, "h": h, "m": m,
            "domain": [0.0, 1.0], "swap_roles": swap_roles,
        },
    )
    return prob


def burgers(gamma: float, h: float) -> SplitOdeProblem:
    """udot + u u_x = gamma u_xx on [-1,1], periodic, u0 = sin(pi x).

    Advective-form nonlinearity u * (centered u_x), explicit; diffusion
    implicit.
    """
    x = _grid_points(-1.0, 1.0, h)
    m = x.size
    d1 = _periodic_d1(m, h)
    diff = gamma * _periodic_d2(m, h)

    def eval_f(u: Array) -> Array:
        return -u * (d1 @ u)

    def jac_f(u: Array) -> Array:
        return -(np.diag(d1 @ u) + u[:, None] * d1)

    return SplitOdeProblem(
        name="burgers",
        dim=m,
        eval_f=eval_f,
        eval_g=lambda u: diff @ u,
        jac_f=jac_f,
        jac_g=lambda u: diff,
        y0=np.sin(np.pi * x),
        linear=False,
        metadata={"benchmark": "burgers", "gamma": gamma, "h": h, "m": m,
                  "domain": [-1.0, 1.0]},
    )


# ---------------------------------------------------------------------------
# 1D Alfven wave (coupled velocity / magnetic induction system)

MHD_DEFAULTS = {"B0": 10.0, "rho": 1.0, "mu": 1.0, "eta": 1.0, "mu0": 1.0,
                "U": 1.0, "L": 1.0}

MHD_V_MODES = ("v-split", "v-implicit")


def alfven_analytic(zeta, t: float, B0=10.0, rho=1.0, mu=1.0, eta=1.0,
                    mu0=1.0, U=1.0) -> tuple[Array, Array]:
    """Exact (v, B) of the viscous/resistive Alfven-wave half-space problem.

    At t <= 0 both fields vanish (the fluid starts at rest); for t > 0
    the impulsively started plate makes the velocity boundary value at
    zeta = 0 exactly U, which is also the t -> 0+ limit of the erf
    expressions below.
    """
    zeta = np.asarray(zeta, dtype=float)
    if t <= 0.0:
        return np.zeros_like(zeta), np.zeros_like(zeta)
    d = eta / mu0
    a0 = B0 / np.sqrt(mu0 * rho)
    s = 2.0 * np.sqrt(d * t)
    arg_m = (zeta - a0 * t) / s
    arg_p = (zeta + a0 * t) / s
    e_m = np.exp(-a0 * zeta / d)
    e_p = np.exp(a0 * zeta / d)
    v = 0.25 * U * (e_m * (1.0 - erf(arg_m)) - erf(arg_m)) \
        + 0.25 * U * (e_p * (1.0 - erf(arg_p)) - erf(arg_p) + 2.0)
    b = -0.25 * e_m * (e_p - 1.0) * U * np.sqrt(mu * rho) \
        * (erfc(arg_m) + e_p * erfc(arg_p))
    return v, b


def _dirichlet_d1(m: int, h: float) -> tuple[Array, Array, Array]:
    """Interior centered d/dz; returns (matrix, left pickup, right pickup)."""
    d1 = np.zeros((m, m))
    for i in range(m):
        if i + 1 < m:
            d1[i, i + 1] += 1.0 / (2.0 * h)
        if i - 1 >= 0:
            d1[i, i - 1] -= 1.0 / (2.0 * h)
    left = np.zeros(m)
    left[0] = -1.0 / (2.0 * h)
    right = np.zeros(m)
    right[-1] = 1.0 / (2.0 * h)
    return d1, left, right


def _dirichlet_d2(m: int, h: float) -> tuple[Array, Array, Array]:
    d2 = np.zeros((m, m))
    for i in range(m):
        if i + 1 < m:
            d2[i, i + 1] += 1.0 / h**2
        d2[i, i] -= 2.0 / h**2
        if i - 1 >= 0:
            d2[i, i - 1] += 1.0 / h**2
    left = np.zeros(m)
    left[0] = 1.0 / h**2
    right = np.zeros(m)
    right[-1] = 1.0 / h**2
    return d2, left, right


def mhd_alfven(h: float = 5e-3, v_mode: str = "v-split", **params) -> SplitOdeProblem:
    """Coupled 1D system v_t = (B0/rho) B_z + (mu/rho) v_zz,
    B_t = B0 v_z + (eta/mu0) B_zz on [0, L], Dirichlet data from the
    analytic solution, zero initial condition.

    State layout is [v at interior points, B at interior points].  The
    induction equation is always split with transport explicit and
    magnetic diffusion implicit.  v_mode picks the momentum-equation
    split: "v-split" takes the Lorentz term explicit and viscosity
    implicit; "v-implicit" integrates the whole momentum right-hand side
    implicitly (f_v = 0).
    """
    if v_mode not in MHD_V_MODES:
        raise ValueError(f"v_mode must be one of {MHD_V_MODES}, got {v_mode!r}")
    p = dict(MHD_DEFAULTS)
    unknown = set(params) - set(p)
    if unknown:
        raise ValueError(f"unknown mhd parameters: {sorted(unknown)}")
    p.update(params)
    B0, rho, mu, eta, mu0, U, L = (p[k] for k in ("B0", "rho", "mu", "eta", "mu0", "U", "L"))

    n_cells = round(L / h)
    if abs(L / h - n_cells) > 1e-9:
        raise ValueError(f"h={h} does not evenly divide [0, {L}]")
    mh = n_cells - 1
    m = 2 * mh
    zeta = h * np.arange(1, n_cells)

    d1, d1_l, d1_r = _dirichlet_d1(mh, h)
    d2, d2_l, d2_r = _dirichlet_d2(mh, h)

    lorentz = (B0 / rho) * d1      # acts on B in the v equation
    visc = (mu / rho) * d2         # acts on v
    transport = B0 * d1            # acts on v in the B equation
    bdiff = (eta / mu0) * d2       # acts on B

    sv, sb = slice(0, mh), slice(mh, m)
    f_mat = np.zeros((m, m))
    g_mat = np.zeros((m, m))
    f_mat[sb, sv] = transport
    g_mat[sb, sb] = bdiff
    g_mat[sv, sv] = visc
    if v_mode == "v-split":
        f_mat[sv, sb] = lorentz
    else:
        g_mat[sv, sb] = lorentz

    def boundary_values(t: float):
        v_ends, b_ends = alfven_analytic(np.array([0.0, L]), t, B0=B0, rho=rho,
                                         mu=mu, eta=eta, mu0=mu0, U=U)
        return v_ends, b_ends

    def forcing(t: float) -> tuple[Array, Array]:
        force_f = np.zeros(m)
        force_g = np.zeros(m)
        v_ends, b_ends = boundary_values(t)
        # v equation: Lorentz pickup from B boundary data, viscous pickup from v
        lorentz_pick = (B0 / rho) * (d1_l * b_ends[0] + d1_r * b_ends[1])
        if v_mode == "v-split":
            force_f[sv] += lorentz_pick
        else:
            force_g[sv] += lorentz_pick
        force_g[sv] += (mu / rho) * (d2_l * v_ends[0] + d2_r * v_ends[1])
        # B equation: transport pickup from v data, diffusion pickup from B
        force_f[sb] += B0 * (d1_l * v_ends[0] + d1_r * v_ends[1])
        force_g[sb] += (eta / mu0) * (d2_l * b_ends[0] + d2_r * b_ends[1])
        return force_f, force_g

    def pde_solution(t: float) -> Array:
        v, b = alfven_analytic(zeta, t, B0=B0, rho=rho, mu=mu, eta=eta, mu0=mu0, U=U)
        return np.concatenate([v, b])

    return SplitOdeProblem(
        name=f"mhd-alfven-{v_mode}",
        dim=m,
        eval_f=lambda y: f_mat @ y,
        eval_g=lambda y: g_mat @ y,
        jac_f=lambda y: f_mat,
        jac_g=lambda y: g_mat,
        y0=np.zeros(m),
        forcing=forcing,
        pde_solution=pde_solution,
        linear=True,
        metadata={"benchmark": "mhd-alfven", "v_mode": v_mode, "h": h, "m": m,
                  "interior_per_field": mh, **p,
                  "alfven_speed": B0 / np.sqrt(mu0 * rho)},
    )


def mhd_split(problem: SplitOdeProblem, v_mode: str) -> SplitOdeProblem:
    """Rebuild an Alfven problem with the requested momentum-equation split."""
    md = problem.metadata
    if md.get("benchmark") != "mhd-alfven":
        raise ValueError("mhd_split expects a problem built by mhd_alfven")
    params = {k: md[k] for k in MHD_DEFAULTS}
    return mhd_alfven(h=md["h"], v_mode=v_mode, **params)


def qoi_mean_left_half(m: int, scale: float = 1.0) -> QoiSpec:
    """psi = (m/2+1 entries of scale, m/2-1 zeros): left-half integral QoI."""
    if m % 2 != 0:
        raise ValueError("state dimension must be even")
    psi = np.zeros(m)
    psi[: m // 2 + 1] = scale
    return QoiSpec(kind="final-time", psi=psi)


def qoi_integral_v(m_v: int, h: float) -> QoiSpec:
    """psi = h on the leading velocity block of a stacked (v, B) state:
    the composite-rectangle discretization of the integral of v."""
    psi = np.zeros(2 * m_v)
    psi[:m_v] = h
    return QoiSpec(kind="final-time", psi=psi)


def component_masks(problem: SplitOdeProblem) -> dict[str, Array]:
    """Index masks for the velocity and induction blocks of an Alfven state."""
    md = problem.metadata
    if md.get("benchmark") != "mhd-alfven":
        raise ValueError("component_masks expects a problem built by mhd_alfven")
    mh = md["interior_per_field"]
    mask_v = np.zeros(problem.dim, dtype=bool)
    mask_v[:mh] = True
    return {"v": mask_v, "B": ~mask_v}
