"""Experiment front end: single runs from JSON configs, benchmark-table
reproduction, convergence sweeps, and tableau dumps.

A run executes forward solve -> reconstruction -> adjoint -> error
breakdown -> reference, and reports one row per scheme: the estimate
total (computed_error = E1+E2+E3), the effectivity against the
high-accuracy reference, the three components, and optional per-block
component columns.  Reports are CSV with scientific notation at 6
significant digits, each row preceded by a comment echoing the fully
resolved config (defaults included) so runs are reproducible
byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .adjoint import DEFAULT_REFINE, solve_adjoint
from .estimate import (ErrorBreakdown, component_split, effectivity,
                       error_breakdown, error_breakdown_timedep)
from .problems import (MHD_DEFAULTS, QoiSpec, SplitOdeProblem, burgers,
                       component_masks, linear_advection_diffusion, mhd_alfven,
                       qoi_integral_v, qoi_mean_left_half,
                       split_linear_system, split_scalar_bernoulli,
                       split_scalar_linear)
from .reconstruct import build_cg
from .reference import ReferenceConfig, true_qoi
from .solver import NewtonConfig, TimeGrid, solve_forward
from .tableaus import builtin

THREADS_ENV = "IMEXEST_THREADS"
NUM_FMT = "%.5E"  # 6 significant digits, scientific

SCHEME_ORDER = ("mid122", "ssp332", "ssp343")
_SHORT_NAMES = {"Mid(1,2,2)": "mid122", "SSP3(3,3,2)": "ssp332",
                "SSP3(4,3,3)": "ssp343"}

COMPONENT_COLUMNS = ("E1_v", "E1_B", "E2_v", "E2_B", "E3_v", "E3_B")


class CliError(RuntimeError):
    """Pipeline failure tagged with the stage it happened in."""

    def __init__(self, stage: str, detail, config: Optional[dict] = None):
        self.stage = stage
        msg = f"[{stage}] {detail}"
        if config is not None:
            msg += f"\nconfig: {canonical_json(config)}"
        super().__init__(msg)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _require_keys(section: dict, required, where: str):
    missing = [k for k in required if k not in section]
    if missing:
        raise ValueError(f"missing keys in {where}: {missing}")


def _reject_unknown(section: dict, allowed, where: str):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ValueError(f"unknown keys in {where}: {unknown}")


_PROBLEM_PARAMS = {
    "linear-advection-diffusion": {"gamma": None, "h": None, "swap_roles": False},
    "burgers": {"gamma": None, "h": None},
    "mhd-alfven": {"h": 5e-3, "v_mode": "v-split", **MHD_DEFAULTS},
    "scalar-bernoulli": {"lam": None, "mu": None, "y0": None},
    "scalar-linear": {"lam_f": None, "lam_g": None, "y0": None},
    "linear-split": {"f_mat": None, "g_mat": None, "y0": None},
}

_QOI_PARAMS = {
    "mean-left-half": {"scale": 1.0},
    "integral-v": {},
    "final-time": {"psi": None},
    "time-integrated": {"psi_tilde_const": None},
}

_NEWTON_DEFAULTS = {"abs_tol": 1e-12, "rel_tol": 1e-12, "max_iters": 25}
_REFERENCE_DEFAULTS = {"mode": "auto", "rtol": 1e-10, "atol": 1e-12,
                       "max_step": np.inf, "step_cap": 10_000_000,
                       "verify": False, "verify_ratio": 1e-3}
_ADJOINT_DEFAULTS = {"refine": DEFAULT_REFINE}
_OUTPUT_DEFAULTS = {"row_csv": None, "series_dir": None,
                    "series_indices": None, "name": None}


_OPTIONAL_NONE = ("row_csv", "series_dir", "series_indices", "name")


def _resolve_section(given: dict, defaults: dict, where: str) -> dict:
    """Defaults merged under the given keys; None defaults are required."""
    _reject_unknown(given, defaults, where)
    out = dict(defaults)
    out.update(given)
    missing = [k for k, v in out.items()
               if v is None and defaults[k] is None and k not in _OPTIONAL_NONE]
    if missing:
        raise ValueError(f"missing keys in {where}: {missing}")
    return out


@dataclass
class RunConfig:
    """Validated, fully resolved run description."""

    scheme: str
    problem: dict
    grid: dict
    qoi: dict
    newton: dict
    reference: dict
    adjoint: dict
    output: dict
    components: bool
    defaults_used: list

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ValueError("config must be a JSON object")
        top_allowed = ("scheme", "problem", "grid", "qoi", "newton",
                       "reference", "adjoint", "output", "components")
        _reject_unknown(doc, top_allowed, "config")
        _require_keys(doc, ("scheme", "problem", "grid", "qoi"), "config")

        prob = dict(doc["problem"])
        _require_keys(prob, ("name",), "config.problem")
        pname = prob.pop("name")
        if pname not in _PROBLEM_PARAMS:
            raise ValueError(
                f"unknown problem {pname!r}; known: {sorted(_PROBLEM_PARAMS)}")
        prob = _resolve_section(prob, _PROBLEM_PARAMS[pname],
                                f"config.problem ({pname})")
        prob["name"] = pname
        if pname == "mhd-alfven":
            # derived wave speed recorded so reports carry it explicitly
            prob["A0"] = prob["B0"] / np.sqrt(prob["mu0"] * prob["rho"])

        grid = dict(doc["grid"])
        _reject_unknown(grid, ("t_end", "k", "n"), "config.grid")
        _require_keys(grid, ("t_end",), "config.grid")
        t_end = float(grid["t_end"])
        if t_end <= 0:
            raise ValueError("config.grid.t_end must be positive")
        if "n" in grid and "k" in grid:
            raise ValueError("config.grid takes k or n, not both")
        if "n" in grid:
            n = int(grid["n"])
            if n < 1:
                raise ValueError("config.grid.n must be >= 1")
        elif "k" in grid:
            k = float(grid["k"])
            ratio = t_end / k
            n = int(round(ratio))
            if n < 1 or abs(ratio - n) > 1e-12 * max(1.0, ratio):
                raise ValueError(
                    f"config.grid.k={k} does not divide t_end={t_end}")
        else:
            raise ValueError("config.grid needs k or n")
        grid = {"t_end": t_end, "n": n, "k": t_end / n}

        qoi = dict(doc["qoi"])
        _require_keys(qoi, ("kind",), "config.qoi")
        kind = qoi.pop("kind")
        if kind not in _QOI_PARAMS:
            raise ValueError(
                f"unknown qoi kind {kind!r}; known: {sorted(_QOI_PARAMS)}")
        qoi = _resolve_section(qoi, _QOI_PARAMS[kind], f"config.qoi ({kind})")
        qoi["kind"] = kind

        defaults_used = []
        for src, name, defaults in ((doc.get("newton", {}), "newton", _NEWTON_DEFAULTS),
                                    (doc.get("reference", {}), "reference", _REFERENCE_DEFAULTS),
                                    (doc.get("adjoint", {}), "adjoint", _ADJOINT_DEFAULTS)):
            defaults_used += [f"{name}.{k}" for k in defaults if k not in src]
        newton = _resolve_section(dict(doc.get("newton", {})), _NEWTON_DEFAULTS,
                                  "config.newton")
        reference = _resolve_section(dict(doc.get("reference", {})),
                                     _REFERENCE_DEFAULTS, "config.reference")
        adjoint = _resolve_section(dict(doc.get("adjoint", {})),
                                   _ADJOINT_DEFAULTS, "config.adjoint")
        output = _resolve_section(dict(doc.get("output", {})),
                                  _OUTPUT_DEFAULTS, "config.output")
        return cls(scheme=str(doc["scheme"]), problem=prob, grid=grid,
                   qoi=qoi, newton=newton, reference=reference,
                   adjoint=adjoint, output=output,
                   components=bool(doc.get("components", False)),
                   defaults_used=defaults_used)

    def resolved(self) -> dict:
        """Full config with every default filled in, for echoing."""
        ref = dict(self.reference)
        if ref["max_step"] == np.inf:
            ref["max_step"] = "inf"
        return {
            "scheme": self.scheme, "problem": self.problem, "grid": self.grid,
            "qoi": self.qoi, "newton": self.newton, "reference": ref,
            "adjoint": self.adjoint, "components": self.components,
        }


def _build_problem(cfg: RunConfig) -> SplitOdeProblem:
    p = dict(cfg.problem)
    name = p.pop("name")
    if name == "linear-advection-diffusion":
        return linear_advection_diffusion(p["gamma"], p["h"],
                                          swap_roles=p["swap_roles"])
    if name == "burgers":
        return burgers(p["gamma"], p["h"])
    if name == "mhd-alfven":
        params = {k: p[k] for k in MHD_DEFAULTS}
        return mhd_alfven(h=p["h"], v_mode=p["v_mode"], **params)
    if name == "scalar-bernoulli":
        return split_scalar_bernoulli(p["lam"], p["mu"], p["y0"])
    if name == "scalar-linear":
        return split_scalar_linear(p["lam_f"], p["lam_g"], p["y0"])
    if name == "linear-split":
        return split_linear_system(p["f_mat"], p["g_mat"], p["y0"])
    raise ValueError(f"unknown problem {name!r}")


def _build_qoi(cfg: RunConfig, problem: SplitOdeProblem) -> QoiSpec:
    q = cfg.qoi
    kind = q["kind"]
    if kind == "mean-left-half":
        return qoi_mean_left_half(problem.dim, scale=q["scale"])
    if kind == "integral-v":
        md = problem.metadata
        if md.get("benchmark") != "mhd-alfven":
            raise ValueError("integral-v qoi needs a stacked (v, B) problem")
        return qoi_integral_v(md["interior_per_field"], md["h"])
    if kind == "final-time":
        psi = np.asarray(q["psi"], dtype=float)
        if psi.shape != (problem.dim,):
            raise ValueError("psi length does not match the state dimension")
        return QoiSpec(kind="final-time", psi=psi)
    psi_t = np.asarray(q["psi_tilde_const"], dtype=float)
    if psi_t.shape != (problem.dim,):
        raise ValueError("psi_tilde length does not match the state dimension")
    return QoiSpec(kind="time-integrated", psi_tilde=lambda t: psi_t)


@dataclass
class ReportRow:
    """One scheme's result: estimate total, effectivity, and components."""

    scheme: str
    computed_error: float
    effectivity: Optional[float]
    e1: float
    e2: float
    e3: float
    components: Optional[dict] = None
    metadata: dict = field(default_factory=dict)

    def csv_values(self, with_components: bool) -> list:
        vals = [self.scheme, NUM_FMT % self.computed_error,
                "NA" if self.effectivity is None else NUM_FMT % self.effectivity,
                NUM_FMT % self.e1, NUM_FMT % self.e2, NUM_FMT % self.e3]
        if with_components:
            comp = self.components or {}
            for col in COMPONENT_COLUMNS:
                term, block = col.split("_")
                idx = int(term[1]) - 1
                triple = comp.get(block)
                vals.append("NA" if triple is None else NUM_FMT % triple[idx])
        return vals


@dataclass
class RunArtifacts:
    """Everything a run produced, for reuse by callers that need more
    than the report row (acceptance checks, series emission)."""

    problem: SplitOdeProblem
    pair: object
    grid: TimeGrid
    qoi: QoiSpec
    forward: object
    reconstruction: object
    adjoint: object
    breakdown: ErrorBreakdown
    reference_qoi: float
    imex_qoi: float
    true_error: float


_REFERENCE_CACHE: dict = {}


def _reference_key(cfg: RunConfig) -> str:
    return canonical_json({"problem": cfg.problem, "grid": cfg.grid,
                           "qoi": cfg.qoi, "reference": cfg.reference})


def _imex_qoi_value(qoi: QoiSpec, artifacts_recon, forward, grid) -> float:
    if qoi.kind == "final-time":
        return float(qoi.psi @ forward.final_state)
    from .numerics import DEFAULT_INNER_RULE
    gp, gw = DEFAULT_INNER_RULE.mapped(0.0, 1.0)
    total = 0.0
    for n in range(grid.n_intervals):
        k_n = grid.steps[n]
        for tau, w in zip(gp, gw):
            t = grid.nodes[n] + k_n * tau
            total += k_n * w * float(artifacts_recon.evaluate(t) @ qoi.psi_tilde(t))
    return total


def run(config, return_artifacts: bool = False):
    """Execute one configured experiment and produce its report row.

    Accepts a dict or an already validated RunConfig.  Failures raise
    CliError labelled with the pipeline stage and echo the resolved
    config.  With return_artifacts=True returns (row, RunArtifacts).
    """
    stage = "config"
    try:
        cfg = RunConfig.from_dict(config) if isinstance(config, dict) else config
        resolved = cfg.resolved()
    except Exception as exc:
        raise CliError(stage, exc) from exc

    try:
        stage = "problem"
        problem = _build_problem(cfg)
        grid = TimeGrid.uniform(cfg.grid["t_end"], cfg.grid["n"])
        qoi = _build_qoi(cfg, problem)
        pair = builtin(cfg.scheme)
        newton = NewtonConfig(**cfg.newton)

        stage = "forward"
        forward = solve_forward(problem, pair, grid, newton)

        stage = "reconstruct"
        recon = build_cg(problem, pair, forward, q=pair.order - 1)

        stage = "adjoint"
        adj = solve_adjoint(problem, recon, qoi, refine=cfg.adjoint["refine"])

        stage = "estimate"
        if qoi.kind == "final-time":
            bd = error_breakdown(problem, pair, forward, recon, adj)
        else:
            bd = error_breakdown_timedep(problem, pair, forward, recon, adj)

        stage = "reference"
        imex_q = _imex_qoi_value(qoi, recon, forward, grid)
        ref_kwargs = dict(cfg.reference)
        ref_mode = ref_kwargs["mode"]
        if ref_mode == "auto":
            ref_mode = ("analytic" if problem.analytic is not None
                        else "high-order-numeric")
        key = _reference_key(cfg)
        if key in _REFERENCE_CACHE:
            ref_q = _REFERENCE_CACHE[key]
        else:
            ref_q = true_qoi(problem, grid, qoi,
                             ReferenceConfig(**ref_kwargs), imex_qoi=imex_q)
            _REFERENCE_CACHE[key] = ref_q
        true_err = ref_q - imex_q
        eff = effectivity(bd.estimate_total, true_err)
        bd.true_error = true_err
        bd.effectivity = eff

        stage = "components"
        comps = None
        if cfg.components:
            comps = component_split(bd, component_masks(problem))

        stage = "report"
        row = ReportRow(
            scheme=pair.name, computed_error=bd.estimate_total,
            effectivity=eff, e1=bd.e1, e2=bd.e2, e3=bd.e3, components=comps,
            metadata={
                "linearization": ("exact-linear" if problem.linear
                                  else "jacobian-along-reconstruction"),
                "reference_mode": ref_mode,
                "reference_qoi": ref_q,
                "imex_qoi": imex_q,
                "true_error": true_err,
                "defaults_used": list(cfg.defaults_used),
                "config": resolved,
            })
        if cfg.output["row_csv"]:
            write_report_csv(cfg.output["row_csv"], [row],
                             with_components=cfg.components)
        if cfg.output["series_dir"]:
            _emit_series(cfg, problem, grid, forward, adj, bd)
    except CliError:
        raise
    except Exception as exc:
        raise CliError(stage, exc, resolved) from exc

    if return_artifacts:
        return row, RunArtifacts(problem=problem, pair=pair, grid=grid,
                                 qoi=qoi, forward=forward,
                                 reconstruction=recon, adjoint=adj,
                                 breakdown=bd, reference_qoi=ref_q,
                                 imex_qoi=imex_q, true_error=true_err)
    return row


def write_report_csv(path: str, rows: list, with_components: bool = False,
                     table_id: Optional[int] = None) -> None:
    """Rows as CSV, each preceded by a comment echoing its resolved config."""
    header = ["scheme", "computed_error", "effectivity", "E1", "E2", "E3"]
    if with_components:
        header += list(COMPONENT_COLUMNS)
    lines = []
    if table_id is not None:
        lines.append(f"# table: {table_id}")
    lines.append(",".join(header))
    for row in rows:
        cfg = row.metadata.get("config")
        if cfg is not None:
            lines.append(f"# config: {canonical_json(cfg)}")
        lines.append(",".join(row.csv_values(with_components)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _emit_series(cfg: RunConfig, problem, grid, forward, adj, bd) -> None:
    """Time-series data files plus a plain-text figure description."""
    out_dir = cfg.output["series_dir"]
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.output["name"] or f"{problem.name}_{_short_scheme(cfg.scheme)}"
    indices = cfg.output["series_indices"]
    if indices is None:
        indices = [problem.dim // 2]
    nodes = grid.nodes
    phi_nodes = np.stack([adj.evaluate(t) for t in nodes])
    for idx in indices:
        for tag, vals in (("Y", forward.nodal[:, idx]), ("phi", phi_nodes[:, idx])):
            path = os.path.join(out_dir, f"{name}_{tag}_state{idx}.csv")
            with open(path, "w") as fh:
                fh.write(f"# run: {name}; series: {tag}[{idx}]\nt,value\n")
                for t, v in zip(nodes, vals):
                    fh.write(f"{NUM_FMT % t},{NUM_FMT % v}\n")
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    with open(os.path.join(out_dir, f"{name}_eterms.csv"), "w") as fh:
        fh.write(f"# run: {name}; per-interval estimate components\n"
                 "t_mid,E1,E2,E3\n")
        for t, (a, b, c) in zip(mids, bd.per_interval):
            fh.write(f"{NUM_FMT % t},{NUM_FMT % a},{NUM_FMT % b},{NUM_FMT % c}\n")

    max_y = float(np.abs(forward.nodal).max())
    desc = [f"Run {name}: scheme {builtin(cfg.scheme).name} on problem "
            f"{problem.name}, T = {grid.t_end}, N = {grid.n_intervals}.",
            f"Data files: solution component(s) {indices} vs time "
            f"({name}_Y_state*.csv), adjoint weight at the same indices "
            f"({name}_phi_state*.csv), per-interval estimate components "
            f"({name}_eterms.csv).",
            f"Max |Y| over the run: {max_y:.3e}."]
    if max_y > 1e3 * (1.0 + float(np.abs(problem.y0).max())):
        desc.append("The trajectory grows by orders of magnitude: an "
                    "unstable run; plotting the component against time "
                    "shows the oscillatory blow-up.")
    else:
        desc.append("The trajectory stays bounded; plotting the component "
                    "against time shows the resolved evolution.")
    if problem.metadata.get("benchmark") == "mhd-alfven":
        md = problem.metadata
        mh = md["interior_per_field"]
        zeta = np.linspace(md["h"], md["L"] - md["h"], mh)
        from .problems import alfven_analytic
        params = {k: md[k] for k in ("B0", "rho", "mu", "eta", "mu0", "U")}
        v_true, _ = alfven_analytic(zeta, grid.t_end, **params)
        with open(os.path.join(out_dir, f"{name}_profile_v.csv"), "w") as fh:
            fh.write(f"# run: {name}; velocity profile at T = {grid.t_end}\n"
                     "zeta,v_imex,v_analytic\n")
            for z, vi, va in zip(zeta, forward.final_state[:mh], v_true):
                fh.write(f"{NUM_FMT % z},{NUM_FMT % vi},{NUM_FMT % va}\n")
        desc.append(f"Velocity profile at the final time against the exact "
                    f"solution: {name}_profile_v.csv (columns zeta, v_imex, "
                    "v_analytic); overlaying the two curves reproduces the "
                    "stable/unstable comparison plot.")
    with open(os.path.join(out_dir, f"{name}_figure.txt"), "w") as fh:
        fh.write("\n".join(desc) + "\n")


def _short_scheme(name: str) -> str:
    return _SHORT_NAMES.get(builtin(name).name, name)


# Published benchmark-table settings, keyed by table id.
_LIN = {"name": "linear-advection-diffusion", "h": 1 / 40}
TABLE_CONFIGS = {
    4: {"problem": {**_LIN, "gamma": 0.1}, "grid": {"t_end": 2.0, "k": 1 / 40}},
    5: {"problem": {**_LIN, "gamma": 0.01}, "grid": {"t_end": 2.0, "k": 1 / 40}},
    6: {"problem": {**_LIN, "gamma": 0.1}, "grid": {"t_end": 1.0, "k": 1 / 10}},
    7: {"problem": {**_LIN, "gamma": 0.1}, "grid": {"t_end": 2.0, "k": 1 / 10}},
    8: {"problem": {**_LIN, "gamma": 0.01}, "grid": {"t_end": 1.0, "k": 1 / 10}},
    9: {"problem": {**_LIN, "gamma": 0.01}, "grid": {"t_end": 2.0, "k": 1 / 10}},
    10: {"problem": {"name": "burgers", "gamma": 0.05, "h": 1 / 40},
         "grid": {"t_end": 1.0, "k": 1 / 20}},
    11: {"problem": {"name": "burgers", "gamma": 0.05, "h": 1 / 40},
         "grid": {"t_end": 2.0, "k": 1 / 20}},
    12: {"problem": {"name": "linear-advection-diffusion", "gamma": 0.075,
                     "h": 1 / 20, "swap_roles": True},
         "grid": {"t_end": 1.0, "k": 1 / 40}},
    13: {"problem": {"name": "mhd-alfven", "v_mode": "v-split"},
         "grid": {"t_end": 0.1, "k": 1e-3}, "qoi": {"kind": "integral-v"}},
    14: {"problem": {"name": "mhd-alfven", "v_mode": "v-split"},
         "grid": {"t_end": 0.1, "k": 1e-3}, "qoi": {"kind": "integral-v"},
         "components": True},
    15: {"problem": {"name": "mhd-alfven", "v_mode": "v-implicit"},
         "grid": {"t_end": 0.1, "k": 1e-3}, "qoi": {"kind": "integral-v"}},
    16: {"problem": {"name": "mhd-alfven", "v_mode": "v-implicit"},
         "grid": {"t_end": 0.1, "k": 1e-3}, "qoi": {"kind": "integral-v"},
         "components": True},
}


def table_config(table_id: int, scheme: str) -> dict:
    """The run config for one scheme row of a published table."""
    if table_id not in TABLE_CONFIGS:
        raise ValueError(f"unknown table id {table_id}; supported: 4..16")
    base = TABLE_CONFIGS[table_id]
    doc = {"scheme": scheme,
           "problem": dict(base["problem"]),
           "grid": dict(base["grid"]),
           "qoi": dict(base.get("qoi", {"kind": "mean-left-half"}))}
    if base.get("components"):
        doc["components"] = True
    return doc


def _thread_count() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise CliError("config", f"{THREADS_ENV} must be an integer, "
                                     f"got {env!r}") from exc
        if n < 1:
            raise CliError("config", f"{THREADS_ENV} must be >= 1, got {n}")
        return n
    return len(SCHEME_ORDER)


def reproduce_table(table_id: int, out_csv: Optional[str] = None) -> list:
    """All three scheme rows of a published table, in the published order.

    Rows run concurrently (thread count from the environment); the output
    order is fixed by scheme order, not completion order.
    """
    configs = [table_config(table_id, s) for s in SCHEME_ORDER]
    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        rows = list(pool.map(run, configs))
    if out_csv:
        write_report_csv(out_csv, rows, with_components=table_id in (14, 16),
                         table_id=table_id)
    return rows


def convergence_study(problem: SplitOdeProblem, scheme, base_k: float,
                      levels: int, t_end: float,
                      newton: Optional[NewtonConfig] = None) -> list:
    """Halve k per level and report (k, worst nodal error, observed order).

    The error at each level is the max over grid nodes of the infinity
    norm against the problem's exact solution (or a tight adaptive
    integration when none is attached).  Orders are log2 ratios of
    successive errors; None where a ratio is degenerate (first level,
    or an exactly zero error).
    """
    if levels < 3:
        raise ValueError("need at least 3 levels for observed orders")
    pair = builtin(scheme) if isinstance(scheme, str) else scheme
    ratio = t_end / base_k
    n0 = int(round(ratio))
    if n0 < 1 or abs(ratio - n0) > 1e-12 * max(1.0, ratio):
        raise ValueError(f"base_k={base_k} does not divide t_end={t_end}")

    exact_at = problem.analytic
    dense = None
    if exact_at is None:
        sol = solve_ivp(lambda t, y: problem.rhs(y, t), (0.0, t_end),
                        problem.y0, method="DOP853", rtol=1e-12, atol=1e-13,
                        dense_output=True)
        if not sol.success:
            raise RuntimeError(f"reference trajectory failed: {sol.message}")
        dense = sol.sol

    out = []
    prev_err = None
    for lev in range(levels):
        n = n0 * 2 ** lev
        grid = TimeGrid.uniform(t_end, n)
        fwd = solve_forward(problem, pair, grid, newton)
        if exact_at is not None:
            ref = np.stack([exact_at(t) for t in grid.nodes])
        else:
            ref = np.stack([dense(t) for t in grid.nodes])
        err = float(np.abs(ref - fwd.nodal).max())
        order = None
        if prev_err is not None and err > 0.0 and prev_err > 0.0:
            order = float(np.log2(prev_err / err))
        out.append({"k": t_end / n, "error": err, "order": order})
        prev_err = err
    return out


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    row = run(doc)
    with_components = bool(doc.get("components", False))
    header = ["scheme", "computed_error", "effectivity", "E1", "E2", "E3"]
    if with_components:
        header += list(COMPONENT_COLUMNS)
    print(f"# config: {canonical_json(row.metadata['config'])}")
    print(",".join(header))
    print(",".join(row.csv_values(with_components)))
    return 0


def _cmd_table(args) -> int:
    rows = reproduce_table(args.id, out_csv=args.out)
    print(f"wrote {len(rows)} rows for table {args.id} to {args.out}")
    return 0


def _cmd_converge(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    cfg = RunConfig.from_dict(doc)
    problem = _build_problem(cfg)
    newton = NewtonConfig(**cfg.newton)
    rows = convergence_study(problem, cfg.scheme, cfg.grid["k"], args.levels,
                             cfg.grid["t_end"], newton)
    print(f"# config: {canonical_json(cfg.resolved())}")
    print("k,error,order")
    for r in rows:
        order = "NA" if r["order"] is None else NUM_FMT % r["order"]
        print(f"{NUM_FMT % r['k']},{NUM_FMT % r['error']},{order}")
    return 0


def _cmd_dump_tableau(args) -> int:
    pair = builtin(args.scheme)
    doc = {
        "name": pair.name,
        "order": pair.order,
        "explicit": {"c": pair.explicit.abscissae.tolist(),
                     "A": pair.explicit.coeffs.tolist(),
                     "w": pair.explicit.weights.tolist()},
        "implicit": {"d": pair.implicit.abscissae.tolist(),
                     "B": pair.implicit.coeffs.tolist(),
                     "w": pair.implicit.weights.tolist()},
    }
    print(json.dumps(doc, indent=2))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="imexest",
        description="IMEX integration with adjoint-based error estimates")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="execute one configured experiment")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("table", help="reproduce a published benchmark table")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_table)

    p = sub.add_parser("converge", help="order-of-convergence sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--levels", type=int, default=4)
    p.set_defaults(fn=_cmd_converge)

    p = sub.add_parser("dump-tableau", help="print a builtin scheme pair")
    p.add_argument("--scheme", required=True)
    p.set_defaults(fn=_cmd_dump_tableau)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surfaces unexpected failures with a label too
        print(f"error: [internal] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
