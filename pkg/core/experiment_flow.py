# core/experiment_flow.py
"""
Experiment Flow Orchestration Module.

This module provides one function per CLI subcommand, all sharing the same
setup path:

Setup: Experiment document → objects
    config.Config.load() (defaults ← file ← CLI overrides, schema-checked)
         ↓
    Config.build_speed() → SpeedField on the DiskGrid
         ↓
    Config.build_params() → OpticalParams (admissibility checked)
         ↓
    TransportSolver with the document's iteration settings

Sources: source.case selects the fixture
    "1"       f0 + X_perp f_perp, gauge potential of degree m - 1
    "2"       vector field (modes +-1)
    "iso1"    isotropic harness, representative known exactly
    "iso2"    isotropic harness with a harmonic one-form part
    "general" synthetic gauge harness with h_k up to source.degree

Subcommands:
    selftest       → invariant suites table
    geometry       → simplicity report, C0, Santalo check, Gamma_- fan, sample geodesic
    forward        → u exported per mode
    measure        → boundary data on Gamma_+
    reconstruct    → Step 1 + Step 2 + finisher, errors against the fixture
    gauge-check    → |M f| / |f| for pure gauges (and the isotropic identity)
    descent-probe  → degree of each source iterate, induction bounds, trace counterexample table
    render         → grayscale bitmaps of the source, u and the data
"""
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd

from config import Config
from core.fiber_calculus import (
    FiberField,
    OpticalParams,
    apply_X_perp,
    l2_norm,
    numerical_degree,
    random_field,
)
from core.geometry import (
    PhasePoint,
    SpeedField,
    convexity_constant,
    flow,
    phase_space_integrate,
    santalo_integrate,
    simplicity_check,
)
from core.invariant_suites import (
    SuiteContext,
    case_errors,
    random_admissible_params,
    random_polynomial,
    run_suites,
)
from core.reconstruction import (
    GaugeRepresentative,
    HarnessResult,
    case_harness,
    degree_descent_probe,
    gauge_generate,
    gauge_theorem_check,
    gauge_verify,
    isotropic_harness,
    reconstruct,
    synthetic_gauge_harness,
)
from core.transport import TransportSolver, build_fan, trace_counterexample
from storage.fan_store import write_fan
from storage.field_store import write_field, write_path
from storage.models import ArtifactStore
from utils.helpers import get_rng, relative_error

logger = logging.getLogger(__name__)

# =============================================================================
# Setup
# =============================================================================

@dataclass
class ExperimentContext:
    """Objects built once from the effective experiment document."""
    document: Dict[str, Any]
    speed: SpeedField
    params: OpticalParams
    solver: TransportSolver
    rng: np.random.Generator

    @property
    def case(self) -> str:
        return self.document["source"]["case"]

    @property
    def m(self) -> int:
        return max(1, self.params.m_k)


def build_context(document: Dict[str, Any]) -> ExperimentContext:
    """Build speed, parameters and solver from an effective document.

    Isotropic cases keep only the zeroth kernel mode.
    """
    speed = Config.build_speed(document)
    params = Config.build_params(document, speed)
    if document["source"]["case"] in ("iso1", "iso2") and params.m_k > 0:
        logger.warning("Case %s needs an isotropic kernel; dropping modes |n| >= 1",
                       document["source"]["case"])
        params = OpticalParams.isotropic(params.a, params.k0, params.delta)
    solver = TransportSolver(speed, params, **Config.solver_options(document))
    return ExperimentContext(document, speed, params, solver, get_rng(document["seed"]))


# =============================================================================
# Sources
# =============================================================================

def _analytic(speed: SpeedField, k: int, coefficients) -> np.ndarray:
    """``c^k * sum_j a_j z^j`` on the mask (holomorphic in z, so in H_k)."""
    grid = speed.grid
    z = (grid.x + 1j * grid.y) / grid.radius
    values = sum(coef * z ** j for j, coef in enumerate(coefficients))
    return np.where(grid.mask, speed.c ** k * values, 0.0)


def build_harness(ctx: ExperimentContext) -> HarnessResult:
    """Fixture for ``source.case`` with amplitudes from the document.

    ``harness.extra['truth']`` holds the quantities the reconstruction is
    scored against.
    """
    source = ctx.document["source"]
    speed, params, rng = ctx.speed, ctx.params, ctx.rng
    grid = speed.grid
    shape = grid.shape
    amplitude = source["amplitude"]
    degree = source["degree"]
    case = ctx.case

    if case in ("1", "2"):
        p = random_field(speed, ctx.m - 1, rng, zero_boundary=True, scale=source["gauge_amplitude"])
        if case == "1":
            f0 = amplitude * random_polynomial(speed, rng, degree)
            f_perp = np.where(
                grid.mask,
                source["perp_amplitude"] * random_polynomial(speed, rng, degree) + source["perp_constant"],
                0.0,
            )
            perp = apply_X_perp(FiberField.from_modes({0: f_perp.astype(complex)}, shape, True), speed)
            f_true = FiberField.from_modes({0: f0.astype(complex)}, shape, True) + perp
            truth = {"f0": f0, "f_perp": f_perp}
        else:
            f_true = random_field(speed, 1, rng, poly_degree=degree, scale=amplitude)
            f_true.set_mode(0, np.zeros(shape, dtype=complex))
            truth = {"f1": f_true}
        harness = case_harness(f_true, p, params, speed, ctx.solver)
    elif case == "iso1":
        harness = isotropic_harness("iso1", {
            "f0": amplitude * random_polynomial(speed, rng, degree),
            "f_perp": source["perp_amplitude"] * random_polynomial(speed, rng, degree, zero_boundary=True),
        }, params, speed, ctx.solver)
        truth = {"f0": harness.extra["f0"]}
    elif case == "iso2":
        omega = source["harmonic_amplitude"] * _analytic(speed, 1, rng.standard_normal(2))
        harness = isotropic_harness("iso2", {
            "f0t": amplitude * random_polynomial(speed, rng, degree, zero_boundary=True),
            "f_perp_t": source["perp_amplitude"] * random_polynomial(speed, rng, degree, zero_boundary=True),
            "omega_plus": omega,
            "omega_minus": np.conj(omega),
        }, params, speed, ctx.solver)
        truth = {"f1": harness.f}
    elif case == "general":
        h_k = {}
        for k in range(1, degree + 1):
            plus = source["harmonic_amplitude"] * _analytic(speed, k, rng.standard_normal(2))
            h_k[k] = (plus, np.conj(plus))
        h = GaugeRepresentative(
            (amplitude * random_polynomial(speed, rng, 2)).astype(complex),
            (source["perp_amplitude"] * random_polynomial(speed, rng, 2, zero_boundary=True)).astype(complex),
            h_k,
            True,
        )
        p = random_field(speed, ctx.m - 1, rng, zero_boundary=True, scale=source["gauge_amplitude"])
        harness = synthetic_gauge_harness(p, h, params, speed, ctx.solver)
        truth = {"f": harness.f}
    else:
        raise ValueError(f"unknown source case {case!r}")
    harness.extra["truth"] = truth
    logger.info("Built case %s source (degree %d)", case, harness.f.degree)
    return harness


def _maybe_render(ctx: ExperimentContext, store: ArtifactStore, force: bool = False, **items) -> None:
    """Write |mode| and arg(mode) images for modes 0..2 and |value| images for fans."""
    if not (force or ctx.document["output"]["render"]):
        return
    from ui.render import render_fan, render_mode

    for name, item in items.items():
        if isinstance(item, FiberField):
            for n in range(0, min(item.order, 2) + 1):
                for kind in ("abs", "arg"):
                    path = render_mode(item, n, ctx.speed, store.path(f"{name}_mode{n:+d}_{kind}.png"), kind)
                    store.register(path, "image")
        else:
            store.register(render_fan(item, store.path(f"{name}_abs.png")), "image")


# =============================================================================
# Subcommands
# =============================================================================

def run_selftest(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    domain = ctx.document["domain"]
    suite_ctx = SuiteContext(
        grid_n=domain["grid_n"],
        boundary_n=domain["boundary_n"],
        dir_n=domain["dir_n"],
        seed=ctx.document["seed"],
        trials=ctx.document["probe"]["trials"],
    )
    table = run_suites(suite_ctx)
    store.write_frame("selftest.csv", table, kind="suites")
    passed = bool(table["passed"].all())
    summary = {"passed": passed, "suites": int(len(table)), "failed": table.loc[~table["passed"], "suite"].tolist()}
    store.record("selftest", summary)
    return summary


def _unit_density(x, y, theta):
    return np.ones_like(np.asarray(x, dtype=float))


def run_geometry(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    speed = ctx.speed
    report = simplicity_check(speed)
    summary: Dict[str, Any] = {"simplicity": report.to_dict()}
    if report.non_trapping and report.convex:
        summary["convexity_constant"] = convexity_constant(speed)
    santalo = santalo_integrate(_unit_density, speed)
    direct = phase_space_integrate(_unit_density, speed)
    summary["santalo"] = {"fan_integral": santalo, "phase_space_integral": direct,
                          "relative_gap": abs(santalo - direct) / abs(direct)}
    write_fan(store, "gamma_minus", build_fan(speed, "-"))
    write_path(store, "geodesic_center", flow(PhasePoint(0.0, 0.0, 0.0), speed))
    store.record("geometry", summary)
    return summary


def run_forward(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    harness = build_harness(ctx)
    result = ctx.solver.forward(harness.f)
    binary = ctx.document["output"]["binary"]
    write_field(store, "source", harness.f, ctx.speed, binary)
    write_field(store, "u", result.u, ctx.speed, binary)
    summary = {
        "iterations": result.iterations,
        "final_residual": result.residuals[-1] if result.residuals else 0.0,
        "u_degree": numerical_degree(result.u, ctx.speed, ctx.solver.degree_tol),
        "u_norm": l2_norm(result.u, ctx.speed),
    }
    store.write_frame("residuals.csv", pd.DataFrame({"iteration": np.arange(len(result.residuals)),
                                                     "residual": result.residuals}), kind="table")
    _maybe_render(ctx, store, source=harness.f, u=result.u)
    store.record("forward", summary)
    return summary


def run_measure(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    harness = build_harness(ctx)
    write_field(store, "source", harness.f, ctx.speed, ctx.document["output"]["binary"])
    write_fan(store, "data", harness.data)
    summary = {"entries": harness.data.size, "data_norm": harness.data.norm()}
    _maybe_render(ctx, store, data=harness.data)
    store.record("measure", summary)
    return summary


def reconstruction_errors(ctx: ExperimentContext, harness: HarnessResult, result) -> Dict[str, float]:
    """Relative errors of a reconstruction against its fixture.

    ``general`` sources are only determined up to gauge, so they are scored
    by the relative boundary misfit of ``M f_rec`` against the data.
    """
    truth = harness.extra["truth"]
    speed = ctx.speed
    case = ctx.case
    if case in ("1", "2"):
        return case_errors(case, result, truth, speed)
    weights = speed.grid.node_weights / speed.nodes(speed.c) ** 2
    if case == "iso1":
        return {"f0": relative_error(speed.nodes(result.parts["f0"]), speed.nodes(truth["f0"]), weights)}
    if case == "iso2":
        est = np.concatenate([speed.nodes(result.source.padded(1).mode(n)) for n in (1, -1)])
        ref = np.concatenate([speed.nodes(truth["f1"].padded(1).mode(n)) for n in (1, -1)])
        return {"f1": relative_error(est, ref, np.concatenate([weights, weights]))}
    predicted = ctx.solver.measure(result.source)
    misfit = harness.data.with_values(predicted.value - harness.data.value).norm()
    return {"data_misfit": misfit / max(harness.data.norm(), np.finfo(float).tiny)}


def run_reconstruct(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    harness = build_harness(ctx)
    recon_cfg = ctx.document["reconstruction"]
    backend = recon_cfg["backend"]
    lsq = Config.lsq_options(ctx.document) if backend == "lsq" else {}
    result = reconstruct(
        harness.data, ctx.params, ctx.speed, ctx.case,
        backend=backend,
        truth=harness.truth,
        solver=ctx.solver,
        consistency_tol=ctx.document["solver"]["consistency_tol"],
        **lsq,
    )
    write_field(store, "reconstruction", result.source, ctx.speed, ctx.document["output"]["binary"])
    errors = reconstruction_errors(ctx, harness, result)
    summary = {
        "case": ctx.case,
        "backend": backend,
        "errors": errors,
        "diagnostics": dict(result.diagnostics),
        "representative": dict(result.representative.diagnostics),
    }
    _maybe_render(ctx, store, reconstruction=result.source)
    store.record("reconstruct", summary)
    logger.info("Reconstruction errors: %s", ", ".join(f"{k}={v:.3g}" for k, v in errors.items()))
    return summary


def run_gauge_check(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    trials = ctx.document["probe"]["trials"]
    rows = []
    for trial in range(trials):
        p = random_field(ctx.speed, trial % ctx.m, ctx.rng, zero_boundary=True,
                         scale=ctx.document["source"]["gauge_amplitude"])
        rows.append({"trial": trial, "potential_degree": p.degree,
                     "ratio": gauge_verify(gauge_generate(p, ctx.params, ctx.speed), ctx.params, ctx.speed, ctx.solver)})
    table = pd.DataFrame(rows, columns=["trial", "potential_degree", "ratio"])
    store.write_frame("gauge_check.csv", table, kind="table")
    summary: Dict[str, Any] = {"trials": trials, "max_ratio": float(table["ratio"].max())}
    if ctx.params.m_k == 0:
        p0 = random_polynomial(ctx.speed, ctx.rng, 2, zero_boundary=True).astype(complex)
        summary["isotropic_identity_gap"] = gauge_theorem_check(p0, ctx.params, ctx.speed)
    store.record("gauge_check", summary)
    return summary


def run_descent_probe(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    probe = ctx.document["probe"]
    params = random_admissible_params(ctx.speed, ctx.rng, kernel_degree=probe["kernel_degree"],
                                      delta=ctx.params.delta)
    report = degree_descent_probe(params, ctx.speed, probe["source_degree"], rng=ctx.rng,
                                  degree_tol=ctx.solver.degree_tol)
    store.write_frame("descent.csv", report.stages, kind="table")
    store.write_frame("descent_bounds.csv", report.bounds, kind="table")
    trace = trace_counterexample(probe["eta"], levels=probe["levels"],
                                 radius=ctx.speed.domain.radius)
    store.write_frame("trace_counterexample.csv", trace, kind="table")
    summary = {
        "regime": report.regime,
        "monotone": report.monotone,
        "iterates": len(report.stages),
        "initial_degree": int(report.degrees[0]) if len(report.stages) else None,
        "terminal_degree": report.terminal_degree,
        "within_bound": report.within_bound,
        "trace_growth": float(trace["trace_integral"].iloc[-1] / trace["trace_integral"].iloc[0]),
    }
    store.record("descent_probe", summary)
    return summary


def run_render(ctx: ExperimentContext, store: ArtifactStore) -> Dict[str, Any]:
    harness = build_harness(ctx)
    _maybe_render(ctx, store, force=True, source=harness.f, u=harness.u, data=harness.data)
    summary = {"images": sum(1 for item in store.artifacts if item["kind"] == "image")}
    store.record("render", summary)
    return summary


HANDLERS: Dict[str, Callable[[ExperimentContext, ArtifactStore], Dict[str, Any]]] = {
    "selftest": run_selftest,
    "geometry": run_geometry,
    "forward": run_forward,
    "measure": run_measure,
    "reconstruct": run_reconstruct,
    "gauge-check": run_gauge_check,
    "descent-probe": run_descent_probe,
    "render": run_render,
}


def run_subcommand(subcommand: str, document: Dict[str, Any], store: ArtifactStore,
                   ctx: Optional[ExperimentContext] = None) -> Dict[str, Any]:
    """Dispatch one subcommand inside an open ``store.run()`` block."""
    if subcommand not in HANDLERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    ctx = ctx or build_context(document)
    logger.info("Running %s (case %s, grid %d)", subcommand, ctx.case, document["domain"]["grid_n"])
    return HANDLERS[subcommand](ctx, store)
