"""Command-line entry point: flat key = value config files, four subcommands
(check-mesh, solve, convergence, verify), machine-readable CSV/JSON outputs.

Exit codes: 0 success, 1 verification/verdict failure, 2 input error,
3 solver nonconvergence.  Every CSV begins with a comment line echoing the
config hash; JSON reports carry the hash as their first field.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from . import analysis, problem as problem_mod, stabilization
from .errors import ConfigurationError, MeshFormatError, MFGError, NonConvergenceError
from .fespace import P1Space, function_to_csv
from .hamiltonian import check_gradient, check_semismooth_bound, finite_control, huber_ball
from .mesh import quality_report, read_mesh, refine_red
from .solver import SolverConfig, solve_mfg

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NONCONVERGENCE = 3


@dataclass
class RunConfig:
    mesh_family: str = "xz_square"          # xz_square | acute_rhombus | file:<path>
    mesh_level: int = 4
    mesh_levels: tuple = (2, 3, 4, 5, 6)
    stabilization: str = "auto"             # auto | xz | acute | none
    allow_unstabilized: bool = False
    omega_factor: float = math.nan          # nan = family default (delta/3)
    mu: float = 1.1
    problem_kind: str = "manufactured"      # manufactured | g_one | rough | zero
    problem_exact: str = "sine_product"     # sine_product | zero
    nu: float = 1.0
    c_F: float = 1.0
    hamiltonian_kind: str = "huber"         # huber | finite
    hamiltonian_R: float = 1.0
    hamiltonian_epsilon: float = 0.0
    hamiltonian_drifts: tuple = ((1.0, 0.0), (-1.0, 0.0))
    hamiltonian_costs: tuple = (0.0, 0.0)
    tol_outer: float = 1e-9
    max_outer: int = 200
    damping: float = 0.5
    tol_newton: float = 1e-10
    max_newton: int = 30
    reference_offset: int = 2
    output_dir: str = "."
    seed: int = 0
    verify_trials: int = 200
    verify_pairs: int = 50
    verify_gradient_samples: int = 1000

    def solver_config(self):
        return SolverConfig(tol_outer=self.tol_outer, max_outer=self.max_outer,
                            damping=self.damping, tol_newton=self.tol_newton,
                            max_newton=self.max_newton)


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def _parse_levels(text):
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _parse_vectors(text):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ConfigurationError(f"expected 2D vector, got {chunk!r}")
        out.append((float(parts[0]), float(parts[1])))
    return tuple(out)


def _parse_scalars(text):
    return tuple(float(tok) for tok in text.replace(",", " ").replace(";", " ").split())


_KEYS = {
    "mesh.family": ("mesh_family", str),
    "mesh.level": ("mesh_level", int),
    "mesh.levels": ("mesh_levels", _parse_levels),
    "stabilization": ("stabilization", str),
    "stabilization.omega_factor": ("omega_factor", float),
    "stabilization.mu": ("mu", float),
    "allow_unstabilized": ("allow_unstabilized", _parse_bool),
    "problem.kind": ("problem_kind", str),
    "problem.exact": ("problem_exact", str),
    "problem.nu": ("nu", float),
    "problem.c_F": ("c_F", float),
    "hamiltonian.kind": ("hamiltonian_kind", str),
    "hamiltonian.R": ("hamiltonian_R", float),
    "hamiltonian.epsilon": ("hamiltonian_epsilon", float),
    "hamiltonian.drifts": ("hamiltonian_drifts", _parse_vectors),
    "hamiltonian.costs": ("hamiltonian_costs", _parse_scalars),
    "solver.tol_outer": ("tol_outer", float),
    "solver.max_outer": ("max_outer", int),
    "solver.damping": ("damping", float),
    "solver.tol_newton": ("tol_newton", float),
    "solver.max_newton": ("max_newton", int),
    "reference_offset": ("reference_offset", int),
    "output.dir": ("output_dir", str),
    "seed": ("seed", int),
    "verify.trials": ("verify_trials", int),
    "verify.pairs": ("verify_pairs", int),
    "verify.gradient_samples": ("verify_gradient_samples", int),
}


def parse_config(path):
    """Read a flat 'key = value' file ('#' starts a comment)."""
    config = RunConfig()
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        attr, conv = _KEYS[key]
        try:
            setattr(config, attr, conv(value))
        except (ValueError, ConfigurationError) as exc:
            raise ConfigurationError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return config


def config_echo(config):
    out = {}
    for f in dataclass_fields(config):
        value = getattr(config, f.name)
        if isinstance(value, float) and math.isnan(value):
            value = None
        out[f.name] = value
    return out


def config_hash(config):
    text = json.dumps(config_echo(config), sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def resolve_stabilization(config):
    kind = config.stabilization
    if kind == "auto":
        if config.mesh_family == "acute_rhombus":
            return "acute"
        return "xz"
    if kind == "none" and not config.allow_unstabilized:
        raise ConfigurationError(
            "stabilization = none voids the maximum-principle guarantees; "
            "set allow_unstabilized = true to override")
    if kind not in ("xz", "acute", "none"):
        raise ConfigurationError(f"unknown stabilization {kind!r}")
    return kind


def build_hamiltonian(config):
    if config.hamiltonian_kind == "huber":
        return huber_ball(config.hamiltonian_R)
    if config.hamiltonian_kind == "finite":
        return finite_control(config.hamiltonian_drifts, config.hamiltonian_costs,
                              smoothing=config.hamiltonian_epsilon)
    raise ConfigurationError(f"unknown hamiltonian kind {config.hamiltonian_kind!r}")


def build_problem(config):
    hamiltonian = build_hamiltonian(config)
    kind = config.problem_kind
    domain = ("acute_rhombus" if config.mesh_family == "acute_rhombus"
              else "xz_square")
    if kind == "manufactured":
        if config.problem_exact == "zero":
            return problem_mod.make_zero_problem(config.nu, hamiltonian, config.c_F,
                                                 domain=domain)
        if config.problem_exact != "sine_product":
            raise ConfigurationError(
                f"unknown exact-solution selector {config.problem_exact!r}")
        return problem_mod.make_manufactured(config.nu, hamiltonian, config.c_F,
                                             domain=domain)
    if kind == "g_one":
        return problem_mod.make_g_one_problem(config.nu, hamiltonian, config.c_F,
                                              domain=domain)
    if kind == "rough":
        if domain != "xz_square":
            raise ConfigurationError("the rough instance is defined on the unit square")
        return problem_mod.make_rough_density_problem(config.nu, hamiltonian, config.c_F)
    if kind == "zero":
        return problem_mod.make_zero_problem(config.nu, hamiltonian, config.c_F,
                                             domain=domain)
    raise ConfigurationError(f"unknown problem kind {kind!r}")


def build_mesh(config, level):
    family = config.mesh_family
    if family.startswith("file:"):
        mesh = read_mesh(family[5:])
        for _ in range(level):
            mesh = refine_red(mesh)
        return mesh
    if family not in analysis.FAMILY_ROOTS:
        raise ConfigurationError(f"unknown mesh family {family!r}")
    return analysis.mesh_hierarchy(family, level)[level]


def _omega(config):
    return None if math.isnan(config.omega_factor) else config.omega_factor


def _write_json(payload, path, digest):
    ordered = {"config_sha256": digest}
    ordered.update(payload)
    with open(path, "w") as fh:
        json.dump(ordered, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return str(value)


# -- commands -------------------------------------------------------------------

def cmd_check_mesh(config):
    mesh = build_mesh(config, config.mesh_level)
    report = quality_report(mesh)
    kind = resolve_stabilization(config)
    if kind == "xz":
        condition_ok = report.xz_satisfied
    elif kind == "acute":
        condition_ok = report.acute_theta > 0.0
    else:
        condition_ok = True
    payload = report.as_dict()
    payload.update({
        "level": config.mesh_level,
        "num_vertices": mesh.num_vertices,
        "num_triangles": mesh.num_triangles,
        "num_edges": mesh.num_edges,
        "stabilization": kind,
        "condition_ok": condition_ok,
    })
    print(json.dumps({"config_sha256": config_hash(config), **payload},
                     indent=2, default=_json_default))
    return EXIT_OK if condition_ok else EXIT_VERIFY_FAILED


def cmd_solve(config):
    digest = config_hash(config)
    mesh = build_mesh(config, config.mesh_level)
    space = P1Space(mesh)
    prob = build_problem(config)
    kind = resolve_stabilization(config)
    tensor = analysis.tensor_for(mesh, kind, prob.hamiltonian.L_H, prob.nu,
                                 omega_factor=_omega(config), mu=config.mu)
    os.makedirs(config.output_dir, exist_ok=True)

    telemetry = {
        "config": config_echo(config),
        "stabilization": kind,
        "level": config.mesh_level,
        "ndof": space.ndof,
    }
    # wall time goes to stdout, never into the files: identical config + seed
    # must reproduce the outputs byte for byte
    start = time.perf_counter()
    try:
        sol = solve_mfg(space, prob, tensor, config.solver_config())
    except NonConvergenceError as exc:
        telemetry.update({"converged": False, "history": exc.history,
                          "error": str(exc)})
        _write_json(telemetry, os.path.join(config.output_dir, "telemetry.json"), digest)
        return EXIT_NONCONVERGENCE
    elapsed = time.perf_counter() - start

    telemetry.update({
        "converged": True,
        "outer_iters": sol.outer_iters,
        "newton_iters_total": sol.newton_iters_total,
        "residual1_dual": sol.residual1_dual,
        "residual2_dual": sol.residual2_dual,
        "history": sol.history,
        "min_density": float(sol.m.coeffs.min(initial=0.0)),
    })
    function_to_csv(sol.u, os.path.join(config.output_dir, "solution_u.csv"),
                    header_comment=f"config {digest}")
    function_to_csv(sol.m, os.path.join(config.output_dir, "solution_m.csv"),
                    header_comment=f"config {digest}")
    _write_json(telemetry, os.path.join(config.output_dir, "telemetry.json"), digest)
    print(f"solved level {config.mesh_level} ({space.ndof} dofs) in {elapsed:.2f}s: "
          f"{sol.outer_iters} outer sweeps, residuals "
          f"({sol.residual1_dual:.2e}, {sol.residual2_dual:.2e})")
    return EXIT_OK


def _convergence_verdicts(config, table):
    verdicts = {}
    if config.problem_kind in ("manufactured", "zero"):
        if config.problem_kind == "manufactured" and config.problem_exact == "sine_product":
            for fname, label in (("err_u_h1", "eoc_u_H1"), ("err_m_h1", "eoc_m_H1")):
                eoc = table.finest_eoc(fname)
                verdicts[label] = {"value": eoc, "window": [0.85, 1.15],
                                   "pass": bool(0.85 <= eoc <= 1.15)}
            for fname, label in (("err_u_l2", "eoc_u_L2"), ("err_m_l2", "eoc_m_L2")):
                eoc = table.finest_eoc(fname)
                verdicts[label] = {"value": eoc, "window": [1.7, 2.3],
                                   "pass": bool(1.7 <= eoc <= 2.3)}
    elif config.problem_kind == "rough":
        # the rough instance mixes rates pre-asymptotically, so it is judged on
        # the least-squares slope over all levels
        eoc_u = table.fitted_eoc("err_u_h1")
        eoc_m_l2 = table.fitted_eoc("err_m_l2")
        eoc_m_h1 = table.fitted_eoc("err_m_h1")
        verdicts["eoc_u_H1"] = {"value": eoc_u, "window": [0.8, 1.2],
                                "pass": bool(0.8 <= eoc_u <= 1.2)}
        verdicts["eoc_m_L2"] = {"value": eoc_m_l2, "window": [0.8, 1.2],
                                "pass": bool(0.8 <= eoc_m_l2 <= 1.2)}
        verdicts["eoc_m_H1_below_u"] = {
            "value": eoc_u - eoc_m_h1, "window": [0.2, math.inf],
            "pass": bool(eoc_u - eoc_m_h1 >= 0.2)}
    return verdicts


def cmd_convergence(config):
    if len(config.mesh_levels) < 3:
        raise ConfigurationError("EOC columns need at least 3 levels")
    digest = config_hash(config)
    prob = build_problem(config)
    kind = resolve_stabilization(config)
    family = config.mesh_family
    root = None
    if family.startswith("file:"):
        root = read_mesh(family[5:])
        family = "file"
    table = analysis.run_convergence_study(
        prob, family, config.mesh_levels, kind, cfg=config.solver_config(),
        omega_factor=_omega(config), mu=config.mu,
        reference_offset=config.reference_offset, root=root)

    os.makedirs(config.output_dir, exist_ok=True)
    table.to_csv(os.path.join(config.output_dir, "eoc.csv"),
                 header_comment=f"config {digest}")
    verdicts = _convergence_verdicts(config, table)
    report = {
        "config": config_echo(config),
        "stabilization": kind,
        "records": table.rows(),
        "verdicts": verdicts,
        "all_pass": bool(all(v["pass"] for v in verdicts.values())) if verdicts else True,
    }
    _write_json(report, os.path.join(config.output_dir, "report.json"), digest)
    return EXIT_OK if report["all_pass"] else EXIT_VERIFY_FAILED


def cmd_verify(config):
    digest = config_hash(config)
    prob = build_problem(config)
    kind = resolve_stabilization(config)
    mesh = build_mesh(config, config.mesh_level)
    space = P1Space(mesh)
    tensor = analysis.tensor_for(mesh, kind, prob.hamiltonian.L_H, prob.nu,
                                 omega_factor=_omega(config), mu=config.mu)

    results = {}
    h1_report = stabilization.verify_h1(tensor, mesh)
    results["h1_tensor"] = {"pass": h1_report.psd_ok,
                            "c_d_observed": h1_report.c_d_observed,
                            "min_eigenvalue": h1_report.min_eigenvalue}

    dmp_ok = stabilization.verify_h2_dmp(space, prob.nu, tensor,
                                         L_H=prob.hamiltonian.L_H,
                                         trials=config.verify_trials,
                                         seed=config.seed)
    results["h2_dmp"] = {"pass": bool(dmp_ok), "trials": config.verify_trials}

    # the L2 monotonicity inequality is sampled around a tightly solved state
    # of the certified-nonnegative instance
    g_one = problem_mod.make_g_one_problem(config.nu, prob.hamiltonian, config.c_F,
                                           domain=prob.domain)
    tight = SolverConfig(tol_outer=1e-12, max_outer=max(config.max_outer, 400),
                         damping=config.damping, tol_newton=1e-12,
                         max_newton=config.max_newton)
    sol = solve_mfg(space, g_one, tensor, tight)
    mono_ok, worst = analysis.check_l2_monotonicity_inequality(
        space, g_one, tensor, sol, pairs=config.verify_pairs, seed=config.seed)
    results["l2_monotonicity"] = {"pass": bool(mono_ok), "worst_violation": worst,
                                  "pairs": config.verify_pairs}
    results["dmp_at_solution"] = {
        "pass": bool(analysis.verify_dmp_at_solution(sol, g_one)),
        "min_density": float(sol.m.coeffs.min(initial=0.0))}

    if prob.hamiltonian.smooth:
        grad_err = check_gradient(prob.hamiltonian,
                                  samples=config.verify_gradient_samples,
                                  seed=config.seed)
        results["gradient_check"] = {"pass": bool(grad_err < 1e-5),
                                     "max_relative_error": grad_err}
        ratio_here = check_semismooth_bound(prob.hamiltonian, space,
                                            pairs=20, seed=config.seed)
        finer = P1Space(refine_red(mesh))
        ratio_finer = check_semismooth_bound(prob.hamiltonian, finer,
                                             pairs=20, seed=config.seed)
        hi = max(ratio_here, ratio_finer)
        lo = max(min(ratio_here, ratio_finer), 1e-300)
        results["semismooth_ratio"] = {"pass": bool(hi / lo <= 2.0),
                                       "ratio_here": ratio_here,
                                       "ratio_finer": ratio_finer}

    all_pass = all(entry["pass"] for entry in results.values())
    report = {"config": config_echo(config), "stabilization": kind,
              "results": results, "all_pass": bool(all_pass)}
    os.makedirs(config.output_dir, exist_ok=True)
    _write_json(report, os.path.join(config.output_dir, "report.json"), digest)
    print(json.dumps({"all_pass": all_pass}, indent=2))
    return EXIT_OK if all_pass else EXIT_VERIFY_FAILED


_COMMANDS = {
    "check-mesh": cmd_check_mesh,
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "verify": cmd_verify,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mfgfem",
        description="Monotone stabilized P1 FEM for stationary mean field games")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("config", help="path to a flat key = value config file")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
        return _COMMANDS[args.command](config)
    except (ConfigurationError, MeshFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except NonConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except MFGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())
