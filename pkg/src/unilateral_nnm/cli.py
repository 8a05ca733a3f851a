"""Command-line entry point: ``python -m unilateral_nnm <command> [options]``.

Every command reads an optional JSON config (``--config``), lets a few
flags and ``--set key=value`` pairs override it, and writes CSV/JSON files
into ``--out``.  JSON output has sorted keys and floats printed with 17
significant digits, so the same config always gives the same bytes.

Exit codes: 0 ok, 2 invalid input, 3 resonance, 4 integration failure,
5 continuation failure, 6 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import analysis as an
from .fourier_kernels import DomainError, rectified_cos_coeffs
from .integrator import IntegrationError, energy_along, simulate
from .ndof_expansion import (
    UnsupportedCaseError,
    expand_mode_second_order,
    first_order_all_modes,
    periodic_initial_amplitudes,
)
from .nnm_solver import ContinuationError, NNMError, continue_nnm, orbit
from .one_dof import CriticalCaseError, DegenerateAmplitudeError, exact_frequency, expand
from .system import OscillatorSystem, ResonanceError, ValidationError, preset
from .validation import run_suite

EXIT_OK, EXIT_VALIDATION, EXIT_RESONANCE, EXIT_INTEGRATION, EXIT_CONTINUATION, EXIT_ACCEPTANCE = 0, 2, 3, 4, 5, 6


# ---------------------------------------------------------------- deterministic JSON

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        items = sorted(x.items(), key=lambda kv: str(kv[0]))
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in items) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj) -> str:
    """JSON text with sorted keys and 17-significant-digit floats."""
    return _fmt(obj) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------- configuration

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a JSON object")
    if args.preset:
        cfg["preset"] = args.preset
    if args.tol is not None:
        cfg["tol"] = args.tol
    if getattr(args, "eps", None) is not None:
        cfg["eps"] = args.eps
    for item in args.set or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip()] = _parse_value(v)
    tol = cfg.get("tol", 1e-10)
    if not (isinstance(tol, (int, float)) and 1e-13 <= tol <= 1e-3):
        raise ValidationError("tol must lie in [1e-13, 1e-3]")
    return cfg


def system_from_config(cfg) -> OscillatorSystem:
    eps = float(cfg.get("eps", 0.0))
    if "system" in cfg:
        d = dict(cfg["system"])
        d.setdefault("eps", eps)
        return OscillatorSystem.from_dict(d)
    if "preset" in cfg:
        return preset(cfg["preset"], eps)
    if "omega0" in cfg:
        return OscillatorSystem.one_dof(float(cfg["omega0"]), eps, float(cfg.get("a", 1.0)), float(cfg.get("b", 0.0)))
    raise ValidationError("no system given: use 'preset', 'system' or 'omega0'")


def _vec(cfg, key, n, default=0.0):
    v = cfg.get(key)
    if v is None:
        return np.full(n, default, dtype=float)
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (n,):
        raise ValidationError(f"{key} must have {n} entries")
    return arr


def _series_dict(ser):
    return {"coefficients": ser.coefficients.tolist(), "tail_bound": ser.tail_bound}


# ---------------------------------------------------------------- commands

_ONE_DOF_PRESETS = {"1dof-homogeneous": 0.0, "1dof-offset": 0.5, "1dof-critical": 1.0}


def cmd_expand1dof(cfg, out):
    if cfg.get("preset") in _ONE_DOF_PRESETS:
        cfg.setdefault("b", _ONE_DOF_PRESETS[cfg["preset"]])
    omega0 = float(cfg.get("omega0", 1.0))
    a = float(cfg.get("a", 1.0))
    b = float(cfg.get("b", 0.0))
    a0 = float(cfg.get("a0", 1.0))
    a1 = float(cfg.get("a1", 0.0))
    eps = float(cfg.get("eps", 0.1))
    n_max = int(cfg.get("n_max", 400))
    if cfg.get("require_contact") and a0 != 0:
        rectified_cos_coeffs(b / abs(a0), 1)  # raises DomainError verbatim when |c| > 1
    ex = expand(omega0, a, b, a0, a1, n_max)
    doc = {
        "case": ex.case_tag,
        "omega0": ex.omega0,
        "omega1": ex.omega1,
        "omega2": ex.omega2,
        "alpha1": ex.alpha1,
        "alpha2": ex.alpha2,
        "a": a,
        "b": b,
        "a0": a0,
        "a1": a1,
        "d": ex.v1_series.coefficients.tolist(),
        "tail_bound": ex.tail_bound,
    }
    if ex.case_tag != "no_contact":
        doc["validity_horizon_order"] = "eps^-1/2" if ex.case_tag == "critical" else "eps^-1"
    write_json(os.path.join(out, "expand1dof.json"), doc)
    s = np.linspace(0.0, 2 * math.pi, int(cfg.get("n_points", 257)))
    v0 = ex.v0(s)
    write_csv(os.path.join(out, "expand1dof_reconstruction.csv"), ["s", "v0", "v0_plus_eps_v1"],
              zip(s, v0, v0 + eps * ex.v1(s)))
    return doc


def cmd_expandndof(cfg, out):
    system = system_from_config(cfg)
    mode = int(cfg.get("mode", 0))
    a0 = float(cfg.get("a0", 1.0))
    n_max = int(cfg.get("n_max", 400))
    ex = expand_mode_second_order(system, mode, a0, float(cfg.get("a1", 0.0)), n_max)
    doc = {
        "system": system.to_dict(),
        "mode": mode,
        "omega0": ex.omega0,
        "omega1": ex.omega1,
        "omega2": ex.omega2,
        "alpha1": ex.alpha1,
        "alpha2": ex.alpha2,
        "a0": ex.a0,
        "a1": ex.a1,
        "a_k": ex.a_k.tolist(),
        "series": [_series_dict(s) for s in ex.v1_per_mode],
    }
    if np.all(system.B == 0) or cfg.get("closed_form_amplitudes"):
        try:
            doc["a_k_closed_form"] = periodic_initial_amplitudes(system, mode, a0, n_max).tolist()
        except UnsupportedCaseError:
            pass
    if "amplitudes" in cfg:
        fo = first_order_all_modes(system, _vec(cfg, "amplitudes", system.n))
        doc["all_modes"] = {
            "amplitudes": list(map(float, cfg["amplitudes"])),
            "lambda1": fo.lambda1_corrections.tolist(),
            "lambda_eps": fo.lambda_eps.tolist(),
            "converged": fo.converged,
        }
    write_json(os.path.join(out, "expandndof.json"), doc)
    return doc


def cmd_simulate(cfg, out):
    system = system_from_config(cfg)
    n = system.n
    U0 = _vec(cfg, "U0", n, 0.0) if "U0" in cfg else np.eye(n)[0] * float(cfg.get("a0", 1.0))
    V0 = _vec(cfg, "V0", n)
    t_end = float(cfg.get("t_end", 20 * math.pi / system.lambdas.min()))
    tol = float(cfg.get("tol", 1e-10))
    n_samples = cfg.get("n_samples")
    t_eval = np.linspace(0.0, t_end, int(n_samples)) if n_samples else None
    ts = simulate(system, U0, V0, t_end, tol, t_eval=t_eval)
    ts.write(os.path.join(out, "timeseries.csv"), os.path.join(out, "timeseries.json"))
    E = energy_along(ts, cfg.get("energy_functional", "with_contact_potential"))
    drift = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))
    doc = {"n_events": len(ts.events), "n_steps": ts.n_steps, "energy_drift": drift}
    try:
        doc["period"] = an.measure_period(ts, int(cfg.get("component", 0)))
    except an.InsufficientDataError:
        doc["period"] = None
    if cfg.get("spectrum"):
        sp = an.spectrum(ts, int(cfg.get("component", 0)), cfg.get("window", "hann"),
                         n_samples=int(cfg.get("fft_samples", 4096)))
        sp.to_csv(os.path.join(out, "spectrum.csv"))
    write_json(os.path.join(out, "simulate_report.json"), doc)
    return doc


def cmd_nnm(cfg, out):
    system = system_from_config(cfg)
    mode = int(cfg.get("mode", 0))
    eps_start = float(cfg.get("eps_start", 0.01))
    eps_end = float(cfg.get("eps_end", 0.1))
    if "c" in cfg:
        c = float(cfg["c"])
    elif "energy" in cfg:
        c = float(cfg["energy"]) / float(cfg.get("energy_eps", eps_end))
    else:
        c = 1.0
    branch = continue_nnm(system, mode, c, eps_start, eps_end, float(cfg.get("delta0", 0.01)),
                          float(cfg.get("tol", 1e-10)))
    branch.to_csv(os.path.join(out, "branch.csv"))
    doc = {"complete": branch.complete, "diagnostic": branch.diagnostic,
           "points": [r.to_dict() for r in branch]}
    if cfg.get("orbits"):
        spp = int(cfg.get("samples_per_period", 256))
        for i, r in enumerate(branch):
            orb = orbit(system.with_eps(r.eps), r, 1, spp)
            orb.write(os.path.join(out, f"orbit_{i:03d}.csv"))
    if cfg.get("purity", True) and branch:
        r = branch[-1]
        orb = orbit(system.with_eps(r.eps), r, 16, 64)
        doc["purity_db"] = an.harmonic_purity(orb.positions[:, mode], 64)
    write_json(os.path.join(out, "branch.json"), doc)
    if not branch.complete:
        raise ContinuationError(branch.diagnostic)
    return doc


def cmd_spectrum(cfg, out):
    comp = int(cfg.get("component", 0))
    if "input" in cfg:
        data = np.loadtxt(cfg["input"], delimiter=",", skiprows=1, ndmin=2)
        t, x = data[:, 0], data[:, 1 + comp]
        # resample on a uniform grid if needed
        if not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
            tu = np.linspace(t[0], t[-1], t.size)
            x = np.interp(tu, t, x)
            t = tu
        sp = an.spectrum(x, window=cfg.get("window", "hann"), t=t)
    else:
        system = system_from_config(cfg)
        U0 = _vec(cfg, "U0", system.n, 0.0) if "U0" in cfg else np.eye(system.n)[0] * float(cfg.get("a0", 1.0))
        t_end = float(cfg.get("t_end", 200 * math.pi / system.lambdas.min()))
        ts = simulate(system, U0, _vec(cfg, "V0", system.n), t_end, float(cfg.get("tol", 1e-10)))
        sp = an.spectrum(ts, comp, cfg.get("window", "hann"), n_samples=int(cfg.get("fft_samples", 16384)))
    sp.to_csv(os.path.join(out, "spectrum.csv"))
    doc = {"peaks": [{"frequency": f, "amplitude": a} for f, a in sp.peaks(int(cfg.get("n_peaks", 10)))],
           "window": sp.window}
    write_json(os.path.join(out, "spectrum.json"), doc)
    return doc


def cmd_validate(cfg, out):
    only = cfg.get("only")
    rep = run_suite(quick=bool(cfg.get("quick", False)), inject=cfg.get("inject"),
                    only=set(only) if only else None)
    rep["criteria"] = [{k: v for k, v in c.items() if k != "runtime"} | {"runtime": round(c["runtime"], 3)}
                       for c in rep["criteria"]]
    write_json(os.path.join(out, "validation.json"), rep)
    for c in rep["criteria"]:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] criterion {c['id']:2d}: {c['name']}")
    if not rep["passed"]:
        raise AcceptanceFailure("one or more criteria failed")
    return rep


class AcceptanceFailure(RuntimeError):
    pass


def _sweep_point(args):
    omega0, a, b, a0, eps, tol, n_periods = args
    system = OscillatorSystem.one_dof(omega0, eps, a, b)
    ts = simulate(system, [a0], [0.0], n_periods * 2 * math.pi / omega0, tol)
    w = an.measure_frequency(ts, 0)
    ex = expand(omega0, a, b, a0)
    row = {"eps": eps, "measured_frequency": w, "expansion_frequency": ex.omega(eps)}
    if b == 0 and a == 1:
        row["exact_frequency"] = exact_frequency(omega0, eps)
    return row


def cmd_sweep(cfg, out):
    grid = cfg.get("eps_grid", {"start": 0.01, "stop": 0.1, "num": 10})
    eps_values = list(map(float, grid)) if isinstance(grid, list) else \
        np.linspace(grid["start"], grid["stop"], int(grid["num"])).tolist()
    if cfg.get("preset") in _ONE_DOF_PRESETS:
        cfg.setdefault("b", _ONE_DOF_PRESETS[cfg["preset"]])
    jobs = [(float(cfg.get("omega0", 1.0)), float(cfg.get("a", 1.0)), float(cfg.get("b", 0.0)),
             float(cfg.get("a0", 1.0)), e, float(cfg.get("tol", 1e-10)), int(cfg.get("n_periods", 10)))
            for e in eps_values]
    workers = int(cfg.get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    keys = sorted(rows[0])
    write_csv(os.path.join(out, "sweep.csv"), keys, ([r[k] for k in keys] for r in rows))
    write_json(os.path.join(out, "sweep.json"), {"rows": rows})
    return rows


COMMANDS = {
    "expand1dof": cmd_expand1dof,
    "expandndof": cmd_expandndof,
    "simulate": cmd_simulate,
    "nnm": cmd_nnm,
    "spectrum": cmd_spectrum,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--tol", type=float, help="integration / solver tolerance")
    common.add_argument("--preset", help="named system")
    common.add_argument("--eps", type=float, help="contact stiffness")
    common.add_argument("--quick", action="store_true", help="reduced validation run")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    p = argparse.ArgumentParser(prog="unilateral-nnm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        if args.quick:
            cfg["quick"] = True
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](cfg, args.out)
    except ResonanceError as exc:
        pairs = ", ".join(f"(k={k}, l={l})" for k, l in exc.pairs)
        print(f"resonance: {exc} [{pairs}]", file=sys.stderr)
        return EXIT_RESONANCE
    except (ValidationError, DomainError, DegenerateAmplitudeError, CriticalCaseError, UnsupportedCaseError,
            ValueError, KeyError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (ContinuationError, NNMError) as exc:
        print(f"continuation failed: {exc}", file=sys.stderr)
        return EXIT_CONTINUATION
    except AcceptanceFailure as exc:
        print(f"acceptance: {exc}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
