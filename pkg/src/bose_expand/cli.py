"""Command-line driver: ``bose-expand <subcommand> --config model.json --out report.json``.

Every report is JSON with the schema version ("spec": 1), the tool version and the
resolved configuration. Most subcommands also write a CSV table next to the JSON
(same stem, ``.csv``). Nothing is written until the whole computation succeeded.

Exit codes: 0 success, 1 computational error, 2 validation failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .model import ConfigError, PotentialError, load_config

EXIT_OK, EXIT_ERROR, EXIT_VALIDATION, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- output helpers -------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(np.real(x)), "im": float(np.imag(x))}
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(args, result: dict, params: dict, table=None) -> None:
    report = {"spec": 1, "version": __version__, "command": args.command,
              "config": {"model": args.raw_config, "parameters": params}, "result": result}
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    outputs = []
    if args.out:
        out = Path(args.out)
        outputs.append((out, text))
        if table is not None:
            outputs.append((out.with_suffix(".csv"), _csv_text(*table)))
    else:
        sys.stdout.write(text)
    for path, body in outputs:
        _write_atomic(path, body)


def _common_params(args) -> dict:
    return {"tol": args.tol, "workers": args.workers, "seed": args.seed}


def _n_list(args, lo_default):
    lo = args.nmin if args.nmin is not None else lo_default
    if args.nmax < lo:
        raise UsageError("--nmax must be at least --nmin")
    return list(range(lo, args.nmax + 1, args.nstep))


def _parse_orders(text: str) -> list[int]:
    try:
        orders = sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"--orders expects a comma list of integers, got {text!r}") from None
    if not orders or any(o not in (0, 1) for o in orders):
        raise UsageError("available orders are 0 and 1")
    return orders


# --- subcommands ----------------------------------------------------------------

def cmd_solve_hartree(args, cfg):
    from .hartree import ResolutionWarning, minimize_hartree, trap_problem_from_potential
    tol = args.tol or 1e-10
    if cfg.trap is not None:
        prob = trap_problem_from_potential(cfg.trap, cfg.raw["potential"])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ResolutionWarning)
            state = minimize_hartree(prob, tol=tol, probe_resolution=True)
        notes = [str(w.message) for w in caught]
        for n in notes:
            print(f"bose-expand: warning: {n}", file=sys.stderr)
        where = {"kind": "trap", "x": cfg.trap.x}
    else:
        state = minimize_hartree(cfg.model, tol=tol)
        notes = []
        where = {"kind": "torus", "momenta": cfg.model.modes.momenta}
    phi = np.asarray(state.amplitudes)
    result = {"e_H": state.energy, "mu": state.mu, "residual": state.residual,
              "iterations": state.iterations, "phi": {"re": phi.real, "im": phi.imag}, "grid": where,
              "warnings": notes}
    coords = where.get("x", None)
    if coords is None:
        rows = [(int(i), float(a.real), float(a.imag)) for i, a in enumerate(phi)]
        header = ["index", "phi_re", "phi_im"]
    else:
        rows = [(float(x), float(a.real), float(a.imag)) for x, a in zip(coords, phi)]
        header = ["x", "phi_re", "phi_im"]
    _emit(args, result, _common_params(args), (header, rows))


def cmd_bogoliubov(args, cfg):
    from .bogoliubov import bogoliubov_map
    bmap = bogoliubov_map(cfg.model)
    mom = cfg.model.modes.momenta
    modes = []
    for j, p in enumerate(bmap.modes):
        modes.append({"n": mom[int(p)], "A": bmap.A[j], "B": bmap.B[j], "eps": bmap.eps[j],
                      "u": bmap.u[j], "v": bmap.v[j], "c": bmap.c[j]})
    rows = [(" ".join(str(int(x)) for x in mom[int(p)]), 2 * np.pi * float(np.linalg.norm(mom[int(p)])),
             float(bmap.eps[j])) for j, p in enumerate(bmap.modes)]
    _emit(args, {"E0": bmap.E0, "modes": modes}, _common_params(args), (["n", "abs_p", "eps"], rows))


def cmd_expand_energy(args, cfg):
    from .bogoliubov import bogoliubov_map
    from .oracle import solve_ground_state
    from .perturbation import assemble_H1, compute_chi1, energy_coefficients, verify_half_order
    if args.orders not in (0, 1):
        raise UsageError("--orders must be 0 or 1 for expand-energy")
    orders = list(range(0, args.orders + 1))
    model = cfg.model
    coeffs = energy_coefficients(model)
    bmap = bogoliubov_map(model)
    H1 = assemble_H1(model)
    result = {"e_H": coeffs["e_H"], "E0": coeffs["E0"]}
    if 1 in orders:
        result["E1"] = coeffs["E1"]
    N = model.N
    gs = solve_ground_state(model, tol=args.tol or 1e-10, seed=args.seed)
    series = N * coeffs["e_H"] + coeffs["E0"] + (coeffs["E1"] / N if 1 in orders else 0.0)
    result["diagnostics"] = {
        "half_order": verify_half_order(bmap, H1),
        "chi1_norm": compute_chi1(bmap, H1).norm(),
        "N": N, "E_oracle": gs.energy, "E_series": series, "residual": gs.energy - series,
    }
    rows = [("e_H", coeffs["e_H"]), ("E0", coeffs["E0"])] + ([("E1", coeffs["E1"])] if 1 in orders else [])
    _emit(args, result, dict(_common_params(args), orders=args.orders), (["coefficient", "value"], rows))


def _observable(name: str, modes):
    from .edgeworth import hopping_observable
    if name == "hopping":
        return hopping_observable(modes), [1]
    if name.startswith("hopping:"):
        try:
            harm = [int(h) for h in name.split(":", 1)[1].split(",")]
        except ValueError:
            raise UsageError(f"bad observable {name!r}") from None
        return hopping_observable(modes, tuple(harm)), harm
    raise UsageError(f"unknown observable {name!r} (use hopping or hopping:1,2)")


def cmd_edgeworth(args, cfg):
    from .edgeworth import (edgeworth_prediction, estimate_alpha, oracle_samples, predict_expectation,
                            test_function)
    orders = _parse_orders(args.orders_list)
    model = cfg.model
    B, harm = _observable(args.observable, model.modes)
    try:
        g_spec = json.loads(args.g)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--g is not valid JSON ({exc})") from None
    g, _ = test_function(g_spec)
    N_list = _n_list(args, 8)
    samples = oracle_samples(model, B, N_list, args.workers)
    alpha = {}
    for strategy in ("oracle_extrapolation", "chi1_perturbative"):
        a, e = estimate_alpha(model, B, strategy, N_list, samples)
        alpha[strategy] = {"alpha": a, "error": e}
    use = alpha[args.strategy]
    pred = edgeworth_prediction(model, B, use["alpha"], use["error"])
    rows, table = [], []
    for s in samples:
        p = {a: predict_expectation(g_spec, pred, a, s.N) for a in (0, 1)}
        ex = s.expectation(g)
        rows.append({"N": s.N, "oracle": ex, "prediction0": p[0], "prediction1": p[1] if 1 in orders else None,
                     "cumulants": s.cumulants()})
        table.append((s.N, ex, p[0], p[1] if 1 in orders else ""))
    result = {"sigma": pred.sigma, "sigma_iid": pred.sigma_iid, "alpha": alpha, "alpha_used": args.strategy,
              "observable": {"kind": "hopping", "harmonics": harm}, "g": g_spec, "samples": rows}
    params = dict(_common_params(args), orders=orders, N=N_list, strategy=args.strategy)
    _emit(args, result, params, (["N", "oracle_value", "prediction0", "prediction1"], table))


def cmd_binding(args, cfg):
    from .binding import binding_report
    N_list = _n_list(args, 8)
    rep = binding_report(cfg.model, N_list, args.workers)
    result = {"E0b": rep.E0b, "E1b": rep.E1b, "E2b": rep.E2b, "E2b_fit": rep.E2b_fit,
              "E2b_fit_error": rep.E2b_fit_error,
              "slopes": {k: v.as_dict() for k, v in rep.slopes.items()}}
    table = list(zip(rep.N, rep.deltaE, rep.residual0, rep.residual1))
    _emit(args, result, dict(_common_params(args), N=N_list),
          (["N", "deltaE", "residual0", "residual1"], table))


def _quench(text: str):
    from .dynamics import QuenchSpec
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--quench is not valid JSON ({exc})") from None
    if not isinstance(raw, dict) or set(raw) - {"vhat_after", "scale"} or len(raw) != 1:
        raise UsageError('--quench takes exactly one of {"vhat_after": x} or {"scale": x}')
    return QuenchSpec(**{k: float(v) for k, v in raw.items()}), raw


def cmd_dynamics(args, cfg):
    from .dynamics import norm_error_report
    orders = _parse_orders(args.orders_list)
    quench, raw = _quench(args.quench)
    if args.t <= 0:
        raise UsageError("--t must be positive")
    N_list = _n_list(args, 6)
    rep = norm_error_report(cfg.model, quench, N_list, args.t, args.workers)
    result = {"t": rep.t, "quench": raw, "symplectic_defect": rep.symplectic_defect,
              "hartree_drift": rep.hartree_drift, "norm_drift": rep.norm_drift}
    cols = {0: rep.error0, 1: rep.error1}
    fits = {0: rep.scaling0, 1: rep.scaling1}
    for o in orders:
        result[f"order{o}"] = fits[o].as_dict()
    table = [(n, cols[0][i] if 0 in orders else "", cols[1][i] if 1 in orders else "")
             for i, n in enumerate(rep.N)]
    _emit(args, result, dict(_common_params(args), orders=orders, N=N_list),
          (["N", "error_order0", "error_order1"], table))


def cmd_oracle(args, cfg):
    from .oracle import fit_power_law
    model = cfg.model
    tol = args.tol or 1e-10
    N_list = _n_list(args, 8)
    if args.task == "energy-curve":
        from .oracle import energy_curve
        from .perturbation import energy_coefficients
        c = energy_coefficients(model)
        curve = energy_curve(model, N_list, tol, args.workers, args.seed)
        res = [(n, abs(e - n * c["e_H"] - c["E0"])) for n, e, _ in curve]
        fit = fit_power_law(res, -1.0, 0.15)
        result = {"curve": [{"N": n, "E": e, "dim": d} for n, e, d in curve], "fit": fit.as_dict(),
                  "value": "E(N)", "fit_of": "|E(N) - N e_H - E0|"}
        table = [(n, e, fit.slope) for n, e, _ in curve]
    elif args.task == "statistics":
        from .bogoliubov import bogoliubov_map
        from .edgeworth import compute_nu_sigma, oracle_samples, variance_scaling
        B, harm = _observable(args.observable, model.modes)
        samples = oracle_samples(model, B, N_list, args.workers)
        _, sigma = compute_nu_sigma(B, None, bogoliubov_map(model))
        fit = variance_scaling(samples, sigma)
        result = {"sigma2": sigma**2, "fit": fit.as_dict(), "value": "Var B_N", "fit_of": "|Var B_N - sigma^2|",
                  "samples": [{"N": s.N, "cumulants": s.cumulants(), "char_k1": s.characteristic(1.0)}
                              for s in samples]}
        table = [(s.N, s.cumulants()[1], fit.slope) for s in samples]
    else:
        from .fock import assemble_hamiltonian
        from .oracle import evolve, expectation, solve_ground_state
        quench, raw = _quench(args.quench)
        after = quench.apply(model)
        rows = []
        for N in N_list:
            gs = solve_ground_state(model.with_N(N), tol, args.seed)
            H = assemble_hamiltonian(after.with_N(N), gs.basis)
            psi = evolve(gs.vector, H, args.t)
            rows.append({"N": N, "norm_drift": abs(float(np.linalg.norm(psi)) - 1.0),
                         "energy_drift": abs(expectation(psi, H) - expectation(gs.vector, H))})
        result = {"quench": raw, "t": args.t, "runs": rows, "value": "norm drift"}
        table = [(r["N"], r["norm_drift"], "") for r in rows]
    _emit(args, result, dict(_common_params(args), task=args.task, N=N_list), (["N", "value", "fit_slope"], table))


def cmd_validate(args):
    from .validation import run_suite, write_outputs
    summary = run_suite(args.suite, args.workers, log=print)
    write_outputs(summary, args.out_dir, {"suite": args.suite, "workers": args.workers,
                                          "benchmark": {"dimension": 1, "cutoff": 1, "vhat": 1.0}})
    print(f"overall: {'pass' if summary.passed else 'fail'}")
    return EXIT_OK if summary.passed else EXIT_VALIDATION


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bose-expand", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="model configuration JSON")
        s.add_argument("--out", help="JSON report path (CSV goes next to it); stdout if omitted")
        s.add_argument("--tol", type=float, default=None, help="solver tolerance override")
        s.add_argument("--workers", type=int, default=None, help="worker pool size")
        s.add_argument("--seed", type=int, default=0, help="Lanczos start-vector seed")
        return s

    def n_range(s, nmax):
        s.add_argument("--nmin", type=int, default=None)
        s.add_argument("--nmax", type=int, default=nmax)
        s.add_argument("--nstep", type=int, default=2)

    add("solve-hartree", "Hartree minimizer (torus or trap)")
    add("bogoliubov", "Bogoliubov modes and E0")
    s = add("expand-energy", "e_H, E0, E1 with an oracle check at the configured N")
    s.add_argument("--orders", type=int, default=1)
    s = add("edgeworth", "fluctuation statistics against the Edgeworth prediction")
    s.add_argument("--observable", default="hopping")
    s.add_argument("--orders", dest="orders_list", default="0,1")
    s.add_argument("--g", default='{"kind": "gaussian_cosine", "omega": 2.0, "phase": 0.0}',
                   help="test function spec (JSON)")
    s.add_argument("--strategy", default="chi1_perturbative",
                   choices=["chi1_perturbative", "oracle_extrapolation"])
    n_range(s, 24)
    s = add("binding", "binding energy coefficients and the oracle curve")
    n_range(s, 24)
    s = add("dynamics", "quench norm errors at orders 0 and 1")
    s.add_argument("--quench", default='{"vhat_after": 2.0}')
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--orders", dest="orders_list", default="0,1")
    n_range(s, 20)
    s = add("oracle", "exact diagonalization: energy curve, observable statistics, evolution")
    s.add_argument("task", choices=["energy-curve", "statistics", "evolve"])
    s.add_argument("--observable", default="hopping")
    s.add_argument("--quench", default='{"vhat_after": 2.0}')
    s.add_argument("--t", type=float, default=1.0)
    n_range(s, 24)

    v = sub.add_parser("validate", help="run the validation suite")
    v.add_argument("--suite", choices=["full", "core"], default="full")
    v.add_argument("--out-dir", default="validation")
    v.add_argument("--workers", type=int, default=None)
    return p


COMMANDS = {"solve-hartree": cmd_solve_hartree, "bogoliubov": cmd_bogoliubov, "expand-energy": cmd_expand_energy,
            "edgeworth": cmd_edgeworth, "binding": cmd_binding, "dynamics": cmd_dynamics, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers is not None:
        if args.workers < 1:
            parser.error("--workers must be positive")
        os.environ["BOSE_EXPAND_WORKERS"] = str(args.workers)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.tol is not None and args.tol <= 0:
            raise UsageError("--tol must be positive")
        cfg = load_config(args.config)
        args.raw_config = cfg.raw
        COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, PotentialError, OSError) as exc:
        print(f"bose-expand: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # computational failures are reported, not raised
        print(f"bose-expand: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
