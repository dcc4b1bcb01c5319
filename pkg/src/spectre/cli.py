"""Command-line front end.

Subcommands mirror the library layers: ``build`` stops after the operator and
its spectrum, ``evolve`` writes a trajectory, ``diagnose`` runs the checks a
scenario asks for, ``amplitude`` is the forced-response shortcut, ``verify``
runs the built-in golden suite and ``sweep`` fans one scenario out over a
parameter grid.  Exit codes: 0 ok, 1 bad input, 2 numerical failure,
3 spectrum outside the supported class, 4 detector/oracle disagreement.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from spectre import __version__
from spectre.errors import ConfigurationError, SpectreError, UsageError
from spectre.evolution import evolve_forced, evolve_free, write_trajectory_csv
from spectre.operators import build_operator, classify_spectrum, spectral_oracle
from spectre.scenario import (
    EXIT_ASSUMPTION,
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    Scenario,
    emit_plot_data,
    load_scenario,
    materialize_f,
    run_scenario,
    write_report,
)
from spectre.serialize import canonical_dumps


def _add_common(sub, scenario_required=True):
    sub.add_argument("--scenario", required=scenario_required, help="scenario JSON file")
    sub.add_argument("--out", default=None, help="output directory (default: scenario output_dir or .)")
    sub.add_argument("--seed-override", type=int, default=None, help="replace every seed in the scenario")
    sub.add_argument("--threads", type=int, default=1, help="worker threads for sweep runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectre",
        description="Time-domain spectral diagnostics for wave evolutions, "
        "cross-checked against direct linear-algebra answers.",
    )
    parser.add_argument("--version", action="version", version=f"spectre {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("build", help="build the operator and report its spectrum")
    _add_common(p)

    p = subs.add_parser("evolve", help="integrate the wave problem and write the trajectory")
    _add_common(p)
    p.add_argument("--norms-only", action="store_true", help="write norms per sample instead of full vectors")

    p = subs.add_parser("diagnose", help="run the checks listed in the scenario")
    _add_common(p)
    p.add_argument(
        "--strict-oracle",
        action="store_true",
        help="exit 4 when a time-domain verdict disagrees with the direct spectral answer",
    )

    p = subs.add_parser("amplitude", help="forced response at the scenario's forcing frequency")
    _add_common(p)

    p = subs.add_parser("verify", help="run the built-in golden checks")

    p = subs.add_parser("sweep", help="generate (and optionally run) a parameter sweep")
    _add_common(p)
    p.add_argument("--param", required=True, help="dotted path into the scenario, e.g. evolve.T")
    p.add_argument("--values", required=True, help="comma-separated values for the parameter")
    p.add_argument("--run", action="store_true", help="run each generated scenario")
    p.add_argument(
        "--strict-oracle",
        action="store_true",
        help="apply the disagreement exit code to each sweep run",
    )

    return parser


def _out_dir(args, scenario: Scenario | None) -> str:
    if args.out is not None:
        return args.out
    if scenario is not None and scenario.output_dir is not None:
        return scenario.output_dir
    return "."


def _cmd_build(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed_override is not None:
        from spectre.scenario import _apply_seed_override

        scenario = _apply_seed_override(scenario, args.seed_override)
    op = build_operator(scenario.operator)
    oracle = spectral_oracle(op)
    cls = classify_spectrum(oracle)
    out = _out_dir(args, scenario)
    os.makedirs(out, exist_ok=True)
    payload = {
        "schema": 1,
        "config_hash": scenario.config_hash,
        "operator": op.to_json(),
        "oracle": oracle.to_json(),
        "classification": cls.to_json(),
    }
    path = os.path.join(out, "operator.json")
    with open(path, "wb") as fh:
        fh.write(canonical_dumps(payload).encode())
    n_neg = len(cls.unstable)
    n_pos = len(cls.positive)
    print(
        f"operator size {op.n}: {n_neg} negative, {n_pos} positive, "
        f"{len(cls.zero)} zero, {len(cls.assumption_a_violations)} outside the real line"
    )
    print(f"wrote {path}")
    return EXIT_ASSUMPTION if not cls.assumption_a_ok else 0


def _cmd_evolve(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed_override is not None:
        from spectre.scenario import _apply_seed_override

        scenario = _apply_seed_override(scenario, args.seed_override)
    op = build_operator(scenario.operator)
    oracle = spectral_oracle(op)
    f = materialize_f(scenario.f, op.n)
    cfg = scenario.evolve
    if cfg.forcing_k is not None:
        traj = evolve_forced(op, f, cfg, oracle)
    else:
        traj = evolve_free(op, f, cfg, oracle)
    out = _out_dir(args, scenario)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "trajectory.csv")
    write_trajectory_csv(traj, path, norms_only=args.norms_only)
    note = f", truncated at t={traj.truncated_at:.6g}" if traj.truncated else ""
    print(f"integrated to t={traj.final_time:.6g} with {traj.times.size} samples{note}")
    print(f"wrote {path}")
    return 0


def _run_and_write(scenario: Scenario, out: str, seed_override, strict_oracle) -> int:
    report = run_scenario(scenario, seed_override=seed_override, strict_oracle=strict_oracle)
    path = write_report(report, out)
    emit_plot_data(report, out)
    for name, result in report.data.get("checks", {}).items():
        if isinstance(result, dict) and "failed" in result:
            line = f"failed: {result['failed']}"
        elif isinstance(result, dict) and "skipped" in result:
            line = f"skipped: {result['skipped']}"
        else:
            line = "ok"
        print(f"{name}: {line}")
    if report.data.get("error"):
        print(f"error: {report.data['error']}", file=sys.stderr)
    print(f"wrote {path}")
    return report.exit_code


def _cmd_diagnose(args) -> int:
    scenario = load_scenario(args.scenario)
    return _run_and_write(scenario, _out_dir(args, scenario), args.seed_override, args.strict_oracle)


def _cmd_amplitude(args) -> int:
    scenario = load_scenario(args.scenario)
    if scenario.evolve.forcing_k is None:
        raise ConfigurationError("amplitude: scenario must set evolve.forcing_k")
    scenario = replace(scenario, checks=("unstable", "amplitude"))
    return _run_and_write(scenario, _out_dir(args, scenario), args.seed_override, False)


def _cmd_verify(args) -> int:
    from spectre.verify import run_verification

    lines, code = run_verification()
    for line in lines:
        print(line)
    return code


def _set_dotted(obj: dict, path: str, value):
    keys = path.split(".")
    node = obj
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigurationError(f"sweep: path {path!r} not found in the scenario")
        node = node[key]
    if not isinstance(node, dict):
        raise ConfigurationError(f"sweep: path {path!r} does not lead to an object field")
    node[keys[-1]] = value


def _cmd_sweep(args) -> int:
    with open(args.scenario, "rb") as fh:
        raw = fh.read()
    try:
        base = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{args.scenario}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc

    values = []
    for token in args.values.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            values.append(json.loads(token))
        except json.JSONDecodeError:
            values.append(token)
    if not values:
        raise ConfigurationError("sweep: --values produced an empty list")

    out = args.out if args.out is not None else "."
    os.makedirs(out, exist_ok=True)
    generated = []
    from spectre.scenario import parse_scenario

    for i, value in enumerate(values):
        doc = json.loads(raw)
        _set_dotted(doc, args.param, value)
        parse_scenario(doc)  # fail fast before writing anything
        path = os.path.join(out, f"scenario_{i:03d}.json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        generated.append((path, doc))
        print(f"wrote {path} ({args.param} = {value!r})")

    if not args.run:
        return 0

    def _one(item):
        i, (path, doc) = item
        scenario = parse_scenario(doc)
        run_dir = os.path.join(out, f"run_{i:03d}")
        report = run_scenario(
            scenario, seed_override=args.seed_override, strict_oracle=args.strict_oracle
        )
        write_report(report, run_dir)
        emit_plot_data(report, run_dir)
        return path, report.exit_code

    results = []
    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_one, enumerate(generated)))
    else:
        results = [_one(item) for item in enumerate(generated)]

    summary = {path: code for path, code in results}
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    worst = max(code for _, code in results)
    for path, code in results:
        print(f"{path}: exit {code}")
    return worst


_COMMANDS = {
    "build": _cmd_build,
    "evolve": _cmd_evolve,
    "diagnose": _cmd_diagnose,
    "amplitude": _cmd_amplitude,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpectreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"error: linear algebra failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main(argv=sys.argv[1:]))
