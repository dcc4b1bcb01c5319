"""Scenario documents and the end-to-end run pipeline.

A scenario is one operator, one excitation vector, one evolution window and a
list of requested checks.  Parameter sweeps are directories of scenario
files, not a richer document format.  Reports are written with a canonical
JSON rendering so identical runs produce identical bytes; wall-clock timings
go to a separate file for exactly that reason.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np

from spectre import __version__, _kernels
from spectre.detect import (
    adjudicate,
    detect_embedded,
    detect_unstable,
    limiting_amplitude,
)
from spectre.errors import ConfigurationError, SpectreError
from spectre.evolution import EvolveConfig, modulated_average
from spectre.laplace import (
    abelian_check,
    bromwich_invert,
    decompose,
    integration_rule_check,
    limiting_absorption,
    plancherel_check,
)
from spectre.operators import (
    OperatorSpec,
    build_operator,
    classify_spectrum,
    spectral_oracle,
)
from spectre.serialize import (
    canonical_dumps,
    format_float,
    pair_to_complex,
    sha256_hex,
    vector_to_pairs,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_ASSUMPTION = 3
EXIT_DISAGREEMENT = 4

_CHECK_ORDER = (
    "unstable",
    "embedded",
    "amplitude",
    "decompose",
    "bromwich",
    "absorption",
    "abelian",
    "plancherel",
    "integration-rule",
)

_F_KINDS = ("explicit", "all-ones", "seeded-random")


@dataclass(frozen=True)
class Scenario:
    """Parsed and validated scenario document."""

    operator: OperatorSpec
    f: dict
    evolve: EvolveConfig
    checks: tuple
    k_grid: tuple | None
    projection: tuple | None
    output_dir: str | None
    schema: int
    raw_bytes: bytes

    @property
    def config_hash(self) -> str:
        return sha256_hex(self.raw_bytes)


def _validate_f(obj, path="f") -> dict:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path}: expected an object")
    kind = obj.get("kind")
    if kind not in _F_KINDS:
        raise ConfigurationError(f"{path}.kind: expected one of {_F_KINDS}, got {kind!r}")
    if kind == "explicit":
        values = obj.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigurationError(f"{path}.values: expected a non-empty list")
        for i, z in enumerate(values):
            pair_to_complex(z, path=f"{path}.values[{i}]")
    elif kind == "seeded-random":
        seed = obj.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigurationError(f"{path}.seed: expected a non-negative integer")
    return dict(obj)


def _validate_evolve(obj, path="evolve") -> EvolveConfig:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{path}: expected an object")
    allowed = {"T", "dt", "method", "sample_stride", "forcing_k", "keep_velocity"}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigurationError(f"{path}: unknown fields {sorted(unknown)}")
    if "T" not in obj or "dt" not in obj:
        raise ConfigurationError(f"{path}: T and dt are required")
    try:
        return EvolveConfig(
            T=float(obj["T"]),
            dt=float(obj["dt"]),
            method=obj.get("method", "rk4"),
            sample_stride=obj.get("sample_stride", 1),
            forcing_k=(float(obj["forcing_k"]) if obj.get("forcing_k") is not None else None),
            keep_velocity=bool(obj.get("keep_velocity", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def parse_scenario(obj: dict, raw_bytes: bytes | None = None) -> Scenario:
    if not isinstance(obj, dict):
        raise ConfigurationError("scenario: expected a JSON object")
    allowed = {"schema", "operator", "f", "evolve", "checks", "k_grid", "projection", "output_dir"}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigurationError(f"scenario: unknown fields {sorted(unknown)}")
    schema = obj.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigurationError(f"schema: version {schema!r} not supported (expected {SCHEMA_VERSION})")
    if "operator" not in obj:
        raise ConfigurationError("operator: missing")
    operator = OperatorSpec.from_json(obj["operator"], path="operator")
    f_desc = _validate_f(obj.get("f", {"kind": "all-ones"}))
    evolve = _validate_evolve(obj.get("evolve", {}))

    checks_raw = obj.get("checks", [])
    if not isinstance(checks_raw, list):
        raise ConfigurationError("checks: expected a list")
    for c in checks_raw:
        if c not in _CHECK_ORDER:
            raise ConfigurationError(f"checks: unknown check {c!r}, expected from {_CHECK_ORDER}")
    checks = tuple(c for c in _CHECK_ORDER if c in checks_raw)

    k_grid = obj.get("k_grid")
    if k_grid is not None:
        if (
            not isinstance(k_grid, list)
            or len(k_grid) != 3
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in k_grid)
        ):
            raise ConfigurationError("k_grid: expected [lo, hi, step]")
        lo, hi, step = (float(x) for x in k_grid)
        if not (step > 0 and hi >= lo >= 0):
            raise ConfigurationError("k_grid: need 0 <= lo <= hi and step > 0")
        k_grid = (lo, hi, step)

    projection = obj.get("projection")
    if projection is not None:
        if not isinstance(projection, list) or not all(
            isinstance(i, int) and not isinstance(i, bool) and i >= 0 for i in projection
        ):
            raise ConfigurationError("projection: expected a list of non-negative component indices")
        projection = tuple(sorted(set(projection)))

    output_dir = obj.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigurationError("output_dir: expected a string")

    # dependency ordering between checks
    requested = set(checks)
    needs_unstable = {"embedded", "amplitude", "abelian", "plancherel", "integration-rule"}
    for c in sorted(requested & needs_unstable):
        if "unstable" not in requested:
            raise ConfigurationError(f"checks: {c!r} requires the 'unstable' check to run first")
    if "embedded" in requested and k_grid is None:
        raise ConfigurationError("checks: 'embedded' requires k_grid")
    needs_forcing = {"amplitude", "absorption", "abelian"}
    for c in sorted(requested & needs_forcing):
        if evolve.forcing_k is None:
            raise ConfigurationError(f"checks: {c!r} requires evolve.forcing_k")
    if "bromwich" in requested and "decompose" not in requested:
        raise ConfigurationError("checks: 'bromwich' requires the 'decompose' check")

    if raw_bytes is None:
        raw_bytes = canonical_dumps(obj).encode()
    return Scenario(
        operator=operator,
        f=f_desc,
        evolve=evolve,
        checks=checks,
        k_grid=k_grid,
        projection=projection,
        output_dir=output_dir,
        schema=schema,
        raw_bytes=raw_bytes,
    )


def load_scenario(path: str) -> Scenario:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_scenario(obj, raw_bytes=raw)


def _apply_seed_override(scenario: Scenario, seed: int) -> Scenario:
    op = scenario.operator
    if op.kind == "perturbed-random":
        params = dict(op.params)
        params["seed"] = seed
        op = OperatorSpec(kind=op.kind, params=params)
    f_desc = dict(scenario.f)
    if f_desc.get("kind") == "seeded-random":
        f_desc["seed"] = seed
    return replace(scenario, operator=op, f=f_desc)


def materialize_f(f_desc: dict, n: int) -> np.ndarray:
    kind = f_desc["kind"]
    if kind == "explicit":
        f = np.array([pair_to_complex(z) for z in f_desc["values"]])
        if f.size != n:
            raise ConfigurationError(f"f.values: length {f.size} does not match operator size {n}")
    elif kind == "all-ones":
        f = np.ones(n, dtype=np.complex128)
    else:
        f = np.random.default_rng(f_desc["seed"]).standard_normal(n).astype(np.complex128)
    if float(np.linalg.norm(f)) == 0.0:
        raise ConfigurationError("f: excitation vector must be nonzero")
    return f


def _projection_mask(projection: tuple | None, n: int) -> np.ndarray | None:
    if projection is None:
        return None
    if projection and max(projection) >= n:
        raise ConfigurationError(f"projection: index {max(projection)} out of range for size {n}")
    mask = np.zeros(n)
    mask[list(projection)] = 1.0
    return mask


@dataclass(frozen=True, eq=False)
class RunReport:
    """Everything one scenario run produced, plus plot-ready series."""

    data: dict
    plot_data: dict
    timings: dict
    exit_code: int

    def to_json_bytes(self) -> bytes:
        return canonical_dumps(self.data).encode()


def run_scenario(
    scenario: Scenario,
    seed_override: int | None = None,
    strict_oracle: bool = False,
) -> RunReport:
    """Execute the requested checks in dependency order.

    Never raises for numerical trouble inside a check: failures are recorded
    in the report and reflected in the exit code so that sweeps keep going.
    """
    if seed_override is not None:
        scenario = _apply_seed_override(scenario, seed_override)

    timings: dict = {}
    plot_data: dict = {}
    results: dict = {}
    errors: list = []
    exit_code = EXIT_OK

    t_start = time.perf_counter()
    try:
        op = build_operator(scenario.operator)
        oracle = spectral_oracle(op)
        classification = classify_spectrum(oracle)
        f = materialize_f(scenario.f, op.n)
        mask = _projection_mask(scenario.projection, op.n)
    except ConfigurationError:
        raise
    except SpectreError as exc:
        return RunReport(
            data={
                "schema": SCHEMA_VERSION,
                "tool": {"name": "spectre", "version": __version__},
                "config_hash": scenario.config_hash,
                "error": str(exc),
            },
            plot_data={},
            timings={"total": time.perf_counter() - t_start},
            exit_code=EXIT_NUMERICAL,
        )
    timings["setup"] = time.perf_counter() - t_start

    if not classification.assumption_a_ok:
        exit_code = EXIT_ASSUMPTION

    cfg = scenario.evolve
    free_cfg = replace(cfg, forcing_k=None)
    base = None
    decomposition = None

    def _run(name, fn):
        nonlocal exit_code
        t0 = time.perf_counter()
        try:
            results[name] = fn()
        except SpectreError as exc:
            results[name] = {"failed": str(exc)}
            errors.append(f"{name}: {exc}")
            if exit_code in (EXIT_OK, EXIT_ASSUMPTION, EXIT_DISAGREEMENT):
                exit_code = EXIT_NUMERICAL
        except np.linalg.LinAlgError as exc:
            results[name] = {"failed": f"linear algebra: {exc}"}
            errors.append(f"{name}: {exc}")
            if exit_code in (EXIT_OK, EXIT_ASSUMPTION, EXIT_DISAGREEMENT):
                exit_code = EXIT_NUMERICAL
        timings[name] = time.perf_counter() - t0

    for check in scenario.checks:
        if check == "unstable":

            def do_unstable():
                nonlocal base
                base = detect_unstable(op, f, free_cfg, oracle)
                traj = base.trajectory
                norms = np.linalg.norm(traj.cumulative, axis=1)
                plot_data["growth"] = (traj.times, norms)
                out = base.to_json()
                out["truncated"] = traj.truncated
                return out

            _run(check, do_unstable)
        elif check == "embedded":
            if base is None or not base.stable:
                results[check] = {"skipped": "requires a stable free trajectory"}
                continue

            def do_embedded():
                scan = detect_embedded(
                    op, f, scenario.k_grid, free_cfg, oracle, projection=mask, base=base
                )
                plot_data["scan"] = (scan.ks, scan.fit_a, scan.fit_b, scan.fit_residual, scan.flagged)
                results["_scan_object"] = scan
                return scan.to_json()

            _run(check, do_embedded)
        elif check == "amplitude":
            if base is None or not base.stable:
                results[check] = {"skipped": "requires a stable operator"}
                continue

            def do_amplitude():
                scan = results.get("_scan_object")
                detected = tuple(d.k for d in scan.detections) if scan is not None else tuple(
                    classification.positive_k
                )
                amp = limiting_amplitude(
                    op,
                    f,
                    float(cfg.forcing_k),
                    cfg,
                    oracle,
                    detected_kj=detected,
                    stability=base,
                )
                plot_data["amplitude"] = (amp.gap_times, amp.gaps)
                return amp.to_json()

            _run(check, do_amplitude)
        elif check == "decompose":

            def do_decompose():
                nonlocal decomposition
                decomposition = decompose(oracle, f)
                fit = decomposition.bound_fit
                plot_data["w1_bound"] = (fit.tau, fit.norms, fit.c, fit.gamma)
                return decomposition.to_json()

            _run(check, do_decompose)
        elif check == "bromwich":
            if decomposition is None:
                results[check] = {"skipped": "requires a successful decomposition"}
                continue

            def do_bromwich():
                out = []
                for t_val in (1.0, 5.0, 10.0):
                    res = bromwich_invert(
                        decomposition.w1_sampler, t_val, bound_fit=None
                    )
                    out.append(
                        {
                            "t": t_val,
                            "value": vector_to_pairs(res.value),
                            "norm": float(np.linalg.norm(res.value)),
                        }
                    )
                return {"samples": out}

            _run(check, do_bromwich)
        elif check == "absorption":

            def do_absorption():
                return limiting_absorption(op, f, float(cfg.forcing_k)).to_json()

            _run(check, do_absorption)
        elif check == "abelian":
            if base is None:
                results[check] = {"skipped": "requires the free trajectory"}
                continue

            def do_abelian():
                series = modulated_average(base.trajectory, float(cfg.forcing_k), projection=mask)
                times, norms = series.times, series.norms

                def h(t):
                    t = np.minimum(np.asarray(t, dtype=float), times[-1])
                    return np.interp(t, times, norms)

                res = abelian_check(h, T=times[-1])
                return {
                    "gap": res.gap,
                    "time_limit": float(np.linalg.norm(res.time_limit)),
                    "laplace_limit": float(np.linalg.norm(res.laplace_limit)),
                    "p_ladder": res.p_ladder.tolist(),
                }

            _run(check, do_abelian)
        elif check == "plancherel":
            if base is None:
                results[check] = {"skipped": "requires the free trajectory"}
                continue

            def do_plancherel():
                res = plancherel_check(op, f, base.trajectory)
                return {
                    "line_energy": res.line_energy,
                    "time_energy": res.time_energy,
                    "ratio": res.ratio,
                    "sigma": res.sigma,
                    "tau_max": res.tau_max,
                }

            _run(check, do_plancherel)
        elif check == "integration-rule":
            if base is None:
                results[check] = {"skipped": "requires the free trajectory"}
                continue

            def do_rule():
                gap = integration_rule_check(base.trajectory, 1.0 + 0.0j)
                return {"p": [1.0, 0.0], "gap": gap}

            _run(check, do_rule)

    verdict = None
    if base is not None:
        scan = results.pop("_scan_object", None)
        verdict = adjudicate(classification, base, scan)
        if strict_oracle and verdict.oracle_agreement is not None:
            flat = [verdict.oracle_agreement.get("stable"), verdict.oracle_agreement.get("embedded")]
            if any(v is False for v in flat) and exit_code in (EXIT_OK, EXIT_ASSUMPTION):
                exit_code = EXIT_DISAGREEMENT
    else:
        results.pop("_scan_object", None)

    timings["total"] = time.perf_counter() - t_start
    data = {
        "schema": SCHEMA_VERSION,
        "tool": {"name": "spectre", "version": __version__},
        "kernel_backend": _kernels.BACKEND,
        "config_hash": scenario.config_hash,
        "seed_override": seed_override,
        "operator": {"spec": scenario.operator.to_json(), "n": op.n},
        "oracle": oracle.to_json(),
        "classification": classification.to_json(),
        "f": vector_to_pairs(f),
        "evolve": {
            "T": cfg.T,
            "dt": cfg.dt,
            "method": cfg.method,
            "sample_stride": cfg.sample_stride,
            "forcing_k": cfg.forcing_k,
        },
        "checks": {k: v for k, v in results.items()},
        "verdict": verdict.to_json() if verdict is not None else None,
        "errors": errors,
        "exit_code": exit_code,
    }
    return RunReport(data=data, plot_data=plot_data, timings=timings, exit_code=exit_code)


def emit_plot_data(report: RunReport, out_dir) -> list:
    """Write plot-ready CSV files for whichever checks ran."""
    import csv
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []

    def _write(name, header, rows):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)

    if "growth" in report.plot_data:
        times, norms = report.plot_data["growth"]
        _write(
            "growth.csv",
            ["t", "norm_c", "log_norm_c"],
            [
                [format_float(t), format_float(nm), format_float(np.log(max(nm, 1e-300)))]
                for t, nm in zip(times, norms)
            ],
        )
    if "scan" in report.plot_data:
        ks, fit_a, fit_b, fit_res, flagged = report.plot_data["scan"]
        _write(
            "scan.csv",
            ["k", "fit_a", "fit_b", "fit_residual", "flagged"],
            [
                [format_float(k), format_float(a), format_float(b), format_float(r), int(fl)]
                for k, a, b, r, fl in zip(ks, fit_a, fit_b, fit_res, flagged)
            ],
        )
    if "amplitude" in report.plot_data:
        gap_times, gaps = report.plot_data["amplitude"]
        _write(
            "amplitude_convergence.csv",
            ["T", "gap"],
            [[format_float(t), format_float(g)] for t, g in zip(gap_times, gaps)],
        )
    if "w1_bound" in report.plot_data:
        tau, norms, c, gamma = report.plot_data["w1_bound"]
        fitted = c * (1.0 + np.asarray(tau)) ** (-gamma) if np.isfinite(gamma) else np.zeros_like(tau)
        _write(
            "w1_bound.csv",
            ["tau", "norm_w1", "fitted_bound"],
            [
                [format_float(t), format_float(nm), format_float(fb)]
                for t, nm, fb in zip(tau, norms, fitted)
            ],
        )
    return written


def write_report(report: RunReport, out_dir) -> str:
    """report.json (canonical, timing-free) plus timings.json beside it."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "wb") as fh:
        fh.write(report.to_json_bytes())
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump({k: round(v, 6) for k, v in report.timings.items()}, fh, indent=2)
    return path
