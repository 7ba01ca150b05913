"""Command-line front end.

JSON config in, CSV/JSON artifacts out.  Every command is a deterministic
function of its config (seeds included), and each artifact is written next
to a manifest embedding a content hash of the effective config so CI can
detect drift.  Exit codes: 0 success, 2 configuration/validation error,
3 numerical failure.

Subcommands: ensemble, master, analytic, steady, sweep, fidelity-compare.
The optional --figure flag renders a PNG overview next to the delimited
output; the CSV stays the primary artifact.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, replace

import numpy as np

from .coeffs import KERNEL_CONVENTIONS, MODELS
from .ensemble import run_ensemble
from .errors import ConfigError, DivergenceError, EnsembleError, PhysicalityError
from .master import MASTER_MODELS, analytic_series, integrate_master, steady_state
from .metrics import fidelity, project_psd, wootters_concurrence
from .model import (
    ModelParams,
    PRESETS,
    params_from_dict,
    params_to_dict,
    preset_state,
    projector,
    state_from_amplitudes,
)
from .trajectory import output_steps

_CONFIG_KEYS = frozenset({
    "params", "initial_state", "model", "dt", "T", "n_traj", "seed",
    "output_stride", "output_path", "noise_kernel", "gamma_list", "delta_list",
})

_SCHEMAS = {
    "ensemble": "ensemble-v1",
    "master": "master-v1",
    "analytic": "analytic-v1",
    "steady": "steady-v1",
    "sweep": "sweep-v1",
    "fidelity-compare": "fidelity-v1",
}


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    initial_state: object  # preset name or 8-number amplitude list
    model: str = "zeroth"
    dt: float = 0.005
    T: float = 10.0
    n_traj: int = 2000
    seed: int = 0
    output_stride: int = 10
    output_path: str | None = None
    noise_kernel: str = "selfconsistent"
    gamma_list: list | None = None
    delta_list: list | None = None


def _parse_override(raw: str):
    if "=" not in raw:
        raise ConfigError(f"override {raw!r} is not of the form key=value")
    key, _, val = raw.partition("=")
    try:
        parsed = json.loads(val)
    except json.JSONDecodeError:
        parsed = val
    return key.strip(), parsed


def _apply_override(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a non-object value")
    node[parts[-1]] = value


def _validate_initial_state(state) -> object:
    if isinstance(state, (int, float)):
        state = str(state)  # JSON override "initial_state=10" arrives numeric
    if isinstance(state, str):
        name = state.replace("−", "-")
        if name not in PRESETS:
            raise ConfigError(
                f"unknown initial-state preset {state!r}; known presets: "
                f"{sorted(PRESETS)} (or pass 8 amplitude numbers)")
        return name
    if isinstance(state, (list, tuple)):
        if len(state) != 8 or not all(isinstance(x, (int, float)) for x in state):
            raise ConfigError(
                "explicit initial_state must be 8 numbers "
                "(re/im pairs of the 4 amplitudes)")
        return [float(x) for x in state]
    raise ConfigError("initial_state must be a preset name or an 8-number list")


def load_config(path: str, overrides=()) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    for raw in overrides:
        key, val = _parse_override(raw)
        _apply_override(data, key, val)

    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "initial_state" not in data:
        raise ConfigError("config must set initial_state")

    params = params_from_dict(data.get("params", {}))
    state = _validate_initial_state(data["initial_state"])
    model = data.get("model", "zeroth")
    if model not in MODELS:
        raise ConfigError(f"invalid model {model!r}; choose from {MODELS}")
    kern = data.get("noise_kernel", "selfconsistent")
    if kern not in KERNEL_CONVENTIONS:
        raise ConfigError(
            f"invalid noise_kernel {kern!r}; choose from {KERNEL_CONVENTIONS}")

    def _num(key, default, caster, check, why):
        val = data.get(key, default)
        try:
            val = caster(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r} is not a {caster.__name__}") from exc
        if not check(val):
            raise ConfigError(f"config key {key!r} must be {why} (got {val!r})")
        return val

    dt = _num("dt", 0.005, float, lambda v: v > 0, "positive")
    T = _num("T", 10.0, float, lambda v: v >= dt, ">= dt")
    n_traj = _num("n_traj", 2000, int, lambda v: v >= 0, ">= 0")
    seed = _num("seed", 0, int, lambda v: True, "an integer")
    stride = _num("output_stride", 10, int, lambda v: v >= 1, ">= 1")

    for axis in ("gamma_list", "delta_list"):
        if axis in data and data[axis] is not None:
            if not isinstance(data[axis], list) or not all(
                    isinstance(x, (int, float)) for x in data[axis]):
                raise ConfigError(f"{axis} must be a list of numbers")
            if axis == "gamma_list" and any(x <= 0 for x in data[axis]):
                raise ConfigError("gamma_list entries must be positive")

    out = data.get("output_path")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_path must be a string")
    return RunConfig(
        params=params, initial_state=state, model=model, dt=dt, T=T,
        n_traj=n_traj, seed=seed, output_stride=stride, output_path=out,
        noise_kernel=kern,
        gamma_list=data.get("gamma_list"), delta_list=data.get("delta_list"))


def _resolve_state(cfg: RunConfig) -> np.ndarray:
    if isinstance(cfg.initial_state, str):
        return preset_state(cfg.initial_state)
    return state_from_amplitudes(cfg.initial_state)


def effective_config(cfg: RunConfig, command: str) -> dict:
    """Result-determining config as a plain dict (output location excluded)."""
    return {
        "command": command,
        "params": params_to_dict(cfg.params),
        "initial_state": cfg.initial_state,
        "model": cfg.model,
        "dt": cfg.dt,
        "T": cfg.T,
        "n_traj": cfg.n_traj,
        "seed": cfg.seed,
        "output_stride": cfg.output_stride,
        "noise_kernel": cfg.noise_kernel,
        "gamma_list": cfg.gamma_list,
        "delta_list": cfg.delta_list,
    }


def config_hash(cfg_dict: dict) -> str:
    """git-style blob hash of the canonical JSON encoding."""
    payload = json.dumps(cfg_dict, sort_keys=True, separators=(",", ":")).encode()
    blob = b"blob %d\x00" % len(payload) + payload
    return hashlib.sha1(blob).hexdigest()


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("qsdsim")
    except Exception:
        return "0+unknown"


def write_manifest(output_path: str, cfg_dict: dict, command: str) -> str:
    manifest = {
        "schema": _SCHEMAS[command],
        "command": command,
        "config": cfg_dict,
        "config_hash": config_hash(cfg_dict),
        "package": {"name": "qsdsim", "version": _package_version()},
    }
    path = output_path + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fmt(x) -> str:
    return repr(float(x))


_ELEMENT_LABELS = [f"{i}{j}" for i in range(1, 5) for j in range(1, 5)]


def _rho_columns(rho: np.ndarray) -> list:
    cols = []
    for i in range(4):
        for j in range(4):
            cols += [rho[i, j].real, rho[i, j].imag]
    return cols


def _write_rows(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _timeseries_header(with_stderr: bool) -> list:
    header = ["t"]
    for lb in _ELEMENT_LABELS:
        header += [f"re_r{lb}", f"im_r{lb}"]
    if with_stderr:
        header += [f"stderr_r{lb}" for lb in _ELEMENT_LABELS]
    header.append("concurrence")
    return header


def _default_output(command: str) -> str:
    base = command.replace("-", "_")
    return base + (".json" if command == "steady" else ".csv")


# --- commands -------------------------------------------------------------

def cmd_ensemble(cfg: RunConfig, threads: int, figure: str | None) -> int:
    psi0 = _resolve_state(cfg)
    est = run_ensemble(psi0, cfg.params, cfg.model, cfg.n_traj, cfg.seed,
                       cfg.dt, cfg.T, cfg.output_stride,
                       convention=cfg.noise_kernel, threads=threads)
    conc = [wootters_concurrence(est.rho[i]).value for i in range(est.grid.size)]
    out = cfg.output_path or _default_output("ensemble")
    rows = []
    for i, t in enumerate(est.grid):
        row = [t] + _rho_columns(est.rho[i])
        row += [est.stderr[i, a, b] for a in range(4) for b in range(4)]
        row.append(conc[i])
        rows.append(row)
    _write_rows(out, _timeseries_header(with_stderr=True), rows)
    manifest = write_manifest(out, effective_config(cfg, "ensemble"), "ensemble")
    print(f"wrote {out} and {manifest} "
          f"(n_traj={est.n_traj}, aborted={est.n_aborted})")
    if figure:
        from . import figures

        figures.render_timeseries(est.grid, est.rho, conc, figure,
                                  f"ensemble ({cfg.model}, n={est.n_traj})")
        print(f"wrote {figure}")
    return 0


def _deterministic_model(cfg: RunConfig) -> str:
    if cfg.model not in MASTER_MODELS:
        raise ConfigError(
            f"model {cfg.model!r} has no noise-free solver; choose from "
            f"{MASTER_MODELS} or use the ensemble command")
    return cfg.model


def cmd_master(cfg: RunConfig, figure: str | None) -> int:
    model = _deterministic_model(cfg)
    rho0 = projector(_resolve_state(cfg))
    res = integrate_master(rho0, cfg.params, cfg.dt, cfg.T, model=model,
                           output_stride=cfg.output_stride)
    conc = [wootters_concurrence(r).value for r in res.rhos]
    out = cfg.output_path or _default_output("master")
    rows = [[t] + _rho_columns(res.rhos[i]) + [conc[i]]
            for i, t in enumerate(res.grid)]
    _write_rows(out, _timeseries_header(with_stderr=False), rows)
    manifest = write_manifest(out, effective_config(cfg, "master"), "master")
    print(f"wrote {out} and {manifest}")
    if figure:
        from . import figures

        figures.render_timeseries(res.grid, res.rhos, conc, figure,
                                  f"master equation ({model})")
        print(f"wrote {figure}")
    return 0


def cmd_analytic(cfg: RunConfig, figure: str | None) -> int:
    rho0 = projector(_resolve_state(cfg))
    times = output_steps(int(round(cfg.T / cfg.dt)), cfg.output_stride) * cfg.dt
    series = analytic_series(rho0, times, cfg.params)
    conc = [2.0 * abs(series[i][1, 2]) for i in range(times.size)]
    out = cfg.output_path or _default_output("analytic")
    rows = [[t] + _rho_columns(series[i]) + [conc[i]]
            for i, t in enumerate(times)]
    _write_rows(out, _timeseries_header(with_stderr=False), rows)
    manifest = write_manifest(out, effective_config(cfg, "analytic"), "analytic")
    print(f"wrote {out} and {manifest}")
    if figure:
        from . import figures

        figures.render_timeseries(times, series, conc, figure, "closed-form solution")
        print(f"wrote {figure}")
    return 0


def cmd_steady(cfg: RunConfig, figure: str | None) -> int:
    if figure:
        raise ConfigError("the steady command produces no figure")
    rho0 = projector(_resolve_state(cfg))
    rep = steady_state(rho0, cfg.params, t_ref=0.0)
    out = cfg.output_path or _default_output("steady")
    tau = rep.tau_s_estimate
    payload = {
        "r": rep.r,
        "x": {"re": rep.x.real, "im": rep.x.imag},
        "concurrence_inf": rep.concurrence_inf,
        "tau_s_estimate": tau if np.isfinite(tau) else None,
        "t_ref": rep.t_ref,
        "method": rep.method,
        "rho_inf_re": np.real(rep.rho_inf).tolist(),
        "rho_inf_im": np.imag(rep.rho_inf).tolist(),
    }
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = write_manifest(out, effective_config(cfg, "steady"), "steady")
    print(f"wrote {out} and {manifest}")
    return 0


def cmd_sweep(cfg: RunConfig, threads: int, figure: str | None) -> int:
    if cfg.gamma_list is None and cfg.delta_list is None:
        raise ConfigError("sweep needs gamma_list and/or delta_list")
    gammas = cfg.gamma_list if cfg.gamma_list is not None else [cfg.params.gamma]
    deltas = cfg.delta_list if cfg.delta_list is not None else [cfg.params.delta]
    if not gammas or not deltas:
        raise ConfigError("sweep axis lists must be non-empty")
    deterministic = cfg.n_traj == 0
    if deterministic and cfg.model not in MASTER_MODELS:
        raise ConfigError(
            f"n_traj=0 needs a noise-free model ({MASTER_MODELS}), got {cfg.model!r}")
    psi0 = _resolve_state(cfg)
    rho0 = projector(psi0)
    rows = []
    for gamma in gammas:
        for delta in deltas:
            p = ModelParams(omega_s=cfg.params.omega_s, lam=cfg.params.lam,
                            gamma=float(gamma),
                            Omega=cfg.params.omega_s - float(delta))
            ref = integrate_master(rho0, p, cfg.dt, cfg.T, model="zeroth",
                                   output_stride=cfg.output_stride)
            if deterministic:
                if cfg.model == "zeroth":
                    run_rhos, run_is_ref = ref.rhos, True
                else:
                    run_rhos = integrate_master(
                        rho0, p, cfg.dt, cfg.T, model=cfg.model,
                        output_stride=cfg.output_stride).rhos
                    run_is_ref = False
            else:
                est = run_ensemble(psi0, p, cfg.model, cfg.n_traj, cfg.seed,
                                   cfg.dt, cfg.T, cfg.output_stride,
                                   convention=cfg.noise_kernel, threads=threads)
                run_rhos, run_is_ref = est.rho, False
            for i, t in enumerate(ref.grid):
                c = wootters_concurrence(run_rhos[i]).value
                if run_is_ref:
                    f = 1.0
                else:
                    f = fidelity(project_psd(run_rhos[i]), ref.rhos[i]).value
                rows.append([float(gamma), float(delta), float(t), c, f])
    out = cfg.output_path or _default_output("sweep")
    _write_rows(out, ["gamma", "delta", "t", "concurrence", "fidelity"], rows)
    manifest = write_manifest(out, effective_config(cfg, "sweep"), "sweep")
    print(f"wrote {out} and {manifest} ({len(rows)} rows)")
    if figure:
        from . import figures

        figures.render_sweep(rows, figure, f"sweep ({cfg.model})")
        print(f"wrote {figure}")
    return 0


def cmd_fidelity_compare(cfg: RunConfig, threads: int, figure: str | None) -> int:
    if cfg.n_traj < 1000:
        raise ConfigError(
            f"fidelity-compare needs n_traj >= 1000 (got {cfg.n_traj}); "
            "the confidence band is meaningless below that")
    psi0 = _resolve_state(cfg)
    est = run_ensemble(psi0, cfg.params, cfg.model, cfg.n_traj, cfg.seed,
                       cfg.dt, cfg.T, cfg.output_stride,
                       convention=cfg.noise_kernel, threads=threads)
    ref = integrate_master(projector(psi0), cfg.params, cfg.dt, cfg.T,
                           model="zeroth", output_stride=cfg.output_stride)
    n_out = est.grid.size
    fid = np.array([
        fidelity(project_psd(est.rho[i]), ref.rhos[i]).value for i in range(n_out)])

    # band: re-evaluate under seeded element-wise perturbations of the
    # estimate at its standard-error scale
    k_draws = 32
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=cfg.seed, spawn_key=(0x46494432,)))
    lo = fid.copy()
    hi = fid.copy()
    for _ in range(k_draws):
        g = rng.standard_normal((n_out, 4, 4)) + 1j * rng.standard_normal((n_out, 4, 4))
        herm = 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))
        for i in range(n_out):
            pert = est.rho[i] + est.stderr[i] * herm[i]
            f = fidelity(project_psd(pert), ref.rhos[i]).value
            lo[i] = min(lo[i], f)
            hi[i] = max(hi[i], f)

    out = cfg.output_path or _default_output("fidelity-compare")
    rows = [[est.grid[i], fid[i], lo[i], hi[i]] for i in range(n_out)]
    _write_rows(out, ["t", "fidelity", "fid_lo", "fid_hi"], rows)
    manifest = write_manifest(out, effective_config(cfg, "fidelity-compare"),
                              "fidelity-compare")
    print(f"wrote {out} and {manifest} (min fidelity {fid.min():.6f})")
    if figure:
        from . import figures

        figures.render_fidelity(est.grid, fid, lo, hi, figure,
                                f"ensemble ({cfg.model}) vs zeroth-order solver")
        print(f"wrote {figure}")
    return 0


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsdsim",
        description="Two-qubit stochastic state-diffusion simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("ensemble", "Monte Carlo trajectory average (RDM + concurrence CSV)"),
        ("master", "noise-free matrix evolution (RDM + concurrence CSV)"),
        ("analytic", "closed-form solution for zero-double-excitation states"),
        ("steady", "late-time predictor report (JSON)"),
        ("sweep", "parameter sweep over gamma/delta lists"),
        ("fidelity-compare", "ensemble vs noise-free solver fidelity band"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--output", help="output artifact path (overrides config)")
        sp.add_argument("--threads", type=int, default=0,
                        help="worker threads for ensembles (0 = auto)")
        sp.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="config override, dotted path (repeatable)")
        sp.add_argument("--figure", help="also render a PNG overview to this path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
        if args.output:
            cfg = replace(cfg, output_path=args.output)
        if args.command == "ensemble":
            return cmd_ensemble(cfg, args.threads, args.figure)
        if args.command == "master":
            return cmd_master(cfg, args.figure)
        if args.command == "analytic":
            return cmd_analytic(cfg, args.figure)
        if args.command == "steady":
            return cmd_steady(cfg, args.figure)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.threads, args.figure)
        if args.command == "fidelity-compare":
            return cmd_fidelity_compare(cfg, args.threads, args.figure)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, PhysicalityError, EnsembleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
