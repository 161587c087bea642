"""Command-line front end: reproducible batch runs with CSV/JSON outputs.

Every command except ``phase`` writes into its own run directory
``<out>/<command>-<digest>``, where the digest hashes the effective
parameters, so identical inputs land in the same place with identical bytes.
``--config`` takes a JSON object of flag values or a previous
``manifest.json``; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__, exact, io, limits, mcmc, model, phase
from .errors import IMDError, UsageError
from .model import ModelParams

ENV_OUT = "IMDLAB_OUT"
DEFAULT_OUT = "imdlab-runs"
DEFAULT_N_LIST = "500,1000,2000,4000,8000"
BOUNDARY_WARN = 1e-6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _n_list(s) -> list[int]:
    if isinstance(s, list):
        return [int(x) for x in s]
    try:
        return [int(x) for x in str(s).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad N list {s!r}") from exc


def _add_model(sp, need_h=True):
    sp.add_argument("--J", type=float, help="pair coupling, J >= 0")
    sp.add_argument("--h", type=float, help="external field" + ("" if need_h else " (auto-filled when omitted)"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with flag values or a previous manifest.json")
    common.add_argument("--out", help=f"output root (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    common.add_argument("--run-dir", help="exact run directory, overrides --out")

    ap = _Parser(prog="imdlab", description="Numerical lab for the imitative monomer-dimer mean-field model.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("phase", parents=[common], help="classify (J, h) and print the maximizers")
    _add_model(sp)
    sp.add_argument("--tricritical", action="store_true", help="set (J, h) to the tricritical point")
    sp.add_argument("--write", action="store_true", help="also write a run directory")

    sp = sub.add_parser("critical-line", parents=[common], help="tabulate gamma(J) and the two branches")
    sp.add_argument("--j-min", type=float)
    sp.add_argument("--j-max", type=float)
    sp.add_argument("--steps", type=int)

    sp = sub.add_parser("exact", parents=[common], help="exact law of the monomer count")
    _add_model(sp)
    sp.add_argument("--N", type=int)
    sp.add_argument("--xi", type=float)
    sp.add_argument("--side", choices=["BELOW", "ABOVE", "below", "above"])

    sp = sub.add_parser("sample", parents=[common], help="run the pair-update Markov chain")
    _add_model(sp)
    sp.add_argument("--N", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thinning", type=int)
    sp.add_argument("--chains", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=["FULL", "LUMPED", "full", "lumped"])
    sp.add_argument("--xi", type=float)
    sp.add_argument("--side", choices=["BELOW", "ABOVE", "below", "above"])
    sp.add_argument("--init", type=int, help="initial monomer count (default: mode of the exact law)")
    sp.add_argument("--workers", type=int)

    sp = sub.add_parser("verify", parents=[common], help="KS convergence study against the limit law")
    sp.add_argument("--mode", choices=["clt", "critical", "conditional"])
    _add_model(sp, need_h=False)
    sp.add_argument("--N", dest="N_list", help=f"comma-separated sizes (default {DEFAULT_N_LIST})")
    sp.add_argument("--xi", type=float, help="threshold for conditional mode (default: midpoint)")
    sp.add_argument("--with-stein", action="store_true", default=None)

    sp = sub.add_parser("stein", parents=[common], help="exact Stein bound terms")
    _add_model(sp)
    sp.add_argument("--N", dest="N_list")
    sp.add_argument("--k", type=int, help="0 off-critical, 1 tricritical (inferred when omitted)")
    return ap


DEFAULTS = {
    "phase": {"h": 0.0, "tricritical": False, "write": False},
    "critical-line": {"j_min": 1.5, "j_max": 3.0, "steps": 16},
    "exact": {},
    "sample": {"burn_in": 0, "thinning": 1, "chains": 1, "seed": 0, "mode": "LUMPED", "workers": 1},
    "verify": {"N_list": DEFAULT_N_LIST, "with_stein": False},
    "stein": {"N_list": "200,400,800,1600,3200"},
}
_META = {"command", "config", "out", "run_dir", "prior_auto"}


def _load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    # a manifest carries the effective values under "params"
    if "params" in data:
        return dict(data["params"]), dict(data.get("auto", {}))
    return data, {}


def effective_params(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    params = dict(DEFAULTS[args.command])
    args.prior_auto = {}
    if args.config:
        cfg, args.prior_auto = _load_config(args.config)
        params.update(cfg)
    params.update({k: v for k, v in vars(args).items() if v is not None and k not in _META})
    return params


def _require(params: dict, *names):
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _run_dir(args, command: str, params: dict) -> Path:
    if args.run_dir:
        return Path(args.run_dir)
    root = Path(args.out or os.environ.get(ENV_OUT) or DEFAULT_OUT)
    digest = hashlib.sha256(io.dumps({"command": command, "params": params}).encode()).hexdigest()[:12]
    return root / f"{command}-{digest}"


def _finish(run_dir: Path, command: str, params: dict, auto: dict, outputs: list, args=None) -> Path:
    # a rerun from a manifest keeps the original record of auto-filled values
    auto = {**getattr(args, "prior_auto", {}), **auto}
    manifest = {"schema_version": io.SCHEMA_VERSION, "artifact_version": __version__, "command": command,
                "params": params, "auto": auto, "outputs": sorted(Path(p).name for p in outputs)}
    io.write_json(run_dir / "manifest.json", manifest)
    return run_dir


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


def _side(params):
    return None if params.get("side") is None else exact.Side(params["side"].upper())


def cmd_phase(args, params) -> int:
    auto = {}
    if params["tricritical"]:
        params["J"], params["h"] = model.J_C, model.H_C
        auto = {"J": model.J_C, "h": model.H_C}
    _require(params, "J", "h")
    portrait = phase.classify(ModelParams(params["J"], params["h"]))
    out = portrait.to_dict()
    sys.stdout.write(io.dumps(out))
    if params["write"]:
        rd = _run_dir(args, "phase", params)
        path = io.write_json(rd / "phase.json", out)
        _finish(rd, "phase", params, auto, [path], args)
    return 0


def cmd_critical_line(args, params) -> int:
    rows = phase.critical_line(params["j_min"], params["j_max"], params["steps"])
    rd = _run_dir(args, "critical-line", params)
    header = ["J", "gamma", "m1", "m2", "lambda1", "lambda2"]
    path = io.write_csv(rd / "critical_line.csv", header, ([r[k] for k in header] for r in rows))
    _finish(rd, "critical-line", params, {}, [path], args)
    print(rd)
    return 0


def cmd_exact(args, params) -> int:
    _require(params, "J", "h", "N")
    p = ModelParams(params["J"], params["h"])
    dist = exact.exact_distribution(p, params["N"])
    if (params.get("xi") is None) != (params.get("side") is None):
        raise UsageError("--xi and --side must be given together")
    if params.get("xi") is not None:
        dist = exact.conditional(dist, params["xi"], _side(params))
        if dist.condition["boundary_mass"] > BOUNDARY_WARN:
            _warn(f"atom at t/N = xi carries mass {dist.condition['boundary_mass']:.3g}; it is excluded")
    portrait = phase.classify(p)
    m0 = portrait.maximizers[0].m
    summary = {"schema_version": io.SCHEMA_VERSION, "N": dist.N, "J": p.J, "h": p.h,
               "mean_m": float((dist.probs * dist.m).sum()),
               "log_partition": dist.log_partition, "free_energy": exact.free_energy(p, dist.N),
               "normalized_free_energy": exact.normalized_free_energy(p, dist.N),
               "phase": portrait.kind.value, "m0": m0,
               "moments_sqrtN": {str(k): exact.moments(dist, m0, 0.5, k) for k in (1, 2, 3, 4)},
               "condition": dict(dist.condition) if dist.condition else None}
    rd = _run_dir(args, "exact", params)
    outs = [dist.to_csv(rd / "distribution.csv"), io.write_json(rd / "moments.json", summary)]
    _finish(rd, "exact", params, {}, outs, args)
    print(rd)
    return 0


def cmd_sample(args, params) -> int:
    _require(params, "J", "h", "N", "steps")
    p = ModelParams(params["J"], params["h"])
    side = _side(params)
    cfg = mcmc.SamplerConfig(p, params["N"], params["steps"], mode=params["mode"].upper(),
                             burn_in=params["burn_in"], thinning=params["thinning"], chains=params["chains"],
                             seed=params["seed"], xi=params.get("xi"), side=side, init=params.get("init"),
                             workers=params["workers"])
    summary = mcmc.run(cfg)
    ref = exact.exact_distribution(p, cfg.N)
    if cfg.xi is not None:
        ref = exact.conditional(ref, cfg.xi, side)
        if ref.condition["boundary_mass"] > BOUNDARY_WARN:
            _warn(f"atom at t/N = xi carries mass {ref.condition['boundary_mass']:.3g}; it is excluded")
    rd = _run_dir(args, "sample", params)
    outs = summary.write_traces(rd)
    data = summary.summary(ref)
    data["schema_version"] = io.SCHEMA_VERSION
    outs.append(io.write_json(rd / "summary.json", data))
    _finish(rd, "sample", params, {}, outs, args)
    print(rd)
    return 0


def cmd_verify(args, params) -> int:
    _require(params, "mode")
    Ns = _n_list(params["N_list"])
    mode = params["mode"]
    auto = {}
    if mode == "clt":
        _require(params, "J", "h")
        report = limits.verify_clt(ModelParams(params["J"], params["h"]), Ns, params["with_stein"])
    elif mode == "critical":
        for key, val in (("J", model.J_C), ("h", model.H_C)):
            if params.get(key) is None:
                auto[key] = val
            elif abs(params[key] - val) > phase.TOL_PARAM:
                raise UsageError(f"critical mode runs at the tricritical point; --{key} {params[key]} differs")
        report = limits.verify_critical(Ns, params["with_stein"])
    else:
        _require(params, "J")
        if params.get("h") is None:
            auto["h"] = phase.critical_h(params["J"])
        report = limits.verify_conditional(params["J"], Ns, params.get("h", auto.get("h")), params.get("xi"))
        if params.get("xi") is None:
            auto["xi"] = report["xi"]
        for study in report["studies"]:
            bm = max(r["condition"]["boundary_mass"] for r in study["table"])
            if bm > BOUNDARY_WARN:
                _warn(f"{study['label']}: atom at t/N = xi carries mass up to {bm:.3g}")
    limits.validate_report(report)
    params = {**params, **auto}
    rd = _run_dir(args, "verify", params)
    outs = [io.write_json(rd / "report.json", report)]
    for study in report["studies"]:
        outs.append(io.write_csv(rd / f"ks_{study['label']}.csv", ["N", "ks", "scaled_ks"],
                                 ([r["N"], r["ks"], r["scaled_ks"]] for r in study["table"])))
    _finish(rd, "verify", params, auto, outs, args)
    print(rd)
    return 0


def cmd_stein(args, params) -> int:
    _require(params, "J", "h")
    p = ModelParams(params["J"], params["h"])
    auto = {}
    portrait = phase.classify(p)
    if params.get("k") is None:
        k = {phase.Kind.UNIQUE: 0, phase.Kind.TRICRITICAL: 1}.get(portrait.kind)
        if k is None:
            raise UsageError(f"no single-maximizer scaling for phase {portrait.kind.value}")
        auto["k"] = k
    else:
        k = params["k"]
    diags = [exact.stein_terms(p, N, k).to_dict() for N in _n_list(params["N_list"])]
    params = {**params, **auto}
    rd = _run_dir(args, "stein", params)
    out = io.write_json(rd / "stein.json", {"schema_version": io.SCHEMA_VERSION, "J": p.J, "h": p.h, "k": k,
                                            "phase": portrait.kind.value, "diagnostics": diags})
    _finish(rd, "stein", params, auto, [out], args)
    print(rd)
    return 0


COMMANDS = {"phase": cmd_phase, "critical-line": cmd_critical_line, "exact": cmd_exact,
            "sample": cmd_sample, "verify": cmd_verify, "stein": cmd_stein}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        params = effective_params(args)
        return COMMANDS[args.command](args, params)
    except IMDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
