"""Command-line entry point: ``inversefilter run|list|validate|game|mle|crb|probe``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, estimation, localization, probe
from ._accel import backend_name
from .config import OUTPUT_ENV, build_config, deep_update, load_file, parse_override
from .errors import CapacityError, ConfigError, InverseFilterError, NumericalFailure, ValidationError
from .experiments import PRESETS, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

# run flags that map onto preset params
FLAG_PARAMS = {"particles": "particles", "ess_threshold": "ess_threshold", "resampler": "resampler",
               "depth_cap": "depth_cap"}


def _raw_config(target):
    if target in PRESETS:
        return {"experiment": target}
    if Path(target).exists():
        return load_file(target)
    raise ConfigError(f"{target!r} is neither a preset nor a readable config file; presets: {', '.join(PRESETS)}")


def resolve(args):
    raw = _raw_config(args.target)
    for item in args.set or []:
        deep_update(raw, parse_override(item))
    flags = {k: getattr(args, k, None) for k in FLAG_PARAMS}
    name = raw.get("experiment") if isinstance(raw, dict) else None
    for flag, key in FLAG_PARAMS.items():
        val = flags[flag]
        if val is None:
            continue
        if name not in PRESETS or key not in PRESETS[name].params:
            raise ConfigError(f"--{flag.replace('_', '-')} does not apply to experiment {name!r}")
        if key == "particles":
            val = [int(val)] if isinstance(PRESETS[name].params[key], list) else int(val)
        raw.setdefault("params", {})[key] = val
    if getattr(args, "output", None):
        raw.setdefault("output", {})["directory"] = args.output
    return build_config(raw, PRESETS)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_experiment(cfg):
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    preset = PRESETS[cfg.experiment]
    files, summary = preset.run(cfg, out)
    manifest = {
        "experiment": cfg.experiment,
        "version": __version__,
        "backend": backend_name(),
        "config_hash": cfg.hash(),
        "seeds": cfg.seeds,
        "config": cfg.as_dict(),
        "outputs": [{"file": Path(f).name, "sha256": _sha256(f)} for f in files],
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return out, manifest


def cmd_list(args):
    for name, p in PRESETS.items():
        print(f"{name:20s} {p.description}")
    return EXIT_OK


def cmd_validate(args):
    cfg = resolve(args)
    print(f"ok: {cfg.experiment} (config hash {cfg.hash()[:12]})")
    return EXIT_OK


def cmd_run(args):
    cfg = resolve(args)
    out, manifest = run_experiment(cfg)
    for o in manifest["outputs"]:
        print(out / o["file"])
    return EXIT_OK


def _emit(path, header, rows):
    if path:
        write_csv(path, header, rows)
    else:
        import csv

        w = csv.writer(sys.stdout)
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else (repr(float(c)) if isinstance(c, float) else c) for c in r])


def cmd_game(args):
    if args.sigma_eps < 0:
        raise ConfigError("--sigma-eps must be non-negative")
    ks, sig = localization.game_precision_track(args.horizon, args.sigma_eps)
    _emit(args.output, ["k", "Sigma", "k_times_Sigma"], [(int(k), float(s), float(k * s)) for k, s in zip(ks, sig)])
    return EXIT_OK


def cmd_mle(args):
    setup = estimation.ScalarSetup(horizon=args.horizon)
    seeds = np.arange(args.seeds)
    x, y, a = estimation.simulate_scalar_batch(setup, args.ctrue, seeds)
    rows = []
    for r, sd in enumerate(seeds):
        if args.mode == "classic":
            f = lambda c, r=r: float(estimation.classic_grid(setup, y[r : r + 1], [c])[0, 0])
        else:
            f = lambda c, r=r: float(estimation.inverse_grid(setup, x[r : r + 1], a[r : r + 1], [c])[0, 0])
        res = estimation.mle(f, (args.lower, args.upper), starts=args.starts, seed=int(sd))
        rows.append((int(sd), float(res.theta[0]), float(res.value)))
    _emit(args.output, ["seed", "argmax", "loglik"], rows)
    return EXIT_OK


def cmd_crb(args):
    rep = estimation.crb_linear_gaussian(args.ctrue, args.replicates, args.seed,
                                         estimation.ScalarSetup(horizon=args.horizon))
    _emit(args.output, ["c_true", "crb_classic", "crb_inverse", "se_classic", "se_inverse", "ratio"],
          [(rep.theta_true, rep.crb_classic, rep.crb_inverse, *rep.standard_errors, rep.ratio)])
    return EXIT_OK


def read_matrix(path):
    p = Path(path)
    try:
        if p.suffix == ".csv":
            M = np.loadtxt(p, delimiter=",", ndmin=2)
        else:
            M = np.array(yaml.safe_load(p.read_text()), dtype=float)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read matrix from {path}: {exc}") from exc
    return M


def cmd_check_dominance(args):
    P1, P2 = read_matrix(args.p1), read_matrix(args.p2)
    for nm, P in (("p1", P1), ("p2", P2)):
        if P.ndim != 2 or P.shape[0] != P.shape[1] or np.any(P < 0) or not np.allclose(P.sum(1), 1.0):
            raise ValidationError(f"--{nm}: expected a square row-stochastic matrix")
    ok, certs = probe.copositive_dominates(P1, P2)
    rows = [(c.j, c.verdict, c.min_value, " ".join(repr(float(v)) for v in c.witness)) for c in certs]
    _emit(args.output, ["j", "verdict", "min_quadratic_form", "witness"], rows)
    print(f"dominated: {str(ok).lower()}", file=sys.stderr)
    return EXIT_OK


def cmd_probe_spsa(args):
    raw = load_file(args.config) if args.config else {}
    raw.setdefault("experiment", "probe-spsa")
    if raw["experiment"] != "probe-spsa":
        raise ConfigError("experiment: probe spsa needs a probe-spsa config")
    if args.iters is not None:
        raw.setdefault("params", {})["iterations"] = int(args.iters)
    if args.output:
        raw.setdefault("output", {})["directory"] = args.output
    out, manifest = run_experiment(build_config(raw, PRESETS))
    for o in manifest["outputs"]:
        print(out / o["file"])
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="inversefilter", description="Inverse Bayesian filtering experiments.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list experiment presets").set_defaults(func=cmd_list)

    for name, func in (("run", cmd_run), ("validate", cmd_validate)):
        p = sub.add_parser(name, help=f"{name} a preset or config file")
        p.add_argument("target", help="preset name, config file (YAML/JSON) or manifest.json")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. run.seeds=5")
        p.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or ./inversefilter-out)")
        p.add_argument("--particles", type=int)
        p.add_argument("--ess-threshold", type=float)
        p.add_argument("--resampler", choices=["systematic", "multinomial"])
        p.add_argument("--depth-cap", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("game", help="precision track of the sequential game")
    p.add_argument("--sigma-eps", type=float, required=True, help="action noise variance")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("mle", help="per-seed maximum-likelihood gain")
    p.add_argument("--mode", choices=["classic", "inverse"], required=True)
    p.add_argument("--ctrue", type=float, required=True)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--lower", type=float, default=0.01)
    p.add_argument("--upper", type=float, default=10.0)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--output")
    p.set_defaults(func=cmd_mle)

    p = sub.add_parser("crb", help="Monte Carlo Cramer-Rao bounds for the gain")
    p.add_argument("--ctrue", type=float, required=True)
    p.add_argument("--replicates", type=int, default=2000)
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=cmd_crb)

    pp = sub.add_parser("probe", help="probe design tools").add_subparsers(dest="probe_command", required=True)
    p = pp.add_parser("check-dominance", help="copositive dominance of two transition matrices")
    p.add_argument("--p1", required=True)
    p.add_argument("--p2", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_check_dominance)
    p = pp.add_parser("spsa", help="SPSA probe optimisation")
    p.add_argument("--config")
    p.add_argument("--iters", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_probe_spsa)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, CapacityError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InverseFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
