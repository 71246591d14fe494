"""Command-line front end: config files in, CSV/JSON reports out."""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .chaos_mc import (coarsen_increments, holder_regression, mc_increment_moments,
                       sample_chaos)
from .errors import ConvergenceError, DomainError
from .fbm import sample_increments
from .holder import holder_norm_1d
from .integrands import IntegrandSpec, integrand_from_descriptor
from .kernel import (HurstParams, TimeGrid, build_kernel_table, covariance_check,
                     literature_cH, validate_hurst)
from .ldp_harness import (EventKind, EventSetSpec, compare_rate, event_rate,
                          gaussian_endpoint_tail, ldp_sweep)
from .reports import dumps, ensure_dir, write_csv, write_json
from .simplex_kernel import verify_bound

EXIT_INVALID = 2
EXIT_FAILURE = 1


@dataclass
class RunConfig:
    H: float
    T: float = 1.0
    N: int = 256
    n: int = 1
    integrand: str = "const"
    q: Optional[float] = None
    lam: Optional[float] = None
    seed: int = 0
    n_samples: int = 10000
    n_paths: int = 4
    stride: int = 1
    s: float = 0.0
    t: Optional[float] = None
    levels: int = 5
    first_level: int = 1
    gammas: Optional[list] = None
    event: str = "SupAbove"
    a: float = 1.0
    gamma: Optional[float] = None
    eps: Optional[list] = None
    ladder_points: int = 6
    n_starts: int = 16

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise DomainError(f"unknown config keys: {', '.join(unknown)}")
        if "H" not in d:
            raise DomainError("config needs a Hurst index H")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        validate_hurst(self.H)
        for name in ("N", "n", "n_samples", "n_paths", "stride", "levels", "first_level",
                     "ladder_points", "n_starts"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v!r}")
        if self.N % self.stride:
            raise DomainError("stride must divide N")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise DomainError("seed must be an unsigned 64-bit integer")
        EventKind(self.event)
        self.integrand_spec(HurstParams(self.H, self.T)).validate_for(HurstParams(self.H, self.T))

    def integrand_spec(self, params: HurstParams) -> IntegrandSpec:
        return integrand_from_descriptor(self.integrand, self.n, q=self.q, lam=self.lam, params=params)

    def event_spec(self) -> EventSetSpec:
        return EventSetSpec(EventKind(self.event), float(self.a), self.gamma)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(args) -> RunConfig:
    d = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            d = json.load(fh)
        if not isinstance(d, dict):
            raise DomainError("config file must hold a flat JSON object")
    if getattr(args, "H", None) is not None:
        d["H"] = args.H
    if getattr(args, "N", None) is not None:
        d["N"] = args.N
    if args.seed is not None:
        d["seed"] = args.seed
    return RunConfig.from_dict(d)


def _setup(cfg: RunConfig):
    params = HurstParams.calibrated(cfg.H, cfg.T)
    table = build_kernel_table(params, TimeGrid.uniform(cfg.N, cfg.T))
    spec = cfg.integrand_spec(params)
    spec.validate_for(params)
    return params, table, spec


def _report(cfg: RunConfig, command: str, body: dict) -> dict:
    return {"command": command, "config": cfg.to_dict(), "version": __version__, "result": body}


def dump_kernel(table, out: str) -> str:
    P = table.grid.points
    rows = [(i, P[i], j, P[j], P[j + 1], table.K[i, j])
            for i in range(1, table.N + 1) for j in range(i)]
    return write_csv(os.path.join(out, "kernel.csv"), ["i", "t", "j", "theta_lo", "theta_hi", "K"], rows)


# ---------------------------------------------------------------- commands

def cmd_calibrate(args) -> dict:
    H = validate_hurst(args.H)
    params = HurstParams.calibrated(H)
    sizes = args.sizes or [256, 512, 1024]
    rows = []
    for N in sizes:
        table = build_kernel_table(params, TimeGrid.uniform(int(N)))
        rows.append({"N": int(N), "covariance_error": covariance_check(table)})
    body = {"H": H, "cH": params.cH, "cH_closed_form": literature_cH(H),
            "regime": params.regime.value, "covariance": rows, "version": __version__}
    if args.out:
        write_json(os.path.join(ensure_dir(args.out), "calibrate.json"), body)
        if args.dump_kernel:
            dump_kernel(table, args.out)
    return body


def cmd_simulate(cfg: RunConfig, args) -> dict:
    params, table, spec = _setup(cfg)
    ss = sample_chaos(table, spec, cfg.seed, cfg.n_paths, stride=cfg.stride, workers=args.workers)
    rows = [(k, t, v) for k in range(ss.n_samples) for t, v in zip(ss.times, ss.samples[k])]
    write_csv(os.path.join(args.out, "paths.csv"), ["sample", "t", "value"], rows)
    body = {"n_paths": ss.n_samples, "times": len(ss.times), "files": ["paths.csv"]}
    write_json(os.path.join(args.out, "simulate.json"), _report(cfg, "simulate", body))
    return body


def cmd_moments(cfg: RunConfig, args) -> dict:
    params, table, spec = _setup(cfg)
    t = cfg.T if cfg.t is None else cfg.t
    reps = {p: mc_increment_moments(table, spec, cfg.s, t, p, cfg.n_samples, cfg.seed, args.workers)
            for p in (2, 4)}
    m2, m4 = reps[2].estimate.mean, reps[4].estimate.mean
    ratio = m4 ** 0.25 / math.sqrt(m2) if m2 > 0 else math.nan
    body = {"moments": {str(p): r.to_dict() for p, r in reps.items()},
            "norm_ratio_4_2": ratio, "hypercontractive_bound": 3.0 ** (cfg.n / 2),
            "z_score_p2": (m2 - reps[2].exact) / reps[2].estimate.stderr}
    write_json(os.path.join(args.out, "moments.json"), _report(cfg, "moments", body))
    return body


def cmd_bounds(cfg: RunConfig, args) -> dict:
    params, table, spec = _setup(cfg)
    rep = verify_bound(table, spec, s=cfg.s, levels=cfg.levels, first_level=cfg.first_level)
    body = rep.to_dict()
    write_json(os.path.join(args.out, "bounds.json"), _report(cfg, "bounds", body))
    return body


def cmd_holder(cfg: RunConfig, args) -> dict:
    params = HurstParams.calibrated(cfg.H, cfg.T)
    spec = cfg.integrand_spec(params)
    spec.validate_for(params)
    threshold = spec.holder_threshold(params)
    gammas = cfg.gammas or [round(threshold - 0.1, 10), round(threshold + 0.1, 10)]
    fine = 2 * cfg.N
    dW = sample_increments(TimeGrid.uniform(fine, cfg.T), cfg.seed, cfg.n_samples, 0, args.workers)
    levels, first = {}, None
    for N, inc in ((cfg.N, coarsen_increments(dW, 2)), (fine, dW)):
        table = build_kernel_table(params, TimeGrid.uniform(N, cfg.T))
        ss = sample_chaos(table, spec, cfg.seed, cfg.n_samples, stride=1, workers=args.workers, dW=inc)
        levels[N] = (ss.times, ss.samples)
        first = (ss.times, ss.samples[0])
    reg = holder_regression(levels, gammas, threshold)
    body = {"regression": reg.to_dict(),
            "first_path": [holder_norm_1d(first, g).to_dict() for g in gammas]}
    write_json(os.path.join(args.out, "holder.json"), _report(cfg, "holder", body))
    return body


def cmd_rate(cfg: RunConfig, args) -> dict:
    params, table, spec = _setup(cfg)
    event = cfg.event_spec()
    kw = {} if event.kind is EventKind.HOLDER_NORM_ABOVE else {"seed": cfg.seed, "n_starts": cfg.n_starts}
    res = event_rate(table, spec, event, **kw)
    body = res.to_dict()
    body["event"] = event.to_dict()
    P = table.grid.points
    write_csv(os.path.join(args.out, "phidot.csv"), ["theta_lo", "theta_hi", "phidot"],
              [(P[j], P[j + 1], res.minimizer.phidot[j]) for j in range(table.N)])
    write_json(os.path.join(args.out, "rate.json"), _report(cfg, "rate", body))
    return body


def cmd_ldp(cfg: RunConfig, args) -> dict:
    params, table, spec = _setup(cfg)
    event = cfg.event_spec()
    kw = {} if event.kind is EventKind.HOLDER_NORM_ABOVE else {"seed": cfg.seed, "n_starts": cfg.n_starts}
    rate = event_rate(table, spec, event, **kw)
    rep = ldp_sweep(table, spec, event, cfg.eps, cfg.n_samples, cfg.seed, stride=cfg.stride,
                    workers=args.workers, rate=rate, ladder_points=cfg.ladder_points)
    verdict = compare_rate(rep)
    body = rep.to_dict()
    body["verdict"] = verdict.value
    exact = spec.n == 1 and spec.constant == 1.0 and event.kind is EventKind.ENDPOINT_ABOVE
    for row in body["rows"]:
        row["exact_tail"] = gaussian_endpoint_tail(table, event.a, row["eps"]) if exact else None
    header = ["eps", "p_hat", "stderr", "eps_log_p", "gap", "exact_tail"]
    write_csv(os.path.join(args.out, "ldp.csv"), header,
              [[r[k] for k in header] for r in body["rows"]])
    write_json(os.path.join(args.out, "ldp.json"), _report(cfg, "ldp", body))
    return body


COMMANDS = {"simulate": cmd_simulate, "moments": cmd_moments, "bounds": cmd_bounds,
            "holder": cmd_holder, "rate": cmd_rate, "ldp": cmd_ldp}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON run configuration")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, default=1, help="worker threads (never changes results)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--dump-kernel", action="store_true", help="also write kernel.csv")
    common.add_argument("--H", type=float, help="override the config Hurst index")
    common.add_argument("--N", type=int, help="override the config grid size")
    p = argparse.ArgumentParser(prog="fbmchaos", description=__doc__)
    p.add_argument("--version", action="version", version=f"fbmchaos {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    cal = sub.add_parser("calibrate", parents=[common], help="kernel constant and covariance check")
    cal.add_argument("--sizes", type=int, nargs="+", help="grid sizes for the covariance table")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _error(command, exc) -> dict:
    return {"error": {"type": type(exc).__name__, "message": str(exc), "command": command},
            "version": __version__}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise DomainError("--workers must be at least 1")
        if args.command == "calibrate":
            if args.H is None:
                if not args.config:
                    raise DomainError("calibrate needs --H or --config")
                args.H = load_config(args).H
            body = cmd_calibrate(args)
            sys.stdout.write(dumps(body))
            return 0
        cfg = load_config(args)
        args.out = ensure_dir(args.out or ".")
        body = COMMANDS[args.command](cfg, args)
        if args.dump_kernel:
            _, table, _ = _setup(cfg)
            dump_kernel(table, args.out)
        sys.stdout.write(dumps({"command": args.command, "out": args.out, "status": "ok"}))
        return 0
    except (DomainError, ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        sys.stdout.write(dumps(_error(args.command, exc)))
        return EXIT_INVALID
    except (ConvergenceError, np.linalg.LinAlgError) as exc:
        sys.stdout.write(dumps(_error(args.command, exc)))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
