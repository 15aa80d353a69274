"""Command-line entry point: ``gmclab {sample,chaos,verify,sweep}``.

Settings come from flags and/or a ``--config`` file (JSON, or ``key=value``
lines). A setting given both ways with different values is an error, never
a silent override. Exit codes: 0 success, 1 a verification failed, 2
configuration or I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import chaos, gaussian, kernel, verify
from .domain import build_grid
from .report import format_table, summarize
from .rng import SeedRecord

log = logging.getLogger("gmclab")

KERNELS = ("kahane", "log", "zero", "explicit")
DEFAULT_REPLICAS = 10


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    kernel: str = "kahane"
    C: float = 16.0
    gamma: float = 1.0
    n: int = 64
    dim: int = 1
    bounds: list = field(default_factory=lambda: [0.0, 1.0])
    matrix: Optional[list] = None
    replicas: Optional[int] = None  # None: command default
    seed: int = 7
    suite: list = field(default_factory=list)
    mollifier: list = field(default_factory=lambda: ["box", "triangle"])
    eps_ladder: list = field(default_factory=list)
    gamma_ladder: list = field(default_factory=list)
    sweep: Optional[str] = None
    pairs: list = field(default_factory=list)
    z: float = 3.0
    bonferroni: bool = False
    out: Optional[str] = None

    def validate(self) -> "RunConfig":
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}; choose from {', '.join(KERNELS)}")
        if self.kernel == "explicit" and self.matrix is None:
            raise ConfigError("explicit kernel needs a 'matrix' entry in the config file")
        if self.n < 1 or self.dim < 1:
            raise ConfigError("n and dim must be positive")
        if self.replicas is not None and self.replicas < 1:
            raise ConfigError("replicas must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.kernel == "kahane" and self.C <= 1:
            raise ConfigError("KahaneFamily needs C > 1")
        if self.gamma < 0 or any(g < 0 for g in self.gamma_ladder):
            raise ConfigError("gamma must be nonnegative")
        if any(e <= 0 for e in self.eps_ladder):
            raise ConfigError("eps values must be positive")
        if self.z <= 0:
            raise ConfigError("z must be positive")
        for name in self.mollifier:
            if name not in ("box", "triangle"):
                raise ConfigError(f"unknown mollifier {name!r}; choose box or triangle")
        if self.sweep not in (None, "gamma", "eps"):
            raise ConfigError("sweep must be 'gamma' or 'eps'")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**d)
        cfg.C, cfg.gamma, cfg.z = float(cfg.C), float(cfg.gamma), float(cfg.z)
        cfg.n, cfg.dim, cfg.seed = int(cfg.n), int(cfg.dim), int(cfg.seed)
        if cfg.replicas is not None:
            cfg.replicas = int(cfg.replicas)
        cfg.bounds = [float(b) for b in cfg.bounds]
        cfg.eps_ladder = [float(e) for e in cfg.eps_ladder]
        cfg.gamma_ladder = [float(g) for g in cfg.gamma_ladder]
        cfg.suite = [str(s) for s in cfg.suite]
        cfg.mollifier = [str(m) for m in cfg.mollifier]
        cfg.pairs = [[int(i), int(j)] for i, j in cfg.pairs]
        return cfg

    @property
    def hash(self) -> str:
        """Hash of everything except the output location."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def grid(self):
        return build_grid(self.dim, self.bounds, self.n)

    def kernel_spec(self) -> kernel.KernelSpec:
        if self.kernel == "kahane":
            return kernel.KahaneFamily(self.C, self.gamma)
        if self.kernel == "log":
            return kernel.LogKernel(self.gamma)
        if self.kernel == "zero":
            size = self.n**self.dim
            return kernel.Explicit(np.zeros((size, size)))
        return kernel.Explicit(self.matrix)


# ---------------------------------------------------------------------------
# config parsing


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    return text


def load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        return data
    except json.JSONDecodeError:
        pass
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        data[key.strip().replace("-", "_")] = _parse_value(value)
    return data


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"not a comma-separated list of numbers: {text!r}") from exc


def _names(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


LIST_KEYS = {"suite", "mollifier", "eps_ladder", "gamma_ladder", "bounds"}


def build_config(args: argparse.Namespace) -> RunConfig:
    from_file = load_config_file(args.config) if args.config else {}
    for key in LIST_KEYS:
        if key in from_file and not isinstance(from_file[key], list):
            from_file[key] = [from_file[key]]
    flags = {}
    for key in ("kernel", "C", "gamma", "n", "dim", "replicas", "seed", "out", "z", "sweep"):
        value = getattr(args, key, None)
        if value is not None:
            flags[key] = value
    if getattr(args, "bonferroni", False):
        flags["bonferroni"] = True
    for key, conv in (("suite", _names), ("mollifier", _names), ("eps_ladder", _floats),
                      ("gamma_ladder", _floats)):
        value = getattr(args, key, None)
        if value is not None:
            flags[key] = [x for v in value for x in conv(v)]
    defaults = RunConfig().to_dict()
    for key, value in flags.items():
        if key in from_file:
            a = RunConfig.from_dict({**defaults, key: from_file[key]}).to_dict()[key]
            b = RunConfig.from_dict({**defaults, key: value}).to_dict()[key]
            if a != b:
                raise ConfigError(f"--{key.replace('_', '-')} conflicts with config file ({b!r} vs {a!r})")
    merged = {**defaults, **from_file, **flags}
    try:
        return RunConfig.from_dict(merged).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# output


def _prepare_out(cfg: RunConfig) -> str:
    out = cfg.out or "."
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".gmclab-write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {out!r} is not writable: {exc}") from exc
    return out


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _stamp(cfg: RunConfig, csv_text: str, *comments: str) -> str:
    head = [f"# config_hash={cfg.hash}"] + [f"# {c}" for c in comments]
    return "\n".join(head) + "\n" + csv_text


def _json(obj) -> str:
    from .report import _clean

    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _model(cfg: RunConfig):
    grid = cfg.grid()
    spec = cfg.kernel_spec()
    try:
        cov = kernel.eval_kernel(spec, grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return grid, spec, cov


def cmd_sample(cfg: RunConfig) -> int:
    replicas = cfg.replicas or DEFAULT_REPLICAS
    out = _prepare_out(cfg)
    grid, spec, cov = _model(cfg)
    files, seeds = [], []
    for r in range(replicas):
        seed = SeedRecord(cfg.seed, r)
        x = gaussian.sample_field(cov, seed)
        name = f"sample_{r:05d}.csv"
        _write(os.path.join(out, name), _stamp(cfg, x.to_csv()))
        files.append(name)
        seeds.append(seed.to_dict())
    manifest = {"command": "sample", "config": cfg.to_dict() | {"out": None}, "config_hash": cfg.hash,
                "kernel": kernel.spec_to_dict(spec) if cfg.kernel != "zero" else {"variant": "zero"},
                "kernel_hash": cov.key, "jitter": cov.jitter, "grid": grid.to_dict(),
                "seeds": seeds, "files": files}
    _write(os.path.join(out, "manifest.json"), _json(manifest))
    print(f"wrote {len(files)} samples to {out}")
    return 0


def cmd_chaos(cfg: RunConfig) -> int:
    replicas = cfg.replicas or DEFAULT_REPLICAS
    out = _prepare_out(cfg)
    grid, spec, cov = _model(cfg)
    files = []
    weights = np.empty((replicas, grid.size))
    clamped = 0
    for r in range(replicas):
        x = gaussian.sample_field(cov, SeedRecord(cfg.seed, r))
        m = chaos.build_chaos(x, cov, grid)
        weights[r] = m.weights
        clamped += m.clamped
        name = f"chaos_{r:05d}.csv"
        _write(os.path.join(out, name), _stamp(cfg, m.to_csv()))
        files.append(name)
    masses = weights.sum(axis=1)
    pairs = cfg.pairs or [list(p) for p in verify.all_pairs(grid.size)]
    mu = grid.cell_measure
    second = []
    for i, j in pairs:
        prod = weights[:, i] * weights[:, j]
        second.append({"pair": [i, j], "estimate": float(prod.mean()),
                       "se": float(prod.std(ddof=1) / math.sqrt(len(prod))) if len(prod) > 1 else 0.0,
                       "target": math.exp(cov.entries[i, j]) * mu[i] * mu[j]})
    summary = {"command": "chaos", "config_hash": cfg.hash, "kernel_hash": cov.key, "replicas": replicas,
               "total_measure": grid.total_measure, "mean_mass": float(masses.mean()),
               "mass_se": float(masses.std(ddof=1) / math.sqrt(len(masses))) if len(masses) > 1 else 0.0,
               "clamped": clamped, "second_moment": second, "files": files}
    _write(os.path.join(out, "summary.json"), _json(summary))
    print(f"wrote {len(files)} chaos measures to {out}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    suite_cfg = verify.SuiteConfig(seed=cfg.seed, replicas=cfg.replicas, z=cfg.z, bonferroni=cfg.bonferroni)
    try:
        reports = verify.run_suite(cfg.suite, suite_cfg)
    except verify.UnknownSuiteError as exc:
        raise ConfigError(str(exc)) from exc
    lines = "".join(r.to_json() + "\n" for r in reports)
    if cfg.out:
        out = _prepare_out(cfg)
        _write(os.path.join(out, "reports.jsonl"), lines)
    if reports:
        print(format_table(reports))
    s = summarize(reports)
    print(f"{s['tests']} tests, {s['comparisons']} statistical comparisons, "
          f"{len(s['failed'])} failed")
    if not cfg.out:
        sys.stdout.write(lines)
    return verify.exit_code(reports)


def cmd_sweep(cfg: RunConfig) -> int:
    replicas = cfg.replicas or DEFAULT_REPLICAS
    kind = cfg.sweep or ("gamma" if cfg.gamma_ladder else "eps" if cfg.eps_ladder else None)
    if kind is None:
        raise ConfigError("sweep needs --gamma-ladder or --eps-ladder")
    ladder = cfg.gamma_ladder if kind == "gamma" else cfg.eps_ladder
    if not ladder:
        raise ConfigError(f"empty {kind} ladder")
    out = _prepare_out(cfg)
    grid = cfg.grid()
    rows = []
    if kind == "gamma":
        if cfg.kernel not in ("kahane", "log"):
            raise ConfigError("gamma sweeps need the kahane or log kernel")
        bound = verify.subcritical_bound(cfg.dim)
        if any(g >= bound for g in ladder):
            raise ConfigError(f"gamma ladder must stay below sqrt(2d) = {bound:.4f}")
        unit_spec = kernel.KahaneFamily(cfg.C, 1.0) if cfg.kernel == "kahane" else kernel.LogKernel(1.0)
        unit = kernel.eval_kernel(unit_spec, grid)
        x1, _ = gaussian.sample_ensemble(unit, SeedRecord(cfg.seed), replicas)
        mu = grid.cell_measure
        for g in ladder:
            mass = chaos.chaos_weights(g * x1, g * g * unit.diag, mu)[0].sum(axis=1)
            se = float(mass.std(ddof=1) / math.sqrt(len(mass))) if len(mass) > 1 else 0.0
            rows.append((g, float(mu @ np.exp(g * g * unit.entries) @ mu), float(mass.mean()), se))
        header = "gamma,second_moment,mean_mass,mass_se"
        doc = "gamma: field scale; second_moment: closed-form E[M[T]^2]; mean_mass/mass_se: Monte Carlo E M[T]"
    else:
        if len(cfg.mollifier) != 2:
            raise ConfigError("eps sweeps compare exactly two mollifiers")
        try:
            cov = kernel.eval_kernel(cfg.kernel_spec(), grid)
            rep = verify.test_mollifier_independence(
                cov, grid, tuple(kernel.mollifier(m) for m in cfg.mollifier), ladder, replicas,
                SeedRecord(cfg.seed), z=cfg.z)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rows = [(r["eps"], r["D"], r["se"]) for r in rep.metadata["ladder"]]
        header = "eps,D,se"
        doc = "eps: mollifier scale; D: E|M_psi1[T] - M_psi2[T]| over coupled samples; se: its standard error"
    body = header + "\n" + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in rows)
    _write(os.path.join(out, "sweep.csv"), _stamp(cfg, body, doc))
    print(f"wrote {len(rows)} rows to {os.path.join(out, 'sweep.csv')}")
    return 0


COMMANDS = {"sample": cmd_sample, "chaos": cmd_chaos, "verify": cmd_verify, "sweep": cmd_sweep}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gmclab", description="Gaussian multiplicative chaos laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("sample", "write Gaussian field samples"),
                        ("chaos", "write chaos measures and moment summaries"),
                        ("verify", "run verification suites"),
                        ("sweep", "sweep gamma or eps and tabulate statistics")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config")
        s.add_argument("--kernel", choices=KERNELS)
        s.add_argument("--C", type=float)
        s.add_argument("--gamma", type=float)
        s.add_argument("--n", type=int)
        s.add_argument("--dim", type=int)
        s.add_argument("--replicas", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--suite", action="append")
        s.add_argument("--mollifier", action="append")
        s.add_argument("--eps-ladder", dest="eps_ladder", action="append")
        s.add_argument("--gamma-ladder", dest="gamma_ladder", action="append")
        s.add_argument("--sweep", choices=("gamma", "eps"))
        s.add_argument("--z", type=float)
        s.add_argument("--bonferroni", action="store_true")
        s.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
