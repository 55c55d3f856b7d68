"""``tfgen`` command line: analyze, reconstruct, consistency, convert, preprocess.

Exit codes: 0 success, 1 computational failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .consistency import (
    batch_rho,
    gamma,
    random_logmag,
    redundancy_sweep,
    rho,
    rspe,
    snr_sweep,
    sweep_system,
    write_sweep_csv,
)
from .errors import (
    ConventionError,
    FormatError,
    ParameterError,
    ShapeError,
    TFGenError,
    UnsupportedSystemError,
)
from .features import DEFAULT_R, FeatureTensor, deprocess, preprocess
from .gabor import FI, Convention, GaborSystem, Spectrogram, convert_convention, dgt, idgt, make_window
from .phase import (
    DEFAULT_TOL,
    LogMagnitude,
    log_magnitude,
    measured_phase_derivatives,
    reconstruct_phase,
)
from .store import COMPLEX, FEATURE, LOGMAG, Container, read_tfsg, read_wav, write_tfsg, write_wav

logger = logging.getLogger("tfgen")

USAGE_ERRORS = (FormatError, ParameterError, ShapeError, ConventionError, UnsupportedSystemError, OSError)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    a: int = 128
    M: int = 512
    L: Optional[int] = None
    window: str = "gauss"
    lam: float = 4.0
    Lg: Optional[int] = None
    r: float = DEFAULT_R
    tol: float = DEFAULT_TOL
    seed: int = 0
    convention: str = "fi"
    jobs: int = 1
    output: Optional[str] = None

    def signal_length(self, n: int) -> int:
        """``L`` if set, else ``n`` rounded up to a multiple of lcm(a, M)."""
        if self.L is not None:
            if n > self.L:
                raise ParameterError(f"input has {n} samples, more than L={self.L}")
            return self.L
        step = math.lcm(self.a, self.M)
        return max(step, -(-n // step) * step)

    def system(self, L: int) -> GaborSystem:
        return GaborSystem(make_window(self.window, self.lam, L, self.M, self.Lg), self.a, self.M, L, self.lam)

    def system_for(self, c: Container) -> GaborSystem:
        """System of a stored container; geometry and lambda come from its header."""
        cfg = replace(self, a=c.a, M=c.M, lam=c.lam)
        return cfg.system(c.L)


_CAST = {"a": int, "M": int, "L": int, "Lg": int, "lam": float, "r": float, "tol": float, "seed": int, "jobs": int}
_ALIASES = {"lambda": "lam", "rel_tol": "tol", "m": "M", "l": "L", "lg": "Lg"}


def read_config_file(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    names = {f.name for f in fields(RunConfig)}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = _ALIASES.get(key, _ALIASES.get(key.lower(), key))
            if key not in names:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _CAST.get(key, str)(value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def resolve_config(args) -> RunConfig:
    """Flags beat the config file, which beats the built-in defaults."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    if getattr(args, "seed", None) is None and os.environ.get("TFGEN_SEED"):
        try:
            values["seed"] = int(os.environ["TFGEN_SEED"])
        except ValueError:
            raise UsageError(f"TFGEN_SEED must be an integer, got {os.environ['TFGEN_SEED']!r}") from None
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    for name in ("a", "M", "L", "Lg"):
        v = getattr(cfg, name)
        if v is not None and v < 1:
            raise UsageError(f"--{name} must be a positive integer, got {v}")
    if cfg.window not in ("gauss", "hann"):
        raise UsageError(f"unknown window {cfg.window!r}")
    Convention.parse(cfg.convention)
    if cfg.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    return cfg


# ---------------------------------------------------------------------------
# helpers

def _pad(samples: np.ndarray, L: int) -> np.ndarray:
    out = np.zeros(L)
    out[: samples.size] = samples
    return out


def _load_logmag(c: Container, cfg: RunConfig) -> LogMagnitude:
    system = cfg.system_for(c)
    if c.kind == COMPLEX:
        return log_magnitude(Spectrogram(c.data, system, c.convention))
    if c.kind == LOGMAG:
        return LogMagnitude(c.data, system, floor=min(float(c.data.min()), -30.0))
    return deprocess(FeatureTensor(c.data, cfg.r, 1.0, system))


def _inputs(paths: List[str], suffix: str) -> List[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob(f"*{suffix}")))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {p}")
    if not out:
        raise UsageError(f"no {suffix} inputs found")
    return out


def _default_output(path, suffix) -> str:
    return str(Path(path).with_suffix(suffix))


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(args, cfg: RunConfig) -> int:
    audio = read_wav(args.input)
    L = cfg.signal_length(audio.samples.size)
    system = cfg.system(L)
    spec = dgt(_pad(audio.samples, L), system, Convention.parse(cfg.convention))
    if args.kind == "logmag":
        kind, data = LOGMAG, log_magnitude(spec).values
    else:
        kind, data = COMPLEX, spec.coefficients
    out = cfg.output or _default_output(args.input, ".tfsg")
    write_tfsg(Container(L, system.a, system.M, spec.convention, system.lam, kind, data), out)
    rows, cols = spec.shape
    print(f"shape={rows}x{cols}")
    print(f"redundancy={system.redundancy:g}")
    print(f"lambda={system.lam:g}")
    print(f"output={out}")
    if system.low_redundancy:
        print(f"warning: redundancy M/a={system.redundancy:g} is below 4; phase reconstruction will be unreliable",
              file=sys.stderr)
    return 0


def cmd_reconstruct(args, cfg: RunConfig) -> int:
    c = read_tfsg(args.input)
    logmag = _load_logmag(c, cfg)
    derivs = None
    if args.derivatives == "measured":
        if c.kind != COMPLEX:
            raise UsageError("measured derivatives need a complex payload")
        derivs = measured_phase_derivatives(Spectrogram(c.data, logmag.system, c.convention), cfg.tol)
    start = time.perf_counter()
    recon = reconstruct_phase(logmag, cfg.tol, cfg.seed, method=args.method, derivs=derivs)
    signal = idgt(recon)
    elapsed = time.perf_counter() - start
    error = rspe(logmag, recon)
    samples = signal.samples
    if args.normalize and np.abs(samples).max() > 0:
        samples = samples / np.abs(samples).max() * 0.99
    out = cfg.output or _default_output(args.input, ".wav")
    clipped = write_wav(samples, out, args.rate)
    print(f"method={args.method}")
    print(f"rspe_db={error:.3f}")
    print(f"elapsed_s={elapsed:.3f}")
    print(f"output={out}")
    if clipped:
        print(f"warning: {clipped} samples clipped", file=sys.stderr)
    return 0


def _batch_from_containers(paths, cfg) -> list:
    batch = [_load_logmag(read_tfsg(p), cfg) for p in paths]
    first = batch[0].system
    for p, x in zip(paths, batch):
        if not x.system.same_geometry(first):
            raise UsageError(f"{p}: geometry differs from {paths[0]}")
    return batch


def cmd_consistency(args, cfg: RunConfig) -> int:
    clip = None if args.raw else cfg.r
    if args.sweep:
        return _sweep(args, cfg, clip)
    paths = _inputs(args.inputs, ".tfsg")
    batch = _batch_from_containers(paths, cfg)
    rhos = batch_rho(batch, clip)
    for p, r in zip(paths, rhos):
        print(f"file={p} rho={r:.6f}")
    print(f"mean_rho={rhos.mean():.6f}")
    print(f"std_rho={rhos.std():.6f}")
    print(f"n={rhos.size}")
    if args.against:
        other_paths = _inputs([args.against], ".tfsg")
        other = _batch_from_containers(other_paths, cfg)
        if not other[0].system.same_geometry(batch[0].system):
            raise UsageError("--against batch has a different geometry")
        print(f"gamma={gamma(batch, other, clip):.6f}")
    return 0


def _sweep(args, cfg, clip) -> int:
    paths = _inputs(args.inputs, ".wav")
    signals = [read_wav(p).samples for p in paths]
    if args.sweep == "redundancy":
        systems = [sweep_system(R, cfg.window, cfg.lam) for R in args.redundancies]
        rows = redundancy_sweep(signals, systems, clip)
        rnd = [rho(random_logmag(s, cfg.seed)) for s in systems]
    else:
        system = sweep_system(args.at_redundancy, cfg.window, cfg.lam)
        rows = snr_sweep(signals, system, args.snrs, cfg.seed, clip)
        rnd = [rho(random_logmag(system, cfg.seed))] * len(rows)
    out = cfg.output or f"sweep_{args.sweep}.csv"
    write_sweep_csv(rows, out)
    for row, floor in zip(rows, rnd):
        print(f"{args.sweep}={row.value:g} mean_rho={row.mean_rho:.6f} std_rho={row.std_rho:.6f} "
              f"n={row.n} random_rho={floor:.6f}")
    print(f"output={out}")
    return 0


def cmd_convert(args, cfg: RunConfig) -> int:
    c = read_tfsg(args.input)
    if c.kind != COMPLEX:
        raise UsageError("only complex payloads carry a phase convention")
    target = Convention.parse(args.to)
    spec = Spectrogram(c.data, cfg.system_for(c), c.convention)
    converted = convert_convention(spec, target)
    out = cfg.output or _default_output(args.input, f".{target.short}.tfsg")
    write_tfsg(Container(c.L, c.a, c.M, target, c.lam, COMPLEX, converted.coefficients), out)
    print(f"from={c.convention.short} to={target.short}")
    print(f"output={out}")
    return 0


def _preprocess_one(path: str, cfg: RunConfig, outdir: str, peak: Optional[float]):
    audio = read_wav(path)
    L = cfg.signal_length(audio.samples.size)
    system = cfg.system(L)
    spec = dgt(_pad(audio.samples, L), system)
    feat = preprocess(spec, cfg.r, peak)
    out = os.path.join(outdir, Path(path).stem + ".tfsg")
    write_tfsg(Container(L, system.a, system.M, FI, system.lam, FEATURE, feat.values), out)
    return Path(path).name, feat.peak, rho(deprocess(feat))


def _peak_of(path: str, cfg: RunConfig) -> float:
    audio = read_wav(path)
    L = cfg.signal_length(audio.samples.size)
    return float(dgt(_pad(audio.samples, L), cfg.system(L)).magnitude.max())


def _safe(fn, *a):
    try:
        return fn(*a), None
    except (TFGenError, OSError, ValueError) as exc:
        return None, f"{a[0]}: {exc}"


def cmd_preprocess(args, cfg: RunConfig) -> int:
    paths = [str(p) for p in _inputs([args.input], ".wav")]
    outdir = cfg.output or "features"
    os.makedirs(outdir, exist_ok=True)

    def run(fn, items, *extra):
        if cfg.jobs == 1:
            return [_safe(fn, p, *extra) for p in items]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(_safe, [fn] * len(items), items, *[[e] * len(items) for e in extra]))

    peak = None
    if args.dataset_peak:
        peaks = [p for p, err in run(_peak_of, paths, cfg) if err is None]
        peak = max(peaks) if peaks else None
    results = run(_preprocess_one, paths, cfg, outdir, peak)
    manifest = os.path.join(outdir, "manifest.csv")
    ok = 0
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "peak", "rho"])
        for res, err in results:
            if err is not None:
                logger.error("skipped %s", err)
                print(f"skipped: {err}", file=sys.stderr)
                continue
            name, p, r = res
            w.writerow([name, f"{p:.17g}", f"{r:.6f}"])
            ok += 1
    print(f"processed={ok} skipped={len(paths) - ok}")
    print(f"manifest={manifest}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("configuration")
    g.add_argument("--a", type=int, help="hop size in samples (default 128)")
    g.add_argument("--M", type=int, help="number of channels (default 512)")
    g.add_argument("--L", type=int, help="signal length (default: input padded to lcm(a, M))")
    g.add_argument("--window", choices=("gauss", "hann"))
    g.add_argument("--lambda", dest="lam", type=float, help="time-frequency ratio (default 4)")
    g.add_argument("--Lg", type=int, help="window support (default min(L, M); Hann matched to lambda)")
    g.add_argument("--r", type=float, help="dynamic range for features and rho clipping (default 10)")
    g.add_argument("--tol", type=float, help="relative magnitude threshold (default 1e-7)")
    g.add_argument("--seed", type=int, help="random seed (fallback: TFGEN_SEED, then 0)")
    g.add_argument("--convention", help="fi, ti or sti (default fi)")
    g.add_argument("--jobs", type=int, help="parallel workers for directory commands")
    g.add_argument("--output", "-o", help="output file or directory")
    g.add_argument("--config", help="key=value configuration file")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="tfgen", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="WAV -> TFSG spectrogram")
    p.add_argument("input")
    p.add_argument("--kind", choices=("complex", "logmag"), default="complex")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reconstruct", parents=[common], help="TFSG magnitude -> WAV via phase reconstruction")
    p.add_argument("input")
    p.add_argument("--method", choices=("pghi", "cumsum"), default="pghi")
    p.add_argument("--derivatives", choices=("magnitude", "measured"), default="magnitude",
                   help="phase derivatives estimated from the magnitude or measured from a complex payload")
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--normalize", action="store_true", help="scale the output to peak 0.99")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("consistency", parents=[common], help="rho, gamma and sweeps")
    p.add_argument("inputs", nargs="+", help="TFSG files or directories (WAV for --sweep)")
    p.add_argument("--against", help="second batch (file or directory) for gamma")
    p.add_argument("--sweep", choices=("redundancy", "snr"))
    p.add_argument("--raw", action="store_true", help="do not clip at -r before computing rho")
    p.add_argument("--redundancies", type=int, nargs="+", default=[2, 4, 8, 16, 32])
    p.add_argument("--snrs", type=float, nargs="+", default=[math.inf, 40, 20, 10, 0])
    p.add_argument("--at-redundancy", type=int, default=8)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("convert", parents=[common], help="change the phase convention of a TFSG file")
    p.add_argument("input")
    p.add_argument("--to", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("preprocess", parents=[common], help="WAV directory -> feature containers")
    p.add_argument("input")
    p.add_argument("--dataset-peak", action="store_true", help="normalize by the largest peak of the whole set")
    p.set_defaults(func=cmd_preprocess)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TFGenError, ArithmeticError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
