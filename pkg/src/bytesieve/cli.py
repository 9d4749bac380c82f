"""``bytesieve`` command line: fuzz, collect, train, predict, report.

Exit status is 0 on success, 1 for a bad configuration and 2 for a failure
while running.
"""

from __future__ import annotations

import argparse
import csv
import logging
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fuzzer import STATS_HEADER, Budget, collect_samples, run_campaign
from .mutation import load_dictionary
from .neural import (
    DEFAULT_LR,
    FormatError,
    ModelConfig,
    build_dataset,
    iter_samples,
    load_model,
    param_count,
    predict_heatmap,
    save_model,
    train,
)
from .neural.model import ARCHS
from .neural.train import DEFAULT_BATCH, DEFAULT_STEPS
from .sieve import AUGMENTED, BASELINE, ModelMasks, SieveConfig, calibrate_theta
from .targets import TARGETS, get_target

log = logging.getLogger("bytesieve")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
QUARTILE_MARKS = " .:#"


class ConfigError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    target: str | None = None
    seeds: Path | None = None
    out: Path | None = None
    mode: str = BASELINE
    model: Path | None = None
    alpha: int = 0
    theta: float | str = 0.5  # or "auto": median heat over the seeds
    p_explore: float = 0.5
    execs: int | None = None
    secs: float | None = None
    rng: int | None = None
    arch: str = "lstm"
    layers: int = 1
    chunk_bits: int = 64
    steps: int = DEFAULT_STEPS
    batch: int = DEFAULT_BATCH
    lr: float = DEFAULT_LR
    rate: float = 0.01
    dictionary: Path | None = None
    samples: tuple[Path, ...] = ()
    file: Path | None = None
    dirs: tuple[Path, ...] = ()

    def validate(self) -> None:
        if self.command in ("fuzz", "collect"):
            if self.rng is None:
                raise ConfigError("--rng is required so the run can be repeated exactly")
            if self.target not in TARGETS:
                raise ConfigError(f"unknown target {self.target!r}; choose from {', '.join(sorted(TARGETS))}")
            if self.execs is None and self.secs is None:
                raise ConfigError("give a budget with --execs and/or --secs")
            if (self.execs is not None and self.execs < 0) or (self.secs is not None and self.secs < 0):
                raise ConfigError("budgets must be non-negative")
            if self.out is None:
                raise ConfigError("--out is required")
        if self.command == "fuzz":
            if self.mode not in (BASELINE, AUGMENTED):
                raise ConfigError(f"--mode must be {BASELINE} or {AUGMENTED}")
            if self.mode == AUGMENTED and self.model is None:
                raise ConfigError("--mode augmented needs --model")
            try:
                SieveConfig(self.alpha, 0.5 if self.theta == "auto" else self.theta, self.p_explore)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        if self.command == "collect" and not 0.0 <= self.rate <= 1.0:
            raise ConfigError("--rate must lie in [0, 1]")
        if self.command == "train":
            if not self.samples:
                raise ConfigError("train needs at least one sample file")
            if self.out is None:
                raise ConfigError("--out is required")
            try:
                ModelConfig(self.arch, self.layers, self.chunk_bits)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            if self.steps < 0 or self.batch < 1 or self.lr <= 0:
                raise ConfigError("--steps must be >= 0, --batch >= 1 and --lr > 0")
        if self.command == "predict" and (self.model is None or self.file is None):
            raise ConfigError("predict needs --model and an input file")
        if self.command == "report" and not self.dirs:
            raise ConfigError("report needs at least one campaign directory")


def read_seed_dir(path: Path) -> list[bytes]:
    if not path.is_dir():
        raise ConfigError(f"seed directory {path} does not exist")
    seeds = [p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()]
    seeds = [s for s in seeds if s]
    if not seeds:
        raise ConfigError(f"seed directory {path} holds no non-empty files")
    return seeds


def _campaign_inputs(cfg: CliConfig):
    target = get_target(cfg.target)
    seeds = read_seed_dir(cfg.seeds) if cfg.seeds is not None else target.seeds()
    dictionary = load_dictionary(cfg.dictionary) if cfg.dictionary is not None else ()
    return target, seeds, dictionary, Budget(cfg.execs, cfg.secs)


def cmd_fuzz(cfg: CliConfig) -> int:
    target, seeds, dictionary, budget = _campaign_inputs(cfg)
    theta = 0.5 if cfg.theta == "auto" else cfg.theta
    masks = None
    if cfg.mode == AUGMENTED:
        model = load_model(cfg.model)
        if cfg.theta == "auto":
            theta = calibrate_theta(model, seeds)
            print(f"theta={theta:.6g} (median seed heat)")
        masks = ModelMasks(model, theta)
    sieve = SieveConfig(cfg.alpha, theta, cfg.p_explore)
    res = run_campaign(target, seeds, cfg.mode, sieve, budget, cfg.rng, masks, out_dir=cfg.out,
                       dictionary=dictionary)
    row = res.stats.final
    print(f"execs={row.total_execs} vetoed={row.vetoed_execs} queue={row.queue_size} "
          f"input_gains={row.input_gains} unique_crashes={row.unique_crashes}")
    return EXIT_OK


def cmd_collect(cfg: CliConfig) -> int:
    target, seeds, dictionary, budget = _campaign_inputs(cfg)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    n = collect_samples(target, seeds, cfg.rate, budget, cfg.rng, out=cfg.out, dictionary=dictionary)
    print(f"wrote {n} samples to {cfg.out}")
    return EXIT_OK


def cmd_train(cfg: CliConfig) -> int:
    config = ModelConfig(cfg.arch, cfg.layers, cfg.chunk_bits)
    records = [r for path in cfg.samples for r in iter_samples(path)]
    ds = build_dataset(records, gamma=0, chunk_bits=cfg.chunk_bits)
    if len(ds) == 0:
        raise RuntimeError("no samples left after filtering (every score was 0)")
    print(f"arch={config.arch} layers={config.layers} chunk_bits={config.chunk_bits} "
          f"param_count={param_count(config)} lr={format_float(cfg.lr)}")
    print(f"training on {len(ds)} examples for {cfg.steps} steps")
    model = train(ds, config, cfg.steps, cfg.batch, rng=cfg.rng if cfg.rng is not None else 0, lr=cfg.lr,
                  log_every=max(cfg.steps // 10, 1))
    tail = model.loss_history[-min(100, len(model.loss_history)):]
    final = float(np.mean(tail)) if tail else float("nan")
    print(f"final_loss={final:.6f}")
    save_model(model, cfg.out)
    return EXIT_OK


def format_float(x: float) -> str:
    """Compact float text without exponent padding: 5e-05 -> 5e-5."""
    return re.sub(r"e([+-])0*(\d)", r"e\1\2", f"{x:g}").replace("e+", "e")


def format_heat(data: bytes, heat: np.ndarray) -> str:
    """CSV rows ``offset,byte,heat`` followed by a hex view in which each byte
    carries a marker for its heat quartile within the file."""
    lines = ["offset,byte,heat"]
    lines += [f"{i},{b:02x},{h:.3f}" for i, (b, h) in enumerate(zip(data, heat))]
    q = np.quantile(heat, [0.25, 0.5, 0.75])
    marks = np.searchsorted(q, heat, side="right")
    lines.append("")
    lines.append(f"# quartile markers: '{QUARTILE_MARKS[0]}' <q1 '{QUARTILE_MARKS[1]}' <q2 "
                 f"'{QUARTILE_MARKS[2]}' <q3 '{QUARTILE_MARKS[3]}' top")
    for s in range(0, len(data), 16):
        cells = " ".join(f"{b:02x}{QUARTILE_MARKS[m]}" for b, m in zip(data[s:s + 16], marks[s:s + 16]))
        lines.append(f"{s:08x}  {cells}")
    return "\n".join(lines)


def cmd_predict(cfg: CliConfig) -> int:
    model = load_model(cfg.model)
    data = cfg.file.read_bytes()
    if not data:
        raise ConfigError(f"{cfg.file} is empty")
    print(format_heat(data, predict_heatmap(model, data)))
    return EXIT_OK


def read_stats(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or ",".join(rows[0]) != STATS_HEADER:
        raise FormatError(f"{path}: unexpected stats header")
    return np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, 7)


def merge_stats(tables: list[np.ndarray]) -> np.ndarray:
    """Row-wise mean over instances, truncated to the shortest series."""
    n = min(len(t) for t in tables)
    return np.mean([t[:n] for t in tables], axis=0)


def format_report(tables: list[np.ndarray]) -> str:
    mean = merge_stats(tables)
    cols = STATS_HEADER.split(",")
    lines = ["# mean series", STATS_HEADER]
    lines += [",".join(f"{v:.6f}" if j == 0 else f"{v:.10g}" for j, v in enumerate(r)) for r in mean]
    finals = np.array([t[-1] for t in tables])
    lines += ["", "# final values", "metric,mean,min,max"]
    for j, name in enumerate(cols):
        lines.append(f"{name},{finals[:, j].mean():.10g},{finals[:, j].min():.10g},{finals[:, j].max():.10g}")
    return "\n".join(lines)


def cmd_report(cfg: CliConfig) -> int:
    tables = []
    for d in cfg.dirs:
        path = d / "stats.csv" if d.is_dir() else d
        if not path.is_file():
            raise ConfigError(f"no stats.csv in {d}")
        tables.append(read_stats(path))
    if any(len(t) == 0 for t in tables):
        raise FormatError("a stats file holds no rows")
    text = format_report(tables)
    if cfg.out is not None:
        Path(cfg.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {"fuzz": cmd_fuzz, "collect": cmd_collect, "train": cmd_train, "predict": cmd_predict,
            "report": cmd_report}


def theta_arg(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bytesieve", description="Greybox fuzzing with a learned byte sieve.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def campaign_flags(sp):
        sp.add_argument("--target", required=True, choices=sorted(TARGETS))
        sp.add_argument("--seeds", type=Path, help="seed directory (default: the target's built-in seeds)")
        sp.add_argument("--out", type=Path, required=True)
        sp.add_argument("--execs", type=int)
        sp.add_argument("--secs", type=float, help="virtual seconds")
        sp.add_argument("--rng", type=int, help="rng seed (required)")
        sp.add_argument("--dict", dest="dictionary", type=Path)

    f = sub.add_parser("fuzz", help="run a campaign")
    campaign_flags(f)
    f.add_argument("--mode", default=BASELINE, choices=[BASELINE, AUGMENTED])
    f.add_argument("--model", type=Path)
    f.add_argument("--alpha", type=int, default=0)
    f.add_argument("--theta", type=theta_arg, default=0.5,
                   help="mask threshold in (0, 1), or 'auto' for the median heat over the seeds")
    f.add_argument("--p-explore", dest="p_explore", type=float, default=0.5)

    c = sub.add_parser("collect", help="collect (x, x', score) training samples")
    campaign_flags(c)
    c.add_argument("--rate", type=float, default=0.01)

    t = sub.add_parser("train", help="train a heat-map model")
    t.add_argument("samples", type=Path, nargs="+")
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--arch", default="lstm", choices=list(ARCHS))
    t.add_argument("--layers", type=int, default=1)
    t.add_argument("--chunk", dest="chunk_bits", type=int, default=64)
    t.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    t.add_argument("--batch", type=int, default=DEFAULT_BATCH)
    t.add_argument("--lr", type=float, default=DEFAULT_LR)
    t.add_argument("--rng", type=int)

    pr = sub.add_parser("predict", help="print the heat map of a file")
    pr.add_argument("--model", type=Path, required=True)
    pr.add_argument("file", type=Path)

    r = sub.add_parser("report", help="merge stats.csv files from several campaigns")
    r.add_argument("dirs", type=Path, nargs="+")
    r.add_argument("--out", type=Path)
    return p


def parse_config(argv: list[str] | None = None) -> tuple[CliConfig, bool]:
    ns = vars(build_parser().parse_args(argv))
    verbose = ns.pop("verbose")
    for key in ("samples", "dirs"):
        if key in ns:
            ns[key] = tuple(ns[key])
    return CliConfig(**ns), verbose


def main(argv: list[str] | None = None) -> int:
    try:
        cfg, verbose = parse_config(argv)
    except SystemExit as e:  # argparse usage errors
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg.validate()
        return COMMANDS[cfg.command](cfg)
    except ConfigError as e:
        print(f"bytesieve: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError, ValueError, RuntimeError) as e:
        print(f"bytesieve: {cfg.command} failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
