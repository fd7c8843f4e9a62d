"""Command-line entry point: ``hpsearch {gen,search,resume,report}``.

A workspace directory holds everything one run needs::

    run.json        effective configuration, frozen by ``search``
    dataset/        see :mod:`hpsearch.datagen`
    ledger.jsonl    see :mod:`hpsearch.optimizer`
    members/        weight files of the current top-k trials
    report/         running_stats.tsv, top_trials.tsv, confusion.tsv, localization.tsv
    .lock           held while a command mutates the workspace

The optional ``--config`` file is JSON with any of the keys ``seed``, ``k``,
``preset`` ("desk" or "paper"), ``gen`` (dataset options), ``search``
(``random_iters``, ``adaptive_iters``, ``penalty_loss``), ``gp``
(surrogate options), ``caps`` (``max_params``, ``max_train_macs``) and
``space`` (a search-space definition). Command-line flags override it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock, Timeout

from . import datagen
from .datagen import GenConfig, StratificationError
from .nnet.model import PRESETS
from .optimizer import Ledger, LedgerError, SearchConfig, ShortfallError, run_search
from .pipeline import Caps, CnnObjective, MemberCache, write_report
from .space import ParamSpace, default_space
from .surrogate import GPConfig

log = logging.getLogger("hpsearch")

RUN_FILE = "run.json"
LEDGER_FILE = "ledger.jsonl"


class UsageError(Exception):
    """Bad configuration or workspace state; reported with exit status 2."""


@dataclass
class RunConfig:
    workspace: Path
    seed: int = 0
    k: int = 10
    preset: str = "desk"
    gen: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    gp: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)
    space: dict | None = None

    @property
    def dataset_dir(self) -> Path:
        return self.workspace / "dataset"

    @property
    def ledger_path(self) -> Path:
        return self.workspace / LEDGER_FILE

    @property
    def members_dir(self) -> Path:
        return self.workspace / "members"

    @property
    def report_dir(self) -> Path:
        return self.workspace / "report"

    def to_dict(self) -> dict:
        return {"seed": self.seed, "k": self.k, "preset": self.preset, "gen": self.gen,
                "search": self.search, "gp": self.gp, "caps": self.caps, "space": self.space}

    def gen_config(self) -> GenConfig:
        try:
            return GenConfig.from_dict({**self.gen, "seed": self.seed})
        except TypeError as exc:
            raise UsageError(f"bad gen options: {exc}") from None

    def search_config(self) -> SearchConfig:
        try:
            return SearchConfig(seed=self.seed, gp=GPConfig(**self.gp), **self.search)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad search options: {exc}") from None

    def param_space(self) -> ParamSpace:
        if self.space is None:
            return default_space()
        try:
            return ParamSpace.from_dict(self.space)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad space definition: {exc}") from None

    def resource_caps(self) -> Caps:
        try:
            return Caps(**self.caps)
        except TypeError as exc:
            raise UsageError(f"bad caps: {exc}") from None


_KNOWN_KEYS = {"seed", "k", "preset", "gen", "search", "gp", "caps", "space"}


def load_config(args) -> RunConfig:
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(data) - _KNOWN_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(Path(args.workspace), **data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.k is not None:
        cfg.k = args.k
    if args.random_iters is not None:
        cfg.search["random_iters"] = args.random_iters
    if args.adaptive_iters is not None:
        cfg.search["adaptive_iters"] = args.adaptive_iters
    if cfg.k < 1:
        raise UsageError("k must be at least 1")
    if cfg.preset not in PRESETS:
        raise UsageError(f"unknown preset {cfg.preset!r}; choose from {sorted(PRESETS)}")
    return cfg


def _frozen_config(args) -> RunConfig:
    """The configuration saved by ``search``; flags may only repeat it."""
    path = Path(args.workspace) / RUN_FILE
    if not path.exists():
        raise UsageError(f"{path} not found; start with 'search'")
    saved = RunConfig(Path(args.workspace), **json.loads(path.read_text()))
    if args.config is not None:
        raise UsageError("--config cannot be used with a frozen run; edit nothing and resume")
    for flag, value in (("seed", args.seed), ("random_iters", args.random_iters),
                        ("adaptive_iters", args.adaptive_iters)):
        current = saved.seed if flag == "seed" else saved.search.get(flag, getattr(SearchConfig(), flag))
        if value is not None and value != current:
            raise UsageError(f"--{flag.replace('_', '-')} {value} conflicts with the saved run ({current})")
    if args.k is not None:
        saved.k = args.k
    return saved


def _load_dataset(cfg: RunConfig) -> datagen.SliceDataset:
    if not (cfg.dataset_dir / "manifest.json").exists():
        raise UsageError(f"no dataset in {cfg.dataset_dir}; run 'gen' first")
    return datagen.load(cfg.dataset_dir)


def _objective(cfg: RunConfig, ds) -> CnnObjective:
    return CnnObjective(ds, cfg.param_space(), PRESETS[cfg.preset], cfg.resource_caps())


def cmd_gen(cfg: RunConfig) -> None:
    gen = cfg.gen_config()
    try:
        ds = datagen.generate(gen)
    except (StratificationError, ValueError) as exc:
        raise UsageError(f"cannot generate dataset: {exc}") from None
    datagen.save(ds, cfg.dataset_dir)
    counts = {s: sum(v.slice_count for v in ds.volumes_in(s)) for s in datagen.SPLITS}
    print(f"wrote {len(ds.volumes)} volumes to {cfg.dataset_dir} (slices: {counts})")


def _search(cfg: RunConfig, ledger: Ledger) -> None:
    ds = _load_dataset(cfg)
    objective = _objective(cfg, ds)
    cache = MemberCache(cfg.members_dir, ledger, cfg.k)
    sc = cfg.search_config()
    run_search(objective.space, objective, sc, ledger, on_trial=cache)
    ok = len(ledger.ok_trials())
    best = min((t.loss for t in ledger.ok_trials()), default=float("nan"))
    print(f"{len(ledger)} trials in {cfg.ledger_path} ({ok} ok, best loss {best:.4f})")


def cmd_search(cfg: RunConfig) -> None:
    if cfg.ledger_path.exists() and cfg.ledger_path.stat().st_size > 0:
        raise UsageError(f"{cfg.ledger_path} already exists; use 'resume'")
    _load_dataset(cfg)
    cfg.search_config()
    cfg.param_space()
    (cfg.workspace / RUN_FILE).write_text(json.dumps(cfg.to_dict(), indent=1) + "\n")
    _search(cfg, Ledger(cfg.ledger_path))


def cmd_resume(cfg: RunConfig) -> None:
    _search(cfg, Ledger.load(cfg.ledger_path))


def cmd_report(cfg: RunConfig) -> None:
    ledger = Ledger.load(cfg.ledger_path)
    ds = _load_dataset(cfg)
    objective = _objective(cfg, ds)
    cache = MemberCache(cfg.members_dir, ledger, cfg.k)
    summary = write_report(ledger, ds, objective, cache, cfg.report_dir, cfg.k, cfg.seed)
    (cfg.report_dir / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(f"report written to {cfg.report_dir}")
    for key, value in summary.items():
        if key != "member_val_errors":
            print(f"  {key}: {value:.4f}")


COMMANDS = {"gen": cmd_gen, "search": cmd_search, "resume": cmd_resume, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workspace", default=".", help="workspace directory (default: .)")
    common.add_argument("--config", default=None, help="JSON configuration file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--k", type=int, default=None, help="ensemble size")
    common.add_argument("--random-iters", type=int, default=None)
    common.add_argument("--adaptive-iters", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="hpsearch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate the synthetic dataset")
    sub.add_parser("search", parents=[common], help="start a new two-stage search")
    sub.add_parser("resume", parents=[common], help="continue an interrupted search")
    sub.add_parser("report", parents=[common], help="write report tables for a finished search")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    workspace = Path(args.workspace)
    try:
        cfg = _frozen_config(args) if args.command in ("resume", "report") else load_config(args)
        workspace.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(workspace / ".lock"))
        if args.command == "report":
            # reports only read the search state; they just need it to be quiescent
            with lock.acquire(timeout=5):
                pass
            cmd_report(cfg)
        else:
            with lock.acquire(timeout=0):
                COMMANDS[args.command](cfg)
    except Timeout:
        print(f"error: workspace {workspace} is locked by another command", file=sys.stderr)
        return 3
    except (UsageError, LedgerError, ShortfallError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted; continue with 'resume'", file=sys.stderr)
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
