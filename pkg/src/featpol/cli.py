"""Command-line interface: simulate, fit, predict, evaluate, ingest.

All randomness flows from the single top-level `seed` key through
documented split points: simulate derives cell seeds as
child_seed(seed, 0, seed_index, snr_index, k_index); fit seeds its chain
with child_seed(cell_seed, 1) inside a cells tree and
child_seed(seed, 1, 0) for a single data file; predict draws MMSE
substates from child_seed(seed, 2) (child_seed(cell_seed, 2) per cell).
Sweep commands operate on a cells tree: `simulate` writes one
subdirectory per (seed, snr_db, K_true) cell, `fit` and `predict` fill
each cell with a trace and prediction files, and `evaluate` aggregates
the finished cells into per-run and per-cell CSV summaries.
"""

import argparse
import concurrent.futures
import pathlib
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from .distributions import RandomSource, child_seed
from .gibbs import MH_MOVES, ChainConfig, Trace, run_chain
from .ingest import GridSpec, load_labeled_sequence
from .model import Hyperparameters, ObservationSet, SubstateGrid
from .predict import map_estimate, predict_action_map, predict_action_mmse
from .synth import (
    METRICS_CSV_HEADER,
    SynthConfig,
    evaluate,
    generate_ground_truth,
    load_ground_truth,
    metrics_csv_row,
    save_ground_truth,
    split_train_test,
    summarize_runs,
)

_HYPER_KEYS = tuple(f.name for f in fields(Hyperparameters))

SUMMARY_CSV_HEADER = ("snr_db,K_true,n_seeds,eps_F,eps_S,eps_X,"
                      "policy_mad,accuracy_map,accuracy_mmse,K_err")


@dataclass
class RunConfig:
    """Flat key=value run settings; every key can live in a config file."""

    # prior constants (mirror Hyperparameters defaults)
    h1_alpha_sigma: float = 1000.0
    h2_alpha_sigma: float = 1.0
    h1_beta_sigma: float = 1.0
    h2_beta_sigma: float = 1.0
    h1_alpha_A: float = 1.0
    h2_alpha_A: float = 1.0
    h1_beta_A: float = 1.0
    h2_beta_A: float = 10.0
    alpha_gamma: float = 1.0
    beta_gamma: float = 1.0
    h1_phi: float = 1.0
    h2_phi: float = 1.0
    alpha_s_zero: float = 1.0
    alpha_s_nonzero: float = 1.0
    P_plus: float = 0.01
    T_corr: float = 0.9
    N_iter: int = 10_000
    L: int = 100
    N_t: int = 1000
    reweight_actions: bool = False
    # sampler schedule (n_iter=0 inherits N_iter; burn_in=-1 means half)
    n_iter: int = 0
    burn_in: int = -1
    thin: int = 1
    merge_every: int = 10
    seed: int = 0
    # synthetic sweep
    snr_db_grid: tuple = (10.0, 15.0, 20.0, 25.0, 30.0)
    K_true_grid: tuple = (5, 7, 9, 12, 15, 18)
    n_seeds: int = 20
    N_z: int = 100
    D: int = 30
    N_u: int = 4
    train_fraction: float = 0.8
    # prediction
    estimator: str = "map"
    draws_per_sample: int = 10
    infer_sweeps: int = 5
    # ingestion grid
    x_min: float = 0.0
    x_max: float = 10.0
    y_min: float = -3.0
    y_max: float = 3.0
    cells_x: int = 10
    cells_y: int = 6
    height_threshold: float = -1.5
    frame_pattern: str = "frame_*.txt"
    label_file: str = "labels.txt"
    # paths
    data_in: str = ""
    model_out: str = ""
    metrics_out: str = ""
    predictions_out: str = ""
    out: str = "."

    def __post_init__(self):
        if self.estimator not in ("map", "mmse"):
            raise ValueError(f"estimator must be 'map' or 'mmse', "
                             f"got {self.estimator!r}")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")
        if not self.snr_db_grid or not self.K_true_grid:
            raise ValueError("sweep grids must be nonempty")

    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(**{k: getattr(self, k) for k in _HYPER_KEYS})

    def chain_config(self, seed: int) -> ChainConfig:
        n_iter = self.n_iter if self.n_iter > 0 else self.N_iter
        burn_in = self.burn_in if self.burn_in >= 0 else n_iter // 2
        return ChainConfig(n_iter=n_iter, burn_in=burn_in, thin=self.thin,
                           seed=seed, merge_every=self.merge_every)


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_value(field, raw: str):
    if field.type in ("bool", bool):
        return _parse_bool(raw)
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    if field.type in ("tuple", tuple):
        elem = int if field.name == "K_true_grid" else float
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(elem(p) for p in parts)
    return raw


def load_run_config(path) -> RunConfig:
    """Parse a flat key=value file; unknown keys are an error."""
    by_name = {f.name: f for f in fields(RunConfig)}
    overrides = {}
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ValueError(f"{path}: line {i}: expected key=value, "
                                 f"got {text!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in by_name:
                raise ValueError(f"{path}: line {i}: unknown config key {key!r}")
            try:
                overrides[key] = _parse_value(by_name[key], raw)
            except ValueError as exc:
                raise ValueError(f"{path}: line {i}: bad value for "
                                 f"{key!r}: {exc}") from None
    return RunConfig(**overrides)


def format_run_config(cfg: RunConfig) -> str:
    """Render the effective config so it can be fed back via --config."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name}={text}")
    return "\n".join(lines) + "\n"


def _write_effective_config(cfg: RunConfig, outdir: pathlib.Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.txt").write_text(format_run_config(cfg))


def _run_tasks(worker, payloads, jobs: int):
    if jobs <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, payloads))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def sweep_cells(cfg: RunConfig):
    """Enumerate the (seed index, snr, K) cells of the configured sweep."""
    cells = []
    for si in range(cfg.n_seeds):
        for i_snr, snr in enumerate(cfg.snr_db_grid):
            for i_k, K in enumerate(cfg.K_true_grid):
                cell_seed = child_seed(cfg.seed, 0, si, i_snr, i_k)
                name = f"s{si:02d}_snr{snr:g}_K{int(K):02d}"
                cells.append({"name": name, "seed_index": si,
                              "snr_db": float(snr), "K_true": int(K),
                              "cell_seed": cell_seed})
    return cells


def _write_cell_info(path: pathlib.Path, cell: dict) -> None:
    path.write_text(
        f"seed_index={cell['seed_index']}\n"
        f"snr_db={cell['snr_db']!r}\n"
        f"K_true={cell['K_true']}\n"
        f"cell_seed={cell['cell_seed']}\n")


def _read_cell_info(path: pathlib.Path) -> dict:
    info = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            info[key] = value
    return {"seed_index": int(info["seed_index"]),
            "snr_db": float(info["snr_db"]),
            "K_true": int(info["K_true"]),
            "cell_seed": int(info["cell_seed"])}


def _simulate_cell(payload):
    cfg, cell, cell_dir = payload
    cell_dir = pathlib.Path(cell_dir)
    cell_dir.mkdir(parents=True, exist_ok=True)
    synth_cfg = SynthConfig(K_true=cell["K_true"], snr_db=cell["snr_db"],
                            seed=cell["cell_seed"], N_z=cfg.N_z, D=cfg.D,
                            N_u=cfg.N_u, train_fraction=cfg.train_fraction)
    truth, data = generate_ground_truth(synth_cfg, SubstateGrid(cfg.L),
                                        RandomSource(cell["cell_seed"]))
    train, test = split_train_test(data, synth_cfg.n_train)
    train.save(cell_dir / "train.txt")
    test.save(cell_dir / "test.txt")
    save_ground_truth(truth, cell_dir / "truth.txt")
    _write_cell_info(cell_dir / "cell_info.txt", cell)
    return cell["name"]


def cmd_simulate(cfg: RunConfig, jobs: int = 1) -> int:
    outdir = pathlib.Path(cfg.out)
    _write_effective_config(cfg, outdir)
    cells_dir = outdir / "cells"
    payloads = [(cfg, cell, str(cells_dir / cell["name"]))
                for cell in sweep_cells(cfg)]
    names = _run_tasks(_simulate_cell, payloads, jobs)
    print(f"wrote {len(names)} cells to {cells_dir}")
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _fit_summary(trace: Trace) -> str:
    state = map_estimate(trace)
    logp = max(lp for _, lp in trace.samples)
    lines = [f"K_MAP {state.K}", f"log_posterior {repr(float(logp))}"]
    for move in MH_MOVES:
        counts = trace.accept_stats[move]
        rate = counts["accepted"] / max(counts["proposed"], 1)
        lines.append(f"accept_{move} {repr(rate)}")
    return "\n".join(lines) + "\n"


def _cell_dirs(root: pathlib.Path):
    cells_dir = root / "cells" if (root / "cells").is_dir() else root
    return sorted(d for d in cells_dir.iterdir()
                  if d.is_dir() and (d / "cell_info.txt").exists())


def _sweep_root(cfg: RunConfig) -> pathlib.Path | None:
    """Directory of simulation cells a command should operate on, if any.

    An explicit data_in directory wins; with data_in unset, fall back to
    the tree a previous simulate left under cfg.out so the whole sweep
    can run off one config file.
    """
    if cfg.data_in:
        path = pathlib.Path(cfg.data_in)
        return path if path.is_dir() else None
    out = pathlib.Path(cfg.out)
    if out.is_dir() and _cell_dirs(out):
        return out
    return None


def _fit_one(payload):
    cfg, data_path, trace_path, summary_path, chain_seed = payload
    data = ObservationSet.load(data_path)
    trace = run_chain(data, cfg.hyperparameters(), cfg.chain_config(chain_seed))
    trace.save(trace_path)
    summary = _fit_summary(trace)
    pathlib.Path(summary_path).write_text(summary)
    return summary


def cmd_fit(cfg: RunConfig, jobs: int = 1) -> int:
    outdir = pathlib.Path(cfg.out)
    sweep = _sweep_root(cfg)

    if sweep is not None:
        _write_effective_config(cfg, outdir)
        payloads = []
        for cell_dir in _cell_dirs(sweep):
            info = _read_cell_info(cell_dir / "cell_info.txt")
            payloads.append((cfg, str(cell_dir / "train.txt"),
                             str(cell_dir / "trace.txt"),
                             str(cell_dir / "summary.txt"),
                             child_seed(info["cell_seed"], 1)))
        if not payloads:
            raise ValueError(f"no cells found under {sweep}")
        _run_tasks(_fit_one, payloads, jobs)
        print(f"fitted {len(payloads)} cells under {sweep}")
        return 0

    if not cfg.data_in:
        raise ValueError("fit needs data_in (an observation file or a "
                         "simulate output directory), or cells under --out")
    _write_effective_config(cfg, outdir)
    trace_path = cfg.model_out or str(outdir / "trace.txt")
    summary = _fit_one((cfg, cfg.data_in, trace_path,
                        str(outdir / "summary.txt"),
                        child_seed(cfg.seed, 1, 0)))
    print(summary, end="")
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def _format_prediction(index: int, result) -> str:
    probs = " ".join(repr(float(p)) for p in result.action_distribution)
    return f"{index} {probs} {result.best_action}"


def _predict_file(payload):
    cfg, trace_path, query_path, out_path, predict_seed = payload
    trace = Trace.load(trace_path)
    queries = ObservationSet.load(query_path)
    grid = SubstateGrid(cfg.L)
    lines = []
    if cfg.estimator == "map":
        state = map_estimate(trace)
        for i in range(queries.n_obs):
            lines.append(_format_prediction(
                i, predict_action_map(queries.Z[i], state, grid)))
    else:
        base = RandomSource(predict_seed)
        for i in range(queries.n_obs):
            result = predict_action_mmse(
                queries.Z[i], trace, grid, base.split(i),
                draws_per_sample=cfg.draws_per_sample,
                n_sweeps=cfg.infer_sweeps)
            lines.append(_format_prediction(i, result))
    pathlib.Path(out_path).write_text("\n".join(lines) + "\n")
    return out_path


def cmd_predict(cfg: RunConfig, jobs: int = 1) -> int:
    outdir = pathlib.Path(cfg.out)
    _write_effective_config(cfg, outdir)
    sweep = _sweep_root(cfg)

    if sweep is not None:
        payloads = []
        for cell_dir in _cell_dirs(sweep):
            info = _read_cell_info(cell_dir / "cell_info.txt")
            trace_path = cell_dir / "trace.txt"
            if not trace_path.exists():
                raise FileNotFoundError(f"missing {trace_path}; run fit first")
            payloads.append((cfg, str(trace_path), str(cell_dir / "test.txt"),
                             str(cell_dir / f"predictions_{cfg.estimator}.txt"),
                             child_seed(info["cell_seed"], 2)))
        if not payloads:
            raise ValueError(f"no cells found under {sweep}")
        _run_tasks(_predict_file, payloads, jobs)
        print(f"predicted {len(payloads)} cells with the "
              f"{cfg.estimator} estimator")
        return 0

    if not cfg.data_in:
        raise ValueError("predict needs data_in (a query observation file "
                         "or a cells directory), or cells under --out")
    if not cfg.model_out:
        raise ValueError("predict needs model_out: the trace file to decode")
    out_path = cfg.predictions_out or str(outdir / "predictions.txt")
    _predict_file((cfg, cfg.model_out, cfg.data_in, out_path,
                   child_seed(cfg.seed, 2)))
    print(pathlib.Path(out_path).read_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _read_predicted_actions(path: pathlib.Path) -> np.ndarray:
    best = []
    for line in path.read_text().splitlines():
        parts = line.split()
        if parts:
            best.append(int(parts[-1]))
    return np.asarray(best, dtype=np.int64)


def cmd_evaluate(cfg: RunConfig, jobs: int = 1) -> int:
    source = _sweep_root(cfg)
    if source is None:
        raise ValueError("evaluate needs data_in (a simulate output "
                         "directory), or cells under --out")
    outdir = pathlib.Path(cfg.out)
    _write_effective_config(cfg, outdir)

    rows = []
    per_cell = {}
    for cell_dir in _cell_dirs(source):
        info = _read_cell_info(cell_dir / "cell_info.txt")
        needed = ["truth.txt", "test.txt", "trace.txt",
                  "predictions_map.txt", "predictions_mmse.txt"]
        for name in needed:
            if not (cell_dir / name).exists():
                raise FileNotFoundError(f"missing {cell_dir / name}")
        truth = load_ground_truth(cell_dir / "truth.txt")
        test = ObservationSet.load(cell_dir / "test.txt")
        trace = Trace.load(cell_dir / "trace.txt")
        pred_map = _read_predicted_actions(cell_dir / "predictions_map.txt")
        pred_mmse = _read_predicted_actions(cell_dir / "predictions_mmse.txt")

        state = map_estimate(trace)
        record = evaluate(state, truth, test, pred_map)
        accuracy_mmse = float(np.mean(pred_mmse == test.u))
        rows.append(metrics_csv_row(info["seed_index"], info["snr_db"],
                                    info["K_true"], record,
                                    record.accuracy, accuracy_mmse))
        key = (info["snr_db"], info["K_true"])
        per_cell.setdefault(key, []).append((record, accuracy_mmse))
    if not rows:
        raise ValueError(f"no cells found under {source}")

    metrics_path = pathlib.Path(cfg.metrics_out or outdir / "metrics.csv")
    metrics_path.write_text("\n".join([METRICS_CSV_HEADER] + rows) + "\n")

    summary_lines = [SUMMARY_CSV_HEADER]
    for (snr, K) in sorted(per_cell):
        entries = per_cell[(snr, K)]
        summary = summarize_runs([rec for rec, _ in entries])
        acc_mmse = float(np.mean([acc for _, acc in entries]))
        summary_lines.append(",".join([
            repr(float(snr)), str(int(K)), str(len(entries)),
            repr(summary["eps_F"]), repr(summary["eps_S"]),
            repr(summary["eps_X"]), repr(summary["policy_mad"]),
            repr(summary["accuracy"]), repr(acc_mmse),
            repr(summary["K_err"])]))
    summary_path = outdir / "summary.csv"
    summary_path.write_text("\n".join(summary_lines) + "\n")
    print(f"wrote {metrics_path} and {summary_path}")
    return 0


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def cmd_ingest(cfg: RunConfig, jobs: int = 1) -> int:
    if not cfg.data_in:
        raise ValueError("ingest needs data_in: a directory of frame files")
    frames_dir = pathlib.Path(cfg.data_in)
    outdir = pathlib.Path(cfg.out)
    _write_effective_config(cfg, outdir)

    frame_files = sorted(frames_dir.glob(cfg.frame_pattern))
    if not frame_files:
        raise FileNotFoundError(f"no frames matching {cfg.frame_pattern!r} "
                                f"in {frames_dir}")
    spec = GridSpec(x_range=(cfg.x_min, cfg.x_max),
                    y_range=(cfg.y_min, cfg.y_max),
                    cells_x=cfg.cells_x, cells_y=cfg.cells_y,
                    height_threshold=cfg.height_threshold)
    data = load_labeled_sequence(frame_files, frames_dir / cfg.label_file, spec)
    out_path = outdir / "observations.txt"
    data.save(out_path)
    print(f"wrote {data.n_obs} observations of dimension {data.dim} "
          f"to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "ingest": cmd_ingest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featpol",
        description="Latent feature and policy learning from demonstrations")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "generate synthetic sweep cells (train/test/truth files)",
        "fit": "run the Gibbs chain on observations and save the trace",
        "predict": "decode actions for query observations from a trace",
        "evaluate": "aggregate fitted cells into metric CSV files",
        "ingest": "convert point-cloud frames into observation vectors",
    }
    for name, help_text in helps.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", metavar="PATH",
                        help="flat key=value config file")
        sp.add_argument("--seed", type=int, metavar="U64",
                        help="top-level seed override")
        sp.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="parallel workers for sweep cells")
        sp.add_argument("--estimator", choices=("map", "mmse"),
                        help="action estimator override")
        sp.add_argument("--reweight-actions", action="store_true",
                        help="balance the action likelihood by class counts")
        sp.add_argument("--out", metavar="DIR",
                        help="output directory override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config) if args.config else RunConfig()
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.estimator is not None:
            overrides["estimator"] = args.estimator
        if args.reweight_actions:
            overrides["reweight_actions"] = True
        if args.out is not None:
            overrides["out"] = args.out
        if overrides:
            cfg = replace(cfg, **overrides)
        return _COMMANDS[args.command](cfg, jobs=max(int(args.jobs), 1))
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
