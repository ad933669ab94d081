"""Batch pipeline: dataset/design ingestion, run configuration, chain
orchestration, and emission of the result tables.

A run writes six artifacts into its output directory:

* ``trace.csv``        one canonical allocation (and colour) vector per retained sweep
* ``similarity.csv``   posterior pairwise-coincidence matrix
* ``assignments.csv``  loss-optimal partition: per-item cluster and colour
* ``cluster_summaries.csv``  per-cluster mean profile and 95% band
* ``crosstab.csv``     cluster-by-annotation counts (when annotations are given)
* ``manifest.json``    resolved configuration echo; enough to reproduce the run

All outputs are plain text with deterministic formatting: two runs with the
same configuration and seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .conjugate import DesignBlock, NormalGammaSpec
from .errors import ValidationError
from .estimation import (LossSpec, accumulate_similarity, cluster_summaries,
                         expected_pairwise_loss, optimal_partition)
from .gibbs import SweepPlan, TraceRecord, run_chain
from .partitions import MAX_ENUM_N, Partition
from .priors import (BackgroundDirichletProcess, ColouredDirichletProcess,
                     DirichletMultinomial, DirichletProcess, PartitionPrior,
                     PitmanYor)

_FLOAT_FMT = "{:.17g}"


@dataclass
class DatasetTable:
    """A rectangular numeric table: string ids, an n x S data matrix, real
    column names, and optional per-item annotation categories."""

    ids: list[str]
    data: np.ndarray
    columns: list[str]
    annotations: dict[str, list[str]] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


def _dedupe_ids(ids: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for item in ids:
        if item in seen:
            seen[item] += 1
            new = f"{item}_{seen[item]}"
            warnings.warn(f"duplicate id {item!r} renamed to {new!r}")
            out.append(new)
        else:
            seen[item] = 1
            out.append(item)
    return out


def load_dataset(path: str) -> DatasetTable:
    """Load a tab-separated table: header row, id column first, numeric rest.

    Ragged rows and non-numeric or missing cells fail with the offending
    row/column named; duplicate ids are suffix-disambiguated with a warning.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: file is empty") from None
        if len(header) < 2:
            raise ValidationError(f"{path}: need an id column plus at least one data column")
        width = len(header)
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ValidationError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            ids.append(row[0])
            values = []
            for colname, cell in zip(header[1:], row[1:]):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: row {lineno}, column {colname!r}: "
                        f"non-numeric value {cell!r}") from None
            rows.append(values)
    if len(rows) < 2:
        raise ValidationError(f"{path}: need at least 2 items")
    return DatasetTable(_dedupe_ids(ids), np.array(rows, dtype=float), header[1:])


def load_annotations(path: str, ids: Sequence[str]) -> dict[str, list[str]]:
    """Load per-item categories from a tab-separated table keyed by id.

    Every dataset id must appear; extra rows are ignored.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValidationError(f"{path}: need an id column plus at least one category column")
        table = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            table[row[0]] = row[1:]
    missing = [i for i in ids if i not in table]
    if missing:
        raise ValidationError(f"{path}: no annotation for ids {missing[:5]}")
    return {name: [table[i][k] for i in ids] for k, name in enumerate(header[1:])}


def rat_timecourse_design() -> np.ndarray:
    """The default 9x5 design: piecewise-linear time dependence within the
    embryonic (days 11..21), postnatal (days 0..14) and adult phases."""
    return np.array([
        [1, 11, 0, 0, 0],
        [1, 13, 0, 0, 0],
        [1, 15, 0, 0, 0],
        [1, 18, 0, 0, 0],
        [1, 21, 0, 0, 0],
        [0, 0, 1, 0, 0],
        [0, 0, 1, 7, 0],
        [0, 0, 1, 14, 0],
        [0, 0, 0, 0, 1],
    ], dtype=float)


def bundled_data_path(name: str) -> str:
    """Path of a data file shipped with the package."""
    return str(resources.files("cdpmix.data") / name)


def _load_matrix(source) -> np.ndarray:
    if isinstance(source, str):
        return np.loadtxt(source, delimiter=",", ndmin=2)
    return np.asarray(source, dtype=float)


def build_design(design_cfg, n_samples: int) -> DesignBlock:
    """Resolve the design section of a config into a DesignBlock.

    ``"rat-timecourse"`` (or nothing, when the data has 9 samples) selects
    the bundled piecewise-linear matrix; otherwise supply ``{"Z": ..., "X": ...}``
    as inline rows or a CSV path.
    """
    if design_cfg in (None, "rat-timecourse"):
        Z = rat_timecourse_design()
        if Z.shape[0] != n_samples:
            raise ValidationError(
                f"default design expects 9 samples per item, data has {n_samples}")
        return DesignBlock(Z)
    if not isinstance(design_cfg, dict) or "Z" not in design_cfg:
        raise ValidationError("design must be 'rat-timecourse' or a {'Z': ..., 'X': ...} mapping")
    Z = _load_matrix(design_cfg["Z"])
    X = _load_matrix(design_cfg["X"]) if design_cfg.get("X") is not None else None
    if Z.shape[0] != n_samples:
        raise ValidationError(f"Z has {Z.shape[0]} rows, data has {n_samples} samples")
    return DesignBlock(Z, X)


def build_model(model_cfg: dict) -> PartitionPrior:
    if not isinstance(model_cfg, dict) or "family" not in model_cfg:
        raise ValidationError("model config must name a family")
    family = model_cfg["family"]
    try:
        if family == "dp":
            return DirichletProcess(float(model_cfg["concentration"]))
        if family == "dirichlet_multinomial":
            return DirichletMultinomial(int(model_cfg["components"]),
                                        float(model_cfg["weight"]))
        if family == "pitman_yor":
            return PitmanYor(float(model_cfg["discount"]), float(model_cfg["strength"]))
        if family == "cdp":
            return ColouredDirichletProcess([tuple(map(float, pair))
                                             for pair in model_cfg["colours"]])
        if family == "background":
            return BackgroundDirichletProcess(float(model_cfg["background_weight"]),
                                              float(model_cfg["concentration"]))
    except KeyError as exc:
        raise ValidationError(f"model family {family!r} is missing parameter {exc}") from None
    raise ValidationError(f"unknown model family {family!r}")


def _block(value, dim: int) -> np.ndarray:
    if np.isscalar(value):
        return float(value) * np.eye(dim)
    return np.asarray(value, dtype=float).reshape(dim, dim)


def build_priors(prior_cfg: dict, design: DesignBlock,
                 model: PartitionPrior) -> list[NormalGammaSpec]:
    """Per-colour conjugate priors from the config's prior section.

    The regular prior covers both coefficient blocks; for the background
    family, colour 0 pins the Z-block coefficients to ``fixed_z_coeffs``.
    """
    kp, kx = design.n_z, design.n_x
    shape = float(prior_cfg.get("shape", 0.01))
    rate = float(prior_cfg.get("rate", 0.01))
    mean_z = np.asarray(prior_cfg.get("mean_z", np.zeros(kp)), dtype=float)
    mean_x = np.asarray(prior_cfg.get("mean_x", np.zeros(kx)), dtype=float)
    if mean_z.shape != (kp,) or mean_x.shape != (kx,):
        raise ValidationError("prior means must match the design dimensions")
    prec_z = _block(prior_cfg.get("precision_z", 0.01), kp)
    prec_x = _block(prior_cfg.get("precision_x", 0.01), kx)
    full_mean = np.concatenate([mean_z, mean_x])
    full_prec = np.zeros((kp + kx, kp + kx))
    full_prec[:kp, :kp] = prec_z
    full_prec[kp:, kp:] = prec_x
    regular = NormalGammaSpec(shape, rate, full_mean, full_prec)
    if isinstance(model, BackgroundDirichletProcess):
        fixed = np.asarray(prior_cfg.get("fixed_z_coeffs", np.zeros(kp)), dtype=float)
        if fixed.shape != (kp,):
            raise ValidationError("fixed_z_coeffs must match the Z dimension")
        background = NormalGammaSpec(shape, rate, mean_x, prec_x, fixed_z_coeffs=fixed)
        return [background, regular]
    return [regular] * model.n_colours


PRESETS: dict[str, dict] = {
    # Rat CNS time-course defaults: background-cluster model, diffuse priors.
    "wen-rat": {
        "data": "@bundled/rat_cns_synthetic.tsv",
        "annotations": "@bundled/rat_cns_classes.tsv",
        "model": {"family": "background", "background_weight": 5.0, "concentration": 1.0},
        "prior": {"shape": 0.01, "rate": 0.01, "precision_z": 0.01, "precision_x": 0.01},
        "design": "rat-timecourse",
        "sweeps": 20000,
        "burn_in": 10000,
        "thin": 1,
        "seed": 0,
    },
}


def _resolve_path(value: str) -> str:
    if isinstance(value, str) and value.startswith("@bundled/"):
        return bundled_data_path(value[len("@bundled/"):])
    return value


@dataclass
class RunConfig:
    """Fully-resolved run: data, model, priors, schedule, loss, and outputs."""

    dataset: DatasetTable
    design: DesignBlock
    model: PartitionPrior
    specs: list[NormalGammaSpec]
    plan: SweepPlan
    loss: LossSpec
    out_dir: str
    chains: int
    strategy: str
    echo: dict


def parse_config(raw: dict, *, seed: Optional[int] = None, out: Optional[str] = None,
                 chains: Optional[int] = None) -> RunConfig:
    """Validate a config mapping (plus CLI overrides) into a RunConfig."""
    raw = dict(raw or {})
    preset = raw.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ValidationError(f"unknown preset {preset!r} (have: {sorted(PRESETS)})")
        merged = dict(PRESETS[preset])
        merged.update(raw)
        raw = merged
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    if chains is not None:
        raw["chains"] = chains
    raw.setdefault("seed", 0)
    raw.setdefault("chains", 1)

    if "data" not in raw:
        raise ValidationError("config must name a data file")
    dataset = load_dataset(_resolve_path(raw["data"]))
    if raw.get("annotations"):
        dataset.annotations = load_annotations(_resolve_path(raw["annotations"]),
                                               dataset.ids)
    design = build_design(raw.get("design"), dataset.n_samples)
    model = build_model(raw.get("model", {"family": "dp", "concentration": 1.0}))
    specs = build_priors(raw.get("prior", {}), design, model)
    plan = SweepPlan(
        sweeps=int(raw.get("sweeps", 1000)),
        burn_in=int(raw.get("burn_in", 0)),
        thin=int(raw.get("thin", 1)),
        subset_move_rate=float(raw.get("subset_move_rate", 0.0)),
        subset_max_size=int(raw.get("subset_max_size", 8)),
        seed=int(raw["seed"]),
    )
    loss_cfg = raw.get("loss", {})
    loss = LossSpec(float(loss_cfg.get("false_positive", 1.0)),
                    float(loss_cfg.get("false_negative", 1.0)))
    if int(raw["chains"]) < 1:
        raise ValidationError("chains must be >= 1")
    strategy = raw.get("strategy", "auto")
    if strategy not in ("auto", "exact", "greedy"):
        raise ValidationError("strategy must be auto, exact, or greedy")
    return RunConfig(dataset, design, model, specs, plan, loss,
                     out_dir=raw.get("out", "cdpmix-run"), chains=int(raw["chains"]),
                     strategy=strategy, echo=raw)


def _chain_task(args) -> list[TraceRecord]:
    Y, design, model, specs, plan = args
    return run_chain(Y, design, model, specs, plan)


def _chain_plans(plan: SweepPlan, chains: int) -> list[SweepPlan]:
    seeds = np.random.SeedSequence(plan.seed).generate_state(chains)
    return [SweepPlan(plan.sweeps, plan.burn_in, plan.thin, plan.subset_move_rate,
                      plan.subset_max_size, int(s)) for s in seeds]


def run_chains(config: RunConfig) -> list[list[TraceRecord]]:
    """Run the configured number of chains (concurrently when more than one)."""
    plans = _chain_plans(config.plan, config.chains)
    tasks = [(config.dataset.data, config.design, config.model, config.specs, p)
             for p in plans]
    if config.chains == 1:
        return [_chain_task(tasks[0])]
    with ProcessPoolExecutor(max_workers=min(config.chains, os.cpu_count() or 1)) as pool:
        return list(pool.map(_chain_task, tasks))


def _majority_colours(partition: Partition, traces: list[list[TraceRecord]],
                      n_colours: int) -> list[int]:
    """Colour per cluster of the estimate: majority of members' sampled colours."""
    n = partition.n
    freq = np.zeros((n, n_colours), dtype=np.int64)
    for trace in traces:
        for rec in trace:
            freq[np.arange(n), rec.colours] += 1
    out = []
    for c in partition.clusters:
        votes = freq[list(c)].sum(axis=0)
        out.append(int(votes.argmax()))
    return out


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return _FLOAT_FMT.format(x)


def write_trace(path: str, ids: list[str], traces: list[list[TraceRecord]]) -> None:
    header = ["chain", "sweep"] + [f"c:{i}" for i in ids] + [f"k:{i}" for i in ids]
    rows = []
    for chain_idx, trace in enumerate(traces):
        for rec in trace:
            rows.append([chain_idx, rec.sweep, *rec.labels, *rec.colours])
    _write_csv(path, header, rows)


def read_trace(path: str) -> tuple[list[str], list[dict]]:
    """Reload a trace file; returns item ids and per-record dicts."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = (len(header) - 2) // 2
        ids = [name[2:] for name in header[2:2 + n]]
        records = []
        for row in reader:
            records.append({
                "chain": int(row[0]),
                "sweep": int(row[1]),
                "labels": tuple(int(v) for v in row[2:2 + n]),
                "colours": tuple(int(v) for v in row[2 + n:2 + 2 * n]),
            })
    return ids, records


def read_similarity(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return np.array([[float(v) for v in row[1:]] for row in reader])


def _summarize_outputs(out_dir: str, dataset: DatasetTable, model: PartitionPrior,
                       loss: LossSpec, strategy: str,
                       traces: list[list[TraceRecord]]) -> tuple[list[str], dict]:
    """Write similarity, assignments, summaries and crosstab from a trace."""
    records = [rec for trace in traces for rec in trace]
    if not records:
        raise ValidationError("no retained sweeps to summarize")
    sim = accumulate_similarity(records)
    rho = sim.matrix
    if strategy == "auto":
        strategy = "exact" if dataset.n <= MAX_ENUM_N else "greedy"
    estimate = optimal_partition(rho, loss, strategy=strategy)
    estimate_info = {
        "strategy": strategy,
        "clusters": estimate.degree,
        "loss": expected_pairwise_loss(estimate, rho, loss),
    }
    if dataset.n <= 10:
        # small instances report both search strategies for comparison
        for alt in ("exact", "greedy"):
            alt_part = optimal_partition(rho, loss, strategy=alt)
            estimate_info[f"loss_{alt}"] = expected_pairwise_loss(alt_part, rho, loss)
    n_colours = getattr(model, "n_colours", 1)
    cluster_colours = _majority_colours(estimate, traces, n_colours)

    written = []

    def emit(name, header, rows):
        path = os.path.join(out_dir, name)
        _write_csv(path, header, rows)
        written.append(name)

    emit("similarity.csv", ["id"] + dataset.ids,
         [[item] + [_fmt(v) for v in rho[i]] for i, item in enumerate(dataset.ids)])

    labels = estimate.allocation()
    item_colour = [0] * dataset.n
    for j, c in enumerate(estimate.clusters):
        for i in c:
            item_colour[i] = cluster_colours[j]
    emit("assignments.csv", ["id", "cluster", "colour"],
         [[item, labels[i], item_colour[i]] for i, item in enumerate(dataset.ids)])

    rows = []
    for j, summary in enumerate(cluster_summaries(estimate, dataset.data)):
        for k, col in enumerate(dataset.columns):
            rows.append([j, len(summary.items), col, _fmt(summary.mean[k]),
                         _fmt(summary.lower[k]), _fmt(summary.upper[k])])
    emit("cluster_summaries.csv",
         ["cluster", "size", "sample", "mean", "lower95", "upper95"], rows)

    if dataset.annotations:
        rows = []
        for name, categories in dataset.annotations.items():
            levels = sorted(set(categories))
            for j, c in enumerate(estimate.clusters):
                for level in levels:
                    count = sum(1 for i in c if categories[i] == level)
                    rows.append([name, j, level, count])
        emit("crosstab.csv", ["annotation", "cluster", "category", "count"], rows)

    return written, estimate_info


def run_pipeline(config: RunConfig) -> dict:
    """Sample, summarize, and write all artifacts; returns the manifest dict."""
    os.makedirs(config.out_dir, exist_ok=True)
    probe = os.path.join(config.out_dir, ".write-probe")
    try:
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ValidationError(f"output directory {config.out_dir!r} is not writable") from exc

    traces = run_chains(config)
    write_trace(os.path.join(config.out_dir, "trace.csv"), config.dataset.ids, traces)
    artifacts = ["trace.csv"]
    written, estimate_info = _summarize_outputs(config.out_dir, config.dataset,
                                                config.model, config.loss,
                                                config.strategy, traces)
    artifacts += written

    # the output location is not part of the run's content; keep same-seed
    # runs byte-identical wherever they land
    echo = {k: v for k, v in config.echo.items() if k != "out"}
    manifest = {
        "package": "cdpmix",
        "version": __version__,
        "config": echo,
        "n_items": config.dataset.n,
        "n_samples": config.dataset.n_samples,
        "artifacts": sorted(artifacts + ["manifest.json"]),
        "estimate": estimate_info,
        "log_posterior": [rec.log_posterior for trace in traces for rec in trace],
    }
    with open(os.path.join(config.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def summarize_run(out_dir: str) -> dict:
    """Recompute estimation outputs from an existing run directory's trace."""
    manifest_path = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ValidationError(f"{out_dir!r} does not contain manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    config = parse_config(manifest["config"])
    ids, records = read_trace(os.path.join(out_dir, "trace.csv"))
    if ids != config.dataset.ids:
        raise ValidationError("trace ids do not match the configured dataset")
    by_chain: dict[int, list] = {}
    for rec in records:
        by_chain.setdefault(rec["chain"], []).append(
            TraceRecord(rec["sweep"], rec["labels"], rec["colours"],
                        degree=len(set(rec["labels"])),
                        colour_degrees=(), log_posterior=float("nan")))
    traces = [by_chain[k] for k in sorted(by_chain)]
    _summarize_outputs(out_dir, config.dataset, config.model, config.loss,
                       config.strategy, traces)
    return manifest
