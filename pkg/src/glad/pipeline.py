"""End-to-end orchestration: build or load a dataset, train a candidate
pool over a grid, run label-free selection, and evaluate against ground
truth when available.

Seeding: a single master seed is expanded into per-stage streams with
``SeedSequence((master_seed, stage))`` so stages stay independent and
every artifact is reproducible byte for byte.
"""

from __future__ import annotations

import configparser
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as gdata
from . import selection as gsel
from . import trainer as gtrain
from .errors import FormatError, GladError, MethodError
from .metrics import roc_auc, wilcoxon_one_sided

STAGE_TRAIN_GRAPHS = 0
STAGE_TEST_INLIERS = 1
STAGE_TEST_ANOMALIES = 2
STAGE_SPLIT = 3
STAGE_TRAINING = 4

GRID_INT_KEYS = ("layers", "seed", "epochs", "batch_size", "d_hidden",
                 "nystrom_k")
GRID_FLOAT_KEYS = ("weight_decay", "lr", "nystrom_mult")


def stage_seed(master_seed: int, stage: int) -> int:
    """Derive a stage seed from the master seed."""
    return int(np.random.SeedSequence((master_seed, stage)).generate_state(1)[0])


@dataclass(frozen=True)
class BenchmarkParams:
    """Synthetic benchmark shape: clean training graphs plus a test set
    mixing inlier-like and structurally different graphs."""

    n_train: int = 100
    n_test: int = 100
    anomaly_rate: float = 0.05
    nodes: int = 50
    ba_m: int = 2
    labels: int = 5
    homophily_in: float = 0.7
    homophily_out: float = 0.3

    def __post_init__(self):
        if not 0 < self.anomaly_rate < 1:
            raise ValueError(f"anomaly_rate {self.anomaly_rate} outside (0, 1)")
        if min(self.n_train, self.n_test) < 1:
            raise ValueError("need at least one train and one test graph")


@dataclass(eq=False)
class EvalReport:
    """Evaluation summary of one pipeline run."""

    method_auc: dict
    model_auc: np.ndarray | None
    pool_mean_auc: float | None
    pool_best_auc: float | None
    n_models: int
    n_dropped: int
    notices: list = field(default_factory=list)
    wilcoxon_p: dict | None = None


def generate_benchmark(params: BenchmarkParams, master_seed: int):
    """Build the synthetic benchmark: training inliers at the inlier
    homophily, a test set contaminated with graphs grown at the anomaly
    homophily, features one-hot over the shared label alphabet.

    Returns ``(train_db, test_db)``.
    """
    p = params
    n_anom = max(1, int(round(p.anomaly_rate * p.n_test)))
    if n_anom >= p.n_test:
        raise ValueError("anomaly_rate leaves no inliers in the test set")
    n_test_in = p.n_test - n_anom

    train = gdata.generate_mixhop(
        p.n_train, p.nodes, p.ba_m, p.homophily_in, p.labels,
        stage_seed(master_seed, STAGE_TRAIN_GRAPHS), id_offset=0)
    test_in = gdata.generate_mixhop(
        n_test_in, p.nodes, p.ba_m, p.homophily_in, p.labels,
        stage_seed(master_seed, STAGE_TEST_INLIERS), id_offset=p.n_train)
    test_out = gdata.generate_mixhop(
        n_anom, p.nodes, p.ba_m, p.homophily_out, p.labels,
        stage_seed(master_seed, STAGE_TEST_ANOMALIES),
        id_offset=p.n_train + n_test_in)

    rng = np.random.default_rng(stage_seed(master_seed, STAGE_SPLIT))
    graphs = list(test_in.graphs) + list(test_out.graphs)
    flags = np.array([False] * n_test_in + [True] * n_anom)
    order = rng.permutation(len(graphs))
    graphs = [graphs[i] for i in order]
    flags = flags[order]

    alphabet = list(range(p.labels))
    train_db = gdata.derive_features(
        gdata.GraphDatabase(graphs=train.graphs, split_tag="train"),
        "one_hot_label", label_alphabet=alphabet)
    test_db = gdata.derive_features(
        gdata.GraphDatabase(graphs=tuple(graphs), anomaly_flags=flags,
                            split_tag="test"),
        "one_hot_label", label_alphabet=alphabet)
    return train_db, test_db


# ---------------------------------------------------------------------------
# Grid files
# ---------------------------------------------------------------------------

def parse_grid_file(path) -> dict:
    """Parse a line-oriented grid file into a grid specification.

    Sections ``[mean]``, ``[mmd]`` and ``[common]`` hold ``key = v1, v2,
    ...`` lines; ``#`` starts a comment.  Keys are typed by name (counts
    are integers, rates are floats).
    """
    spec = {}
    section = None
    lines = Path(path).read_text().splitlines()
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("mean", "mmd", "common"):
                raise FormatError(f"{path}:{ln}: unknown section [{section}]")
            spec.setdefault(section, {})
            continue
        if section is None:
            raise FormatError(f"{path}:{ln}: entry before any section")
        if "=" not in line:
            raise FormatError(f"{path}:{ln}: expected 'key = values'")
        key, _, rest = line.partition("=")
        key = key.strip()
        if key in GRID_INT_KEYS:
            cast = int
        elif key in GRID_FLOAT_KEYS:
            cast = float
        else:
            raise FormatError(f"{path}:{ln}: unknown grid key {key!r}")
        try:
            values = [cast(v.strip()) for v in rest.split(",") if v.strip()]
        except ValueError:
            raise FormatError(f"{path}:{ln}: bad value for {key}") from None
        if not values:
            raise FormatError(f"{path}:{ln}: no values for {key}")
        spec[section][key] = values
    if not spec or not ({"mean", "mmd"} & set(spec)):
        raise FormatError(f"{path}: grid file defines no model family")
    return spec


# ---------------------------------------------------------------------------
# Pipeline configuration
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PipelineConfig:
    out_dir: Path
    master_seed: int = 0
    workers: int = 1
    methods: tuple = ("hits", "hits-ens", "mc", "udr")
    source: str = "generate"
    bench: BenchmarkParams = field(default_factory=BenchmarkParams)
    tu_directory: Path | None = None
    feature_kind: str | None = None
    degree_cap: int = gdata.DEFAULT_DEGREE_CAP
    inlier_class: int = 0
    train_fraction: float = 0.7
    anomaly_rate: float = 0.05
    grid_file: Path | None = None
    grid_spec: dict | None = None


def parse_pipeline_config(path) -> PipelineConfig:
    """Read an INI-style pipeline configuration file."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise FormatError(f"cannot read pipeline config {path}")
    if "run" not in cp or "out_dir" not in cp["run"]:
        raise FormatError(f"{path}: [run] section with out_dir is required")
    run = cp["run"]
    kwargs = dict(out_dir=Path(run["out_dir"]),
                  master_seed=run.getint("master_seed", 0),
                  workers=run.getint("workers", 1))
    if "selection" in cp and "methods" in cp["selection"]:
        methods = tuple(m.strip() for m in
                        cp["selection"]["methods"].split(",") if m.strip())
        bad = [m for m in methods if m not in gsel.METHODS]
        if bad:
            raise FormatError(f"{path}: unknown selection method {bad[0]!r}")
        kwargs["methods"] = methods
    if "grid" in cp and "file" in cp["grid"]:
        kwargs["grid_file"] = Path(cp["grid"]["file"])

    d = cp["data"] if "data" in cp else {}
    source = d.get("source", "generate")
    kwargs["source"] = source
    if source == "generate":
        kwargs["bench"] = BenchmarkParams(
            n_train=int(d.get("n_train", 100)),
            n_test=int(d.get("n_test", 100)),
            anomaly_rate=float(d.get("anomaly_rate", 0.05)),
            nodes=int(d.get("nodes", 50)),
            ba_m=int(d.get("ba_m", 2)),
            labels=int(d.get("labels", 5)),
            homophily_in=float(d.get("homophily_in", 0.7)),
            homophily_out=float(d.get("homophily_out", 0.3)))
    elif source == "tu":
        if "directory" not in d:
            raise FormatError(f"{path}: tu source needs data.directory")
        kwargs["tu_directory"] = Path(d["directory"])
        kwargs["feature_kind"] = d.get("feature_kind")
        kwargs["degree_cap"] = int(d.get("degree_cap",
                                         gdata.DEFAULT_DEGREE_CAP))
        kwargs["inlier_class"] = int(d.get("inlier_class", 0))
        kwargs["train_fraction"] = float(d.get("train_fraction", 0.7))
        kwargs["anomaly_rate"] = float(d.get("anomaly_rate", 0.05))
    else:
        raise FormatError(f"{path}: unknown data source {source!r}")
    return PipelineConfig(**kwargs)


def pick_feature_kind(db: gdata.GraphDatabase) -> str:
    """Prefer labels, then attributes, then degrees."""
    if all(g.node_labels is not None for g in db.graphs):
        return "one_hot_label"
    if all(g.node_attributes is not None for g in db.graphs):
        return "attributes"
    return "one_hot_degree"


def build_dataset(cfg: PipelineConfig):
    """Materialize (train_db, test_db) from the configured source."""
    if cfg.source == "generate":
        return generate_benchmark(cfg.bench, cfg.master_seed)
    db = gdata.load_tu_dataset(cfg.tu_directory)
    kind = cfg.feature_kind or pick_feature_kind(db)
    db = gdata.derive_features(db, kind, degree_cap=cfg.degree_cap)
    return gdata.make_split(db, cfg.inlier_class, cfg.anomaly_rate,
                            cfg.train_fraction,
                            stage_seed(cfg.master_seed, STAGE_SPLIT))


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------

def evaluate_pool(pool: gtrain.CandidatePool, selections: dict,
                  flags: np.ndarray | None, n_dropped: int,
                  notices=()) -> EvalReport:
    """Score every selection outcome and the pool itself against flags."""
    notices = list(notices)
    if flags is None:
        notices.append("no anomaly flags: evaluation skipped")
        return EvalReport(method_auc={}, model_auc=None, pool_mean_auc=None,
                          pool_best_auc=None, n_models=len(pool.model_ids),
                          n_dropped=n_dropped, notices=notices)
    model_auc = np.array([roc_auc(row, flags) for row in pool.scores])
    method_auc = {m: roc_auc(r.final_scores, flags)
                  for m, r in selections.items()}
    return EvalReport(method_auc=method_auc, model_auc=model_auc,
                      pool_mean_auc=float(model_auc.mean()),
                      pool_best_auc=float(model_auc.max()),
                      n_models=len(pool.model_ids), n_dropped=n_dropped,
                      notices=notices)


def write_report(report: EvalReport, pool: gtrain.CandidatePool,
                 selections: dict, path, elapsed: float | None = None) -> None:
    lines = [f"models_kept = {report.n_models}",
             f"models_dropped = {report.n_dropped}",
             f"test_graphs = {len(pool.graph_ids)}"]
    if elapsed is not None:
        lines.append(f"elapsed_seconds = {elapsed:.1f}")
    if report.pool_mean_auc is not None:
        lines.append(f"pool_mean_auc = {report.pool_mean_auc:.9g}")
        lines.append(f"pool_best_auc = {report.pool_best_auc:.9g}")
    for method in sorted(report.method_auc):
        sel = selections[method]
        who = sel.selected_model or "ensemble"
        lines.append(f"auc[{method}] = {report.method_auc[method]:.9g} "
                     f"({who})")
    for note in report.notices:
        lines.append(f"notice: {note}")
    Path(path).write_text("\n".join(lines) + "\n")


def run_pipeline(cfg: PipelineConfig):
    """Run dataset -> pool -> selection -> evaluation, writing every
    artifact under ``cfg.out_dir``.

    Returns ``(report, pool, selections)``.
    """
    t0 = time.monotonic()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_db, test_db = build_dataset(cfg)

    if cfg.grid_spec is not None:
        grid = cfg.grid_spec
    elif cfg.grid_file is not None:
        grid = parse_grid_file(cfg.grid_file)
    else:
        grid = gtrain.DEFAULT_GRID
    configs = gtrain.expand_grid(grid, len(train_db))
    pool = gtrain.run_grid(train_db, test_db, configs, workers=cfg.workers,
                           base_seed=stage_seed(cfg.master_seed,
                                                STAGE_TRAINING))
    gtrain.save_pool(pool, out)

    selections = {}
    notices = [f"dropped {mid}: {diag}" for mid, diag in pool.dropped]
    for method in cfg.methods:
        try:
            result = gsel.select(pool, method)
        except (MethodError, GladError) as exc:
            notices.append(f"selection {method} skipped: {exc}")
            continue
        selections[method] = result
        tag = method.replace("-", "_")
        gsel.write_selection(result, out / f"selected_{tag}.csv",
                             out / f"selection_meta_{tag}.txt")

    report = evaluate_pool(pool, selections, test_db.anomaly_flags,
                           n_dropped=len(pool.dropped), notices=notices)
    write_report(report, pool, selections, out / "report.txt",
                 elapsed=time.monotonic() - t0)
    return report, pool, selections


def summarize_runs(reports, baseline: str = "pool_mean") -> dict:
    """Paired one-sided significance of each method beating the pool
    average across repeated runs: method -> (wins, runs, p_value).

    ``p_value`` is None when fewer than five runs are available.
    """
    if not reports:
        raise ValueError("no reports to summarize")
    methods = sorted(set().union(*(r.method_auc for r in reports)))
    base = np.array([r.pool_mean_auc for r in reports], dtype=float)
    out = {}
    for m in methods:
        vals = np.array([r.method_auc.get(m, np.nan) for r in reports])
        ok = ~np.isnan(vals)
        wins = int(np.sum(vals[ok] >= base[ok]))
        p = None
        if int(np.sum(ok)) >= 5:
            try:
                _, p = wilcoxon_one_sided(base[ok], vals[ok])
            except MethodError:
                p = None
        out[m] = (wins, int(np.sum(ok)), p)
    return out
