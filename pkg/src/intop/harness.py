"""Metrics, the repeated 90/10 benchmark and report rendering."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines.genetic import build_model, ga_tune
from .baselines.neural import fit_cnn, fit_ffnn
from .config import Config, fingerprint, to_dict
from .data import Dataset, dataset_fingerprint_bytes, make_split
from .operator import IntegralOperatorModel
from .training import train

log = logging.getLogger(__name__)

METRICS = ("accuracy", "precision", "recall", "f1")
DISPLAY_NAMES = {
    "IO": "Integral Operator",
    "DT": "DT",
    "SVM": "SVM",
    "FFNN": "FFNN",
    "CNN+FFNN": "CNN+FFNN",
}
NOT_IMPLEMENTED = ("DT+UMAP", "SVM+UMAP")


class ReportError(ValueError):
    pass


def confusion_matrix(y_true, y_pred, n_classes) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def metrics(cm, average="macro") -> dict:
    """Accuracy and class-averaged precision, recall and F1.

    Per-class ratios with a zero denominator count as 0. ``average`` is
    ``macro`` (equal class weights) or ``weighted`` (by true-class support).
    """
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise ValueError(f"confusion matrix must be square and non-empty, got shape {cm.shape}")
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix holds no samples")
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    if average == "macro":
        weights = np.full(len(tp), 1.0 / len(tp))
    elif average == "weighted":
        weights = actual / total
    else:
        raise ValueError(f"unknown averaging mode {average!r}")
    return {
        "accuracy": float(tp.sum() / total),
        "precision": float(weights @ precision),
        "recall": float(weights @ recall),
        "f1": float(weights @ f1),
    }


# ---------------------------------------------------------------------------
# one (model, run) cell


def _run_cell(key, dataset: Dataset, run, seed, cfg: Config):
    split = make_split(len(dataset), seed)
    X, y, C = dataset.X, dataset.y, dataset.n_classes
    Xtr, ytr = X[split.train], y[split.train]
    Xv, yv = X[split.val], y[split.val]
    extra = {}
    if key == "IO":
        model = IntegralOperatorModel(X.shape[1], C, cfg.operator, cfg.mc, seed=seed)
        tc = _with_seed(cfg.train, seed)
        model, trace = train(model, Xtr, ytr, tc, Xv, yv)
        extra["best_epoch"] = trace.best_epoch
    elif key == "FFNN":
        model, trace = fit_ffnn(Xtr, ytr, C, _with_seed(cfg.baseline_train, seed), cfg.ffnn, Xv, yv, seed=seed)
        extra["best_epoch"] = trace.best_epoch
    elif key == "CNN+FFNN":
        model, trace = fit_cnn(Xtr, ytr, C, _with_seed(cfg.baseline_train, seed), cfg.cnn, Xv, yv, seed=seed)
        extra["best_epoch"] = trace.best_epoch
    elif key in ("DT", "SVM"):
        family = "tree" if key == "DT" else "svm"
        params, fit, _ = ga_tune(family, Xtr, ytr, Xv, yv, C, cfg.ga, seed=seed)
        full = split.train_full
        model = build_model(family, params, X[full], y[full], C, cfg.ga)
        extra["hyperparams"] = params
        extra["ga_fitness"] = fit
    else:
        raise ValueError(f"unknown model {key!r}")
    pred = model.predict(X[split.test])
    cm = confusion_matrix(y[split.test], pred, C)
    return {"run": run, "seed": seed, "n_test": int(len(split.test)), "confusion": cm.tolist(),
            **metrics(cm, cfg.metrics.average), **extra}


def _with_seed(tc, seed):
    return replace(tc, seed=seed)


def _safe_cell(args):
    key, dataset, run, seed, cfg = args
    try:
        return _run_cell(key, dataset, run, seed, cfg)
    except Exception as e:  # one failing model must not sink the others
        log.exception("model %s run %d failed", key, run)
        return {"run": run, "seed": seed, "error": f"{type(e).__name__}: {e}"}


# ---------------------------------------------------------------------------
# reports


@dataclass
class ModelRow:
    key: str
    runs: list = field(default_factory=list)
    error: str | None = None

    @property
    def name(self):
        return DISPLAY_NAMES.get(self.key, self.key)

    def values(self, metric):
        return np.array([r[metric] for r in self.runs], dtype=np.float64)

    def mean(self, metric):
        return float(self.values(metric).mean())

    def std(self, metric):
        v = self.values(metric)
        return float(v.std(ddof=1)) if len(v) > 1 else 0.0


@dataclass
class RunReport:
    dataset: str
    n_runs: int
    base_seed: int
    fingerprint: str
    rows: list
    config: dict = field(default_factory=dict)

    @property
    def failed(self):
        return any(r.error for r in self.rows)

    def row(self, key):
        for r in self.rows:
            if r.key == key:
                return r
        raise KeyError(key)

    def to_dict(self):
        rows = []
        for r in self.rows:
            entry = {"model": r.key, "name": r.name, "runs": r.runs, "error": r.error}
            if r.runs and not r.error:
                entry["mean"] = {m: r.mean(m) for m in METRICS}
                entry["std"] = {m: r.std(m) for m in METRICS}
                entry["std_defined"] = len(r.runs) > 1
            rows.append(entry)
        return {
            "format": "intop-report/1",
            "dataset": self.dataset,
            "n_runs": self.n_runs,
            "base_seed": self.base_seed,
            "fingerprint": self.fingerprint,
            "not_implemented": list(NOT_IMPLEMENTED),
            "config": self.config,
            "rows": rows,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "intop-report/1":
            raise ReportError("not an intop-report/1 document")
        rows = [ModelRow(e["model"], list(e["runs"]), e.get("error")) for e in d["rows"]]
        return cls(d["dataset"], d["n_runs"], d["base_seed"], d["fingerprint"], rows, d.get("config", {}))


def run_benchmark(dataset: Dataset, roster=None, n_runs=None, base_seed=None, config: Config | None = None,
                  jobs=None) -> RunReport:
    """Train and test every roster model on ``n_runs`` seeded 90/10 splits.

    Run ``k`` uses split seed ``base_seed + k`` for every model, so all
    models see identical test indices. Results are ordered by (model, run)
    regardless of completion order.
    """
    config = config or Config()
    roster = list(config.bench.roster if roster is None else roster)
    n_runs = config.bench.runs if n_runs is None else n_runs
    base_seed = config.seed if base_seed is None else base_seed
    jobs = config.bench.jobs if jobs is None else jobs
    if not roster:
        raise ValueError("empty model roster")
    if n_runs < 1:
        raise ValueError("need at least one run")
    tasks = [(key, dataset, k, base_seed + k, config) for key in roster for k in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_safe_cell, tasks))
    else:
        results = [_safe_cell(t) for t in tasks]
    rows = []
    for i, key in enumerate(roster):
        cells = results[i * n_runs:(i + 1) * n_runs]
        errors = [c["error"] for c in cells if "error" in c]
        rows.append(ModelRow(key, [c for c in cells if "error" not in c], "; ".join(errors) or None))
    cfg_dict = to_dict(config)
    fp = fingerprint(cfg_dict, dataset_fingerprint_bytes(dataset), roster, n_runs, base_seed)
    return RunReport(dataset.name, n_runs, base_seed, fp, rows, cfg_dict)


def _cell(mean, std):
    return f"{mean:.4f} ± {std:.4f}"


def render_markdown(report: RunReport) -> str:
    lines = [
        f"Benchmark on {report.dataset} ({report.n_runs} runs, base seed {report.base_seed})",
        "",
        "| Model | Accuracy | Precision | Recall | F1 |",
        "|---|---|---|---|---|",
    ]
    for r in report.rows:
        if r.error or not r.runs:
            lines.append(f"| {r.name} | failed | failed | failed | failed |")
        else:
            lines.append("| " + " | ".join([r.name] + [_cell(r.mean(m), r.std(m)) for m in METRICS]) + " |")
    lines.append("")
    if report.n_runs == 1:
        lines.append("Single run: standard deviations are reported as 0 and carry no information.")
    lines.append(f"Not implemented: {', '.join(NOT_IMPLEMENTED)}.")
    lines.append(f"Config fingerprint: {report.fingerprint}")
    return "\n".join(lines) + "\n"


CSV_FIELDS = ["model", "run", "seed", "n_test", *METRICS, "confusion", "extra", "error"]


def render_csv(report: RunReport) -> str:
    buf = io.StringIO()
    for key in ("dataset", "n_runs", "base_seed", "fingerprint"):
        buf.write(f"# {key}={getattr(report, key)}\n")
    buf.write(f"# config={json.dumps(report.config, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.rows:
        if r.error:
            w.writerow([r.key, "", "", "", "", "", "", "", "", "", r.error])
        for run in r.runs:
            extra = {k: v for k, v in run.items() if k not in CSV_FIELDS}
            w.writerow([r.key, run["run"], run["seed"], run["n_test"], *(repr(run[m]) for m in METRICS),
                        json.dumps(run["confusion"]), json.dumps(extra, sort_keys=True), ""])
    return buf.getvalue()


def parse_csv_report(text: str) -> RunReport:
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            body.append(line)
    rows = {}
    for rec in csv.DictReader(body):
        row = rows.setdefault(rec["model"], ModelRow(rec["model"]))
        if rec["error"]:
            row.error = rec["error"]
            continue
        run = {"run": int(rec["run"]), "seed": int(rec["seed"]), "n_test": int(rec["n_test"]),
               "confusion": json.loads(rec["confusion"]), **{m: float(rec[m]) for m in METRICS}}
        run.update(json.loads(rec["extra"]))
        row.runs.append(run)
    return RunReport(meta["dataset"], int(meta["n_runs"]), int(meta["base_seed"]), meta["fingerprint"],
                     list(rows.values()), json.loads(meta.get("config", "{}")))


def render_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n"


FORMATS = {"markdown": render_markdown, "csv": render_csv, "json": render_json}
EXTENSIONS = {"markdown": ".md", "csv": ".csv", "json": ".json"}


def emit_report(report: RunReport, fmt: str, path=None) -> str:
    """Render ``report`` as markdown, csv or json; write to ``path`` if given."""
    try:
        render = FORMATS[fmt]
    except KeyError:
        raise ReportError(f"unknown report format {fmt!r}; choose from {sorted(FORMATS)}") from None
    text = render(report)
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(path) -> RunReport:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        return parse_csv_report(text)
    return RunReport.from_dict(json.loads(text))


def compare_reports(a: RunReport, b: RunReport) -> dict:
    """Mean-metric differences ``b - a`` per shared model; refuses mismatched fingerprints."""
    if a.fingerprint != b.fingerprint:
        raise ReportError(f"config fingerprints differ ({a.fingerprint[:12]} vs {b.fingerprint[:12]})")
    out = {}
    for ra in a.rows:
        try:
            rb = b.row(ra.key)
        except KeyError:
            continue
        if ra.runs and rb.runs:
            out[ra.key] = {m: rb.mean(m) - ra.mean(m) for m in METRICS}
    return out
