"""Per-subject stratified-CV experiments across all model families, with
Table-style aggregation (accuracy mean and std per model and subject).

Model families: unimodal EEG random forest, unimodal fMRI linear SVM, early
fusion, early fusion with cross-pairing augmentation, and late fusion.  All
fitting (selection, scaling, submodels, stacker) happens inside the train
fold; the reduction over folds is order-independent, so worker scheduling
can never change a reported number.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import manifold
from .dataio import BimodalSubject, plan_folds, read_dataset
from .eegprep import highpass_array, notch_bank_array
from .features import anova_f, select_percentile
from .fusion import (
    FusionConfig,
    augment_pairs,
    early_fuse_train,
    fusion_predict,
    late_fuse_train,
    pair_exemplars,
)
from .pipelines import eeg_pipeline, fmri_pipeline

__all__ = [
    "MODEL_NAMES",
    "ExperimentConfig",
    "Cell",
    "MetricsTable",
    "eeg_feature_matrix",
    "run_experiment",
    "render_table",
    "parse_config",
]

MODEL_NAMES = ("eeg_rf", "fmri_svm", "early", "early_aug", "late")


@dataclass
class ExperimentConfig:
    subjects: list = field(default_factory=list)  # paths or BimodalSubject objects
    models: tuple = MODEL_NAMES
    k: int = 4
    seed: int = 0
    eeg_percentile: float = 2.0
    fmri_percentile: float = 1.0
    joint_percentile: float = 1.0
    svm_c: float = 0.1
    rf_trees: int = 100
    augment_factor: int = 15
    augment_test: bool = False
    eeg_filter: bool = True
    out_dir: str = ""
    make_plots: bool = True
    embed_method: str = "isomap"
    embed_neighbors: int = 10
    baselines: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("fold count must be >= 2")
        unknown = [m for m in self.models if m not in MODEL_NAMES]
        if unknown:
            raise ValueError(f"unknown models {unknown}; choose from {MODEL_NAMES}")

    def fusion_config(self):
        return FusionConfig(
            eeg_percentile=self.eeg_percentile,
            fmri_percentile=self.fmri_percentile,
            joint_percentile=self.joint_percentile,
            svm_c=self.svm_c,
            rf_trees=self.rf_trees,
            seed=self.seed,
        )


@dataclass
class Cell:
    folds: tuple = ()
    error: str = ""

    @property
    def mean(self):
        return float(np.mean(self.folds)) if self.folds else float("nan")

    @property
    def std(self):
        return float(np.std(self.folds)) if self.folds else float("nan")

    @property
    def ok(self):
        return bool(self.folds) and not self.error


@dataclass
class MetricsTable:
    """Rows: model families; columns: subjects plus the cross-subject mean."""

    models: list
    subject_ids: list
    cells: dict  # (model, subject_id) -> Cell
    baselines: dict = field(default_factory=dict)
    fold_count: int = 4

    def cell(self, model, subject_id):
        return self.cells[(model, subject_id)]

    def row_means(self, model):
        return [self.cells[(model, s)].mean for s in self.subject_ids]

    def avg(self, model, stat="mean"):
        vals = [
            getattr(self.cells[(model, s)], stat)
            for s in self.subject_ids
            if self.cells[(model, s)].ok
        ]
        return float(np.mean(vals)) if vals else float("nan")

    def to_csv(self, path):
        lines = ["model,stat," + ",".join(self.subject_ids) + ",Avg."]
        for m in self.models:
            for stat in ("mean", "std"):
                vals = [
                    f"{getattr(self.cells[(m, s)], stat):.6f}"
                    if self.cells[(m, s)].ok
                    else ""
                    for s in self.subject_ids
                ]
                avg = self.avg(m, stat)
                tail = f"{avg:.6f}" if np.isfinite(avg) else ""
                lines.append(f"{m},{stat}," + ",".join(vals) + f",{tail}")
        Path(path).write_text("\n".join(lines) + "\n")
        return path


def eeg_feature_matrix(trial_set, apply_filters=True, hp_hz=1.0, notch_hz=50.0):
    """Flatten epochs channel-major into exemplar rows.

    With ``apply_filters`` the trials first get the zero-phase 1 Hz
    high-pass and the 50 Hz notch bank trial-wise, so line noise and drift
    do not swamp the selection stage.
    """
    data = trial_set.data
    n = data.shape[0]
    if apply_filters:
        out = np.empty_like(data, dtype=np.float32)
        step = max(1, int(2**24 / max(data.shape[1] * data.shape[2], 1)))
        for a in range(0, n, step):
            block = data[a : a + step].astype(np.float64)
            block = highpass_array(block, trial_set.fs, hp_hz)
            block = notch_bank_array(block, trial_set.fs, notch_hz)
            out[a : a + step] = block.astype(np.float32)
        data = out
    return np.ascontiguousarray(data.reshape(n, -1), dtype=np.float32)


def subject_pairs(subject, cfg):
    """Feature blocks and the canonical label-matched pairing for a subject."""
    eeg_X = eeg_feature_matrix(subject.eeg, apply_filters=cfg.eeg_filter)
    fmri_X = subject.fmri.data
    return pair_exemplars(eeg_X, subject.eeg.labels, fmri_X, subject.fmri.labels)


def _fold_accuracy(pairs, train_rows, test_rows, model_name, cfg, fold):
    train = pairs.subset(train_rows)
    test = pairs.subset(test_rows)
    fcfg = cfg.fusion_config()
    if model_name == "eeg_rf":
        pipe = eeg_pipeline(seed=cfg.seed, percentile=cfg.eeg_percentile,
                            n_trees=cfg.rf_trees)
        pipe.fit(train.eeg_features, train.labels)
        pred = pipe.predict(test.eeg_features)
    elif model_name == "fmri_svm":
        pipe = fmri_pipeline(seed=cfg.seed, percentile=cfg.fmri_percentile,
                             C=cfg.svm_c)
        pipe.fit(train.fmri_features, train.labels)
        pred = pipe.predict(test.fmri_features)
    elif model_name in ("early", "early_aug"):
        if model_name == "early_aug" and cfg.augment_factor > 0:
            aug_seed = cfg.seed * 100003 + fold
            train = augment_pairs(train, cfg.augment_factor, seed=aug_seed)
            if cfg.augment_test:
                test = augment_pairs(test, cfg.augment_factor, seed=aug_seed + 1)
        model = early_fuse_train(train, fcfg)
        pred, _ = fusion_predict(model, test)
    elif model_name == "late":
        model = late_fuse_train(train, fcfg)
        pred, _ = fusion_predict(model, test)
    else:
        raise ValueError(f"unknown model {model_name!r}")
    return 100.0 * float(np.mean(pred == test.labels))


def _evaluate_model(pairs, plan, model_name, cfg):
    folds = []
    for fold in range(plan.k):
        folds.append(
            _fold_accuracy(
                pairs, plan.train_indices(fold), plan.test_indices(fold),
                model_name, cfg, fold,
            )
        )
    return Cell(folds=tuple(folds))


def _load_subject(entry):
    if isinstance(entry, BimodalSubject):
        return entry
    return read_dataset(entry)


def run_experiment(cfg):
    """Run every (subject, model) cell of the experiment.

    Cells that fail are recorded with their error and do not block the rest
    of the table.  ``NEUROFUSE_JOBS`` caps the worker pool; results are
    reduced in fixed order regardless of scheduling.
    """
    jobs = max(1, int(os.environ.get("NEUROFUSE_JOBS", "1")))
    cells = {}
    subject_ids = []
    plots = []
    for entry in cfg.subjects:
        subject = _load_subject(entry)
        sid = subject.subject_id
        subject_ids.append(sid)
        try:
            pairs = subject_pairs(subject, cfg)
            plan = plan_folds(pairs.labels, cfg.k, cfg.seed)
        except Exception as exc:  # noqa: BLE001 - feature stage failed: mark row
            for m in cfg.models:
                cells[(m, sid)] = Cell(error=f"{sid}: {exc}")
            continue

        def job(model, pairs=pairs, plan=plan, sid=sid):
            try:
                return model, sid, _evaluate_model(pairs, plan, model, cfg)
            except Exception as exc:  # noqa: BLE001
                return model, sid, Cell(error=f"{sid}/{model}: {exc}")

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(job, cfg.models))
        else:
            results = [job(m) for m in cfg.models]
        for model, sid_, cell in results:
            cells[(model, sid_)] = cell

        if cfg.make_plots and cfg.out_dir:
            plots.append((sid, pairs, tuple(subject.vocab.words)))

    table = MetricsTable(
        models=list(cfg.models),
        subject_ids=subject_ids,
        cells=cells,
        baselines=dict(cfg.baselines),
        fold_count=cfg.k,
    )

    if cfg.out_dir:
        out = Path(cfg.out_dir)
        results_dir = out / "results"
        results_dir.mkdir(parents=True, exist_ok=True)
        (results_dir / "table.txt").write_text(render_table(table))
        table.to_csv(results_dir / "table.csv")
        (results_dir / "config_snapshot").write_text(_config_snapshot(cfg))
        for sid, pairs, words in plots:
            _render_subject_plots(sid, pairs, words, cfg, out / "plots")
    return table


def _render_subject_plots(sid, pairs, words, cfg, plots_dir):
    """Embed each modality's selected features and render the diagnostic."""
    blocks = {
        "eeg": (pairs.eeg_features, cfg.eeg_percentile),
        "fmri": (pairs.fmri_features, cfg.fmri_percentile),
    }
    for modality, (X, pct) in blocks.items():
        sel = select_percentile(anova_f(X, pairs.labels), pct)
        emb = manifold.embed(
            sel.apply(X), pairs.labels,
            method=cfg.embed_method, n_neighbors=cfg.embed_neighbors,
        )
        manifold.render_embedding(
            emb, plots_dir / f"{sid}_{modality}_{cfg.embed_method}.png",
            class_names=words,
        )


def _fmt(x):
    return f"{x:.2f}" if np.isfinite(x) else "—"


def render_table(table):
    """Aligned plaintext: one mean row plus one std row per model."""
    if not table.models or not table.subject_ids:
        raise ValueError("empty metrics table")
    headers = ["Model"] + list(table.subject_ids) + ["Avg."]
    rows = []
    for m in table.models:
        mean_cells, std_cells = [], []
        for s in table.subject_ids:
            c = table.cells[(m, s)]
            mean_cells.append(_fmt(c.mean) if c.ok else "—")
            std_cells.append(_fmt(c.std) if c.ok else "—")
        rows.append([m] + mean_cells + [_fmt(table.avg(m, "mean"))])
        rows.append(["  std."] + std_cells + [_fmt(table.avg(m, "std"))])
    for name, values in table.baselines.items():
        vals = [f"{v:.2f}" for v in values]
        if len(vals) == len(table.subject_ids):
            vals.append(f"{np.mean(values):.2f}")
        rows.append([name] + vals[: len(headers) - 1])

    widths = [
        max(len(r[i]) if i < len(r) else 0 for r in [headers] + rows)
        for i in range(len(headers))
    ]
    def line(cells):
        parts = [c.ljust(widths[0]) if i == 0 else c.rjust(widths[i])
                 for i, c in enumerate(cells)]
        return "  ".join(parts)

    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    errors = [c.error for c in table.cells.values() if c.error]
    out.append("")
    out.append(f"accuracy % over {table.fold_count}-fold CV; "
               "std: population std over fold accuracies")
    if errors:
        out.append("failed cells:")
        out.extend(f"  {e}" for e in errors)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# plain key-value experiment config files

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def parse_config(path):
    """Parse a ``key = value`` experiment file into an ExperimentConfig.

    Lists (subjects, models) are comma separated.  ``baseline.<name>`` keys
    add static reference rows to the report.
    """
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value

    cfg = ExperimentConfig()
    base = Path(path).parent
    baselines = {}
    for key, value in raw.items():
        if key == "subjects":
            paths = [v.strip() for v in value.split(",") if v.strip()]
            cfg.subjects = [str((base / p)) if not Path(p).is_absolute() else p
                            for p in paths]
        elif key == "models":
            cfg.models = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key in ("k", "seed", "rf_trees", "augment_factor", "embed_neighbors"):
            setattr(cfg, key, int(value))
        elif key in ("eeg_percentile", "fmri_percentile", "joint_percentile", "svm_c"):
            setattr(cfg, key, float(value))
        elif key in ("augment_test", "eeg_filter", "make_plots"):
            setattr(cfg, key, _BOOL[value.lower()])
        elif key == "out":
            cfg.out_dir = str(base / value) if not Path(value).is_absolute() else value
        elif key == "embed_method":
            cfg.embed_method = value
        elif key.startswith("baseline."):
            baselines[key[len("baseline."):]] = [float(v) for v in value.split(",")]
        else:
            raise ValueError(f"{path}: unknown config key {key!r}")
    cfg.baselines = baselines
    cfg.__post_init__()
    return cfg


def _config_snapshot(cfg):
    items = {
        "subjects": ", ".join(str(s) if not isinstance(s, BimodalSubject)
                              else s.subject_id for s in cfg.subjects),
        "models": ", ".join(cfg.models),
        "k": cfg.k,
        "seed": cfg.seed,
        "eeg_percentile": cfg.eeg_percentile,
        "fmri_percentile": cfg.fmri_percentile,
        "joint_percentile": cfg.joint_percentile,
        "svm_c": cfg.svm_c,
        "rf_trees": cfg.rf_trees,
        "augment_factor": cfg.augment_factor,
        "augment_test": cfg.augment_test,
        "eeg_filter": cfg.eeg_filter,
        "make_plots": cfg.make_plots,
        "embed_method": cfg.embed_method,
        "embed_neighbors": cfg.embed_neighbors,
        "out": cfg.out_dir,
    }
    for name, values in cfg.baselines.items():
        items[f"baseline.{name}"] = ", ".join(f"{v:.2f}" for v in values)
    return "\n".join(f"{k} = {v}" for k, v in items.items()) + "\n"
