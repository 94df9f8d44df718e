"""Command-line entry point.

Subcommands: synth, eeg-prep, fmri-prep, fuse, manifold, run, report.
Exit status 0 on success, 1 with a one-line diagnostic on failure, 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataio, eegprep, fmriprep, fusion, harness, manifold, synthgen

PRESET_NAMES = ("none", "fmri_only", "both")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=0, help="random seed")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="neurofuse",
        description="Bimodal fMRI-EEG inner-speech decoding pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic subject container")
    p.add_argument("--preset", choices=PRESET_NAMES, default="both")
    p.add_argument("--out", required=True, help="output container directory")
    p.add_argument("--subject-id", default="")
    p.add_argument("--n-per-class", type=int)
    p.add_argument("--channels", type=int, dest="n_channels")
    p.add_argument("--samples", type=int, dest="n_samples")
    p.add_argument("--fs", type=float)
    p.add_argument("--eeg-sep", type=float)
    p.add_argument("--fmri-sep", type=float)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--info-voxels", type=int, dest="n_voxels_info")
    p.add_argument("--mask-shape", type=int, nargs=3)
    p.add_argument("--fwhm", type=float, dest="smooth_fwhm_mm")
    p.add_argument("--eeg-mode", choices=("epochs", "chain"))
    p.add_argument("--fmri-mode", choices=("glm", "direct"))
    p.add_argument("--with-raw", action="store_true", default=None,
                   help="embed the continuous EEG / BOLD precursors")
    _add_seed(p)

    p = sub.add_parser("eeg-prep", help="(re)run EEG cleaning on a container")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hp", type=float, default=1.0, help="high-pass cutoff Hz")
    p.add_argument("--notch", type=float, default=50.0, help="notch base Hz")
    p.add_argument("--n-remove", type=int, default=1, help="ICA components to drop")
    p.add_argument("--tmin", type=float, default=0.0)
    p.add_argument("--tmax", type=float, default=2.0)
    _add_seed(p)

    p = sub.add_parser("fmri-prep", help="(re)run beta estimation / smoothing")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fwhm", type=float, default=8.0, help="smoothing FWHM in mm")
    _add_seed(p)

    p = sub.add_parser("fuse", help="cross-validated fusion on one subject")
    p.add_argument("--strategy", choices=("late", "early"), required=True)
    p.add_argument("--augment", type=int, default=0,
                   help="cross-pairing factor for the training folds")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--k", type=int, default=4)
    _add_seed(p)

    p = sub.add_parser("manifold", help="2-D embedding diagnostic for a subject")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--method", choices=manifold.METHODS, default="isomap")
    p.add_argument("--k", type=int, default=10, help="neighbor count")
    p.add_argument("--out", required=True, help="plot output directory")
    p.add_argument("--modality", choices=("eeg", "fmri", "both"), default="both")
    p.add_argument("--percentile", type=float, default=0.0,
                   help="ANOVA percentile before embedding (0 = raw features)")
    _add_seed(p)

    p = sub.add_parser("run", help="full experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")

    p = sub.add_parser("report", help="re-render a saved table.csv as text")
    p.add_argument("--in", dest="in_dir", required=True, help="path to table.csv")
    _add_seed(p)
    return parser


def _cmd_synth(args):
    overrides = {
        k: v
        for k, v in (
            ("n_per_class", args.n_per_class),
            ("n_channels", args.n_channels),
            ("n_samples", args.n_samples),
            ("fs", args.fs),
            ("eeg_sep", args.eeg_sep),
            ("fmri_sep", args.fmri_sep),
            ("noise_sd", args.noise_sd),
            ("latent_dim", args.latent_dim),
            ("n_voxels_info", args.n_voxels_info),
            ("smooth_fwhm_mm", args.smooth_fwhm_mm),
            ("eeg_mode", args.eeg_mode),
            ("fmri_mode", args.fmri_mode),
            ("with_raw", args.with_raw),
            ("subject_id", args.subject_id or None),
        )
        if v is not None
    }
    if args.mask_shape is not None:
        overrides["mask_shape"] = tuple(args.mask_shape)
    profile = synthgen.preset(args.preset, seed=args.seed, **overrides)
    subject = synthgen.generate_subject(profile)
    path = dataio.write_dataset(subject, args.out)
    print(f"wrote {subject.subject_id}: eeg {subject.eeg.data.shape}, "
          f"fmri {subject.fmri.data.shape} -> {path}")
    return 0


def _cmd_eeg_prep(args):
    subject = dataio.read_dataset(args.in_dir)
    if subject.raw_eeg is not None:
        trials = eegprep.preprocess(
            subject.raw_eeg,
            hp_hz=args.hp,
            notch_hz=args.notch,
            n_remove=args.n_remove,
            seed=args.seed,
            tmin_s=args.tmin,
            tmax_s=args.tmax,
        )
        note = "full chain from continuous record"
    else:
        data = harness.eeg_feature_matrix(
            subject.eeg, apply_filters=True, hp_hz=args.hp, notch_hz=args.notch
        ).reshape(subject.eeg.data.shape)
        trials = dataio.EEGTrialSet(
            data=data,
            labels=subject.eeg.labels,
            fs=subject.eeg.fs,
            channel_names=subject.eeg.channel_names,
        )
        note = "trial-wise filtering (no continuous record in container)"
    out_subject = replace(subject, eeg=trials, raw_eeg=None)
    path = dataio.write_dataset(out_subject, args.out)
    print(f"eeg-prep ({note}): {trials.data.shape} -> {path}")
    return 0


def _cmd_fmri_prep(args):
    subject = dataio.read_dataset(args.in_dir)
    if subject.bold is not None:
        volumes = fmriprep.estimate_betas(subject.bold)
        if args.fwhm > 0:
            volumes = fmriprep.smooth_betas(volumes, args.fwhm,
                                            subject.fmri.voxel_size_mm)
        betas = fmriprep.apply_mask(volumes, subject.fmri.mask,
                                    subject.fmri.voxel_size_mm)
        note = "GLM from BOLD run"
    else:
        vols = fmriprep.unmask(subject.fmri.data, subject.fmri.mask)
        smoothed = np.stack(
            [fmriprep.smooth_volume(v, args.fwhm, subject.fmri.voxel_size_mm)
             for v in vols]
        )
        betas = fmriprep.apply_mask(
            fmriprep.BetaVolumes(data=smoothed, labels=subject.fmri.labels),
            subject.fmri.mask,
            subject.fmri.voxel_size_mm,
        )
        note = "smoothing existing betas (no BOLD run in container)"
    out_subject = replace(subject, fmri=betas, bold=None)
    path = dataio.write_dataset(out_subject, args.out)
    print(f"fmri-prep ({note}): {betas.data.shape} -> {path}")
    return 0


def _cmd_fuse(args):
    subject = dataio.read_dataset(args.in_dir)
    cfg = harness.ExperimentConfig(subjects=[subject], seed=args.seed, k=args.k,
                                   augment_factor=args.augment, make_plots=False)
    pairs = harness.subject_pairs(subject, cfg)
    plan = dataio.plan_folds(pairs.labels, args.k, args.seed)
    fcfg = cfg.fusion_config()
    accs = []
    for fold in range(args.k):
        train = pairs.subset(plan.train_indices(fold))
        test = pairs.subset(plan.test_indices(fold))
        if args.augment > 0:
            train = fusion.augment_pairs(train, args.augment,
                                         seed=args.seed * 100003 + fold)
        if args.strategy == "late":
            model = fusion.late_fuse_train(train, fcfg)
        else:
            model = fusion.early_fuse_train(train, fcfg)
        pred, _ = fusion.fusion_predict(model, test)
        accs.append(100.0 * float(np.mean(pred == test.labels)))
    mean, std = float(np.mean(accs)), float(np.std(accs))
    lines = [
        f"subject: {subject.subject_id}",
        f"strategy: {args.strategy}  augment: {args.augment}  k: {args.k}  seed: {args.seed}",
        "fold accuracies %: " + "  ".join(f"{a:.2f}" for a in accs),
        f"mean: {mean:.2f}  std: {std:.2f}",
    ]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"fusion_{args.strategy}.txt").write_text(text)
    return 0


def _cmd_manifold(args):
    subject = dataio.read_dataset(args.in_dir)
    modalities = ("eeg", "fmri") if args.modality == "both" else (args.modality,)
    cfg = harness.ExperimentConfig(subjects=[subject], seed=args.seed,
                                   make_plots=False)
    pairs = harness.subject_pairs(subject, cfg)
    for modality in modalities:
        X = pairs.eeg_features if modality == "eeg" else pairs.fmri_features
        y = pairs.labels
        if args.percentile > 0:
            from .features import anova_f, select_percentile

            X = select_percentile(anova_f(X, y), args.percentile).apply(X)
        emb = manifold.embed(X, y, method=args.method, n_neighbors=args.k)
        img, coords = manifold.render_embedding(
            emb,
            Path(args.out) / f"{subject.subject_id}_{modality}_{args.method}.png",
            class_names=subject.vocab.words,
        )
        print(f"{modality}: silhouette={manifold.structure_score(emb):.3f} "
              f"-> {img} + {coords.name}")
    return 0


def _cmd_run(args):
    cfg = harness.parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    table = harness.run_experiment(cfg)
    print(harness.render_table(table), end="")
    if cfg.out_dir:
        print(f"results written under {cfg.out_dir}")
    return 0


def _cmd_report(args):
    path = Path(args.in_dir)
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    subject_ids = header[2:-1]
    cells, models = {}, []
    for line in lines[1:]:
        parts = line.split(",")
        model, stat = parts[0], parts[1]
        vals = parts[2:-1]
        if model not in models:
            models.append(model)
        for sid, v in zip(subject_ids, vals):
            key = (model, sid)
            folds = cells.get(key)
            if stat == "mean":
                cells[key] = harness.Cell(folds=(float(v),) if v else ())
            elif stat == "std" and folds is not None and folds.folds and v:
                # reconstruct a two-point surrogate with the right mean/std
                m, s = folds.folds[0], float(v)
                cells[key] = harness.Cell(folds=(m - s, m + s))
    table = harness.MetricsTable(models=models, subject_ids=subject_ids, cells=cells)
    print(harness.render_table(table), end="")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "eeg-prep": _cmd_eeg_prep,
    "fmri-prep": _cmd_fmri_prep,
    "fuse": _cmd_fuse,
    "manifold": _cmd_manifold,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic, nonzero exit
        print(f"neurofuse {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
