"""Command-line entry point: ``irislvq <subcommand> ...``.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 localization failure
(classify), 5 dimension mismatch.
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, DataError, DimensionError, IrisError, ParameterError
from .features import read_feature_cache, write_feature_cache
from .image import format_from_path, mask_to_gray, write_pgm
from .lvq import Metrics, confusion_metrics, ensemble_classify, ensemble_train, load_model, save_model
from .manifest import DatasetManifest
from .pipeline import ImageResult, ordered_map, run_array, run_image
from .synth import SynthEyeSpec, write_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_LOCALIZATION = 4
EXIT_DIMENSION = 5

REPORT_HEADER = "irislvq-report 1"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "jobs", None):
        cfg = replace(cfg, jobs=args.jobs)
    return cfg


def _load_manifest(path: str, cfg: RunConfig) -> DatasetManifest:
    p = Path(path)
    if not p.exists():
        raise CliError(f"manifest not found: {p}", EXIT_IO)
    try:
        if p.is_dir() and not (p / "manifest.txt").exists():
            return DatasetManifest.scan(p, cfg.train_fraction, cfg.seed)
        return DatasetManifest.load(p)
    except DataError as exc:
        raise CliError(f"invalid manifest: {exc}", EXIT_CONFIG) from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_IO) from None
    return out


def _fmt_circle(c) -> str:
    return f"{c.cx:g} {c.cy:g} {c.r:g}"


def _process(job, cfg: RunConfig, upto: str, keep_trace: bool) -> ImageResult:
    path, name, label, split = job
    return run_image(path, cfg, upto=upto, name=name, label=label, split=split, keep_trace=keep_trace)


def _batch(manifest: DatasetManifest, cfg: RunConfig, upto: str, split: str | None, keep_trace: bool = False) -> list[ImageResult]:
    entries = manifest.entries if split in (None, "all") else manifest.split(split)
    jobs = [(manifest.resolve(e), e.path, e.class_id, e.split) for e in entries]
    fn = functools.partial(_process, cfg=cfg, upto=upto, keep_trace=keep_trace)
    return ordered_map(fn, jobs, cfg.jobs)


def _status_line(r: ImageResult) -> str:
    if r.ok:
        return f"{r.name}\tok"
    return f"{r.name}\tfailed({r.stage})\t{r.reason}"


# --- subcommands ---------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SynthEyeSpec(
        classes=args.classes,
        images_per_class=args.images_per_class,
        width=args.width,
        height=args.height,
        pupil_radius=(args.pupil_min, args.pupil_max),
        iris_ratio=(args.ratio_min, args.ratio_max),
        rotation_jitter=args.rotation_jitter,
        noise_sigma=args.noise,
        occluder_prob=args.occluder_prob,
        highlight_prob=args.highlight_prob,
        seed=args.seed if args.seed is not None else 0,
    )
    try:
        spec.validate()
    except ParameterError as exc:
        raise CliError(f"invalid synthetic spec: {exc}", EXIT_CONFIG) from None
    try:
        manifest = write_dataset(spec, args.out)
    except OSError as exc:
        raise CliError(f"cannot write dataset: {exc}", EXIT_IO) from None
    print(f"wrote {spec.classes * spec.images_per_class} images, manifest {manifest}")
    return EXIT_OK


def cmd_localize(args) -> int:
    cfg = _load_config(args)
    manifest = _load_manifest(args.manifest, cfg)
    out = _out_dir(args)
    results = _batch(manifest, cfg, "localize", args.split, keep_trace=args.dump_debug)
    lines = ["# irislvq-localization 1", "# name\tstatus\tpupil_cx pupil_cy pupil_r\tiris_cx iris_cy iris_r"]
    for r in results:
        if r.ok:
            lines.append(f"{r.name}\tok\t{_fmt_circle(r.geometry.pupil)}\t{_fmt_circle(r.geometry.iris)}")
        else:
            lines.append(_status_line(r))
        if args.dump_debug and r.trace is not None:
            _dump_trace(out / "debug" / Path(r.name).with_suffix(""), r)
    (out / "localization.txt").write_text("\n".join(lines) + "\n")
    failed = sum(not r.ok for r in results)
    print(f"localized {len(results) - failed}/{len(results)} images")
    return EXIT_OK


def _dump_trace(stem: Path, r: ImageResult) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    t = r.trace
    if t.edges is not None:
        write_pgm(stem.with_name(stem.name + ".edges.pgm"), mask_to_gray(t.edges))
    if t.first_mask is not None:
        write_pgm(stem.with_name(stem.name + ".mask1.pgm"), mask_to_gray(t.first_mask))
    if t.second_mask is not None:
        write_pgm(stem.with_name(stem.name + ".mask2.pgm"), mask_to_gray(t.second_mask))
    hyps = []
    for tag, hs in (("pupil", t.pupil_hypotheses), ("iris", t.iris_hypotheses)):
        for h in hs or []:
            hyps.append(f"{h.center_x} {h.center_y} {h.radius} {h.score}  # {tag}")
    stem.with_name(stem.name + ".hypotheses.txt").write_text("\n".join(hyps) + ("\n" if hyps else ""))


def cmd_normalize(args) -> int:
    cfg = _load_config(args)
    manifest = _load_manifest(args.manifest, cfg)
    out = _out_dir(args)
    results = _batch(manifest, cfg, "normalize", args.split)
    lines = ["# irislvq-normalization 1"]
    for r in results:
        lines.append(_status_line(r) if not r.ok else f"{r.name}\tok\tocclusion={r.normalized.occlusion_fraction!r}")
        if r.ok:
            stem = out / Path(r.name).with_suffix("")
            stem.parent.mkdir(parents=True, exist_ok=True)
            tex = np.clip(np.floor(r.normalized.texture + 0.5), 0, 255).astype(np.uint8)
            write_pgm(stem.with_name(stem.name + ".texture.pgm"), tex)
            write_pgm(stem.with_name(stem.name + ".valid.pgm"), mask_to_gray(r.normalized.valid))
    (out / "normalization.txt").write_text("\n".join(lines) + "\n")
    failed = sum(not r.ok for r in results)
    print(f"normalized {len(results) - failed}/{len(results)} images")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    manifest = _load_manifest(args.manifest, cfg)
    out = _out_dir(args)
    results = _batch(manifest, cfg, "extract", args.split)
    records = [r.features for r in results if r.ok]
    write_feature_cache(out / "features.txt", records)
    (out / "failures.txt").write_text(
        "# irislvq-failures 1\n" + "".join(_status_line(r) + "\n" for r in results if not r.ok)
    )
    print(f"extracted {len(records)}/{len(results)} feature vectors -> {out / 'features.txt'}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    try:
        records = read_feature_cache(args.features)
    except OSError as exc:
        raise CliError(f"cannot read feature cache: {exc}", EXIT_IO) from None
    except DimensionError as exc:
        raise CliError(str(exc), EXIT_DIMENSION) from None
    except (DataError, ValueError) as exc:
        raise CliError(f"invalid feature cache: {exc}", EXIT_CONFIG) from None
    if not args.all_splits and any(r.split for r in records):
        records = [r for r in records if r.split in ("", "train")]
    if not records:
        raise CliError("feature cache holds no training records", EXIT_CONFIG)
    dim = records[0].dimension
    for r in records:
        if r.dimension != dim:
            raise CliError(f"record {r.name!r} has dimension {r.dimension}, expected {dim}", EXIT_DIMENSION)
        if r.label is None:
            raise CliError(f"record {r.name!r} has no label", EXIT_CONFIG)
    X = np.vstack([r.values for r in records])
    y = np.array([r.label for r in records])
    if np.unique(y).size < 2:
        raise CliError("training needs at least two classes", EXIT_CONFIG)
    tags = {r.config_tag for r in records}
    try:
        ens = ensemble_train(X, y, cfg.member_configs(), config_tag=";".join(sorted(tags)))
    except DataError as exc:
        raise CliError(f"training failed: {exc}", EXIT_CONFIG) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(ens, out)
    for i, (cfgm, log) in enumerate(zip(ens.member_configs, ens.training_log)):
        marks = [log[j] for j in sorted({0, len(log) // 4, len(log) // 2, 3 * len(log) // 4, len(log) - 1})]
        print(f"member {i} lr={cfgm.learning_rate:g} seed={cfgm.seed}: accuracy " + " -> ".join(f"{a:.3f}" for a in marks))
    print(f"model written to {out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _load_config(args)
    try:
        ens = load_model(args.model)
    except OSError as exc:
        raise CliError(f"cannot read model: {exc}", EXIT_IO) from None
    except DataError as exc:
        raise CliError(f"invalid model: {exc}", EXIT_CONFIG) from None
    src = Path(args.input)
    if not src.exists():
        raise CliError(f"input not found: {src}", EXIT_IO)
    try:
        format_from_path(src)
        is_image = True
    except IrisError:
        is_image = False
    if is_image:
        r = run_image(src, cfg, name=src.name)
        if not r.ok:
            code = EXIT_IO if r.stage == "decode" else EXIT_LOCALIZATION if r.stage == "localize" else EXIT_CONFIG
            raise CliError(f"{r.stage} failed: {r.reason}", code)
        x = r.features.values
    else:
        try:
            recs = read_feature_cache(src)
        except DimensionError as exc:
            raise CliError(str(exc), EXIT_DIMENSION) from None
        except (DataError, ValueError) as exc:
            raise CliError(f"invalid feature file: {exc}", EXIT_CONFIG) from None
        if not recs:
            raise CliError("feature file holds no record", EXIT_CONFIG)
        x = recs[0].values
    if x.size != ens.dimension:
        raise CliError(f"feature dimension {x.size} does not match model dimension {ens.dimension}", EXIT_DIMENSION)
    d = ensemble_classify(ens, x)
    print(f"label {d.label}")
    print("votes " + " ".join(f"{k}:{v}" for k, v in d.votes.items()))
    for i, (lab, dist) in enumerate(zip(d.member_labels, d.member_distances)):
        print(f"member {i} label {lab} distance {dist!r}")
    return EXIT_OK


def build_report(cfg: RunConfig, results: list[ImageResult], predictions: dict[str, int], classes: list[int]) -> str:
    """Structured text report; localization failures count as misclassifications."""
    rows = []
    fail_counts = {s: 0 for s in ("decode", "localize", "normalize", "extract")}
    true, pred = [], []
    for r in results:
        if r.ok:
            p = predictions[r.name]
            rows.append(f"{r.name}\t{r.label}\t{p}\t{'correct' if p == r.label else 'wrong'}")
            true.append(r.label)
            pred.append(p)
        else:
            fail_counts[r.stage] += 1
            rows.append(f"{r.name}\t{r.label}\t-\tfailed({r.stage})")
    m: Metrics = confusion_metrics(true, pred, classes)
    failed_per_class = {c: 0 for c in classes}
    for r in results:
        if not r.ok:
            failed_per_class[r.label] += 1
    total = len(results)
    rate = 100.0 * m.correct / total
    lines = [REPORT_HEADER, "[config]"]
    lines += cfg.dumps().splitlines()
    lines += [
        "[summary]",
        f"total {total}",
        f"correct {m.correct}",
        f"failed {sum(fail_counts.values())}",
        f"recognition_rate {rate:.4f}",
        "[failures]",
    ]
    lines += [f"{s} {n}" for s, n in fail_counts.items()]
    lines.append("[confusion]")
    lines.append("true\\pred " + " ".join(str(c) for c in classes) + " failed")
    for i, c in enumerate(classes):
        lines.append(f"{c} " + " ".join(str(int(v)) for v in m.confusion[i]) + f" {failed_per_class[c]}")
    lines.append("[per_class_accuracy]")
    for i, c in enumerate(classes):
        n = int(m.confusion[i].sum()) + failed_per_class[c]
        acc = m.confusion[i, i] / n if n else float("nan")
        lines.append(f"{c} {acc:.4f}")
    lines.append("[images]")
    lines += rows
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    try:
        ens = load_model(args.model)
    except OSError as exc:
        raise CliError(f"cannot read model: {exc}", EXIT_IO) from None
    except DataError as exc:
        raise CliError(f"invalid model: {exc}", EXIT_CONFIG) from None
    manifest = _load_manifest(args.manifest, cfg)
    if not manifest.split(args.split):
        raise CliError(f"split {args.split!r} is empty", EXIT_CONFIG)
    results = _batch(manifest, cfg, "extract", args.split)
    ok = [r for r in results if r.ok]
    predictions = {}
    for r in ok:
        if r.features.dimension != ens.dimension:
            raise CliError(f"{r.name}: feature dimension {r.features.dimension} != model {ens.dimension}", EXIT_DIMENSION)
        predictions[r.name] = ensemble_classify(ens, r.features.values).label
    classes = sorted(set(ens.classes) | {e.class_id for e in manifest.entries})
    report = build_report(cfg, results, predictions, classes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report)
    rate = next(l for l in report.splitlines() if l.startswith("recognition_rate"))
    print(f"{rate} -> {out}")
    return EXIT_OK


# --- argument parsing --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irislvq", description="Iris recognition with LBP histograms and an LVQ ensemble.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output path"):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--jobs", type=int, default=None, help="worker processes for per-image stages")

    p = sub.add_parser("synth", help="render a synthetic eye dataset")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="accepted for symmetry; unused")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--images-per-class", type=int, default=10)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=280)
    p.add_argument("--pupil-min", type=float, default=20.0)
    p.add_argument("--pupil-max", type=float, default=35.0)
    p.add_argument("--ratio-min", type=float, default=2.0)
    p.add_argument("--ratio-max", type=float, default=3.5)
    p.add_argument("--rotation-jitter", type=float, default=4.0, help="degrees")
    p.add_argument("--noise", type=float, default=8.0, help="Gaussian noise sigma")
    p.add_argument("--occluder-prob", type=float, default=0.3)
    p.add_argument("--highlight-prob", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)

    for name, func, helptext in (
        ("localize", cmd_localize, "find pupil and iris circles"),
        ("normalize", cmd_normalize, "unwrap irises to 40x240 sheets"),
        ("extract", cmd_extract, "write the feature cache"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("manifest", help="manifest file or dataset directory")
        common(p, "output directory")
        p.add_argument("--split", default="all", choices=("all", "train", "test"))
        p.add_argument("--dump-debug", action="store_true", help="write edge maps, masks and hypotheses")
        p.set_defaults(func=func)

    p = sub.add_parser("train", help="train the LVQ ensemble from a feature cache")
    p.add_argument("features")
    common(p, "model file")
    p.add_argument("--all-splits", action="store_true", help="train on every record, not only split=train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify one image or feature file")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dump-debug", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="recognition report on a manifest split")
    p.add_argument("model")
    p.add_argument("manifest")
    common(p, "report file")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"irislvq {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"irislvq {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"irislvq {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
