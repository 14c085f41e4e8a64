"""End-to-end commands shared by the HTTP service and the CLI.

Dataset layout: a recording directory holds rec_NNN.edf plus a matching
rec_NNN.csv annotation file. Feature directories hold one .feat container
per recording stem; posterior directories one .post.csv per stem. Every
command writes a manifest.json beside its outputs capturing the semantic
configuration, digests of its inputs, and the hash of both; execution
details like worker counts stay out of the manifest, so identical
manifests imply byte-identical outputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .channels import ChannelConfig, preset, select
from .edf import (
    EventList,
    edf_total_duration,
    parse_edf,
    read_annotations,
    write_annotations,
    write_edf,
)
from .errors import ConfigError, DataError
from .features import FeatureConfig, extract, read_features, write_features
from .hashing import config_hash_hex
from .montage import MontageSpec, apply_montage, default_tcp_montage, parse_montage_config
from .network import (
    AdamHyper,
    NetworkSpec,
    TrainConfig,
    infer_posteriors,
    load_checkpoint,
    network_spec_from_dict,
    save_checkpoint,
    shape_plan,
    spec_payload,
    train,
)
from .postprocess import PostprocessConfig, to_events
from .scoring import (
    report_json,
    roc_auc,
    roc_csv,
    roc_svg,
    roc_sweep,
    score_events,
)
from .synth import SynthConfig, generate

log = logging.getLogger(__name__)

DEFAULT_ROC_POINTS = 101


# -- config files -------------------------------------------------------------

def parse_config_value(raw: str):
    """One key=value right-hand side: JSON scalar, else comma tuple, else str."""
    raw = raw.strip()
    if "," in raw:
        return tuple(parse_config_value(p) for p in raw.split(","))
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str) -> dict:
    """Config file body: a JSON object, or key=value lines with # comments."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from None
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = parse_config_value(value)
    return out


def load_config_file(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


def _build_dataclass(cls, d: dict, what: str):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} fields: {sorted(unknown)}")
    coerced = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**coerced)


_TRAIN_FIELDS = {"passes", "batch_segments", "segment_len", "learning_rate"}


def split_detector_config(d: dict) -> tuple[NetworkSpec, dict]:
    """One detector config file carries network fields plus training fields."""
    net_fields = set(NetworkSpec.__dataclass_fields__)
    net = {k: v for k, v in d.items() if k in net_fields}
    extra = {k: v for k, v in d.items() if k in _TRAIN_FIELDS}
    unknown = set(d) - net_fields - _TRAIN_FIELDS
    if unknown:
        raise ConfigError(f"unknown detector config fields: {sorted(unknown)}")
    return network_spec_from_dict(net), extra


def _train_config(extra: dict, seed: int, workers: int) -> TrainConfig:
    kwargs = {k: v for k, v in extra.items() if k != "learning_rate"}
    hyper = AdamHyper(alpha=extra["learning_rate"]) if "learning_rate" in extra \
        else AdamHyper()
    return TrainConfig(seed=seed, workers=workers, hyper=hyper, **kwargs)


def resolve_montage(montage: str) -> MontageSpec:
    """'tcp' for the built-in montage, otherwise a montage config file path."""
    if montage.lower() == "tcp":
        return default_tcp_montage()
    p = Path(montage)
    if p.is_file():
        return parse_montage_config(p.read_text(), name=p.stem)
    raise ConfigError(f"unknown montage {montage!r}: not 'tcp' and not a file")


# -- manifests and file discovery ----------------------------------------------

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_digest(path: str | Path) -> str:
    return _sha256(Path(path).read_bytes())


def dir_digest(directory: str | Path, patterns: tuple[str, ...]) -> str:
    """Order-independent content hash of the files matching the patterns."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    names = sorted({p.name for pat in patterns for p in d.glob(pat)})
    h = hashlib.sha256()
    for name in names:
        h.update(name.encode("utf-8"))
        h.update(b"\x00")
        h.update(hashlib.sha256((d / name).read_bytes()).digest())
    return h.hexdigest()


def write_manifest(directory: str | Path, command: str, config: dict,
                   inputs: dict | None = None) -> dict:
    doc = {
        "command": command,
        "config": config,
        "inputs": inputs or {},
        "version": __version__,
    }
    doc["config_hash"] = config_hash_hex(
        {"command": command, "config": config, "inputs": inputs or {}}
    )
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return doc


def recording_stems(directory: str | Path) -> list[str]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    stems = sorted(p.stem for p in d.glob("*.edf"))
    if not stems:
        raise DataError(f"no .edf recordings in {d}")
    return stems


def feature_stems(directory: str | Path) -> list[str]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"not a directory: {d}")
    stems = sorted(p.name[: -len(".feat")] for p in d.glob("*.feat"))
    if not stems:
        raise DataError(f"no .feat files in {d}")
    return stems


def _ensure_dir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- posterior CSV ---------------------------------------------------------------

def format_posteriors(values: np.ndarray) -> str:
    lines = ["epoch,posterior"]
    lines += [f"{i},{v:.17g}" for i, v in enumerate(np.asarray(values))]
    return "\n".join(lines) + "\n"


def parse_posteriors(text: str) -> np.ndarray:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "epoch,posterior":
        raise DataError("posterior CSV must start with 'epoch,posterior'")
    values = []
    for expected, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"posterior row {expected}: expected 2 fields")
        try:
            idx, val = int(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"posterior row {expected}: non-numeric") from None
        if idx != expected:
            raise DataError(f"posterior row {expected}: epoch index {idx} out of order")
        if not 0.0 <= val <= 1.0:
            raise DataError(f"posterior row {expected}: {val} outside [0, 1]")
        values.append(val)
    return np.asarray(values, dtype=np.float64)


# -- commands ---------------------------------------------------------------------

def _recording_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint64)[0])


def run_synth(config: dict, out_dir: str | Path) -> dict:
    """Generate `count` synthetic recordings plus annotation CSVs.

    Recording i is seeded from (seed, i), so datasets with different base
    seeds never share recordings.
    """
    cfg_dict = dict(config)
    count = cfg_dict.pop("count", 1)
    if not isinstance(count, int) or count < 1:
        raise ConfigError(f"count must be a positive integer, got {count!r}")
    base = _build_dataclass(SynthConfig, cfg_dict, "synth config")
    out = _ensure_dir(out_dir)

    stems = []
    n_events = 0
    for idx in range(count):
        rec_cfg = replace(base, seed=_recording_seed(base.seed, idx))
        recording, events = generate(rec_cfg)
        stem = f"rec_{idx:03d}"
        (out / f"{stem}.edf").write_bytes(write_edf(recording))
        (out / f"{stem}.csv").write_text(write_annotations(events))
        stems.append(stem)
        n_events += len(events)

    manifest = write_manifest(
        out, "synth", {"synth": dataclasses.asdict(base), "count": count}
    )
    return {
        "out_dir": str(out),
        "recordings": stems,
        "events": n_events,
        "config_hash": manifest["config_hash"],
    }


def run_features(in_dir: str | Path, out_dir: str | Path, montage: str = "tcp",
                 preset_name: str = "ch22",
                 feature_config: dict | None = None) -> dict:
    """EDF directory -> .feat tensors under the montage and channel preset."""
    montage_spec = resolve_montage(montage)
    channel_cfg = preset(preset_name)
    feat_cfg = _build_dataclass(FeatureConfig, feature_config or {}, "feature config")
    in_path = Path(in_dir)
    out = _ensure_dir(out_dir)

    stems = recording_stems(in_path)
    epochs = 0
    for stem in stems:
        recording, _ = parse_edf(
            (in_path / f"{stem}.edf").read_bytes(),
            electrodes=list(montage_spec.electrodes()),
        )
        differential = apply_montage(recording, montage_spec)
        tensor = extract(select(differential, channel_cfg), feat_cfg)
        (out / f"{stem}.feat").write_bytes(write_features(tensor))
        epochs += tensor.values.shape[0]

    manifest = write_manifest(
        out,
        "features",
        {
            "montage": montage_spec.name,
            "pairs": list(montage_spec.channel_labels),
            "preset": channel_cfg.name,
            "channels": list(channel_cfg.members),
            "feature": dataclasses.asdict(feat_cfg),
        },
        inputs={"recordings": dir_digest(in_path, ("*.edf",))},
    )
    return {
        "out_dir": str(out),
        "recordings": stems,
        "channels": len(channel_cfg.members),
        "epochs": epochs,
        "config_hash": manifest["config_hash"],
    }


def _epoch_label_vector(events: EventList, n_epochs: int) -> np.ndarray:
    from .scoring import epoch_labels

    return epoch_labels(events, n_epochs).astype(np.float64)


def _load_labelled_dataset(features_dir: Path, labels_dir: Path):
    dataset = []
    for stem in feature_stems(features_dir):
        tensor = read_features((features_dir / f"{stem}.feat").read_bytes())
        csv_path = labels_dir / f"{stem}.csv"
        if not csv_path.is_file():
            raise DataError(f"no annotation file for {stem} in {labels_dir}")
        n_epochs = tensor.values.shape[0]
        edf_path = labels_dir / f"{stem}.edf"
        duration = edf_total_duration(edf_path.read_bytes()) if edf_path.is_file() \
            else float(n_epochs)
        events = read_annotations(csv_path.read_text(), duration)
        labels = _epoch_label_vector(events, n_epochs)
        dataset.append((tensor.values.astype(np.float64), labels))
    return dataset


def run_train(features_dir: str | Path, labels_dir: str | Path,
              out_path: str | Path, spec_config: dict | None = None,
              seed: int = 0, workers: int = 1) -> dict:
    """Train a detector; writes checkpoint, loss curve CSV, and manifest."""
    spec, extra = split_detector_config(spec_config or {})
    cfg = _train_config(extra, seed=seed, workers=workers)
    features_path = Path(features_dir)
    labels_path = Path(labels_dir)

    dataset = _load_labelled_dataset(features_path, labels_path)
    weights, plan, losses = train(dataset, spec, cfg)

    out = Path(out_path)
    _ensure_dir(out.parent)
    out.write_bytes(save_checkpoint(weights, spec, plan.channels))
    curve_path = out.with_suffix(".loss.csv")
    curve_path.write_text(
        "batch,loss\n" + "".join(f"{i},{v:.17g}\n" for i, v in enumerate(losses))
    )

    manifest = write_manifest(
        out.parent,
        "train",
        {
            "network": dataclasses.asdict(spec),
            "train": {
                "passes": cfg.passes,
                "batch_segments": cfg.batch_segments,
                "segment_len": cfg.segment_len,
                "learning_rate": cfg.hyper.alpha,
                "seed": cfg.seed,
            },
        },
        inputs={
            "features": dir_digest(features_path, ("*.feat",)),
            "labels": dir_digest(labels_path, ("*.csv", "*.edf")),
        },
    )
    return {
        "checkpoint": str(out),
        "loss_curve": str(curve_path),
        "channels": plan.channels,
        "conv_layers": plan.n_conv_layers,
        "parameters": weights.n_params(),
        "batches": len(losses),
        "final_loss": losses[-1],
        "config_hash": manifest["config_hash"],
    }


def run_infer(ckpt_path: str | Path, features_dir: str | Path,
              out_dir: str | Path, spec_config: dict | None = None,
              segment_len: int = 60) -> dict:
    """Posterior CSVs for every feature tensor under a trained checkpoint."""
    if segment_len < 1:
        raise ConfigError(f"segment_len must be >= 1, got {segment_len}")
    ckpt = Path(ckpt_path)
    if not ckpt.is_file():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    weights, spec, channels, digest = load_checkpoint(ckpt.read_bytes())

    if spec_config is not None:
        given, extra = split_detector_config(spec_config)
        if extra:
            raise ConfigError(f"training-only fields in infer spec: {sorted(extra)}")
        _, given_digest = spec_payload(given, channels)
        if given_digest != digest:
            raise ConfigError(
                "network spec hash does not match the checkpoint's spec"
            )

    plan = shape_plan(channels, spec)
    features_path = Path(features_dir)
    out = _ensure_dir(out_dir)

    stems = feature_stems(features_path)
    for stem in stems:
        tensor = read_features((features_path / f"{stem}.feat").read_bytes())
        e, _, c, d = tensor.values.shape
        if c != channels:
            raise DataError(
                f"{stem}: {c} channels but the checkpoint was trained on {channels}"
            )
        if d != spec.input_planes:
            raise DataError(
                f"{stem}: {d} feature planes but the network expects {spec.input_planes}"
            )
        post = infer_posteriors(
            tensor.values.astype(np.float64), weights, spec, plan, segment_len
        )
        (out / f"{stem}.post.csv").write_text(format_posteriors(post.values))

    manifest = write_manifest(
        out,
        "infer",
        {"spec_hash": digest.hex(), "segment_len": segment_len},
        inputs={
            "checkpoint": file_digest(ckpt),
            "features": dir_digest(features_path, ("*.feat",)),
        },
    )
    return {
        "out_dir": str(out),
        "recordings": stems,
        "channels": channels,
        "config_hash": manifest["config_hash"],
    }


def _clip_events(events: EventList, duration: float) -> EventList:
    kept = tuple(
        (start, min(stop, duration), label)
        for start, stop, label in events
        if start < duration
    )
    return EventList(kept, duration)


def _load_reference(ref_path: Path, stems: list[str]) -> tuple[list[EventList], list[float]]:
    refs = []
    durations = []
    for stem in stems:
        csv_path = ref_path / f"{stem}.csv"
        if not csv_path.is_file():
            raise DataError(f"no reference annotations for {stem} in {ref_path}")
        duration = edf_total_duration((ref_path / f"{stem}.edf").read_bytes())
        refs.append(read_annotations(csv_path.read_text(), duration))
        durations.append(duration)
    return refs, durations


def _load_hypotheses(hyp_path: Path, stems: list[str], durations: list[float],
                     cfg: PostprocessConfig):
    """Per stem: a .post.csv posterior file or a .csv event file."""
    hyps = []
    posteriors: list[np.ndarray] | None = []
    for stem, duration in zip(stems, durations):
        post_path = hyp_path / f"{stem}.post.csv"
        csv_path = hyp_path / f"{stem}.csv"
        if post_path.is_file():
            values = parse_posteriors(post_path.read_text())
            if abs(len(values) - duration) > 1.0:
                raise DataError(
                    f"{stem}: {len(values)} posterior epochs inconsistent with "
                    f"reference duration {duration}"
                )
            events = to_events(values, cfg)
            hyps.append(EventList(events.events, duration))
            if posteriors is not None:
                posteriors.append(values)
        elif csv_path.is_file():
            hyps.append(read_annotations(csv_path.read_text(), duration))
            posteriors = None
        else:
            raise DataError(f"no hypothesis for {stem} in {hyp_path}")
    return hyps, posteriors


def run_score(ref_dir: str | Path, hyp_dir: str | Path,
              out_dir: str | Path | None = None,
              postprocess: dict | None = None,
              roc_path: str | Path | None = None,
              roc_points: int = DEFAULT_ROC_POINTS) -> dict:
    """Any-Overlap + epoch scoring of a hypothesis dir against references.

    The hypothesis directory may hold posterior CSVs (postprocessed here
    before scoring, and sweepable into a ROC) or event CSVs (scored as-is).
    """
    cfg = _build_dataclass(PostprocessConfig, postprocess or {}, "postprocess config")
    ref_path = Path(ref_dir)
    hyp_path = Path(hyp_dir)
    if not hyp_path.is_dir():
        raise DataError(f"not a directory: {hyp_path}")

    stems = recording_stems(ref_path)
    refs, durations = _load_reference(ref_path, stems)
    hyps, posteriors = _load_hypotheses(hyp_path, stems, durations, cfg)
    report = score_events(refs, hyps)

    result = {
        "recordings": stems,
        "report": json.loads(report_json(report, dataclasses.asdict(cfg))),
    }

    if roc_path is not None:
        if posteriors is None:
            raise ConfigError(
                "ROC sweep needs posterior hypotheses (.post.csv), not event lists"
            )
        if roc_points < 2:
            raise ConfigError(f"roc_points must be >= 2, got {roc_points}")
        thresholds = list(np.linspace(1.0, 0.0, roc_points))
        # posteriors cover floor(duration) whole epochs: clip references to
        # that horizon so both sides of the sweep share one duration
        trimmed_refs = [
            _clip_events(r, float(len(p))) for r, p in zip(refs, posteriors)
        ]
        points = roc_sweep(posteriors, trimmed_refs, cfg, thresholds)
        roc_file = Path(roc_path)
        _ensure_dir(roc_file.parent)
        roc_file.write_text(roc_csv(points))
        roc_file.with_suffix(".svg").write_text(roc_svg(points))
        result["roc_csv"] = str(roc_file)
        result["roc_auc"] = roc_auc(points)

    if out_dir is not None:
        out = _ensure_dir(out_dir)
        (out / "report.json").write_text(report_json(report, dataclasses.asdict(cfg)))
        manifest = write_manifest(
            out,
            "score",
            {"postprocess": dataclasses.asdict(cfg), "roc_points": roc_points},
            inputs={
                "ref": dir_digest(ref_path, ("*.edf", "*.csv")),
                "hyp": dir_digest(hyp_path, ("*.csv",)),
            },
        )
        result["out_dir"] = str(out)
        result["config_hash"] = manifest["config_hash"]
    return result


def run_grid(presets: list[str], train_dir: str | Path, test_dir: str | Path,
             out_dir: str | Path, montage: str = "tcp",
             spec_config: dict | None = None, seed: int = 0,
             workers: int = 1, postprocess: dict | None = None) -> dict:
    """Train/evaluate one detector per channel preset; summarize as CSV.

    Summary columns: preset, channels, conv_layers, sensitivity,
    specificity, fa_per_24h.
    """
    if not presets:
        raise ConfigError("no presets given")
    spec, extra = split_detector_config(spec_config or {})
    post_cfg = _build_dataclass(PostprocessConfig, postprocess or {}, "postprocess config")
    out = _ensure_dir(out_dir)

    rows = []
    for preset_name in presets:
        channel_cfg: ChannelConfig = preset(preset_name)
        base = out / preset_name
        feat_train = run_features(train_dir, base / "feat_train", montage, preset_name)
        run_features(test_dir, base / "feat_test", montage, preset_name)
        train_res = run_train(
            base / "feat_train", train_dir, base / "model.ckpt",
            spec_config=spec_config, seed=seed, workers=workers,
        )
        run_infer(base / "model.ckpt", base / "feat_test", base / "post")
        score_res = run_score(
            test_dir, base / "post", out_dir=base / "score", postprocess=postprocess,
        )
        report = score_res["report"]
        rows.append({
            "preset": preset_name,
            "channels": feat_train["channels"],
            "conv_layers": train_res["conv_layers"],
            "sensitivity": report["sensitivity_pct"],
            "specificity": report["specificity_pct"],
            "fa_per_24h": report["fa_per_24h"],
        })

    lines = ["preset,channels,conv_layers,sensitivity,specificity,fa_per_24h"]
    for r in rows:
        lines.append(
            f"{r['preset']},{r['channels']},{r['conv_layers']},"
            f"{r['sensitivity']:.10g},{r['specificity']:.10g},{r['fa_per_24h']:.10g}"
        )
    summary_path = out / "summary.csv"
    summary_path.write_text("\n".join(lines) + "\n")

    manifest = write_manifest(
        out,
        "grid",
        {
            "presets": list(presets),
            "montage": montage,
            "network": dataclasses.asdict(spec),
            "train_extra": extra,
            "seed": seed,
            "postprocess": dataclasses.asdict(post_cfg),
        },
        inputs={
            "train_data": dir_digest(train_dir, ("*.edf", "*.csv")),
            "test_data": dir_digest(test_dir, ("*.edf", "*.csv")),
        },
    )
    return {
        "out_dir": str(out),
        "rows": rows,
        "summary_csv": str(summary_path),
        "config_hash": manifest["config_hash"],
    }
