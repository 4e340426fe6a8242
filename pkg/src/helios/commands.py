"""Implementation of the CLI commands; cli.py owns arg parsing and exit codes."""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, FormatViolation
from . import channel_models as cm
from .dataset import (
    FoldSplit,
    build_sequences,
    read_samples,
    samples_for_days,
    split_by_day,
    write_samples,
)
from .metrics import EvalReport, tolerance_report
from .nowcast import build_nowcast_features, compare_four_models, train_nowcaster
from .sitecube import (
    read_site_power,
    read_site_temperature,
    read_sitecube,
    resample_mean,
    resample_scalar_mean,
)
from .svg import emit_svg_chart
from .synth import write_scene


def _load_config(args) -> RunConfig:
    config = RunConfig.load(Path(args.config))
    if args.fold is not None:
        config.raw["dataset"]["fold"] = args.fold
    if args.seed is not None:
        config.raw["dataset"]["seed"] = args.seed
    if not 0 <= config.raw["dataset"]["fold"] < config.raw["dataset"]["folds"]:
        raise ConfigError(f"fold {config.raw['dataset']['fold']} out of range")
    return config


def _write_manifest(directory: Path, config: RunConfig, command: str, started: float,
                    outputs: list[str]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "versions": {"helios": __version__, "numpy": np.__version__},
        "wall_time_s": round(time.time() - started, 3),
        "outputs": sorted(outputs),
    }
    (directory / "run.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


def _site_dirs(config: RunConfig) -> list[Path]:
    root = Path(config.raw["paths"]["data_root"])
    dirs = sorted(p for p in root.iterdir() if (p / "meta.json").exists())
    if not dirs:
        raise FormatViolation(f"no site-cube directories under {root}")
    return dirs


def _load_sequences(config: RunConfig):
    """Sample cache if present and shape-compatible, else rebuilt."""
    d = config.raw["dataset"]
    root = Path(config.raw["paths"]["data_root"])
    cache = root / "samples.bin"
    if cache.exists():
        samples = read_samples(cache)
        if samples and samples[0].input.shape == (d["steps"], d["window"], d["window"], 3):
            return samples
    return _build_sequences(config)


def _build_sequences(config: RunConfig):
    d = config.raw["dataset"]
    samples = []
    for site_dir in _site_dirs(config):
        cube = read_sitecube(site_dir)
        if cube.meta.cadence_seconds != d["interval_seconds"]:
            cube = resample_mean(cube, d["interval_seconds"])
        samples.extend(
            build_sequences(
                cube,
                T=d["steps"],
                interval_seconds=d["interval_seconds"],
                daytime=tuple(d["satellite_hours"]),
            )
        )
    return samples


def _split(config: RunConfig, samples) -> FoldSplit:
    d = config.raw["dataset"]
    return split_by_day(samples, d["folds"], config.section_seed("split"),
                        validation_fraction=d["validation_fraction"])


def _period_filter(config: RunConfig, samples):
    if config.raw["evaluation"]["period"] == "summer":
        return [s for s in samples if 5 <= s.local_day.month <= 9]
    return samples


def _model_path(config: RunConfig, name: str) -> Path:
    fold = config.raw["dataset"]["fold"]
    return Path(config.raw["paths"]["model_dir"]) / f"{name}_fold{fold}.hnmd"


def cmd_synth_gen(args, config: RunConfig) -> list[str]:
    out = Path(args.out) if args.out else Path(config.raw["paths"]["data_root"])
    scene = config.scene_spec()
    s = config.raw["scene"]
    paths = write_scene(scene, int(s["days"]), int(s["sites"]), out)
    return [str(p) for p in paths]


def cmd_dataset_build(args, config: RunConfig) -> list[str]:
    samples = _build_sequences(config)
    root = Path(config.raw["paths"]["data_root"])
    cache = root / "samples.bin"
    write_samples(samples, cache)
    return [str(cache)]


def cmd_train_channel(args, config: RunConfig) -> list[str]:
    samples = _load_sequences(config)
    split = _split(config, samples)
    fold = split.folds[config.raw["dataset"]["fold"]]
    train_set = samples_for_days(samples, fold.train)
    val_set = samples_for_days(samples, fold.validation)

    model_dir = Path(config.raw["paths"]["model_dir"])
    model_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    if args.model == "persistence":
        model = cm.PersistenceModel()
    elif args.model == "tree":
        model = cm.fit_tree_channels(train_set, config.tree_spec())
    elif args.model == "forest":
        model = cm.fit_forest_channels(train_set, config.forest_spec())
    else:
        steps = args.steps if args.steps is not None else None
        spec = config.cnnlstm_spec(steps=steps)
        if steps is not None and steps != config.raw["dataset"]["steps"]:
            train_set = _trim_history(train_set, steps)
            val_set = _trim_history(val_set, steps)
        model = cm.fit_cnnlstm(
            train_set, val_set, spec, config.train_config(), config.section_seed("cnnlstm")
        )
        curve = _model_path(config, "cnnlstm").with_suffix(".curve.csv")
        lines = ["epoch,train_loss,val_loss"]
        for i, tl in enumerate(model.meta["train_loss"]):
            vl = model.meta["val_loss"][i] if i < len(model.meta["val_loss"]) else float("nan")
            lines.append(f"{i},{tl!r},{vl!r}")
        curve.write_text("\n".join(lines) + "\n")
        outputs.append(str(curve))

    path = _model_path(config, args.model)
    cm.save_model(model, path)
    outputs.append(str(path))
    return outputs


def _trim_history(samples, steps: int):
    out = []
    for s in samples:
        trimmed = type(s)(
            site_id=s.site_id,
            input=s.input[-steps:],
            target=s.target,
            target_timestamp=s.target_timestamp,
            last_input_timestamp=s.last_input_timestamp,
            local_day=s.local_day,
        )
        out.append(trimmed)
    return out


def _nowcast_samples(config: RunConfig):
    d = config.raw["dataset"]
    per_site = {}
    for site_dir in _site_dirs(config):
        cube = read_sitecube(site_dir)
        if cube.meta.cadence_seconds != d["interval_seconds"]:
            cube = resample_mean(cube, d["interval_seconds"])
        power = resample_scalar_mean(read_site_power(site_dir), d["interval_seconds"])
        temp = resample_scalar_mean(read_site_temperature(site_dir), d["interval_seconds"])
        per_site[cube.meta.site_id] = build_nowcast_features(
            cube, power, temp, d["interval_seconds"], steps=d["steps"],
            solar_daytime=tuple(d["solar_hours"]),
        )
    return per_site


def cmd_train_nowcast(args, config: RunConfig) -> list[str]:
    seq = _load_sequences(config)
    split = _split(config, seq)
    fold = split.folds[config.raw["dataset"]["fold"]]
    outputs = []
    model_dir = Path(config.raw["paths"]["model_dir"])
    model_dir.mkdir(parents=True, exist_ok=True)
    for site_id, samples in sorted(_nowcast_samples(config).items()):
        train_set = [s for s in samples if s.local_day in fold.train]
        model = train_nowcaster(train_set, config.svr_spec())
        path = _model_path(config, f"svr_{site_id}")
        cm.save_model(model, path)
        outputs.append(str(path))
    return outputs


def cmd_evaluate(args, config: RunConfig) -> list[str]:
    report_dir = Path(config.raw["paths"]["report_dir"])
    report_dir.mkdir(parents=True, exist_ok=True)
    if args.four_way:
        return _evaluate_four_way(config, report_dir)
    return _evaluate_channels(config, report_dir, args.models.split(","))


def _evaluate_channels(config: RunConfig, report_dir: Path, names) -> list[str]:
    samples = _load_sequences(config)
    split = _split(config, samples)
    fold = split.folds[config.raw["dataset"]["fold"]]
    test_set = _period_filter(config, samples_for_days(samples, fold.test))
    test_set.sort(key=lambda s: (s.site_id, s.target_timestamp))

    channel = int(config.raw["evaluation"]["channel"])
    predictions = {}
    for name in names:
        name = name.strip()
        if name == "persistence":
            model = cm.PersistenceModel()
        else:
            model = cm.load_model(_model_path(config, name), expect=name)
        if name == "cnnlstm" and model.spec.steps != test_set[0].input.shape[0]:
            eval_set = _trim_history(test_set, model.spec.steps)
        else:
            eval_set = test_set
        predictions[name] = model.predict_samples(eval_set)[:, channel]

    prev = cm.last_center_values(test_set)[:, channel].astype(np.float64)
    actual = np.array([float(s.target[channel]) for s in test_set])
    site_ids = [s.site_id for s in test_set]
    report = tolerance_report(
        site_ids, prev, actual, predictions,
        config.raw["evaluation"]["channel_deltas"],
        period=config.raw["evaluation"]["period"],
        relative_percent=False,
        baseline="persistence",
        skill_metric="mae",
    )
    csv_path = report_dir / "channel_report.csv"
    report.to_csv(csv_path)
    svg_path = report_dir / "channel_mae_vs_delta.svg"
    _chart_from_report(report, svg_path, value="mae", scale=100.0,
                       y_label="MAE x 100", x_label="tolerance (reflectance)")
    return [str(csv_path), str(svg_path)]


def _evaluate_four_way(config: RunConfig, report_dir: Path) -> list[str]:
    seq = _load_sequences(config)
    split = _split(config, seq)
    fold = split.folds[config.raw["dataset"]["fold"]]

    cnn = cm.load_model(_model_path(config, "cnnlstm"), expect="cnnlstm")
    per_site = _nowcast_samples(config)
    nowcasters = {}
    test_samples = []
    for site_id, samples in sorted(per_site.items()):
        nowcasters[site_id] = cm.load_model(_model_path(config, f"svr_{site_id}"), expect="svr")
        test_samples.extend(
            _period_filter(config, [s for s in samples if s.local_day in fold.test])
        )
    test_samples.sort(key=lambda s: (s.site_id, s.t))

    result = compare_four_models(
        test_samples, nowcasters, cnn,
        config.raw["evaluation"]["solar_deltas_pct"],
        period=config.raw["evaluation"]["period"],
    )
    csv_path = report_dir / "four_way_report.csv"
    result.report.to_csv(csv_path)
    svg_path = report_dir / "four_way_mape_vs_delta.svg"
    _chart_from_report(result.report, svg_path, value="mape", scale=1.0,
                       y_label="MAPE (%)", x_label="tolerance (% change in power)")
    return [str(csv_path), str(svg_path)]


def _chart_from_report(report: EvalReport, path: Path, value: str, scale: float,
                       y_label: str, x_label: str) -> None:
    series = {}
    models = []
    for row in report.rows:
        if row.scope == "ALL" and row.model not in models:
            models.append(row.model)
    for model in models:
        rows = [r for r in report.rows if r.scope == "ALL" and r.model == model]
        rows.sort(key=lambda r: r.delta)
        xs = [r.delta for r in rows]
        ys = [getattr(r, value) * scale for r in rows]
        if any(np.isnan(ys)):
            continue
        series[model] = (xs, ys)
    emit_svg_chart(series, x_label, y_label, path)


def cmd_report(args, config: RunConfig) -> list[str]:
    report = EvalReport.from_csv(Path(args.input))
    report_dir = Path(config.raw["paths"]["report_dir"])
    report_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    svg_path = report_dir / f"{stem}.svg"
    if "four_way" in stem:
        _chart_from_report(report, svg_path, value="mape", scale=1.0,
                           y_label="MAPE (%)", x_label="tolerance (% change in power)")
    else:
        _chart_from_report(report, svg_path, value="mae", scale=100.0,
                           y_label="MAE x 100", x_label="tolerance (reflectance)")
    return [str(svg_path)]


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "dataset-build": cmd_dataset_build,
    "train-channel": cmd_train_channel,
    "train-nowcast": cmd_train_nowcast,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def run(args) -> int:
    started = time.time()
    config = _load_config(args)
    outputs = COMMANDS[args.command](args, config)
    if args.command in ("synth-gen",):
        manifest_dir = Path(args.out) if args.out else Path(config.raw["paths"]["data_root"])
    elif args.command in ("dataset-build",):
        manifest_dir = Path(config.raw["paths"]["data_root"])
    elif args.command in ("train-channel", "train-nowcast"):
        manifest_dir = Path(config.raw["paths"]["model_dir"])
    else:
        manifest_dir = Path(config.raw["paths"]["report_dir"])
    _write_manifest(manifest_dir, config, args.command, started, outputs)
    return 0
