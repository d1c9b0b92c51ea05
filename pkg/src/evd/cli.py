"""Command-line entry point wiring the toolkit into reproducible pipelines.

Subcommands: ``simulate``, ``inject-noise``, ``denoise``, ``train``,
``eval``, ``bench``. Every run is deterministic given its inputs, flags, and
``--seed``; the resolved configuration is echoed next to each primary output
so an experiment can be replayed from its artifacts alone.

Exit codes: 0 success, 1 validation/parse error, 2 domain error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .config import echo_config, load_config
from .core import (
    Label,
    SensorGeometry,
    infer_format,
    read_events,
    validate_stream,
    write_events,
)
from .errors import ConfigError, DomainError, InternalError, MissingCheckpoint, ValidationError
from .evaluation import (
    BafDenoiser,
    FilterConfig,
    NnbDenoiser,
    RawDenoiser,
    RpDenoiser,
    bench,
    bench_report_csv,
    bench_report_text,
    confusion_metrics,
    snr_db,
)
from .geometry import LevelSpec
from .nn import (
    DESK_LEVELS,
    FULL_LEVELS,
    TINY_LEVELS,
    LcscHyperParams,
    ModelParams,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .pipeline import PipelineConfig, TwDenoiser, WednetDenoiser, prepare_samples
from .sim import NoiseSpec, SceneSpec, simulate_events, inject_ba_noise
from .temporal import TwConfig

LEVEL_PRESETS = {"desk": DESK_LEVELS, "full": FULL_LEVELS, "tiny": TINY_LEVELS}


def _resolve(args, config: dict, key: str, default, cast):
    """flag > config file > default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        raw = config[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes")
        return cast(raw)
    return default


def _load_file_config(args) -> dict:
    if getattr(args, "config", None):
        return load_config(args.config)
    return {}


def _read_stream(path, fmt=None):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"input file {path} does not exist")
    fmt = fmt or infer_format(path)
    stream, geometry = read_events(path, format=fmt)
    return validate_stream(stream, geometry), geometry


def _parse_levels(text: str) -> list[LevelSpec]:
    levels = []
    for part in text.split(","):
        fields = part.strip().split(":")
        if len(fields) != 4:
            raise ConfigError(f"level spec {part!r} must be T:K:r:D")
        levels.append(
            LevelSpec(int(fields[0]), int(fields[1]), float(fields[2]), int(fields[3]))
        )
    return levels


def _gather_files(spec: str) -> list[Path]:
    paths: list[Path] = []
    for part in spec.split(","):
        p = Path(part)
        if p.is_dir():
            paths.extend(
                sorted(
                    q
                    for q in p.iterdir()
                    if q.is_file() and not q.name.endswith(".config.txt")
                )
            )
        elif p.exists():
            paths.append(p)
        else:
            raise ConfigError(f"training input {p} does not exist")
    if not paths:
        raise ConfigError(f"no files matched {spec!r}")
    return paths


def _pipeline_config(args, config, checkpoint: ModelParams | None = None) -> PipelineConfig:
    default_w = checkpoint.window_size if checkpoint is not None else 4096
    window = _resolve(args, config, "window-size", default_w, int)
    tw_l = _resolve(args, config, "tw-l", 500, int)
    t_lim = _resolve(args, config, "t-lim", None, float)
    tau = _resolve(args, config, "bec-tau", 2.0, float)
    return PipelineConfig(
        window_size=window,
        tw=TwConfig(events_per_movement=tw_l, explicit_t_lim=t_lim),
        bec_tau=tau,
    )


def _filter_config(args, config) -> FilterConfig:
    return FilterConfig(
        baf_dt_us=_resolve(args, config, "baf-dt", 2000.0, float),
        radius_px=_resolve(args, config, "radius", 1, int),
        nnb_count=_resolve(args, config, "nnb-count", 2, int),
        nnb_dt_us=_resolve(args, config, "nnb-dt", 5000.0, float),
        rp_period_us=_resolve(args, config, "rp-period", 500.0, float),
    )


def _make_denoiser(name: str, args, config):
    name = name.strip()
    if name == "raw":
        return RawDenoiser()
    if name in ("baf", "nnb", "rp"):
        fc = _filter_config(args, config)
        return {"baf": BafDenoiser, "nnb": NnbDenoiser, "rp": RpDenoiser}[name](config=fc)
    if name == "tw":
        return TwDenoiser(config=_pipeline_config(args, config))
    if name == "wednet":
        ckpt_path = _resolve(args, config, "checkpoint", None, str)
        if not ckpt_path:
            raise MissingCheckpoint("--filter wednet requires --checkpoint")
        if not Path(ckpt_path).exists():
            raise MissingCheckpoint(f"checkpoint {ckpt_path} does not exist")
        params = load_checkpoint(ckpt_path)
        return WednetDenoiser(params=params, config=_pipeline_config(args, config, params))
    raise ConfigError(f"unknown filter {name!r}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    config = _load_file_config(args)
    width = _resolve(args, config, "width", 128, int)
    height = _resolve(args, config, "height", 128, int)
    kind = _resolve(args, config, "kind", "moving_bar", str)
    size = _resolve(args, config, "object-size", 16, int)
    start_x = _resolve(args, config, "start-x", None, float)
    start_y = _resolve(args, config, "start-y", None, float)
    if start_x is None:
        start_x = 0.0 if kind == "moving_bar" else float(size)
    if start_y is None:
        start_y = 0.0 if kind == "moving_bar" else height / 2.0
    geometry = SensorGeometry(
        width=width,
        height=height,
        gain_a=_resolve(args, config, "gain-a", 1.0, float),
        offset_b=_resolve(args, config, "offset-b", 1.0, float),
        threshold_theta=_resolve(args, config, "theta", 0.2, float),
    )
    scene = SceneSpec(
        kind=kind,
        velocity=(
            _resolve(args, config, "velocity-x", 40.0, float),
            _resolve(args, config, "velocity-y", 0.0, float),
        ),
        object_size=size,
        contrast=_resolve(args, config, "contrast", 1.5, float),
        duration_us=_resolve(args, config, "duration-us", 500_000, int),
        frame_rate=_resolve(args, config, "frame-rate", 200.0, float),
        start=(start_x, start_y),
        refractory_us=_resolve(args, config, "refractory-us", 0.0, float),
    )
    seed = _resolve(args, config, "seed", 0, int)
    stream = simulate_events(scene, geometry, seed=seed)
    out = Path(args.out)
    fmt = args.format or infer_format(out)
    write_events(out, stream, geometry, format=fmt)
    echo_config(
        out,
        {
            "subcommand": "simulate",
            "kind": kind,
            "width": width,
            "height": height,
            "velocity-x": scene.velocity[0],
            "velocity-y": scene.velocity[1],
            "object-size": size,
            "contrast": scene.contrast,
            "duration-us": scene.duration_us,
            "frame-rate": scene.frame_rate,
            "start-x": start_x,
            "start-y": start_y,
            "theta": geometry.threshold_theta,
            "gain-a": geometry.gain_a,
            "offset-b": geometry.offset_b,
            "refractory-us": scene.refractory_us,
            "seed": seed,
            "format": fmt,
        },
    )
    print(f"simulated {len(stream)} events -> {out}")
    return 0


def cmd_inject_noise(args) -> int:
    config = _load_file_config(args)
    stream, geometry = _read_stream(args.input, args.format)
    eta = _resolve(args, config, "eta", 0.0, float)
    ratio = _resolve(args, config, "ratio", None, float)
    seed = _resolve(args, config, "seed", 0, int)
    duration = _resolve(args, config, "duration-us", None, int)
    if duration is None:
        duration = int(stream.t[-1]) + 1 if len(stream) else 1
    spec = NoiseSpec(eta=eta, ratio=ratio, seed=seed)
    noisy = inject_ba_noise(stream, spec, geometry, duration)
    out = Path(args.out)
    fmt = args.format or infer_format(out)
    write_events(out, noisy, geometry, format=fmt)
    echo_config(
        out,
        {
            "subcommand": "inject-noise",
            "input": str(args.input),
            "eta": eta,
            "ratio": "" if ratio is None else ratio,
            "seed": seed,
            "duration-us": duration,
            "format": fmt,
        },
    )
    added = len(noisy) - len(stream)
    print(f"injected {added} noise events -> {out}")
    return 0


def cmd_denoise(args) -> int:
    config = _load_file_config(args)
    stream, geometry = _read_stream(args.input, args.format)
    denoiser = _make_denoiser(args.filter, args, config)
    predictions = denoiser.predict(stream, geometry)
    labeled = stream.with_labels(predictions)
    out = Path(args.out)
    fmt = args.format or infer_format(out)
    write_events(out, labeled, geometry, format=fmt)
    echo_config(
        out,
        {
            "subcommand": "denoise",
            "input": str(args.input),
            "filter": args.filter,
            "checkpoint": getattr(args, "checkpoint", "") or "",
            "seed": _resolve(args, config, "seed", 0, int),
        },
    )
    kept = int(np.count_nonzero(predictions == int(Label.REAL)))
    print(f"denoise[{args.filter}]: kept {kept}/{len(stream)} events -> {out}")
    if np.any(stream.label != int(Label.UNKNOWN)):
        factor = _resolve(args, config, "snr-factor", 20.0, float)
        score = snr_db(stream.label, predictions, factor=factor)
        quality = confusion_metrics(stream.label, predictions)
        print(
            f"SNR_dB={_fmt_metric(score)} precision={quality.precision:.4f} "
            f"recall={quality.recall:.4f} f1={quality.f1:.4f}"
        )
    return 0


def cmd_train(args) -> int:
    config = _load_file_config(args)
    preset = _resolve(args, config, "preset", "desk", str)
    if preset not in LEVEL_PRESETS:
        raise ConfigError(f"unknown preset {preset!r}, expected {sorted(LEVEL_PRESETS)}")
    levels_text = _resolve(args, config, "levels", None, str)
    levels = _parse_levels(levels_text) if levels_text else LEVEL_PRESETS[preset]
    pipe = _pipeline_config(args, config)
    train_cfg = TrainConfig(
        epochs=_resolve(args, config, "epochs", 25, int),
        lr=_resolve(args, config, "lr", 0.05, float),
        momentum=_resolve(args, config, "momentum", 0.9, float),
        seed=_resolve(args, config, "seed", 0, int),
        balanced=_resolve(args, config, "balanced", True, bool),
        window_size=pipe.window_size,
    )
    hyper = LcscHyperParams(
        iterations=_resolve(args, config, "iterations", 1, int),
        sigma_n=_resolve(args, config, "sigma-n", 0.1, float),
        beta=_resolve(args, config, "beta", 1.0, float),
    )

    stride = _resolve(args, config, "window-stride", 1, int)
    if stride < 1:
        raise ConfigError(f"window-stride must be >= 1, got {stride}")

    def _load_samples(spec):
        samples = []
        for path in _gather_files(spec):
            stream, geometry = _read_stream(path)
            if np.any(stream.label == int(Label.UNKNOWN)):
                raise ConfigError(f"{path}: training data must be fully labeled")
            samples.extend(prepare_samples(stream, geometry, pipe)[::stride])
        return samples

    train_samples = _load_samples(args.train)
    val_samples = _load_samples(args.val) if args.val else []
    params, history = train(train_samples, val_samples, levels, train_cfg, hyper)

    out = Path(args.out)
    save_checkpoint(out, params)
    history_path = Path(args.history) if args.history else out.with_name(out.name + ".history.csv")
    lines = ["epoch,train_loss,val_snr_db"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss:.6f},{_fmt_metric(h.val_snr_db)}")
    history_path.write_text("\n".join(lines) + "\n", encoding="ascii")
    echo_config(
        out,
        {
            "subcommand": "train",
            "train": args.train,
            "val": args.val or "",
            "epochs": train_cfg.epochs,
            "lr": train_cfg.lr,
            "momentum": train_cfg.momentum,
            "seed": train_cfg.seed,
            "window-size": pipe.window_size,
            "window-stride": stride,
            "tw-l": pipe.tw.events_per_movement,
            "bec-tau": pipe.bec_tau,
            "iterations": hyper.iterations,
            "levels": ",".join(
                f"{s.centroids}:{s.group_size}:{s.radius:g}:{s.channels}" for s in levels
            ),
        },
    )
    final = history[-1].train_loss if history else math.nan
    print(f"trained {len(train_samples)} windows, final loss {final:.4f} -> {out}")
    return 0


def cmd_eval(args) -> int:
    config = _load_file_config(args)
    stream, geometry = _read_stream(args.input, args.format)
    factor = _resolve(args, config, "snr-factor", 20.0, float)
    has_truth = bool(np.any(stream.label != int(Label.UNKNOWN)))
    lines = ["method,events,kept,SNR_dB,precision,recall,f1"]
    for name in args.filters.split(","):
        denoiser = _make_denoiser(name, args, config)
        predictions = denoiser.predict(stream, geometry)
        kept = int(np.count_nonzero(predictions == int(Label.REAL)))
        if has_truth:
            score = snr_db(stream.label, predictions, factor=factor)
            q = confusion_metrics(stream.label, predictions)
            lines.append(
                f"{denoiser.name},{len(stream)},{kept},{_fmt_metric(score)},"
                f"{q.precision:.4f},{q.recall:.4f},{q.f1:.4f}"
            )
        else:
            lines.append(f"{denoiser.name},{len(stream)},{kept},,,,")
    report = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(report, encoding="ascii")
        echo_config(Path(args.out), {"subcommand": "eval", "input": str(args.input), "filters": args.filters})
    print(report, end="")
    return 0


def cmd_bench(args) -> int:
    config = _load_file_config(args)
    stream, geometry = _read_stream(args.input, args.format)
    reps = _resolve(args, config, "repetitions", 5, int)
    factor = _resolve(args, config, "snr-factor", 20.0, float)
    rows = []
    for name in args.filters.split(","):
        denoiser = _make_denoiser(name, args, config)
        rows.append(bench(denoiser, stream, geometry, repetitions=reps, snr_factor=factor))
    print(bench_report_text(rows), end="")
    if args.out:
        Path(args.out).write_text(bench_report_csv(rows), encoding="ascii")
    return 0


def _fmt_metric(value: float) -> str:
    if math.isnan(value):
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.4f}"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evd", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--threads", type=int, help="reserved; output is thread-count independent")
        p.add_argument("--format", choices=("text", "binary"), help="override format inference")

    p = sub.add_parser("simulate", help="render a scene into a labeled event file")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("moving_bar", "moving_disk", "two_objects"))
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--velocity-x", type=float)
    p.add_argument("--velocity-y", type=float)
    p.add_argument("--object-size", type=int)
    p.add_argument("--contrast", type=float)
    p.add_argument("--duration-us", type=int)
    p.add_argument("--frame-rate", type=float)
    p.add_argument("--start-x", type=float)
    p.add_argument("--start-y", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--gain-a", type=float)
    p.add_argument("--offset-b", type=float)
    p.add_argument("--refractory-us", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inject-noise", help="add background-activity noise to a stream")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eta", type=float, help="noise rate per pixel per second")
    p.add_argument("--ratio", type=float, help="noise count as a fraction of real events")
    p.add_argument("--duration-us", type=int)
    p.set_defaults(func=cmd_inject_noise)

    def filter_flags(p, with_checkpoint=True):
        p.add_argument("--window-size", type=int)
        p.add_argument("--tw-l", type=int, help="events per transient movement (L)")
        p.add_argument("--t-lim", type=float, help="explicit temporal cutoff in us")
        p.add_argument("--bec-tau", type=float, help="bone-event domain-size threshold")
        p.add_argument("--baf-dt", type=float)
        p.add_argument("--nnb-count", type=int)
        p.add_argument("--nnb-dt", type=float)
        p.add_argument("--rp-period", type=float)
        p.add_argument("--radius", type=int)
        p.add_argument("--snr-factor", type=float)
        if with_checkpoint:
            p.add_argument("--checkpoint")

    p = sub.add_parser("denoise", help="label every event Real or Noise")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter", required=True, choices=("tw", "baf", "nnb", "rp", "wednet", "raw"))
    filter_flags(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("train", help="fit the window classifier on labeled files")
    common(p)
    p.add_argument("--train", required=True, help="comma-separated files or directories")
    p.add_argument("--val", help="validation files or directories")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="per-epoch CSV (default <out>.history.csv)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--preset", choices=tuple(LEVEL_PRESETS))
    p.add_argument("--levels", help="T:K:r:D per level, comma separated")
    p.add_argument("--iterations", type=int)
    p.add_argument("--sigma-n", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--window-size", type=int)
    p.add_argument("--window-stride", type=int, help="train on every k-th window")
    p.add_argument("--tw-l", type=int)
    p.add_argument("--t-lim", type=float)
    p.add_argument("--bec-tau", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score one or more filters against ground truth")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--filters", default="raw,tw,baf,nnb,rp")
    p.add_argument("--out", help="write the report CSV here as well")
    filter_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="throughput comparison across denoisers")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--filters", default="raw,baf,nnb,rp")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--out", help="CSV report path")
    filter_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
