"""Command-line front end: simulate, process, evaluate and demo.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import metrics, roomsim, signals
from .config import PRESETS, ConfigError, RunConfig, build_run_config, preset, read_config_file
from .engine import NumericFailure, dereverberate
from .stft import StftConfig

log = logging.getLogger("mclp_dereverb")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
SAMPLE_RATE = StftConfig().sample_rate


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# ---------------------------------------------------------------- WAV I/O


def read_wav(path) -> np.ndarray:
    """``(channels, samples)`` float64 from a 16 kHz PCM16 or float32 WAV."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if rate != SAMPLE_RATE:
        raise InputError(f"{path}: sample rate {rate} Hz, expected {SAMPLE_RATE} Hz (no resampling)")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise InputError(f"{path}: unsupported sample format {data.dtype}; use PCM16 or float32")
    x = x.reshape(len(x), -1).T
    if x.shape[1] == 0:
        raise InputError(f"{path}: no samples")
    return x


def write_wav(path, x: np.ndarray) -> None:
    x = np.atleast_2d(np.asarray(x, dtype=np.float32))
    try:
        wavfile.write(Path(path), SAMPLE_RATE, np.ascontiguousarray(x.T if x.shape[0] > 1 else x[0]))
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None


def write_trace(path, trace) -> None:
    try:
        with open(path, "w") as fh:
            fh.write("n,delta_T,delta_Tw,lambda,phase,detected\n")
            for r in trace:
                fh.write(f"{r.n},{r.delta_T:.9g},{r.delta_Tw:.9g},{r.lam:.9g},{r.phase},{int(r.detected)}\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None


# ----------------------------------------------------------- configuration


def run_config(args) -> RunConfig:
    layers = []
    if getattr(args, "preset", None):
        layers.append(preset(args.preset))
    if getattr(args, "config", None):
        try:
            layers.append(read_config_file(args.config))
        except FileNotFoundError:
            raise InputError(f"no such file: {args.config}") from None
    overrides = {}
    for kv in getattr(args, "set", None) or []:
        if "=" not in kv:
            raise UsageError(f"--set expects KEY=VALUE, got {kv!r}")
        key, value = kv.split("=", 1)
        overrides[key.strip()] = value.strip()
    layers.append(overrides)
    return build_run_config(*layers)


def scenario_from(cfg: RunConfig, clean: np.ndarray | None) -> roomsim.Scenario:
    s = cfg.scene
    room = roomsim.RoomSpec(dimensions=(s.room_x, s.room_y, s.room_z), T60=s.T60)
    mics = roomsim.linear_array(cfg.engine.M, s.mic_spacing)
    return roomsim.Scenario(
        room=room,
        mics=mics,
        source_a=roomsim.source_at(s.angle_a, s.distance),
        source_b=roomsim.source_at(s.angle_b, s.distance),
        switch_time=s.switch_time,
        clean=clean,
    )


# ---------------------------------------------------------------- commands


def simulate(cfg: RunConfig, clean: np.ndarray | None, seed: int):
    """Reverberant scene, direct-plus-early reference and sidecar metadata."""
    if clean is None:
        clean = signals.speech_like(cfg.scene.duration, seed=seed)
    sc = scenario_from(cfg, clean)
    ra, rb = sc.rirs("a"), sc.rirs("b")
    y = roomsim.synthesize_scene(sc, ra, rb)
    ref = roomsim.reference_signal(sc, ra, rb, channel=cfg.engine.reference_channel)
    if cfg.scene.sir_db is not None:
        rng = np.random.default_rng(seed + 1)
        other = signals.speech_like(len(clean) / SAMPLE_RATE, seed=int(rng.integers(2**31)))
        # interfering talker broadside to the array, off both source positions
        far = roomsim.source_at(90.0, 1.5)
        irs = [roomsim.image_rir(sc.room, far, m) for m in sc.mics]
        y = roomsim.mix_at_sir(y, roomsim.convolve_rirs(other, irs), cfg.scene.sir_db)
    meta = {
        "sample_rate": SAMPLE_RATE,
        "seed": seed,
        "switch_time": sc.switch_time,
        "switch_sample": sc.switch_sample,
        "room": {
            "dimensions": list(sc.room.dimensions),
            "T60_target": sc.room.T60,
            "reflection_coefficient": sc.room.reflection_coefficient(),
        },
        "microphones": sc.mics.tolist(),
        "sources": {"a": sc.source_a.tolist(), "b": sc.source_b.tolist()},
        "rirs": {
            name: [
                {
                    "length": len(h),
                    "direct_delay_samples": roomsim.direct_delay_samples(sc.room, src, m),
                    "T60_measured": _safe_t60(h),
                }
                for h, m in zip(rirs, sc.mics)
            ]
            for name, rirs, src in (("a", ra, sc.source_a), ("b", rb, sc.source_b))
        },
        "sir_db": cfg.scene.sir_db,
    }
    return y, ref, meta


def _safe_t60(h) -> float | None:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            return metrics.schroeder_t60(h, SAMPLE_RATE)
        except ValueError:
            return None


def process(x: np.ndarray, cfg: RunConfig, fixed_lambda: float | None = None):
    """Peak-normalize, dereverberate, restore gain. Returns (output, result)."""
    n_ch = x.shape[0]
    if n_ch == 1:
        warnings.warn("single-channel input: running single-channel delayed linear prediction", UserWarning)
    try:
        engine_cfg = dataclasses.replace(cfg.engine, M=n_ch)
    except ValueError as exc:
        raise ConfigError(f"{exc} (input has {n_ch} channels)") from None
    peak = float(np.max(np.abs(x)))
    gain = 1.0 / peak if peak > 0 else 1.0
    res = dereverberate(x * gain, engine_cfg, cfg.detector, fixed_lambda=fixed_lambda)
    return res.output / gain, res


def cmd_simulate(args) -> int:
    cfg = run_config(args)
    clean = None
    if args.clean:
        c = read_wav(args.clean)
        if c.shape[0] != 1:
            raise InputError(f"{args.clean}: clean input must be mono, got {c.shape[0]} channels")
        clean = c[0]
    try:
        y, ref, meta = simulate(cfg, clean, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.output)
    write_wav(out, y)
    if args.reference:
        write_wav(args.reference, ref)
        meta["reference"] = str(args.reference)
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s (%d channels) and %s", out, y.shape[0], sidecar)
    return EXIT_OK


def cmd_process(args) -> int:
    cfg = run_config(args)
    x = read_wav(args.input)
    try:
        out, res = process(x, cfg, args.fixed_lambda)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_wav(args.output, out)
    if args.trace:
        write_trace(args.trace, res.trace)
    for t in res.detection_times():
        log.info("position change detected at %.3f s", t)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ref = read_wav(args.reference)[0]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for test_path in args.tests:
        test = read_wav(test_path)[0]
        if len(test) != len(ref):
            raise UsageError(f"{test_path}: {len(test)} samples, reference has {len(ref)}")
        stem = Path(test_path).stem
        if args.metric in ("srr", "both"):
            s = metrics.segmental_srr(ref, test, SAMPLE_RATE, args.window, args.overlap)
            s.to_csv(out_dir / f"{stem}_srr.csv")
            print(f"{stem}: mean SRR {np.nanmean(s.values):.2f} dB")
        if args.metric in ("lsd", "both"):
            s = metrics.log_spectral_distance(ref, test, window_length=args.window, overlap=args.overlap)
            s.to_csv(out_dir / f"{stem}_lsd.csv")
            print(f"{stem}: mean LSD {np.nanmean(s.values):.2f} dB")
    return EXIT_OK


def cmd_demo(args) -> int:
    cfg = run_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    y, ref, meta = simulate(cfg, None, args.seed)
    write_wav(out_dir / "reverberant.wav", y)
    write_wav(out_dir / "reference.wav", ref)
    (out_dir / "reverberant.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    ch = cfg.engine.reference_channel - 1
    curves = {"reverberant": metrics.segmental_srr(ref, y[ch])}
    for name, lam in (("adaptive", None), ("fixed-0.998", 0.998), ("fixed-0.990", 0.990)):
        out, res = process(y, cfg, lam)
        write_wav(out_dir / f"{name}.wav", out)
        write_trace(out_dir / f"{name}_trace.csv", res.trace)
        curves[name] = metrics.segmental_srr(ref, out)
        if lam is None:
            print("detections (s):", ", ".join(f"{t:.3f}" for t in res.detection_times()) or "none")
    for name, s in curves.items():
        s.to_csv(out_dir / f"{name}_srr.csv")
    print("window_start " + " ".join(f"{k:>12}" for k in curves))
    for i, t in enumerate(curves["reverberant"].start_times):
        print(f"{t:12.1f} " + " ".join(f"{curves[k].values[i]:12.2f}" for k in curves))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mclp-dereverb", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="named scenario preset")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config value")

    sp = sub.add_parser("simulate", help="render a reverberant multichannel scene")
    config_flags(sp)
    sp.add_argument("--clean", help="16 kHz mono clean WAV (default: seeded synthetic talker)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--reference", help="also write the direct-plus-early reference WAV here")
    sp.add_argument("output")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("process", help="dereverberate a multichannel WAV")
    config_flags(sp)
    sp.add_argument("--fixed-lambda", type=float, help="disable adaptation and use this forgetting factor")
    sp.add_argument("--trace", help="write the per-frame detector trace CSV here")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.set_defaults(func=cmd_process)

    sp = sub.add_parser("evaluate", help="windowed scores against a reference")
    sp.add_argument("--metric", choices=("srr", "lsd", "both"), default="srr")
    sp.add_argument("--window", type=float, default=2.0, help="window length, s")
    sp.add_argument("--overlap", type=float, default=0.75)
    sp.add_argument("--out-dir", default=".")
    sp.add_argument("reference")
    sp.add_argument("tests", nargs="+")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("demo", help="simulate, process three ways and score")
    config_flags(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", default="demo_out")
    sp.set_defaults(func=cmd_demo, preset="paper-t60-0.5")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericFailure, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
