"""Command-line front end: benchmarks, single-sample calibration, schedules.

Sample streams, per-sample seeds and the report reduction are all pure
functions of the run configuration, so identical invocations produce
byte-identical report files regardless of the worker count.
"""

from __future__ import annotations

import argparse
import itertools
import os
import shlex
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .denoisers import (
    Condition,
    ContractiveDenoiser,
    DenoiserBackend,
    ExternalDenoiser,
    NoisyOracleDenoiser,
    OracleDenoiser,
)
from .diffusion import (
    DiffusionConfig,
    RefinementTrace,
    StageRecord,
    lsd_reverse,
    multi_range_run,
    naive_iterate,
)
from .geometry import Intrinsics, PerturbationSpec, perturb_extrinsic, synth_scene
from .kitti import CalibSample, SplitSpec, load_samples, stable_hash64
from .metrics import SampleError, aggregate, render_report, sample_error, transform_error
from .schedule import build_cosine_schedule, schedule_csv

SEED_ENV_VAR = "LSDCALIB_SEED"

# Desk-scale camera used for synthetic scenes.
SYNTH_INTRINSICS = Intrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0,
                              image_width=640, image_height=480)
SYNTH_DEPTH_RANGE = (2.0, 50.0)

# Sub-stream tags mixed into per-sample seed sequences.
_STREAM_SCENE = 0
_STREAM_PERTURB = 1
_STREAM_DENOISER = 2
_STREAM_SAMPLER = 3


@dataclass(frozen=True)
class DenoiserSpec:
    """Parsed --denoiser value."""

    kind: str
    gain: float = 1.0
    sigma_rot_deg: float = 0.0
    sigma_trans_cm: float = 0.0
    command: tuple[str, ...] = ()


@dataclass(frozen=True)
class MethodSpec:
    """Parsed --method value; stages are gains or external commands."""

    kind: str
    n: int = 1
    stages: tuple[Union[float, tuple[str, ...]], ...] = ()


def parse_denoiser_spec(text: str) -> DenoiserSpec:
    kind, _, rest = text.partition(":")
    if kind == "oracle" and not rest:
        return DenoiserSpec("oracle")
    if kind == "contractive":
        return DenoiserSpec("contractive", gain=_gain(rest))
    if kind == "noisy":
        parts = rest.split(",")
        if len(parts) != 3:
            raise ValueError(
                f"noisy spec needs gain,sigma_rot_deg,sigma_trans_cm, got {text!r}"
            )
        gain, sigma_rot, sigma_trans = (float(p) for p in parts)
        if sigma_rot < 0 or sigma_trans < 0:
            raise ValueError("noise sigmas must be non-negative")
        return DenoiserSpec("noisy", gain=_gain(str(gain)),
                            sigma_rot_deg=sigma_rot, sigma_trans_cm=sigma_trans)
    if kind == "external":
        command = tuple(shlex.split(rest))
        if not command:
            raise ValueError("external spec needs a command, e.g. external:./client")
        return DenoiserSpec("external", command=command)
    raise ValueError(
        f"unknown denoiser spec {text!r}; use oracle, contractive:<gain>, "
        "noisy:<gain>,<sr>,<st> or external:<command>"
    )


def _gain(text: str) -> float:
    gain = float(text)
    if not 0.0 <= gain <= 1.0:
        raise ValueError(f"gain must lie in [0, 1], got {gain}")
    return gain


def parse_method_spec(text: str) -> MethodSpec:
    kind, _, rest = text.partition(":")
    if kind == "single" and not rest:
        return MethodSpec("single", n=1)
    if kind == "naive":
        n = int(rest)
        if n < 1:
            raise ValueError(f"naive iteration count must be >= 1, got {n}")
        return MethodSpec("naive", n=n)
    if kind == "lsd" and not rest:
        return MethodSpec("lsd")
    if kind == "multirange":
        stages: list[Union[float, tuple[str, ...]]] = []
        for token in rest.split(","):
            token = token.strip()
            if token.startswith("external:"):
                command = tuple(shlex.split(token[len("external:"):]))
                if not command:
                    raise ValueError(f"empty external stage in {text!r}")
                stages.append(command)
            else:
                stages.append(_gain(token))
        if not stages:
            raise ValueError("multirange needs at least one stage")
        return MethodSpec("multirange", stages=tuple(stages))
    raise ValueError(
        f"unknown method spec {text!r}; use single, naive:<n>, lsd or "
        "multirange:<g1>,<g2>,..."
    )


@dataclass(frozen=True)
class DataSpec:
    """Parsed --data value."""

    kind: str
    root: str = ""
    n_samples: int = 0
    n_points: int = 0


def parse_data_spec(text: str) -> DataSpec:
    kind, _, rest = text.partition(":")
    if kind == "kitti" and rest:
        return DataSpec("kitti", root=rest)
    if kind == "synth":
        parts = rest.split(",")
        if len(parts) != 2:
            raise ValueError(f"synth spec needs n_scenes,n_points, got {text!r}")
        n_scenes, n_points = int(parts[0]), int(parts[1])
        if n_scenes < 1 or n_points < 1:
            raise ValueError("synth scene and point counts must be >= 1")
        return DataSpec("synth", n_samples=n_scenes, n_points=n_points)
    raise ValueError(
        f"unknown data spec {text!r}; use kitti:<root> or synth:<n_scenes>,<n_points>"
    )


@dataclass(frozen=True)
class RunConfig:
    """Everything one benchmark or calibrate invocation depends on."""

    denoiser: DenoiserSpec = DenoiserSpec("oracle")
    method: MethodSpec = MethodSpec("lsd")
    data: DataSpec = DataSpec("synth", n_samples=10, n_points=2000)
    nfe: int = 10
    total_steps: int = 1000
    s_offset: float = 0.008
    sampler_mode: str = "deterministic"
    rot_range_deg: float = 15.0
    trans_range_cm: float = 15.0
    seed: int = 0
    format: str = "json"
    output: str = "-"
    jobs: int = 1
    limit: Optional[int] = None
    fold_p2: bool = False
    reply_timeout_s: float = 30.0

    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(rot_range_deg=self.rot_range_deg,
                                trans_range_m=self.trans_range_cm / 100.0,
                                seed=self.seed)


def _sub_seed(base_seed: int, sample_id: str, stream: int) -> int:
    ss = np.random.SeedSequence([base_seed, stable_hash64(sample_id), stream])
    return int(ss.generate_state(1, np.uint64)[0])


def iter_synth_samples(n_scenes: int, n_points: int, spec: PerturbationSpec,
                       base_seed: int) -> Iterator[CalibSample]:
    """Deterministic stream of random scenes with perturbed starts."""
    for i in range(n_scenes):
        scene_rng = np.random.default_rng(
            np.random.SeedSequence([base_seed, i, _STREAM_SCENE])
        )
        cloud, T_gt = synth_scene(n_points, SYNTH_DEPTH_RANGE, SYNTH_INTRINSICS,
                                  scene_rng)
        perturb_rng = np.random.default_rng(
            np.random.SeedSequence([base_seed, i, _STREAM_PERTURB])
        )
        T0 = perturb_extrinsic(T_gt, spec, perturb_rng)
        condition = Condition(cloud=cloud, intrinsics=SYNTH_INTRINSICS)
        yield CalibSample(condition=condition, T_gt=T_gt, T0=T0,
                          sample_id=f"synth/{i:05d}")


def iter_samples(config: RunConfig) -> Iterator[CalibSample]:
    spec = config.perturbation()
    if config.data.kind == "synth":
        stream: Iterator[CalibSample] = iter_synth_samples(
            config.data.n_samples, config.data.n_points, spec, config.seed
        )
    else:
        stream = load_samples(config.data.root, SplitSpec(), "test", spec,
                              fold_p2=config.fold_p2)
    if config.limit is not None:
        stream = itertools.islice(stream, config.limit)
    return stream


class _ExternalPool:
    """One child process per worker thread, reused across samples."""

    def __init__(self, command: Sequence[str], reply_timeout_s: float):
        self.command = tuple(command)
        self.reply_timeout_s = reply_timeout_s
        self._local = threading.local()
        self._lock = threading.Lock()
        self._all: list[ExternalDenoiser] = []

    def get(self) -> ExternalDenoiser:
        backend = getattr(self._local, "backend", None)
        if backend is None:
            backend = ExternalDenoiser(self.command[0], self.command[1:],
                                       self.reply_timeout_s)
            self._local.backend = backend
            with self._lock:
                self._all.append(backend)
        return backend

    def close_all(self) -> None:
        with self._lock:
            backends, self._all = self._all, []
        for backend in backends:
            backend.close()


class _BackendFactory:
    """Builds the per-sample denoiser and multirange stages for a run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._pools: dict[tuple[str, ...], _ExternalPool] = {}
        if config.denoiser.kind == "external":
            self._pool_for(config.denoiser.command)
        for stage in config.method.stages:
            if isinstance(stage, tuple):
                self._pool_for(stage)

    def _pool_for(self, command: tuple[str, ...]) -> _ExternalPool:
        if command not in self._pools:
            self._pools[command] = _ExternalPool(command,
                                                 self.config.reply_timeout_s)
        return self._pools[command]

    def denoiser_for(self, sample: CalibSample) -> DenoiserBackend:
        spec = self.config.denoiser
        if spec.kind == "oracle":
            return OracleDenoiser(sample.T_gt)
        if spec.kind == "contractive":
            return ContractiveDenoiser(sample.T_gt, spec.gain)
        if spec.kind == "noisy":
            return NoisyOracleDenoiser(
                sample.T_gt,
                spec.gain,
                np.radians(spec.sigma_rot_deg),
                spec.sigma_trans_cm / 100.0,
                seed=_sub_seed(self.config.seed, sample.sample_id, _STREAM_DENOISER),
            )
        return self._pool_for(spec.command).get()

    def stages_for(self, sample: CalibSample) -> list[tuple[DenoiserBackend, str]]:
        stages = []
        for i, stage in enumerate(self.config.method.stages):
            if isinstance(stage, tuple):
                stages.append((self._pool_for(stage).get(), f"stage{i + 1}:external"))
            else:
                stages.append((ContractiveDenoiser(sample.T_gt, stage),
                               f"stage{i + 1}:gain={stage}"))
        return stages

    def close(self) -> None:
        for pool in self._pools.values():
            pool.close_all()


def run_sample(config: RunConfig, factory: _BackendFactory, schedule,
               sample: CalibSample) -> tuple[np.ndarray, Optional[RefinementTrace],
                                             list[StageRecord]]:
    """Refine one sample; returns the estimate plus whatever was recorded."""
    method = config.method
    if method.kind == "multirange":
        T_hat, records = multi_range_run(factory.stages_for(sample),
                                         sample.condition, sample.T0,
                                         sample.sample_id)
        return T_hat, None, records
    backend = factory.denoiser_for(sample)
    if method.kind in ("single", "naive"):
        T_hat = naive_iterate(backend, sample.condition, sample.T0, method.n,
                              sample.sample_id)
        return T_hat, None, []
    diffusion = DiffusionConfig(
        schedule=schedule,
        nfe=config.nfe,
        sampler_mode=config.sampler_mode,
        rng_seed=_sub_seed(config.seed, sample.sample_id, _STREAM_SAMPLER),
    )
    T_hat, trace = lsd_reverse(backend, sample.condition, sample.T0, diffusion,
                               sample.sample_id)
    return T_hat, trace, []


def _evaluate(config: RunConfig, factory: _BackendFactory, schedule,
              sample: CalibSample) -> tuple[str, Optional[SampleError], Optional[str]]:
    try:
        T_hat, _, _ = run_sample(config, factory, schedule, sample)
        return sample.sample_id, sample_error(transform_error(T_hat, sample.T_gt)), None
    except Exception as exc:
        return sample.sample_id, None, f"{type(exc).__name__}: {exc}"


def _write_output(text: str, output: str) -> None:
    if output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def cmd_benchmark(config: RunConfig) -> int:
    factory = _BackendFactory(config)
    schedule = build_cosine_schedule(config.total_steps, config.s_offset)
    errors: list[SampleError] = []
    failures: list[tuple[str, str]] = []
    try:
        samples = iter_samples(config)
        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                results = pool.map(
                    lambda s: _evaluate(config, factory, schedule, s), samples
                )
                outcomes = list(results)
        else:
            outcomes = [_evaluate(config, factory, schedule, s) for s in samples]
    finally:
        factory.close()
    for sample_id, err, message in outcomes:
        if err is None:
            failures.append((sample_id, message))
            print(f"error: sample {sample_id}: {message}", file=sys.stderr)
        else:
            errors.append(err)
    if not errors:
        print("error: no sample finished successfully", file=sys.stderr)
        return 1
    if failures:
        print(f"note: {len(failures)} of {len(outcomes)} samples failed",
              file=sys.stderr)
    _write_output(render_report(aggregate(errors), config.format), config.output)
    return 0


def _print_transform(T: np.ndarray) -> None:
    for row in T:
        print(" ".join(f"{v:.17g}" for v in row))


def cmd_calibrate(config: RunConfig, trace_csv: Optional[str] = None) -> int:
    factory = _BackendFactory(config)
    schedule = build_cosine_schedule(config.total_steps, config.s_offset)
    try:
        sample = next(iter(iter_samples(config)))
        T_hat, trace, records = run_sample(config, factory, schedule, sample)
    finally:
        factory.close()
    err = sample_error(transform_error(T_hat, sample.T_gt))
    print(f"sample: {sample.sample_id}")
    print("refined extrinsic:")
    _print_transform(T_hat)
    print(f"rotation error: {err.rot_rmse:.9f} deg")
    print(f"translation error: {err.trans_rmse:.9f} cm")
    for record in records:
        stage_err = sample_error(transform_error(record.transform, sample.T_gt))
        print(f"stage {record.label}: rot {stage_err.rot_rmse:.9f} deg, "
              f"trans {stage_err.trans_rmse:.9f} cm")
    if trace is not None:
        rows = []
        for i, step in enumerate(trace.steps):
            step_err = sample_error(transform_error(step.extrinsic, sample.T_gt))
            rows.append((i + 1, step.t, step_err.rot_rmse, step_err.trans_rmse))
        print("trace (step, t, rot_err_deg, trans_err_cm):")
        for row in rows:
            print(f"{row[0]} {row[1]} {row[2]:.9f} {row[3]:.9f}")
        if trace_csv is not None:
            lines = ["step,t,rot_err_deg,trans_err_cm"]
            lines += [f"{r[0]},{r[1]},{r[2]!r},{r[3]!r}" for r in rows]
            Path(trace_csv).write_text("\n".join(lines) + "\n")
    return 0


def cmd_schedule(total_steps: int, s_offset: float, output: str) -> int:
    _write_output(schedule_csv(build_cosine_schedule(total_steps, s_offset)), output)
    return 0


def _argtype(fn):
    def wrapper(text):
        try:
            return fn(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    wrapper.__name__ = fn.__name__
    return wrapper


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=_argtype(parse_data_spec),
                        default=parse_data_spec("synth:10,2000"),
                        help="kitti:<root> or synth:<n_scenes>,<n_points>")
    parser.add_argument("--denoiser", type=_argtype(parse_denoiser_spec),
                        default=parse_denoiser_spec("oracle"),
                        help="oracle | contractive:<gain> | "
                             "noisy:<gain>,<sigma_rot_deg>,<sigma_trans_cm> | "
                             "external:<command>")
    parser.add_argument("--method", type=_argtype(parse_method_spec),
                        default=parse_method_spec("lsd"),
                        help="single | naive:<n> | lsd | multirange:<g1>,<g2>,...")
    parser.add_argument("--nfe", type=int, default=10,
                        help="denoiser calls per reverse pass")
    parser.add_argument("--total-steps", type=int, default=1000,
                        help="schedule length T")
    parser.add_argument("--s-offset", type=float, default=0.008,
                        help="cosine schedule offset")
    parser.add_argument("--sampler", choices=("deterministic", "ancestral_stochastic"),
                        default="deterministic")
    parser.add_argument("--perturb-rot", type=float, default=15.0,
                        help="per-axis rotation half-range, degrees")
    parser.add_argument("--perturb-trans", type=float, default=15.0,
                        help="per-axis translation half-range, centimeters")
    parser.add_argument("--seed", type=int, default=None,
                        help=f"base seed (default: ${SEED_ENV_VAR} or 0)")
    parser.add_argument("--format", choices=("json", "csv", "markdown"),
                        default="json")
    parser.add_argument("--output", "-o", default="-",
                        help="report path, - for stdout")
    parser.add_argument("--limit", type=int, default=None,
                        help="cap the number of samples")
    parser.add_argument("--fold-p2-offset", action="store_true",
                        help="fold the P2 camera offset into KITTI extrinsics")
    parser.add_argument("--reply-timeout", type=float, default=30.0,
                        help="external denoiser reply deadline, seconds")


def _resolve_seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.limit is not None and args.limit < 1:
        raise ValueError(f"--limit must be >= 1, got {args.limit}")
    return RunConfig(
        denoiser=args.denoiser,
        method=args.method,
        data=args.data,
        nfe=args.nfe,
        total_steps=args.total_steps,
        s_offset=args.s_offset,
        sampler_mode=args.sampler,
        rot_range_deg=args.perturb_rot,
        trans_range_cm=args.perturb_trans,
        seed=_resolve_seed(args.seed),
        format=args.format,
        output=args.output,
        jobs=getattr(args, "jobs", 1),
        limit=args.limit,
        fold_p2=args.fold_p2_offset,
        reply_timeout_s=args.reply_timeout,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsdcalib",
        description="Iterative camera-LiDAR extrinsic refinement benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("benchmark", help="run a method over a sample set")
    _add_run_arguments(bench)
    bench.add_argument("--jobs", type=int, default=1,
                       help="parallel sample workers")

    calib = sub.add_parser("calibrate", help="refine the first sample, print trace")
    _add_run_arguments(calib)
    calib.add_argument("--trace-csv", default=None,
                       help="also write the per-step trace as CSV")

    sched = sub.add_parser("schedule", help="dump the noise schedule as CSV")
    sched.add_argument("--total-steps", type=int, default=1000)
    sched.add_argument("--s-offset", type=float, default=0.008)
    sched.add_argument("--output", "-o", default="-")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "schedule":
            return cmd_schedule(args.total_steps, args.s_offset, args.output)
        config = _config_from_args(args)
        if config.jobs < 1:
            raise ValueError(f"--jobs must be >= 1, got {config.jobs}")
        if args.command == "benchmark":
            return cmd_benchmark(config)
        return cmd_calibrate(config, trace_csv=args.trace_csv)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
