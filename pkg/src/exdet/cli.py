"""Command-line surface: detect, exemplar management, self test.

Exit codes (a total function of the error class):
    0  success (including zero detections)
    1  self-test property failure
    2  invalid arguments or configuration
    3  backend unavailable
    4  exemplar store error
    5  image decode failure
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .backends import BackendSet, remote_backends, synthetic_backends
from .candidates import CandidateParams, CandidateRegion
from .errors import BackendUnavailable, ConfigError, ImageDecodeError, StoreError
from .pipeline import LoadedExemplar, PipelineConfig, PipelineTrace, run_pipeline
from .prompts import BoxPrompt, Detection
from .store import ExemplarStore, add_exemplar, load_store
from .validation import load_image
from .verify import VerifiedMatch, VerifyParams

SCHEMA_VERSION = 1
ENDPOINT_ENV = "EBOD_ENDPOINT"

_CANDIDATE_KEYS = ("sigma", "eps", "min_samples", "merge_iou")
_VERIFY_KEYS = ("min_matches", "min_inlier_ratio", "reproj_threshold", "ransac_iterations")


@dataclass
class RunConfig:
    """Resolved run configuration: defaults < --config file < flags."""

    candidate_params: CandidateParams
    verify_params: VerifyParams
    tau: float
    backend: str
    endpoint: str | None
    rng_seed: int

    def as_dict(self) -> dict:
        return {
            "sigma": self.candidate_params.sigma,
            "eps": self.candidate_params.eps,
            "min_samples": self.candidate_params.min_samples,
            "merge_iou": self.candidate_params.merge_iou,
            "min_matches": self.verify_params.min_matches,
            "min_inlier_ratio": self.verify_params.min_inlier_ratio,
            "reproj_threshold": self.verify_params.reproj_threshold,
            "ransac_iterations": self.verify_params.ransac_iterations,
            "tau": self.tau,
            "backend": self.backend,
            "endpoint": self.endpoint,
            "rng_seed": self.rng_seed,
        }


def resolve_config(
    config_path: str | None,
    backend_flag: str | None,
    endpoint_flag: str | None,
    seed_flag: int | None,
) -> RunConfig:
    values: dict = {}
    if config_path is not None:
        try:
            doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        allowed = set(_CANDIDATE_KEYS) | set(_VERIFY_KEYS) | {
            "tau",
            "backend",
            "endpoint",
            "rng_seed",
        }
        for key in doc:
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r}")
        values.update(doc)

    if backend_flag is not None:
        values["backend"] = backend_flag
    if endpoint_flag is not None:
        values["endpoint"] = endpoint_flag
    if seed_flag is not None:
        values["rng_seed"] = seed_flag

    backend = values.get("backend", "synthetic")
    if backend not in ("synthetic", "remote"):
        raise ConfigError(f"backend: must be 'synthetic' or 'remote', got {backend!r}")
    endpoint = values.get("endpoint") or os.environ.get(ENDPOINT_ENV)
    if backend == "remote" and not endpoint:
        raise ConfigError("endpoint: required for backend 'remote' (flag, config, or EBOD_ENDPOINT)")

    rng_seed = values.get("rng_seed", 0)
    if not isinstance(rng_seed, int) or isinstance(rng_seed, bool):
        raise ConfigError(f"rng_seed: must be an integer, got {rng_seed!r}")

    try:
        candidate_params = CandidateParams(
            **{k: values[k] for k in _CANDIDATE_KEYS if k in values}
        )
        verify_params = VerifyParams(
            rng_seed=rng_seed,
            **{k: values[k] for k in _VERIFY_KEYS if k in values},
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    tau = values.get("tau", 0.5)
    if not isinstance(tau, (int, float)) or isinstance(tau, bool) or not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau: must be a number in (0, 1], got {tau!r}")

    return RunConfig(
        candidate_params=candidate_params,
        verify_params=verify_params,
        tau=float(tau),
        backend=backend,
        endpoint=endpoint if backend == "remote" else None,
        rng_seed=rng_seed,
    )


def make_backends(config: RunConfig) -> BackendSet:
    if config.backend == "remote":
        return remote_backends(config.endpoint)
    return synthetic_backends(seed=config.rng_seed)


# --- RunResult document -------------------------------------------------------


def _box_payload(box) -> list[float]:
    return [box.x_min, box.y_min, box.x_max, box.y_max]


def _candidate_payload(c: CandidateRegion) -> dict:
    return {
        "index": c.index,
        "box": _box_payload(c.box),
        "mean_score": c.mean_score,
        "points": len(c.cluster_points),
    }


def _verified_payload(v: VerifiedMatch) -> dict:
    return {
        "candidate_index": v.candidate_index,
        "box": _box_payload(v.box_target),
        "quad": [[p.x, p.y] for p in v.quad_target.corners],
        "inlier_ratio": v.inlier_ratio,
        "match_count": v.match_count,
    }


def _prompt_payload(p: BoxPrompt) -> dict:
    return {"box": _box_payload(p.box), "polarity": p.polarity, "source_exemplar": p.source_exemplar}


def build_run_result(
    detections: list[Detection],
    trace: PipelineTrace,
    config: RunConfig,
    live_timings: bool,
) -> dict:
    if live_timings:
        timings = {k: trace.timings_ms.get(k, 0.0) for k in
                   ("candidates_ms", "verify_ms", "detect_ms", "total_ms")}
    else:
        # Zeroed by default so runs with a fixed seed are bit-reproducible.
        timings = {"candidates_ms": 0.0, "verify_ms": 0.0, "detect_ms": 0.0, "total_ms": 0.0}
    return {
        "schema": SCHEMA_VERSION,
        "detections": [
            {"box": _box_payload(d.box), "score": d.score, "source": d.source}
            for d in detections
        ],
        "trace": {
            "exemplars": [
                {
                    "id": ex.exemplar_id,
                    "candidates": [_candidate_payload(c) for c in ex.candidates],
                    "verified": [_verified_payload(v) for v in ex.verified],
                    "rejections": [
                        {"candidate_index": idx, "reason": reason}
                        for idx, reason in ex.rejections
                    ],
                }
                for ex in trace.exemplars
            ],
            "prompts": [_prompt_payload(p) for p in trace.prompts],
        },
        "config": config.as_dict(),
        "timings": timings,
    }


def dump_run_result(doc: dict) -> str:
    """Canonical serialization: insertion-ordered keys, two-space pretty print."""
    return json.dumps(doc, indent=2) + "\n"


def _dump_overlay(path: str, target_path: str, trace: PipelineTrace, detections) -> None:
    # Debug aid only: candidates yellow, verified blue, detections green.
    from PIL import Image, ImageDraw

    with Image.open(target_path) as im:
        img = im.convert("RGB")
    draw = ImageDraw.Draw(img)
    for ex in trace.exemplars:
        for c in ex.candidates:
            draw.rectangle(c.box.as_tuple(), outline=(255, 220, 0), width=2)
        for v in ex.verified:
            draw.rectangle(v.box_target.as_tuple(), outline=(0, 120, 255), width=2)
    for d in detections:
        draw.rectangle(d.box.as_tuple(), outline=(0, 255, 60), width=3)
    img.save(path, format="PNG")


# --- subcommands ----------------------------------------------------------------


def cmd_detect(args: argparse.Namespace) -> int:
    config = resolve_config(args.config, args.backend, args.endpoint, args.seed)
    backends = make_backends(config)
    store = load_store(args.store)
    exemplars = [
        LoadedExemplar(record.id, record.label, store.load_image(record))
        for record in store.list()
    ]
    target = load_image(args.target)

    pipeline_config = PipelineConfig(
        candidate_params=config.candidate_params,
        verify_params=config.verify_params,
        tau=config.tau,
    )
    detections, trace = run_pipeline(target, args.text, exemplars, backends, pipeline_config)

    doc = build_run_result(detections, trace, config, live_timings=args.live_timings)
    text = dump_run_result(doc)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.dump_overlay:
        _dump_overlay(args.dump_overlay, args.target, trace, detections)
    return 0


def _parse_crop(value: str) -> tuple[int, int, int, int]:
    parts = value.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("crop must be x,y,w,h")
    try:
        x, y, w, h = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("crop values must be integers") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("crop width and height must be positive")
    return x, y, x + w, y + h


def cmd_exemplar(args: argparse.Namespace) -> int:
    if args.exemplar_cmd == "add":
        record = add_exemplar(
            args.store,
            load_image(args.image),
            crop_rect=args.crop,
            label=args.label,
            text_tag=args.text_tag,
            note=args.note,
        )
        print(f"added {record.id} ({record.label.value}, {record.crop_w}x{record.crop_h})")
        return 0
    if args.exemplar_cmd == "list":
        store = load_store(args.store)
        records = store.list()
        if args.json:
            print(json.dumps([r.to_record() for r in records], indent=2))
        else:
            for r in records:
                print(f"{r.id}  {r.label.value:8s}  {r.crop_w}x{r.crop_h}  {r.created_at}")
        return 0
    if args.exemplar_cmd == "rm":
        store = load_store(args.store)
        store.remove(args.id)
        print(f"removed {args.id}")
        return 0
    raise ConfigError(f"unknown exemplar subcommand {args.exemplar_cmd!r}")


def cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import run_selftest

    results = run_selftest(emit=print)
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"self test failed: {failed[0].name}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exdet",
        description="Exemplar-guided box prompting for promptable detectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="run detection on a target image")
    p_detect.add_argument("--target", required=True, help="target image path")
    p_detect.add_argument("--text", required=True, help="text prompt for the detector")
    p_detect.add_argument("--store", required=True, help="exemplar store directory")
    p_detect.add_argument("--backend", choices=["synthetic", "remote"], default=None)
    p_detect.add_argument("--endpoint", default=None, help="sidecar URL for --backend remote")
    p_detect.add_argument("--config", default=None, help="JSON config file")
    p_detect.add_argument("--out", default=None, help="write the run result JSON here")
    p_detect.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p_detect.add_argument(
        "--live-timings",
        action="store_true",
        help="emit measured stage timings (off by default: zeroed for reproducible output)",
    )
    p_detect.add_argument("--dump-overlay", default=None, help="debug: write boxes burned into a PNG")
    p_detect.set_defaults(func=cmd_detect)

    p_ex = sub.add_parser("exemplar", help="manage the exemplar store")
    ex_sub = p_ex.add_subparsers(dest="exemplar_cmd", required=True)

    p_add = ex_sub.add_parser("add", help="add an exemplar crop")
    p_add.add_argument("--store", required=True)
    p_add.add_argument("--image", required=True, help="source image path")
    p_add.add_argument("--label", required=True, choices=["positive", "negative"])
    p_add.add_argument("--crop", type=_parse_crop, default=None, help="x,y,w,h (default: whole image)")
    p_add.add_argument("--text-tag", default=None, help="text prompt the error occurred under")
    p_add.add_argument("--note", default="", help="free-text note")
    p_add.set_defaults(func=cmd_exemplar)

    p_list = ex_sub.add_parser("list", help="list stored exemplars")
    p_list.add_argument("--store", required=True)
    p_list.add_argument("--json", action="store_true")
    p_list.set_defaults(func=cmd_exemplar)

    p_rm = ex_sub.add_parser("rm", help="remove an exemplar by id")
    p_rm.add_argument("--store", required=True)
    p_rm.add_argument("--id", required=True)
    p_rm.set_defaults(func=cmd_exemplar)

    p_self = sub.add_parser("selftest", help="run the built-in end-to-end properties")
    p_self.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except StoreError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ImageDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
