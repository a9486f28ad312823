"""Command line front end: ``measure``, ``narrate``, ``evaluate`` and ``ef``.

Outputs are JSON lines in input order.  Exit codes: 0 success, 1 input
error, 2 computation error, 3 endpoint error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Optional

from . import contour_io, frame_metrics, geometry, llm_gateway, narrative, nle_eval
from .config import Thresholds, load_thresholds
from .errors import ComputationError, EchoExplainError, EndpointError, InputError, MalformedRow, SchemaError

log = logging.getLogger("echoexplain")

EXIT_OK, EXIT_INPUT, EXIT_COMPUTE, EXIT_ENDPOINT = 0, 1, 2, 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, EndpointError):
        return EXIT_ENDPOINT
    if isinstance(exc, ComputationError):
        return EXIT_COMPUTE
    return EXIT_INPUT


@dataclass
class RunConfig:
    subcommand: str
    inputs: list
    output: Optional[str] = None
    config_path: Optional[str] = None
    registry_path: Optional[str] = None
    endpoint_path: Optional[str] = None
    online: bool = False
    seed: int = 0
    spacing: Optional[float] = None
    jobs: int = 1
    file_list: Optional[str] = None
    frames_dir: Optional[str] = None
    sector_source: str = "auto"  # auto | none | polygon
    sector_polygon: Optional[str] = None
    contrast_mode: Optional[str] = None
    thresholds: Thresholds = field(default_factory=Thresholds)

    @property
    def offline(self) -> bool:
        return not self.online


# -- input ---------------------------------------------------------------------

@dataclass
class Job:
    """One unit of per-cycle work; ``build`` defers parsing errors to the worker."""
    label: str
    build: Callable[[], object]


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{path}: no such file")
    return p.read_text("utf-8")


def _json_docs(path: str, text: str) -> list:
    if path.endswith(".jsonl"):
        docs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if line.strip():
                try:
                    docs.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise MalformedRow(lineno, f"{path}: invalid JSON ({exc.msg})") from None
        return docs
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    return doc if isinstance(doc, list) else [doc]


def _attach_frames(cycle: contour_io.CardiacCycle, frames_dir: Optional[str]) -> contour_io.CardiacCycle:
    """Load ``<video_id>_<frame>.pgm`` images for the ED and ES frames when present."""
    if not frames_dir:
        return cycle
    images = {}
    for fr in (cycle.ed, cycle.es):
        p = Path(frames_dir) / f"{cycle.video_id}_{fr.frame_index}.pgm"
        if p.is_file():
            images[fr.frame_index] = frame_metrics.load_pgm(p.read_bytes())
    return replace(cycle, frames=images or None)


def cycle_jobs(run: RunConfig) -> Iterator[Job]:
    """Per-cycle jobs from tracing CSVs, native cycle JSON or measured vectors."""
    refs = contour_io.parse_file_list(_read(run.file_list)) if run.file_list else {}
    for path in run.inputs:
        text = _read(path)
        if path.lower().endswith(".csv"):
            groups = contour_io.parse_volume_tracings(text)
            spacing = run.spacing or 1.0
            for vid, frames in groups.items():
                def build(vid=vid, frames=frames):
                    return contour_io.cycle_from_tracings(vid, frames, refs.get(vid), spacing)
                yield Job(vid, build)
            continue
        for i, doc in enumerate(_json_docs(path, text)):
            label = doc.get("video_id", f"{path}#{i}") if isinstance(doc, dict) else f"{path}#{i}"
            if isinstance(doc, dict) and "edv" in doc and "ed" not in doc:
                yield Job(label, lambda doc=doc: geometry.AttributeVector.from_dict(doc))
                continue

            def build(doc=doc):
                if run.spacing is not None and isinstance(doc, dict):
                    doc = {**doc, "spacing": run.spacing}
                cycle = contour_io.cycle_from_dict(doc)
                if cycle.reference is None and cycle.video_id in refs:
                    cycle = replace(cycle, reference=refs[cycle.video_id])
                return cycle
            yield Job(label, build)


def _sector(run: RunConfig):
    if run.sector_source == "polygon":
        if not run.sector_polygon:
            raise InputError("--sector-source polygon needs --sector-polygon FILE")
        return json.loads(_read(run.sector_polygon))
    return None


# -- per-cycle work ------------------------------------------------------------

def _vector(run: RunConfig, item, sector) -> geometry.AttributeVector:
    if isinstance(item, geometry.AttributeVector):
        return item
    cycle = _attach_frames(item, run.frames_dir)
    if run.sector_source == "none":
        # frames still feed contrast; only the sector attribute is dropped
        return replace(geometry.compute_attribute_vector(cycle, None, run.thresholds), sector_ratio=None)
    return geometry.compute_attribute_vector(cycle, sector, run.thresholds)


def _run_jobs(run: RunConfig, work: Callable[[Job], dict], out) -> tuple[int, list]:
    """Run jobs with at most ``run.jobs`` workers, writing results in input order.

    Returns the number written and the list of ``(label, exception)`` soft failures.
    """
    def guarded(job: Job):
        try:
            return job.label, work(job), None
        except (InputError, ComputationError) as exc:
            return job.label, None, exc

    failures = []
    written = 0
    jobs = cycle_jobs(run)
    if run.jobs > 1:
        pool = ThreadPoolExecutor(max_workers=run.jobs)
        results = pool.map(guarded, jobs)
    else:
        pool = None
        results = map(guarded, jobs)
    try:
        for label, doc, exc in results:
            if exc is not None:
                log.warning("skipping %s: %s: %s", label, type(exc).__name__, exc)
                failures.append((label, exc))
                continue
            out.write(json.dumps(doc) + "\n")
            written += 1
    finally:
        if pool is not None:
            pool.shutdown()
    return written, failures


def _finish(written: int, failures: list, what: str) -> int:
    if failures:
        print(f"{what}: {written} written, {len(failures)} skipped", file=sys.stderr)
    if failures and not written:
        return exit_code_for(failures[0][1])
    return EXIT_OK


def cmd_measure(run: RunConfig, out) -> int:
    sector = _sector(run)

    def work(job: Job) -> dict:
        vec = _vector(run, job.build(), sector)
        return {**vec.to_dict(), "seed": run.seed}

    return _finish(*_run_jobs(run, work, out), "measure")


def cmd_ef(run: RunConfig, out) -> int:
    def work(job: Job) -> dict:
        cycle = job.build()
        if isinstance(cycle, geometry.AttributeVector):
            doc = {"video_id": cycle.video_id, "edv": cycle.edv, "esv": cycle.esv, "ef": cycle.ef}
            ref = None
        else:
            ed, es = contour_io.order_ed_es(cycle.ed, cycle.es)
            vols = geometry.VolumePair(
                geometry.disk_volume(ed, run.thresholds.n_disks), geometry.disk_volume(es, run.thresholds.n_disks)
            )
            doc = {"video_id": cycle.video_id, "edv": vols.edv, "esv": vols.esv,
                   "ef": geometry.ejection_fraction(vols)}
            ref = cycle.reference
        if ref is not None and ref.ef is not None:
            doc["reference_ef"] = ref.ef
            doc["abs_error"] = abs(doc["ef"] - ref.ef)
        doc["seed"] = run.seed
        return doc

    return _finish(*_run_jobs(run, work, out), "ef")


def _endpoint(run: RunConfig) -> Optional[llm_gateway.EndpointConfig]:
    if not run.online:
        return None
    if not run.endpoint_path:
        raise InputError("--online needs --endpoint FILE")
    return llm_gateway.load_endpoint(run.endpoint_path, online=True)


def cmd_narrate(run: RunConfig, out) -> int:
    registry = narrative.load_registry(run.registry_path)
    endpoint = _endpoint(run)
    sector = _sector(run)
    refine_failures = []

    def work(job: Job) -> dict:
        vec = _vector(run, job.build(), sector)
        bundle = narrative.make_bundle(vec, registry, run.thresholds, run.seed)
        doc = bundle.to_dict()
        if endpoint is not None:
            try:
                doc["refined_text"] = llm_gateway.refine_explanation(endpoint, bundle.refinement_prompt)
            except EndpointError as exc:
                log.warning("refinement failed for %s: %s", job.label, exc)
                doc["refinement_error"] = f"{type(exc).__name__}: {exc}"
                refine_failures.append(exc)
        return doc

    code = _finish(*_run_jobs(run, work, out), "narrate")
    if code == EXIT_OK and refine_failures:
        print(f"narrate: refinement failed for {len(refine_failures)} cycle(s)", file=sys.stderr)
        return EXIT_ENDPOINT
    return code


def cmd_evaluate(run: RunConfig, out) -> int:
    registry = narrative.load_registry(run.registry_path)
    endpoint = _endpoint(run)
    pairs = []
    for path in run.inputs:
        pairs += nle_eval.read_pairs(_read(path).splitlines())
    report = nle_eval.evaluate_pairs(
        pairs, registry, endpoint if endpoint is not None else "rule_based", jobs=run.jobs
    )
    doc = report.to_dict()
    doc["extractor"] = "llm" if endpoint is not None else "rule_based"
    doc["seed"] = run.seed
    out.write(json.dumps(doc) + "\n")
    print(report.to_table(), file=sys.stderr)
    return EXIT_OK


COMMANDS = {"measure": cmd_measure, "narrate": cmd_narrate, "evaluate": cmd_evaluate, "ef": cmd_ef}


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echoexplain", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("inputs", nargs="+", help="input files")
    common.add_argument("-o", "--output", help="output file (default stdout)")
    common.add_argument("--config", dest="config_path", help="threshold file (JSON or TOML)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)

    cycles = argparse.ArgumentParser(add_help=False)
    cycles.add_argument("--spacing", type=float, help="pixel spacing; volumes come out in spacing^3 units")
    cycles.add_argument("--file-list", help="FileList.csv with reference EF/EDV/ESV")
    cycles.add_argument("--frames", dest="frames_dir", help="directory of <video_id>_<frame>.pgm images")
    cycles.add_argument("--sector-source", choices=("auto", "none", "polygon"), default="auto")
    cycles.add_argument("--sector-polygon", help="JSON list of [x, y] sector vertices")
    cycles.add_argument("--contrast-mode", choices=("ratio", "difference"))

    remote = argparse.ArgumentParser(add_help=False)
    remote.add_argument("--registry", dest="registry_path", help="attribute registry (JSON or TOML)")
    remote.add_argument("--endpoint", dest="endpoint_path", help="chat endpoint config (JSON or TOML)")
    remote.add_argument("--online", action="store_true", help="allow network calls to the endpoint")

    sub.add_parser("measure", parents=[common, cycles], help="attribute vector per cycle")
    sub.add_parser("ef", parents=[common, cycles], help="volumes and EF per cycle")
    sub.add_parser("narrate", parents=[common, cycles, remote], help="explanation texts per cycle")
    sub.add_parser("evaluate", parents=[common, remote], help="score {id, gt_text, pred_text} pairs")
    return parser


def run_config_from_args(ns: argparse.Namespace) -> RunConfig:
    kw = {k: v for k, v in vars(ns).items() if k in RunConfig.__dataclass_fields__}
    run = RunConfig(**kw)
    if run.jobs < 1:
        raise InputError("--jobs must be >= 1")
    if run.spacing is not None and not run.spacing > 0:
        raise InputError("--spacing must be positive")
    cfg = load_thresholds(run.config_path) if run.config_path else Thresholds()
    if run.contrast_mode:
        cfg = replace(cfg, contrast_mode=run.contrast_mode)
    run.thresholds = cfg
    return run


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = run_config_from_args(ns)
        if run.output:
            with open(run.output, "w", encoding="utf-8") as out:
                return COMMANDS[run.subcommand](run, out)
        code = COMMANDS[run.subcommand](run, sys.stdout)
        sys.stdout.flush()
        return code
    except EchoExplainError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
