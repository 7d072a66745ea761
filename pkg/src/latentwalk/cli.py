"""Pipeline orchestration: generate | pca | walk | filter | eval | report.

Each subcommand reads the shared config, checks its prerequisites inside the
run directory, and writes its own stage outputs. Diagnostics go to stderr;
data only ever goes to files (the report table, the one human-facing product,
prints to stdout).

Exit codes: 0 success, 2 config error, 3 dependency error, 4 backend error,
5 data error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation, reporting
from .backend import ToyBackendConfig, open_session, toy_quality
from .config import RunConfig, load_run_config
from .errors import (
    BackendError,
    ConfigError,
    DataError,
    DependencyError,
    LatentWalkError,
    StoreError,
)
from .gates import filter_dataset
from .latents import (
    LatentSet,
    TruncationParams,
    load_latents,
    mean_latent,
    sample_latents,
    save_latents,
    truncate_set,
)
from .manifest import KIND_BASE, KIND_MATED, ManifestRecord, read_manifest, write_manifest
from .pca import compute_pca, load_basis, save_basis, source_hash
from .walk import guided_walk

log = logging.getLogger("latentwalk")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_BACKEND = 4
EXIT_DATA = 5


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing {path}; run `latentwalk {hint}` first")
    return path


def _partial_marker(path: Path) -> Path:
    return path.with_name(path.name + ".partial")


def _check_not_partial(manifest_path: Path) -> None:
    marker = _partial_marker(manifest_path)
    if marker.exists():
        raise DependencyError(
            f"{manifest_path} is marked partial ({marker}); rerun the producing stage"
        )


def _read_run_manifest(cfg: RunConfig, run_dir) -> tuple[dict, list[ManifestRecord]]:
    manifest_path = _require(cfg.path(run_dir, "manifest"), "generate")
    _check_not_partial(manifest_path)
    header, records = read_manifest(manifest_path)
    if header["dim"] != cfg.dim:
        raise DataError(
            f"manifest dim {header['dim']} does not match configured dim {cfg.dim}"
        )
    return header, records


def _attach_quality(cfg: RunConfig, ref) -> dict | None:
    if ref.quality:
        return {str(k): float(v) for k, v in sorted(ref.quality.items())}
    if cfg.eval.attach_toy_quality and ref.metadata.complete():
        return {"toy": toy_quality(ref.metadata)}
    return None


def cmd_generate(cfg: RunConfig, run_dir: Path) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    raw = sample_latents(cfg.count, cfg.dim, cfg.seed)
    save_latents(raw, cfg.path(run_dir, "latents_raw"))

    manifest_path = cfg.path(run_dir, "manifest")
    records: list[ManifestRecord] = []
    with open_session(cfg.backend) as session:
        center = session.center()
        if center is None:
            center = mean_latent(raw)
        truncated = truncate_set(raw, TruncationParams(psi=cfg.psi, center=center))
        save_latents(truncated, cfg.path(run_dir, "latents"))
        try:
            for i in range(truncated.count):
                ref = session.generate(truncated.rows[i], f"b{i:06d}")
                records.append(
                    ManifestRecord(
                        id=ref.id,
                        subject_id=ref.id,
                        kind=KIND_BASE,
                        metadata=ref.metadata,
                        quality=_attach_quality(cfg, ref),
                        latent_row=i,
                        image_uri=ref.image_uri,
                    )
                )
        except BackendError:
            write_manifest(manifest_path, {"dim": cfg.dim, "run_id": cfg.run_id}, records)
            _partial_marker(manifest_path).write_text("generate aborted\n", encoding="utf-8")
            raise
    write_manifest(manifest_path, {"dim": cfg.dim, "run_id": cfg.run_id}, records)
    _partial_marker(manifest_path).unlink(missing_ok=True)
    log.info("generated %d base records", len(records))


def cmd_pca(cfg: RunConfig, run_dir: Path) -> None:
    latents_path = _require(cfg.path(run_dir, "latents"), "generate")
    latents = load_latents(latents_path)
    basis = compute_pca(latents, k=cfg.pca_components)
    save_basis(basis, cfg.path(run_dir, "basis_dir"), source=source_hash(latents_path))
    log.info("extracted %d components; top variance %.6g", basis.k, basis.variances[0])


def _load_checked_basis(cfg: RunConfig, run_dir: Path):
    latents_path = _require(cfg.path(run_dir, "latents"), "generate")
    basis_dir = cfg.path(run_dir, "basis_dir")
    _require(basis_dir / "basis.json", "pca")
    basis, sidecar = load_basis(basis_dir)
    if sidecar.get("source_hash") != source_hash(latents_path):
        raise DependencyError(
            f"{basis_dir} was computed from different latents; rerun `latentwalk pca`"
        )
    return load_latents(latents_path), basis


def _walk_one(cfg: RunConfig, base_record: ManifestRecord, w, basis, session):
    mated = guided_walk(session, w, basis, cfg.walk, base_id=base_record.id)
    out = []
    for record in mated:
        out.append(
            ManifestRecord(
                id=record.sample.id,
                subject_id=record.base_id,
                kind=KIND_MATED,
                metadata=record.sample.metadata,
                direction=record.direction,
                distance=record.distance,
                similarity_to_base=record.similarity_to_base,
                quality=_attach_quality(cfg, record.sample),
                image_uri=record.sample.image_uri,
                extra={"truncated": True} if record.truncated else {},
            )
        )
    return out


def cmd_walk(cfg: RunConfig, run_dir: Path) -> None:
    header, records = _read_run_manifest(cfg, run_dir)
    latents, basis = _load_checked_basis(cfg, run_dir)
    bases = [r for r in records if r.kind == KIND_BASE]
    if any(r.verdict is None for r in bases):
        raise DependencyError("base records carry no verdicts; run `latentwalk filter` first")
    accepted = [r for r in bases if r.accepted()]
    for record in accepted:
        if record.latent_row is None or not (0 <= record.latent_row < latents.count):
            raise DataError(f"base record {record.id!r} has no valid latent_row")

    workers = cfg.workers
    if workers > 1 and not isinstance(cfg.backend, ToyBackendConfig):
        log.warning("external backends answer serially; forcing workers=1")
        workers = 1

    manifest_path = cfg.path(run_dir, "manifest")
    mated_records: list[ManifestRecord] = []
    try:
        if workers == 1:
            with open_session(cfg.backend) as session:
                for record in accepted:
                    mated_records.extend(
                        _walk_one(cfg, record, latents.rows[record.latent_row], basis, session)
                    )
        else:
            # One private session per task; identical config makes them
            # interchangeable, so per-base results are order-independent.
            def task(record):
                with open_session(cfg.backend) as session:
                    return _walk_one(
                        cfg, record, latents.rows[record.latent_row], basis, session
                    )

            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                for chunk in pool.map(task, accepted):
                    mated_records.extend(chunk)
    except BackendError:
        _partial_marker(manifest_path).write_text("walk aborted\n", encoding="utf-8")
        raise

    mated_records.sort(key=lambda r: r.id)
    out_records = bases + mated_records
    write_manifest(manifest_path, header, out_records)

    per_direction = len(cfg.walk.directions)
    attempted = len(accepted) * per_direction
    walked_directions = {(r.subject_id, r.direction) for r in mated_records}
    stats = {
        "bases_walked": len(accepted),
        "directions_per_base": per_direction,
        "attempted_directions": attempted,
        "saved_records": len(mated_records),
        "first_step_failures": attempted - len(walked_directions),
        "truncated_directions": sum(1 for r in mated_records if r.extra.get("truncated")),
        "save_policy": cfg.walk.save_policy,
    }
    cfg.path(run_dir, "walk_stats").write_text(
        json.dumps(stats, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    log.info(
        "walked %d bases x %d directions: %d mated records, %d first-step failures",
        len(accepted),
        per_direction,
        len(mated_records),
        stats["first_step_failures"],
    )


def cmd_filter(cfg: RunConfig, run_dir: Path) -> None:
    header, records = _read_run_manifest(cfg, run_dir)
    annotated, report = filter_dataset(records, cfg.gates)
    write_manifest(cfg.path(run_dir, "manifest"), header, annotated)
    cfg.path(run_dir, "filter_report").write_text(
        json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    log.info("filter report:\n%s", report.format_table())


def _kl_matrix(artifacts: reporting.EvalArtifacts, names: list[str]) -> reporting.KLMatrix:
    values = [
        [
            evaluation.kl_divergence(
                artifacts.density_curves[row], artifacts.density_curves[col]
            )
            for col in names
        ]
        for row in names
    ]
    return reporting.KLMatrix(rows=list(names), cols=list(names), values=values)


def _latents_by_id(records, latents: LatentSet, basis) -> dict[str, np.ndarray]:
    """Base latents come from the store; mated latents are reconstructed from
    lineage (base + distance along the signed component)."""
    by_id: dict[str, np.ndarray] = {}
    base_rows: dict[str, int] = {}
    for record in records:
        if record.kind == KIND_BASE:
            if record.latent_row is None:
                raise DataError(f"base record {record.id!r} has no latent_row")
            base_rows[record.id] = record.latent_row
            by_id[record.id] = latents.rows[record.latent_row]
    for record in records:
        if record.kind == KIND_MATED:
            row = base_rows.get(record.subject_id)
            if row is None:
                raise DataError(
                    f"mated record {record.id!r} references unknown base {record.subject_id!r}"
                )
            comp, sign = record.direction
            if comp > basis.k:
                raise DataError(
                    f"mated record {record.id!r} uses component {comp}, basis has {basis.k}"
                )
            direction = sign * basis.components[comp - 1]
            by_id[record.id] = latents.rows[row] + record.distance * direction
    return by_id


def cmd_eval(cfg: RunConfig, run_dir: Path) -> None:
    header, records = _read_run_manifest(cfg, run_dir)
    _require(cfg.path(run_dir, "walk_stats"), "walk")
    if any(r.verdict is None for r in records):
        raise DependencyError("manifest carries unfiltered records; run `latentwalk filter`")
    latents, basis = _load_checked_basis(cfg, run_dir)
    accepted = [r for r in records if r.accepted()]
    if len({r.subject_id for r in accepted}) < 2:
        raise DataError("evaluation needs at least 2 accepted subjects")
    by_id = _latents_by_id(accepted, latents, basis)

    with open_session(cfg.backend) as session:
        scores = evaluation.collect_scores(
            accepted,
            by_id,
            session,
            nonmated_pairs_per_subject=cfg.eval.nonmated_pairs_per_subject,
            pairing_seed=cfg.eval.pairing_seed,
        )

    artifacts = reporting.EvalArtifacts(
        manifest_hash=source_hash(cfg.path(run_dir, "manifest")),
        counts={
            "mated_scores": len(scores.mated),
            "nonmated_scores": len(scores.nonmated),
            "skipped_subjects": scores.skipped_subjects,
            "pairing_shortfall": scores.shortfall,
        },
    )
    if scores.nonmated and not scores.mated:
        log.warning("no mated scores; thresholds computed, FNMR omitted")
    if scores.nonmated:
        t = evaluation.threshold_at_fmr(scores.nonmated, cfg.eval.target_fmr)
        artifacts.thresholds[f"fmr_{cfg.eval.target_fmr:g}"] = t
        artifacts.fmr = evaluation.fmr_at(scores.nonmated, t)
        if scores.mated:
            artifacts.fnmr = evaluation.fnmr_at(scores.mated, t)
    else:
        log.warning("no non-mated scores (single subject?); skipping threshold analysis")

    for name, values in (("mated", scores.mated), ("nonmated", scores.nonmated)):
        if len(values) >= 2 and float(np.std(values, ddof=1)) > 0.0:
            artifacts.density_curves[name] = evaluation.kde(
                values, grid_points=cfg.eval.kde_grid_points
            )

    methods = sorted({m for r in accepted if r.quality for m in r.quality})
    for method in methods:
        for kind in (KIND_BASE, KIND_MATED):
            values = [
                r.quality[method]
                for r in accepted
                if r.kind == kind and r.quality and method in r.quality
            ]
            if len(values) >= 2 and float(np.std(values, ddof=1)) > 0.0:
                artifacts.density_curves[f"quality_{method}_{kind}"] = evaluation.kde(
                    values, grid_points=cfg.eval.kde_grid_points
                )

    score_names = [n for n in ("mated", "nonmated") if n in artifacts.density_curves]
    if len(score_names) >= 2:
        artifacts.kl_scores = _kl_matrix(artifacts, score_names)
    quality_names = sorted(n for n in artifacts.density_curves if n.startswith("quality_"))
    if len(quality_names) >= 2:
        artifacts.kl_quality = _kl_matrix(artifacts, quality_names)

    if artifacts.thresholds and scores.mated:
        t = next(iter(artifacts.thresholds.values()))
        by_record_id = {r.id: r for r in accepted}
        base_quality = {
            r.id: r.quality for r in accepted if r.kind == KIND_BASE and r.quality
        }
        for method in methods:
            pairs = []
            for record_id, score in zip(scores.mated_ids, scores.mated):
                record = by_record_id[record_id]
                bq = base_quality.get(record.subject_id) or {}
                if record.quality and method in record.quality and method in bq:
                    pairs.append(
                        (
                            evaluation.paired_quality(bq[method], record.quality[method]),
                            score,
                        )
                    )
            if pairs:
                artifacts.edc_curves[method] = evaluation.edc_curve(
                    pairs, t, cfg.eval.edc_fractions
                )

    written = reporting.emit_report(artifacts, cfg.path(run_dir, "eval_dir"))
    log.info("evaluation bundle: %d files in %s", len(written), cfg.path(run_dir, "eval_dir"))


def cmd_report(cfg: RunConfig, run_dir: Path) -> None:
    header, records = _read_run_manifest(cfg, run_dir)
    if any(r.verdict is None for r in records):
        raise DependencyError("manifest carries unfiltered records; run `latentwalk filter`")
    walk_stats_path = _require(cfg.path(run_dir, "walk_stats"), "walk")
    walk_stats = json.loads(walk_stats_path.read_text(encoding="utf-8"))
    eval_dir = cfg.path(run_dir, "eval_dir")
    summary_path = eval_dir / reporting.SUMMARY_NAME
    _require(summary_path, "eval")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    if summary.get("manifest_hash") != source_hash(cfg.path(run_dir, "manifest")):
        raise DependencyError("eval bundle is stale; rerun `latentwalk eval`")

    counts = reporting.stage_counts_from_manifest(records, walk_stats)
    report_dir = cfg.path(run_dir, "report_dir")
    reporting.write_stage_counts(counts, report_dir)
    artifacts = _artifacts_from_bundle(eval_dir, summary)
    figures = reporting.render_figures(artifacts, report_dir / "figures")
    print(counts.format_table())
    log.info("report: %d figures in %s", len(figures), report_dir / "figures")


def _artifacts_from_bundle(eval_dir: Path, summary: dict) -> reporting.EvalArtifacts:
    """Rebuild curve objects from the delimited eval bundle for rendering."""
    artifacts = reporting.EvalArtifacts(thresholds=dict(summary.get("thresholds") or {}))
    for path in sorted(eval_dir.glob("density_*.csv")):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        grid = np.array([float(r["grid"]) for r in rows])
        density = np.array([float(r["density"]) for r in rows])
        name = path.stem[len("density_") :]
        artifacts.density_curves[name] = evaluation.DensityCurve(
            grid=grid, density=density, bandwidth=1.0
        )
    for path in sorted(eval_dir.glob("edc_*.csv")):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        name = path.stem[len("edc_") :]
        threshold = (summary.get("edc") or {}).get(name, {}).get("threshold_used", 0.0)
        artifacts.edc_curves[name] = evaluation.EDCCurve(
            discard_fractions=tuple(float(r["fraction"]) for r in rows),
            fnmr=tuple(float(r["fnmr"]) for r in rows),
            threshold_used=threshold,
        )
    return artifacts


COMMANDS = {
    "generate": cmd_generate,
    "pca": cmd_pca,
    "walk": cmd_walk,
    "filter": cmd_filter,
    "eval": cmd_eval,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentwalk",
        description="Synthetic mated-sample pipeline over a run directory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} stage")
        cmd.add_argument("--config", required=True, help="run config (.toml or .json)")
        cmd.add_argument("--run-dir", required=True, help="run directory for stage outputs")
        cmd.add_argument(
            "--backend",
            choices=("toy", "external"),
            default=None,
            help="override the configured backend kind",
        )
        cmd.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_run_config(args.config, backend_override=args.backend)
        log.info("effective config: %s", json.dumps(cfg.echo(), sort_keys=True))
        COMMANDS[args.command](cfg, Path(args.run_dir))
        return EXIT_OK
    except (ConfigError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DependencyError as exc:
        log.error("dependency error: %s", exc)
        return EXIT_DEPENDENCY
    except BackendError as exc:
        log.error("backend error: %s", exc)
        return EXIT_BACKEND
    except (DataError, StoreError, LatentWalkError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
