"""Batch front door: everything the service does, headless, plus fixture
generation.

Exit codes are a stable contract for CI: 0 success, 2 usage error,
3 data error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .core import Biomarker, EvaluationConfig
from .documents import (
    AnnotationDocument,
    PredictionFile,
    gt_instances_from_document,
    scoreable_instances,
)
from .errors import IhcqError, InvalidInputError
from .evaluation import comparison_rows, evaluate_samples
from .fixtures import generate_disks, generate_fig5
from .scoring import (
    filter_by_confidence,
    her2_quantify,
    nuclear_quantify,
    recommended_tau,
    sweep_threshold,
)
from .store import SlideStore

DATA_ERROR_EXIT = 3


def _data_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except IhcqError as exc:
            click.echo(f"error ({exc.code}): {exc}", err=True)
            sys.exit(DATA_ERROR_EXIT)

    return wrapper


def _load_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InvalidInputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON ({exc})") from None


def _write_json(path: Path, data: dict) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


root_option = click.option(
    "--root",
    envvar="IHCQ_STORE",
    type=click.Path(file_okay=False),
    required=True,
    help="Store directory (env: IHCQ_STORE).",
)


@click.group()
def main():
    """Quantification and evaluation workbench for IHC images."""


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--slide-id", required=True)
@click.option(
    "--biomarker",
    type=click.Choice([b.value for b in Biomarker]),
    required=True,
)
@click.option("--resolution", type=float, default=0.25, show_default=True,
              help="Micrometers per pixel.")
@root_option
@_data_errors
def ingest(image, slide_id, biomarker, resolution, root):
    """Register IMAGE and build its tile pyramid."""
    store = SlideStore(root)
    record, pyramid = store.ingest_image(
        image, slide_id=slide_id, biomarker=Biomarker(biomarker), resolution=resolution
    )
    click.echo(f"{pyramid.level_count} levels, {pyramid.tile_count()} tiles")


def _samples_for(pred_file: PredictionFile, gt_docs: list[AnnotationDocument]):
    gts_by_key = {doc.patch.key(): gt_instances_from_document(doc) for doc in gt_docs}
    pred_key = pred_file.patch.key()
    samples = [
        (list(pred_file.instances) if key == pred_key else [], gts)
        for key, gts in gts_by_key.items()
    ]
    if pred_key not in gts_by_key:
        samples.append((list(pred_file.instances), []))
    return samples


@main.command()
@click.option("--pred", "pred_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Prediction file; repeat to compare models.")
@click.option("--gt", "gt_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Ground-truth annotation document; repeatable.")
@click.option("--iou", "iou_values", multiple=True, type=float,
              help="IoU threshold; repeat for a custom list (default 0.50:0.05:0.95).")
@click.option("--tau", type=float, default=0.0, show_default=True,
              help="Confidence filter applied before ranking.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Report JSON output path.")
@click.option("--pr-csv", type=click.Path(dir_okay=False),
              help="Optional CSV dump of PR points.")
@_data_errors
def evaluate(pred_paths, gt_paths, iou_values, tau, out, pr_csv):
    """Evaluate prediction files against expert annotations."""
    config = EvaluationConfig(
        iou_thresholds=tuple(sorted(set(iou_values))) if iou_values else EvaluationConfig().iou_thresholds,
        tau=tau,
    )
    gt_docs = [AnnotationDocument.from_json(_load_json(p)) for p in gt_paths]
    reports = []
    for pred_path in pred_paths:
        pred_file = PredictionFile.from_json(_load_json(pred_path))
        report = evaluate_samples(
            _samples_for(pred_file, gt_docs),
            config=config,
            model=pred_file.model or Path(pred_path).stem,
        )
        reports.append(report)
        click.echo(report.to_text())

    if len(reports) == 1:
        _write_json(out, reports[0].to_json())
    else:
        _write_json(
            out,
            {"reports": [r.to_json() for r in reports], "comparison": comparison_rows(reports)},
        )
    if pr_csv:
        lines = ["model,class,curve,precision,recall"]
        for report in reports:
            for ce in report.classes:
                for name, curve in ce.pr_curves:
                    lines += [
                        f"{report.model},{ce.cell_class.value},{name},{p},{r}"
                        for p, r in curve.points
                    ]
        Path(pr_csv).write_text("\n".join(lines) + "\n")
    click.echo(f"report written to {out}")


def _load_scoreable(path: Path, tau: float | None):
    """Annotation document or prediction file -> (instances, tau, source)."""
    data = _load_json(path)
    if "instances" in data:
        pred_file = PredictionFile.from_json(data)
        if tau is None:
            tau = recommended_tau(pred_file.model)
        kept = filter_by_confidence(list(pred_file.instances), tau)
        return kept, tau, pred_file.model or "predictions"
    doc = AnnotationDocument.from_json(data)
    if tau is None:
        tau = 0.0
    return scoreable_instances(doc, tau), tau, "annotations"


@main.command()
@click.option("--annotations", "path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Annotation document or prediction file.")
@click.option("--tau", type=float, default=None,
              help="Confidence filter; defaults to the predictor style's recommended value.")
@click.option("--json", "as_json", is_flag=True, help="Emit the full JSON report.")
@_data_errors
def score(path, tau, as_json):
    """Quantify a biomarker over one patch."""
    instances, tau, source = _load_scoreable(Path(path), tau)
    if not instances:
        raise InvalidInputError("no cells pass the confidence filter")
    kind = instances[0].cell_class.stain_kind.value
    if kind == "membrane":
        result = her2_quantify(instances)
        summary = f"HER2 score {result.score}, {result.assessment}"
        if result.boundary_flag:
            summary += " (within 0.5 points of the 10% rule boundary)"
    else:
        result = nuclear_quantify(instances)
        summary = (
            f"{result.percent_positive:.1f}% positive "
            f"({result.positive_count} positive / {result.negative_count} negative)"
        )
    payload = result.to_json()
    payload.update({"tau": tau, "source": source})
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(summary)
        click.echo(f"tau: {tau}, source: {source}, cells: {result.total}")


def _parse_grid(spec: str) -> list[float]:
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise click.UsageError(f"--grid expects start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise click.UsageError("--grid needs step > 0 and stop >= start")
    count = int(round((stop - start) / step))
    grid = [round(start + k * step, 10) for k in range(count + 1) if start + k * step <= stop + 1e-12]
    if not grid:
        raise click.UsageError("--grid produced no values")
    return grid


@main.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--grid", default="0:1:0.05", show_default=True, help="start:stop:step.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV output path.")
@_data_errors
def sweep(pred_path, gt_path, grid, out):
    """Sweep the confidence threshold and report mAP@0.50 per value."""
    values = _parse_grid(grid)
    pred_file = PredictionFile.from_json(_load_json(pred_path))
    doc = AnnotationDocument.from_json(_load_json(gt_path))
    result = sweep_threshold(list(pred_file.instances), gt_instances_from_document(doc), values)
    Path(out).write_text(result.to_csv())
    for tau, value in zip(result.grid, result.map_values):
        click.echo(f"tau={tau:.3f}  mAP@0.50={value:.4f}")
    click.echo(f"best tau: {result.best_tau} (mAP@0.50 = {result.best_map:.4f})")
    click.echo(f"csv written to {out}")


@main.command("gen-fixtures")
@click.option("--kind", type=click.Choice(["disks", "fig5"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@_data_errors
def gen_fixtures(kind, seed, out_dir):
    """Write a deterministic synthetic fixture set."""
    if kind == "disks":
        manifest = generate_disks(out_dir, seed=seed)
    else:
        manifest = generate_fig5(out_dir, seed=seed)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


@main.command()
@root_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(root, host, port):
    """Run the HTTP service against a store directory."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(root), host=host, port=port)


if __name__ == "__main__":
    main()
