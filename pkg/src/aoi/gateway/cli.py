"""Command-line entry points: batch inspection, fixture generation,
metrics evaluation, and the REST service."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from ..core import Verdict, parse_profile, result_to_dict
from ..imaging import decode_png
from ..pipeline import InspectionEngine, LocalStore
from .fixtures import FixtureSpec, generate_fixtures
from .service import GatewayConfig, serve as run_server


@click.group()
def main():
    """Automated optical inspection toolkit."""


@main.command()
@click.option("--profile-dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory holding profile.json and golden/{view}.png.")
@click.option("--images-dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="One subdirectory per unit, containing {view}.png files.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Working directory for artifacts and result documents.")
@click.option("--fixture-root", type=click.Path(exists=True, file_okay=False),
              default=None, help="Fixture directory for the inference backend.")
def inspect(profile_dir, images_dir, out_dir, fixture_root):
    """Inspect every unit found under IMAGES-DIR against one profile.

    Exit status: 0 when all units PASS, 1 when any unit does not, 2 on error.
    """
    try:
        profile_dir = Path(profile_dir)
        profile = parse_profile((profile_dir / "profile.json").read_text())
        store = LocalStore(out_dir)
        engine = InspectionEngine(store, default_fixture_root=fixture_root)
        for view in profile.views:
            golden = (profile_dir / "golden" / f"{view}.png").read_bytes()
            key = f"profiles/{profile.id}/golden/{view}.png"
            store.put(key, golden)
            profile.golden_images[view] = key
        engine.save_profile(profile)

        unit_dirs = sorted(d for d in Path(images_dir).iterdir() if d.is_dir())
        if not unit_dirs:
            raise click.ClickException(f"no unit directories in {images_dir}")
        any_fail = False
        for unit in unit_dirs:
            images = {view: decode_png((unit / f"{view}.png").read_bytes())
                      for view in profile.views}
            result = engine.run_inspection(unit.name, images, profile)
            if result.overall != Verdict.PASS:
                any_fail = True
            flagged = ", ".join(f"{v.task_id}={v.verdict.value}"
                                for v in result.verdicts
                                if v.verdict != Verdict.PASS)
            click.echo(f"{unit.name}: {result.overall.value} "
                       f"(result {result.result_id})"
                       + (f" [{flagged}]" if flagged else ""))
            doc_path = Path(out_dir) / "verdicts" / f"{unit.name}.json"
            doc_path.parent.mkdir(parents=True, exist_ok=True)
            doc_path.write_text(json.dumps(result_to_dict(result), indent=2))
        sys.exit(1 if any_fail else 0)
    except click.ClickException:
        raise
    except Exception as e:  # any operational failure is exit code 2
        click.echo(f"error: {e}", err=True)
        sys.exit(2)


@main.command("generate-fixtures")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--alignment-trials", default=100, show_default=True, type=int)
@click.option("--seating-crops", default=160, show_default=True, type=int)
def generate_fixtures_cmd(out_dir, seed, alignment_trials, seating_crops):
    """Write a deterministic synthetic fixture tree (same seed, same bytes)."""
    spec = FixtureSpec(alignment_trials=alignment_trials,
                       seating_crops=seating_crops)
    manifest = generate_fixtures(out_dir, spec, seed=seed)
    click.echo(f"wrote fixtures for {len(manifest)} sections to {out_dir}")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Fixture manifest holding ground-truth verdicts.")
@click.option("--results", "results_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON object mapping item id to predicted verdict.")
@click.option("--section", default="seating", show_default=True,
              help="Manifest section whose items carry the truth labels.")
def evaluate(manifest, results_path, section):
    """Join predicted verdicts against fixture truth and print metrics."""
    from ..decision import compute_metrics

    doc = json.loads(Path(manifest).read_text())
    preds = json.loads(Path(results_path).read_text())
    items = doc.get(section)
    if not isinstance(items, list):
        raise click.ClickException(f"manifest has no item list {section!r}")
    truth = {item["id"]: item["truth"] for item in items}
    missing = sorted(set(truth) ^ set(preds))
    if missing:
        raise click.ClickException(
            f"result ids do not match manifest ids; first mismatches: {missing[:5]}")
    pairs = [(Verdict(preds[i]), Verdict(truth[i])) for i in sorted(truth)]
    report = compute_metrics(pairs)
    total = report.tp + report.fp + report.fn + report.tn
    click.echo(f"{'metric':<12}value")
    click.echo(f"{'f1':<12}{report.f1:.4f}")
    click.echo(f"{'accuracy':<12}{(report.tp + report.tn) / total:.4f}")
    click.echo(f"{'precision':<12}{report.precision:.4f}")
    click.echo(f"{'recall':<12}{report.recall:.4f}")
    click.echo(f"{'tp/fp/fn/tn':<12}{report.tp}/{report.fp}/{report.fn}/{report.tn}")


@main.command()
@click.option("--store-root", required=True, type=click.Path(file_okay=False))
@click.option("--index-path", default=":memory:", show_default=True)
@click.option("--fixture-root", type=click.Path(exists=True, file_okay=False),
              default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--token", default=None, help="Require this bearer token.")
@click.option("--collation-window", default=5.0, show_default=True, type=float)
@click.option("--retrain-batch-size", default=1, show_default=True, type=int)
def serve(store_root, index_path, fixture_root, host, port, token,
          collation_window, retrain_batch_size):
    """Run the REST gateway with the background training scheduler."""
    config = GatewayConfig(store_root=store_root, index_path=index_path,
                           fixture_root=fixture_root, token=token,
                           collation_window_s=collation_window,
                           retrain_batch_size=retrain_batch_size)
    run_server(config, host=host, port=port)


if __name__ == "__main__":
    main()
