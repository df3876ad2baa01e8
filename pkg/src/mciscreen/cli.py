"""Command-line interface.

Every subcommand is a thin client over the service operations: with
``--server URL`` (or ``MCISCREEN_SERVER``) requests go over HTTP, otherwise
they run in-process, so no server is needed for local work.
"""

from __future__ import annotations

import click

from .client import ServiceClient, ServiceError
from .service import schemas


def _invoke(server: str | None, method: str, request):
    with ServiceClient(server) as client:
        try:
            return getattr(client, method)(request)
        except ServiceError as e:
            raise click.ClickException(e.detail) from e


@click.group()
@click.option("--server", envvar="MCISCREEN_SERVER", default=None,
              help="Base URL of a running service; omit to run in-process.")
@click.pass_context
def main(ctx, server):
    """Speech-based MCI screening pipeline."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("mciscreen.service.app:app", host=host, port=port)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--patients", default=8, show_default=True, type=int)
@click.option("--recordings", default=2, show_default=True, type=int,
              help="Recordings per patient.")
@click.option("--layers", default=24, show_default=True, type=int)
@click.option("--frames", default=120, show_default=True, type=int)
@click.option("--dims", default=16, show_default=True, type=int)
@click.option("--informative-layer", default=18, show_default=True, type=int)
@click.option("--effect-size", default=2.0, show_default=True, type=float)
@click.option("--fps", default=50.0, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.pass_context
def synth(ctx, out_dir, patients, recordings, layers, frames, dims,
          informative_layer, effect_size, fps, seed):
    """Generate a synthetic labelled feature dataset with a planted signal layer."""
    req = schemas.SynthRequest(out_dir=out_dir, n_patients=patients,
                               recordings_per_patient=recordings, layers=layers,
                               frames=frames, dims=dims, informative_layer=informative_layer,
                               effect_size=effect_size, seed=seed, fps=fps)
    resp = _invoke(ctx.obj["server"], "synth", req)
    click.echo(f"wrote {resp.records} recordings, manifest at {resp.manifest}")


@main.command("validate-features")
@click.option("--manifest", required=True, type=click.Path())
@click.option("--features", "features_dir", default=None, type=click.Path())
@click.pass_context
def validate_features(ctx, manifest, features_dir):
    """Check every feature file referenced by a manifest."""
    req = schemas.ValidateFeaturesRequest(manifest=manifest, features_dir=features_dir)
    resp = _invoke(ctx.obj["server"], "validate_features", req)
    click.echo(f"ok: {resp.records} recordings, {resp.layer_count} layers x "
               f"{resp.feature_dim} dims at {resp.fps:g} fps, {resp.total_frames} frames total")


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--mode", default="speaker", show_default=True,
              type=click.Choice(["speaker", "general"]))
@click.option("--ratio", default=0.2, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(), help="Write the split as JSON.")
@click.pass_context
def split(ctx, manifest, mode, ratio, seed, out):
    """Produce a train/validation split (speaker-grouped or per-recording)."""
    req = schemas.SplitRequest(manifest=manifest, mode=mode, ratio=ratio, seed=seed, out=out)
    resp = _invoke(ctx.obj["server"], "split", req)
    click.echo(f"train: {len(resp.train_recordings)} recordings "
               f"({len(resp.train_patients)} patients)")
    click.echo(f"val:   {len(resp.val_recordings)} recordings "
               f"({len(resp.val_patients)} patients)")
    if out:
        click.echo(f"wrote {out}")


def _train_settings(lr, batch_size, epochs, seed, weight_decay, window, threads):
    return schemas.TrainSettings(learning_rate=lr, batch_size=batch_size, epochs=epochs,
                                 seed=seed, weight_decay=weight_decay,
                                 window_seconds=window, threads=threads)


_train_options = [
    click.option("--lr", default=3e-5, show_default=True, type=float),
    click.option("--batch-size", default=4, show_default=True, type=int),
    click.option("--epochs", default=15, show_default=True, type=int),
    click.option("--seed", default=0, show_default=True, type=int),
    click.option("--weight-decay", default=0.01, show_default=True, type=float),
    click.option("--window", default=30.0, show_default=True, type=float,
                 help="Segment length in seconds."),
    click.option("--threads", default=1, show_default=True, type=int),
    click.option("--hidden", default=256, show_default=True, type=int),
    click.option("--lstm-layers", default=5, show_default=True, type=int),
]


def _with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--features", "features_dir", default=None, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--fusion", default="prior", show_default=True,
              type=click.Choice(["prior", "uniform"]))
@click.option("--major-layer", default=18, show_default=True, type=int)
@click.option("--major-weight", default=5.0, show_default=True, type=float)
@click.option("--split-mode", default="speaker", show_default=True,
              type=click.Choice(["speaker", "general"]))
@click.option("--ratio", default=0.2, show_default=True, type=float)
@click.option("--split-seed", default=0, show_default=True, type=int)
@_with_options(_train_options)
@click.pass_context
def train(ctx, manifest, features_dir, out_dir, fusion, major_layer, major_weight,
          split_mode, ratio, split_seed, lr, batch_size, epochs, seed, weight_decay,
          window, threads, hidden, lstm_layers):
    """Train a classifier and write checkpoint, metrics log and layer-weight trace."""
    req = schemas.TrainRequest(
        manifest=manifest, features_dir=features_dir, out_dir=out_dir,
        split_mode=split_mode, split_ratio=ratio, split_seed=split_seed,
        fusion=schemas.FusionSettings(init=fusion, major_layer=major_layer,
                                      major_weight=major_weight),
        arch=schemas.ArchSettings(hidden_size=hidden, num_layers=lstm_layers),
        settings=_train_settings(lr, batch_size, epochs, seed, weight_decay, window, threads))
    resp = _invoke(ctx.obj["server"], "train", req)
    for row in resp.history:
        click.echo(f"epoch {row.epoch:3d}: train acc {row.train.acc:.4f}  "
                   f"val acc {row.val.acc:.4f}")
    click.echo(f"best epoch {resp.best_epoch} (val acc {resp.best_val_acc:.4f})")
    for kind, path in sorted(resp.files.items()):
        click.echo(f"{kind}: {path}")


@main.command("layer-scan")
@click.option("--manifest", required=True, type=click.Path())
@click.option("--features", "features_dir", default=None, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--ratio", default=0.2, show_default=True, type=float)
@click.option("--split-seed", default=0, show_default=True, type=int)
@_with_options(_train_options)
@click.pass_context
def layer_scan(ctx, manifest, features_dir, out, ratio, split_seed, lr, batch_size,
               epochs, seed, weight_decay, window, threads, hidden, lstm_layers):
    """Train one classifier per layer and tabulate validation accuracy."""
    req = schemas.LayerScanRequest(
        manifest=manifest, features_dir=features_dir, out=out,
        split_ratio=ratio, split_seed=split_seed,
        arch=schemas.ArchSettings(hidden_size=hidden, num_layers=lstm_layers),
        settings=_train_settings(lr, batch_size, epochs, seed, weight_decay, window, threads))
    resp = _invoke(ctx.obj["server"], "layer_scan", req)
    click.echo(f"peak: layer {resp.peak_layer} at val acc {resp.peak_acc:.4f}")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--manifest", required=True, type=click.Path())
@click.option("--features", "features_dir", default=None, type=click.Path())
@click.option("--k", default=5, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(), help="Also write the table as CSV.")
@click.option("--weights-out", default=None, type=click.Path(),
              help="Write final layer weights per fold as CSV.")
@click.option("--fusion", default="prior", show_default=True,
              type=click.Choice(["prior", "uniform"]))
@click.option("--major-layer", default=18, show_default=True, type=int)
@click.option("--major-weight", default=5.0, show_default=True, type=float)
@_with_options(_train_options)
@click.pass_context
def cv(ctx, manifest, features_dir, k, out, weights_out, fusion, major_layer,
       major_weight, lr, batch_size, epochs, seed, weight_decay, window, threads,
       hidden, lstm_layers):
    """Speaker-grouped k-fold cross-validation; prints Fold,ACC,Precision,Recall,F1."""
    req = schemas.CvRequest(
        manifest=manifest, features_dir=features_dir, k=k, seed=seed, out=out,
        weights_out=weights_out,
        fusion=schemas.FusionSettings(init=fusion, major_layer=major_layer,
                                      major_weight=major_weight),
        arch=schemas.ArchSettings(hidden_size=hidden, num_layers=lstm_layers),
        settings=_train_settings(lr, batch_size, epochs, seed, weight_decay, window, threads))
    resp = _invoke(ctx.obj["server"], "cv", req)
    click.echo("Fold,ACC,Precision,Recall,F1")
    for row in resp.folds:
        click.echo(f"{row.fold},{row.acc:.6f},{row.precision:.6f},"
                   f"{row.recall:.6f},{row.f1:.6f}")
    for path in (out, weights_out):
        if path:
            click.echo(f"wrote {path}")


@main.command("trace-export")
@click.option("--ckpt", "checkpoint_dir", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--final-only", is_flag=True, help="Export only the last snapshot.")
@click.pass_context
def trace_export(ctx, checkpoint_dir, out, final_only):
    """Export the layer-weight trace of a training run as epoch,layer,weight CSV."""
    req = schemas.TraceExportRequest(checkpoint_dir=checkpoint_dir, out=out,
                                     final_only=final_only)
    resp = _invoke(ctx.obj["server"], "trace_export", req)
    click.echo(f"wrote {resp.epochs} snapshots x {resp.layers} layers to {resp.out}")


@main.command()
@click.option("--ckpt", "checkpoint", required=True, type=click.Path())
@click.option("--manifest", required=True, type=click.Path())
@click.option("--features", "features_dir", default=None, type=click.Path())
@click.option("--logic", default="or", show_default=True,
              type=click.Choice(["or", "ensemble"]))
@click.option("--window", default=30.0, show_default=True, type=float)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def predict(ctx, checkpoint, manifest, features_dir, logic, window, out):
    """Predict recording labels with a trained checkpoint."""
    req = schemas.PredictRequest(checkpoint=checkpoint, manifest=manifest,
                                 features_dir=features_dir, logic=logic,
                                 window_seconds=window, out=out)
    resp = _invoke(ctx.obj["server"], "predict", req)
    mci = sum(1 for row in resp.rows if row.label == "MCI")
    click.echo(f"wrote {len(resp.rows)} predictions to {out} "
               f"({mci} MCI, {len(resp.rows) - mci} NC)")


@main.command()
@click.option("--in", "input_path", required=True, type=click.Path(),
              help="A WAV file or a directory of WAV files.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--copies", default=1, show_default=True, type=int)
@click.option("--pin-identity", is_flag=True,
              help="Pin all ratios to 1 and gains to 0 dB (near-identity output).")
@click.pass_context
def perturb(ctx, input_path, out_dir, seed, copies, pin_identity):
    """Write identity-perturbed copies of audio files."""
    req = schemas.PerturbRequest(input_path=input_path, out_dir=out_dir, seed=seed,
                                 copies=copies, pin_identity=pin_identity)
    resp = _invoke(ctx.obj["server"], "perturb", req)
    for f in resp.files:
        click.echo(f"{f.output}  (formant x{f.formant_ratio:.3f}, "
                   f"pitch x{f.pitch_ratio:.3f}, clipped {f.clipped_samples})")
    click.echo(f"{len(resp.files)} files written to {out_dir}")


if __name__ == "__main__":
    main()
