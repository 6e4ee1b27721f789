"""Command-line client for the retrieval pipeline service.

The CLI builds HTTP requests against the FastAPI service. By default it
runs the service in-process (no server needed); pass ``--server URL`` to
target a running instance started with ``rankfuse serve``. Exit codes:
0 success, 2 usage error, 3 data error (invalid or corrupt content),
4 I/O error.

Training defaults follow the reference experimental setup: 50 epochs,
Adam with learning rate 1e-4, batch size 64, margin 0.2, relevance
threshold 0.15, augmentation on every sample, and a 25% training subset.
"""

from __future__ import annotations

import click
import httpx

from . import __version__
from .metrics import REPORT_FIELDS

TRIPLET_FLAG_DEFAULTS = {
    "margin": 0.2,
    "relevance_threshold": 0.15,
    "mining": "hardest",
    "augment_probability": 1.0,
    "partner_threshold": 0.15,
    "mix_low": 0.5,
    "mix_high": 1.0,
}
NDCG_FLAG_DEFAULTS = {
    "temperature": 1.0,
    "sinkhorn_iters": 30,
    "sinkhorn_eps": 1e-6,
    "ndcg_cutoff": None,
    "gain_base": 2.0,
}


class DataCliError(click.ClickException):
    exit_code = 3


class IoCliError(click.ClickException):
    exit_code = 4


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # In-process default: drive the ASGI app through the synchronous
    # starlette bridge so no separate server is required.
    import warnings

    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*httpx2.*")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _post(server: str | None, path: str, payload: dict) -> dict:
    try:
        with _client(server) as client:
            response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise click.ClickException(f"could not reach service: {exc}") from exc
    if response.status_code == 200:
        return response.json()
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = None
    if response.status_code == 422:
        raise click.UsageError(f"invalid request: {detail}")
    if isinstance(detail, dict) and "message" in detail:
        kind = detail.get("kind")
        if kind == "data":
            raise DataCliError(detail["message"])
        if kind == "io":
            raise IoCliError(detail["message"])
    raise click.ClickException(f"service error {response.status_code}: {response.text}")


def _echo_metrics(metrics: dict) -> None:
    for name in REPORT_FIELDS:
        click.echo(f"{name} = {metrics[name]!r}")


@click.group()
@click.version_option(version=__version__, prog_name="rankfuse")
@click.option(
    "--server",
    default=None,
    metavar="URL",
    help="Base URL of a running rankfuse service; default runs in-process.",
)
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Rank-aware cross-modal retrieval: generate, train, evaluate, ensemble."""
    ctx.obj = server


@main.command("gen")
@click.option("--out-dir", required=True, type=click.Path(), help="Directory for the dataset files.")
@click.option("--n-items", default=400, show_default=True, help="Number of paired items.")
@click.option("--verb-classes", default=10, show_default=True, help="Number of verb classes.")
@click.option("--noun-classes", default=30, show_default=True, help="Number of noun classes.")
@click.option("--nouns-per-caption", default=3, show_default=True, help="Noun classes per caption.")
@click.option("--clusters", default=8, show_default=True, help="Number of semantic clusters.")
@click.option("--video-dim", default=24, show_default=True, help="Video feature dimension.")
@click.option("--text-dim", default=20, show_default=True, help="Text feature dimension.")
@click.option("--noise-sigma", default=0.05, show_default=True, help="Feature noise level.")
@click.option("--seed", default=0, show_default=True, help="Generator seed.")
@click.pass_obj
def cmd_gen(server, out_dir, n_items, verb_classes, noun_classes, nouns_per_caption, clusters,
            video_dim, text_dim, noise_sigma, seed):
    """Generate a synthetic cluster-structured dataset."""
    result = _post(
        server,
        "/generate",
        {
            "out_dir": out_dir,
            "n_items": n_items,
            "n_verb_classes": verb_classes,
            "n_noun_classes": noun_classes,
            "nouns_per_caption": nouns_per_caption,
            "n_clusters": clusters,
            "video_dim": video_dim,
            "text_dim": text_dim,
            "noise_sigma": noise_sigma,
            "seed": seed,
        },
    )
    click.echo(f"wrote {result['n_items']} items to {result['out_dir']}")
    for name, path in sorted(result["files"].items()):
        click.echo(f"  {name}: {path}")
    click.echo(f"manifest: {result['manifest_path']}")


_FLAG_LABELS = {"temperature": "--tau"}


def _warn_ignored(provided: dict, irrelevant: dict, loss: str) -> None:
    for name, value in provided.items():
        if name in irrelevant and value is not None:
            flag = _FLAG_LABELS.get(name, "--" + name.replace("_", "-"))
            click.echo(f"warning: {flag} has no effect with --loss {loss}; ignoring", err=True)


@main.command("train")
@click.option("--data-dir", required=True, type=click.Path(), help="Dataset directory from `gen`.")
@click.option("--out-dir", required=True, type=click.Path(), help="Directory for checkpoint, history, manifest.")
@click.option("--loss", required=True, type=click.Choice(["augmented-triplet", "neural-ndcg"]),
              help="Training objective.")
@click.option("--epochs", default=50, show_default=True, help="Training epochs.")
@click.option("--learning-rate", default=1e-4, show_default=True, help="Adam learning rate.")
@click.option("--batch-size", default=64, show_default=True, help="Mini-batch size.")
@click.option("--embed-dim", default=32, show_default=True, help="Shared embedding dimension.")
@click.option("--seed", default=0, show_default=True, help="Seed for subset, init, and shuffling.")
@click.option("--subset-fraction", default=0.25, show_default=True,
              help="Fraction of the train split actually used.")
@click.option("--margin", default=None, type=float, show_default="0.2",
              help="Triplet margin (triplet loss only).")
@click.option("--relevance-threshold", default=None, type=float, show_default="0.15",
              help="Relevant/irrelevant threshold (triplet loss only).")
@click.option("--mining", default=None, type=click.Choice(["hardest", "random"]),
              show_default="hardest", help="Negative mining mode (triplet loss only).")
@click.option("--no-relevant-positives", is_flag=True, default=False,
              help="Disable the extra relevant-positive term (triplet loss only).")
@click.option("--augment-probability", default=None, type=float, show_default="1.0",
              help="Chance of augmenting each sample (triplet loss only).")
@click.option("--partner-threshold", default=None, type=float, show_default="0.15",
              help="Minimum partner relevance for augmentation (triplet loss only).")
@click.option("--mix-low", default=None, type=float, show_default="0.5",
              help="Lower bound of the mixing coefficient (triplet loss only).")
@click.option("--mix-high", default=None, type=float, show_default="1.0",
              help="Upper bound of the mixing coefficient (triplet loss only).")
@click.option("--tau", default=None, type=float, show_default="1.0",
              help="Sorting relaxation temperature (ndcg loss only).")
@click.option("--sinkhorn-iters", default=None, type=int, show_default="30",
              help="Maximum rescaling passes (ndcg loss only).")
@click.option("--sinkhorn-eps", default=None, type=float, show_default="1e-06",
              help="Rescaling convergence tolerance (ndcg loss only).")
@click.option("--ndcg-cutoff", default=None, type=int, show_default="full list",
              help="Rank cutoff of the loss (ndcg loss only).")
@click.option("--gain-base", default=None, type=float, show_default="2.0",
              help="Base of the exponential gain (ndcg loss only).")
@click.pass_obj
def cmd_train(server, data_dir, out_dir, loss, epochs, learning_rate, batch_size, embed_dim,
              seed, subset_fraction, margin, relevance_threshold, mining, no_relevant_positives,
              augment_probability, partner_threshold, mix_low, mix_high, tau, sinkhorn_iters,
              sinkhorn_eps, ndcg_cutoff, gain_base):
    """Train one model on a seeded subset of the train split."""
    triplet_flags = {
        "margin": margin,
        "relevance_threshold": relevance_threshold,
        "mining": mining,
        "augment_probability": augment_probability,
        "partner_threshold": partner_threshold,
        "mix_low": mix_low,
        "mix_high": mix_high,
    }
    ndcg_flags = {
        "temperature": tau,
        "sinkhorn_iters": sinkhorn_iters,
        "sinkhorn_eps": sinkhorn_eps,
        "ndcg_cutoff": ndcg_cutoff,
        "gain_base": gain_base,
    }
    if loss == "neural-ndcg":
        _warn_ignored(triplet_flags, TRIPLET_FLAG_DEFAULTS, loss)
        if no_relevant_positives:
            click.echo("warning: --no-relevant-positives has no effect with --loss neural-ndcg; ignoring", err=True)
        triplet_flags = {}
    else:
        _warn_ignored(ndcg_flags, NDCG_FLAG_DEFAULTS, loss)
        ndcg_flags = {}

    payload = {
        "data_dir": data_dir,
        "out_dir": out_dir,
        "loss": loss,
        "epochs": epochs,
        "learning_rate": learning_rate,
        "batch_size": batch_size,
        "embed_dim": embed_dim,
        "seed": seed,
        "subset_fraction": subset_fraction,
        "use_relevant_positives": not no_relevant_positives,
    }
    for source, defaults in ((triplet_flags, TRIPLET_FLAG_DEFAULTS), (ndcg_flags, NDCG_FLAG_DEFAULTS)):
        for name, value in source.items():
            payload[name] = defaults[name] if value is None else value

    result = _post(server, "/train", payload)
    click.echo(f"trained on {result['n_training_ids']} items")
    click.echo(f"checkpoint: {result['checkpoint_path']}")
    click.echo(f"history: {result['history_path']}")
    click.echo(f"manifest: {result['manifest_path']}")
    click.echo(
        f"final epoch {result['final_epoch']}: "
        f"val ndcg_avg = {result['final_val_ndcg_avg']:.4f}, "
        f"val map_avg = {result['final_val_map_avg']:.4f}"
    )


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(), help="Model checkpoint (.rfmd).")
@click.option("--data-dir", required=True, type=click.Path(), help="Dataset directory from `gen`.")
@click.option("--out-dir", required=True, type=click.Path(), help="Directory for matrix, reports, manifest.")
@click.option("--split", default="validation", show_default=True,
              type=click.Choice(["train", "validation", "test"]), help="Dataset split to score.")
@click.pass_obj
def cmd_eval(server, checkpoint, data_dir, out_dir, split):
    """Encode a split and report nDCG/mAP in both directions."""
    result = _post(
        server,
        "/evaluate",
        {"checkpoint_path": checkpoint, "data_dir": data_dir, "out_dir": out_dir, "split": split},
    )
    _echo_metrics(result["metrics"])
    click.echo(f"similarity: {result['similarity_path']}")
    click.echo(f"report: {result['report_text_path']}")
    click.echo(f"manifest: {result['manifest_path']}")


@main.command("ensemble")
@click.argument("matrices", nargs=-1, required=True, type=click.Path())
@click.option("--annotations", required=True, type=click.Path(),
              help="Annotation file supplying the relevance ground truth.")
@click.option("--out-dir", required=True, type=click.Path(), help="Directory for the fused matrix and reports.")
@click.pass_obj
def cmd_ensemble(server, matrices, annotations, out_dir):
    """Average similarity matrices and evaluate the fused matrix."""
    result = _post(
        server,
        "/ensemble",
        {"matrix_paths": list(matrices), "annotations_path": annotations, "out_dir": out_dir},
    )
    _echo_metrics(result["metrics"])
    click.echo(f"ensemble matrix: {result['matrix_path']}")
    click.echo(f"report: {result['report_text_path']}")
    click.echo(f"manifest: {result['manifest_path']}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--port", default=8000, show_default=True, help="Bind port.")
def cmd_serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
