"""Command-line client for the retrieval service.

Every subcommand goes through the HTTP API: against a remote server when
--server is given, otherwise against an in-process application instance.
Exit codes: 2 usage error (click), 3 input error, 4 runtime failure.
"""

from __future__ import annotations

import json
import sys

import click

EXIT_INPUT_ERROR = 3
EXIT_RUNTIME_ERROR = 4


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


class ServiceClient:
    """Thin HTTP client; in-process ASGI when no server URL is configured."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=3600.0)
        else:
            from fastapi.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app(), raise_server_exceptions=False)

    def call(self, method: str, path: str, payload: dict | None = None) -> dict:
        response = self._client.request(method, path, json=payload)
        if response.status_code >= 400:
            try:
                detail = response.json()["detail"]
                kind = detail.get("kind", "error")
                message = detail.get("message", str(detail))
                category = detail.get("category", "runtime")
            except Exception:
                kind, message, category = "error", response.text, "runtime"
            code = EXIT_INPUT_ERROR if category == "input" else EXIT_RUNTIME_ERROR
            raise CliError(f"{kind}: {message}", code)
        return response.json()


pass_client = click.make_pass_decorator(ServiceClient)


@click.group()
@click.option("--server", default=None, help="Base URL of a running service; in-process if omitted.")
@click.pass_context
def main(ctx, server):
    """Scene-graph based caption-to-image retrieval."""
    ctx.obj = ServiceClient(server)


def _embedding_payload(embeddings, embedding_dim, seed):
    return {"dimension": embedding_dim, "seed": seed, "path": embeddings}


@main.command("make-scenes")
@click.option("--output", required=True, type=click.Path())
@click.option("--num-scenes", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--generator", default="clustered", show_default=True, type=click.Choice(["clustered", "random"]))
@click.option("--base-size", default=6, show_default=True)
@click.option("--variant-fraction", default=0.87, show_default=True)
@pass_client
def make_scenes(client, output, num_scenes, seed, generator, base_size, variant_fraction):
    """Generate a synthetic CLEVR-style scenes file."""
    out = client.call(
        "POST",
        "/scenes/generate",
        {
            "output_path": output,
            "num_scenes": num_scenes,
            "seed": seed,
            "generator": generator,
            "base_size": base_size,
            "variant_fraction": variant_fraction,
        },
    )
    click.echo(f"wrote {out['num_scenes']} scenes to {out['output_path']}")


@main.command("build-index")
@click.option("--scenes", required=True, type=click.Path())
@click.option("--index", required=True, type=click.Path())
@click.option("--embeddings", default=None, type=click.Path(), help="Word-vector file; hashed fallback if omitted.")
@click.option("--embedding-dim", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@pass_client
def build_index(client, scenes, index, embeddings, embedding_dim, seed):
    """Consolidate a scenes file into a catalog index."""
    info = client.call(
        "POST",
        "/catalog/build",
        {
            "scenes_path": scenes,
            "index_path": index,
            "embedding": _embedding_payload(embeddings, embedding_dim, seed),
        },
    )
    click.echo(
        f"indexed {info['num_images']} images: {info['num_nodes']} catalog nodes, "
        f"{info['num_triples']} catalog triples (fingerprint {info['embedding_fingerprint']})"
    )


@main.command("parse-caption")
@click.option("--caption", required=True)
@click.option("--embedding-dim", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@pass_client
def parse_caption(client, caption, embedding_dim, seed):
    """Print the query graph of a caption."""
    graph = client.call(
        "POST",
        "/caption/parse",
        {"caption": caption, "embedding": _embedding_payload(None, embedding_dim, seed)},
    )
    click.echo(json.dumps(graph, indent=2, sort_keys=True))


@main.command("retrieve")
@click.option("--index", required=True, type=click.Path())
@click.option("--caption", required=True)
@click.option("--params", default=None, type=click.Path())
@click.option("--top-k", default=10, show_default=True)
@click.option("--mode", default="dense", show_default=True, type=click.Choice(["dense", "pruned"]))
@click.option("--output", default=None, type=click.Path())
@pass_client
def retrieve(client, index, caption, params, top_k, mode, output):
    """Rank catalog images for a caption."""
    client.call("POST", "/catalog/load", {"index_path": index})
    if params:
        client.call("POST", "/params/load", {"params_path": params})
    out = client.call(
        "POST",
        "/retrieve",
        {"caption": caption, "top_k": top_k, "mode": mode},
    )
    for row in out["results"]:
        click.echo(f"{row['rank']}\t{row['image_id']}\t{row['probability']:.6g}")
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            json.dump(
                {"caption": caption, "mode": mode, "results": out["results"]},
                fh,
                sort_keys=True,
                indent=2,
            )


@main.command("train")
@click.option("--scenes", required=True, type=click.Path())
@click.option("--index", required=True, type=click.Path())
@click.option("--params", "params_out", required=True, type=click.Path(), help="Where to write trained parameters.")
@click.option("--num-examples", default=50, show_default=True)
@click.option("--drop-fraction", default=0.2, show_default=True)
@click.option("--epochs", default=1, show_default=True)
@click.option("--learning-rate", default=0.01, show_default=True)
@click.option("--seed", default=0, show_default=True)
@pass_client
def train(client, scenes, index, params_out, num_examples, drop_fraction, epochs, learning_rate, seed):
    """Train scoring parameters on sampled partial queries."""
    client.call("POST", "/catalog/load", {"index_path": index})
    out = client.call(
        "POST",
        "/train",
        {
            "scenes_path": scenes,
            "num_examples": num_examples,
            "drop_fraction": drop_fraction,
            "epochs": epochs,
            "learning_rate": learning_rate,
            "seed": seed,
            "params_path": params_out,
        },
    )
    for m in out["metrics"]:
        click.echo(
            f"epoch {m['epoch']}: J={m['mean_objective']:.6g} "
            f"reward={m['mean_reward']:.4f} top1={m['top1_accuracy']:.4f}"
        )


@main.command("eval")
@click.option("--scenes", required=True, type=click.Path())
@click.option("--index", required=True, type=click.Path())
@click.option("--params", default=None, type=click.Path())
@click.option("--drop-fractions", default="0,0.2,0.3", show_default=True)
@click.option("--queries-per-fraction", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mode", default="dense", show_default=True, type=click.Choice(["dense", "pruned"]))
@click.option("--threads", default=1, show_default=True)
@click.option("--output", default=None, type=click.Path())
@pass_client
def eval_cmd(client, scenes, index, params, drop_fractions, queries_per_fraction, seed, mode, threads, output):
    """Run the node-drop retrieval experiment."""
    try:
        fractions = [float(tok) for tok in drop_fractions.split(",") if tok.strip()]
    except ValueError:
        raise CliError(f"cannot parse --drop-fractions {drop_fractions!r}", EXIT_INPUT_ERROR)
    client.call("POST", "/catalog/load", {"index_path": index})
    if params:
        client.call("POST", "/params/load", {"params_path": params})
    out = client.call(
        "POST",
        "/eval/node-drop",
        {
            "scenes_path": scenes,
            "drop_fractions": fractions,
            "queries_per_fraction": queries_per_fraction,
            "seed": seed,
            "mode": mode,
            "threads": threads,
            "output_path": output,
        },
    )
    click.echo(out["table"], nl=False)


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the retrieval service with uvicorn."""
    import uvicorn

    uvicorn.run("sgir.service.app:app", host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
