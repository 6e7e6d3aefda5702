"""Thin HTTP client over the dmind3 service.

Every subcommand calls the service API; with --server it targets a running
instance, otherwise the app is mounted in-process through an ASGI transport
so the same request/response path runs without a daemon. File arguments
also accept ``builtin:<name>`` (see ``dmind3 scenarios``).
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import click
import httpx

from .data import builtin_names, load_builtin


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=300.0)
    # No server given: mount the app in-process. TestClient is a sync
    # httpx.Client over an ASGI portal, so the full HTTP path still runs.
    import warnings

    from .service.app import create_app
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient
        return TestClient(create_app(), base_url="http://dmind3.local")


def _load_doc(ref: str) -> dict:
    if ref.startswith("builtin:"):
        return load_builtin(ref.removeprefix("builtin:"))
    return json.loads(Path(ref).read_text())


def _load_corpus_models(ref: str) -> list[dict]:
    text = Path(ref).read_text()
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _post(ctx: click.Context, path: str, body: dict) -> dict:
    with _client(ctx.obj["server"]) as client:
        response = client.post(path, json=body)
    if response.status_code != 200:
        raise click.ClickException(f"{path} -> {response.status_code}: {response.text}")
    return response.json()


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; default runs the app in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Transaction decision stack: decide, replay, audit, benchmark."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--tx", "tx_ref", required=True, help="Transaction JSON file.")
@click.option("--policy", "policy_ref", default="builtin:policy:default", show_default=True)
@click.option("--network", "network_ref", default="builtin:network:reference", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def decide(ctx: click.Context, tx_ref: str, policy_ref: str, network_ref: str, seed: int) -> None:
    """Decide one transaction; exit code 0=Allow, 2=Block, 3=StepUp-pending."""
    body = {
        "transaction": _load_doc(tx_ref),
        "policy": _load_doc(policy_ref),
        "network": _load_doc(network_ref),
        "seed": seed,
    }
    result = _post(ctx, "/decide", body)
    click.echo(json.dumps(result["outcome"], indent=2, sort_keys=True))
    sys.exit(result["exit_code"])


@main.command("gen-corpus")
@click.option("--spec", "spec_ref", required=True,
              help="Corpus spec JSON file or builtin:corpus:<name>.")
@click.option("--out", required=True, help="Output JSONL path.")
@click.pass_context
def gen_corpus(ctx: click.Context, spec_ref: str, out: str) -> None:
    """Generate a labeled corpus, one JSON object per line."""
    result = _post(ctx, "/corpus/generate", {"spec": _load_doc(spec_ref)})
    with open(out, "w") as fh:
        for item in result["items"]:
            fh.write(json.dumps(item, sort_keys=True) + "\n")
    click.echo(f"wrote {result['count']} items to {out}")


@main.command()
@click.option("--corpus", "corpus_ref", required=True, help="Corpus JSONL path.")
@click.option("--policy", "policy_ref", default="builtin:policy:default", show_default=True)
@click.option("--network", "network_ref", default="builtin:network:reference", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", default=None, help="Write the report JSON here.")
@click.option("--csv", "csv_out", default=None, help="Also write rate/latency rows as CSV.")
@click.pass_context
def replay(ctx: click.Context, corpus_ref: str, policy_ref: str, network_ref: str,
           seed: int, workers: int, out: str | None, csv_out: str | None) -> None:
    """Replay a corpus through the full pipeline and report metrics."""
    body = {
        "corpus": _load_corpus_models(corpus_ref),
        "policy": _load_doc(policy_ref),
        "network": _load_doc(network_ref),
        "seed": seed,
        "workers": workers,
    }
    report = _post(ctx, "/replay", body)["report"]
    _emit(report, out)
    if csv_out:
        Path(csv_out).write_text(_report_csv(report))
        click.echo(f"wrote {csv_out}")


def _report_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["metric", "value"])
    for key in ("total", "unsafe_allow_rate", "conservative_block_rate", "stepup_rate"):
        writer.writerow([key, report[key]])
    for cell, count in sorted(report["counts"].items()):
        writer.writerow([f"count_{cell}", count])
    for path, row in sorted(report["latency_ms"].items()):
        for q in ("p50", "p95", "p99"):
            writer.writerow([f"latency_{path}_{q}_ms", row[q]])
    return buf.getvalue()


@main.command()
@click.option("--corpus", "corpus_ref", required=True, help="Corpus JSONL path.")
@click.option("--policy", "policy_ref", default="builtin:policy:default", show_default=True)
@click.option("--network", "network_ref", default="builtin:network:reference", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None)
@click.pass_context
def ablation(ctx: click.Context, corpus_ref: str, policy_ref: str, network_ref: str,
             seed: int, out: str | None) -> None:
    """Run the shipped escalation/verifier ablation grid over one corpus."""
    body = {
        "corpus": _load_corpus_models(corpus_ref),
        "policy": _load_doc(policy_ref),
        "network": _load_doc(network_ref),
        "seed": seed,
    }
    _emit(_post(ctx, "/ablation", body), out)


@main.command("audit-privacy")
@click.option("--corpus", "corpus_ref", required=True, help="Corpus JSONL path.")
@click.option("--profile", type=click.Choice(["default", "strict", "user_override"]),
              default="strict", show_default=True)
@click.option("--policy", "policy_ref", default=None,
              help="Full policy document overriding --profile.")
@click.pass_context
def audit_privacy(ctx: click.Context, corpus_ref: str, profile: str,
                  policy_ref: str | None) -> None:
    """Sanitization audit: violation rate and mean sanitized size."""
    body: dict = {"corpus": _load_corpus_models(corpus_ref), "profile": profile}
    if policy_ref:
        body["policy"] = _load_doc(policy_ref)
    _emit(_post(ctx, "/audit-privacy", body), None)


@main.command("bench-latency")
@click.option("--network", "network_ref", default="builtin:network:reference", show_default=True)
@click.option("--samples", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def bench_latency(ctx: click.Context, network_ref: str, samples: int, seed: int) -> None:
    """Per-path latency percentile table for a network scenario."""
    body = {"network": _load_doc(network_ref), "samples": samples, "seed": seed}
    _emit(_post(ctx, "/bench-latency", body), None)


@main.command("eval-loss")
@click.option("--kind", type=click.Choice(["hps", "c3"]), required=True)
@click.option("--input", "input_ref", required=True, help="Instance JSON file.")
@click.pass_context
def eval_loss(ctx: click.Context, kind: str, input_ref: str) -> None:
    """Evaluate one loss instance and print the value."""
    result = _post(ctx, "/eval-loss", {"kind": kind, "instance": _load_doc(input_ref)})
    click.echo(json.dumps(result, sort_keys=True))


@main.command()
@click.option("--out", "out_dir", default=None, help="Export builtin files to a directory.")
def scenarios(out_dir: str | None) -> None:
    """List builtin scenario documents, optionally exporting them."""
    for name in builtin_names():
        click.echo(f"builtin:{name}")
        if out_dir:
            path = Path(out_dir) / (name.replace(":", "_") + ".json")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(load_builtin(name), indent=2) + "\n")
    if out_dir:
        click.echo(f"exported to {out_dir}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("dmind3.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
