"""Command-line client for the pipeline service.

Every subcommand is a thin wrapper that POSTs to the HTTP service: by
default an in-process instance of the app (no socket), or a remote
--server / EEGPIPE_SERVER URL. Data paths always name locations on the
serving side; --config/--spec files are read locally and sent inline.

Exit codes: 0 success, 1 usage errors, 2 data errors, 3 numeric errors.
"""

from __future__ import annotations

import asyncio
import json

import click
import httpx

from . import service
from .errors import ConfigError, DataError, EegPipeError, NumericError
from .pipeline import load_config_file

_ERROR_BY_KIND = {"usage": ConfigError, "data": DataError, "numeric": NumericError}


class ServiceClient:
    """Sends one request per CLI invocation, in-process unless server is set."""

    def __init__(self, server: str | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.server = server
        self._transport = transport

    def call(self, method: str, path: str, payload: dict | None = None) -> dict:
        if self.server is None:
            return asyncio.run(self._call_in_process(method, path, payload))
        with httpx.Client(base_url=self.server, transport=self._transport,
                          timeout=3600.0) as client:
            return self._handle(client.request(method, path, json=payload))

    async def _call_in_process(self, method: str, path: str,
                               payload: dict | None) -> dict:
        transport = httpx.ASGITransport(app=service.app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://eegpipe.internal", timeout=3600.0
        ) as client:
            return self._handle(await client.request(method, path, json=payload))

    @staticmethod
    def _handle(response: httpx.Response) -> dict:
        if response.status_code < 400:
            return response.json()
        try:
            err = response.json()["error"]
            kind = err["kind"]
            message = err["message"]
        except (ValueError, KeyError, TypeError):
            raise DataError(
                f"server error {response.status_code}: {response.text[:200]}"
            ) from None
        raise _ERROR_BY_KIND.get(kind, EegPipeError)(message)


def _echo_json(doc: dict) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


def _load_optional(path: str | None) -> dict:
    return load_config_file(path) if path else {}


@click.group(context_settings={
    "auto_envvar_prefix": "EEGPIPE",
    "help_option_names": ["-h", "--help"],
})
@click.option("--server", envvar="EEGPIPE_SERVER", default=None, metavar="URL",
              help="Remote service URL; omitted runs the service in-process.")
@click.pass_context
def cli(ctx, server):
    """Seizure detection pipeline: synthesis, features, training, scoring."""
    ctx.obj = ServiceClient(server)


@cli.command()
@click.option("--config", "config_path", metavar="FILE",
              help="Synthesis config (key=value or JSON).")
@click.option("--out", "out_dir", required=True, metavar="DIR")
@click.pass_obj
def synth(client: ServiceClient, config_path, out_dir):
    """Generate synthetic EEG recordings plus annotation CSVs."""
    _echo_json(client.call("POST", "/synth", {
        "config": _load_optional(config_path), "out_dir": out_dir,
    }))


@cli.command()
@click.option("--montage", default="tcp", show_default=True, metavar="NAME|FILE")
@click.option("--preset", default="ch22", show_default=True, metavar="NAME")
@click.option("--in", "in_dir", required=True, metavar="DIR")
@click.option("--out", "out_dir", required=True, metavar="DIR")
@click.pass_obj
def features(client: ServiceClient, montage, preset, in_dir, out_dir):
    """Extract per-channel feature tensors from EDF recordings."""
    _echo_json(client.call("POST", "/features", {
        "in_dir": in_dir, "out_dir": out_dir,
        "montage": montage, "preset": preset,
    }))


@cli.command()
@click.option("--spec", "spec_path", metavar="FILE",
              help="Network plus training config (key=value or JSON).")
@click.option("--features", "features_dir", required=True, metavar="DIR")
@click.option("--labels", "labels_dir", required=True, metavar="DIR")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int,
              help="Gradient workers; results do not depend on this.")
@click.option("--out", "out_path", required=True, metavar="FILE")
@click.pass_obj
def train(client: ServiceClient, spec_path, features_dir, labels_dir, seed,
          workers, out_path):
    """Train the detector; writes checkpoint plus loss curve CSV."""
    _echo_json(client.call("POST", "/train", {
        "features_dir": features_dir, "labels_dir": labels_dir,
        "out_path": out_path, "spec": _load_optional(spec_path),
        "seed": seed, "workers": workers,
    }))


@cli.command()
@click.option("--ckpt", required=True, metavar="FILE")
@click.option("--features", "features_dir", required=True, metavar="DIR")
@click.option("--spec", "spec_path", metavar="FILE",
              help="Optional cross-check against the checkpoint's spec.")
@click.option("--segment-len", default=60, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, metavar="DIR")
@click.pass_obj
def infer(client: ServiceClient, ckpt, features_dir, spec_path, segment_len,
          out_dir):
    """Run a trained detector over feature tensors; writes posterior CSVs."""
    spec = load_config_file(spec_path) if spec_path else None
    _echo_json(client.call("POST", "/infer", {
        "ckpt": ckpt, "features_dir": features_dir, "out_dir": out_dir,
        "spec": spec, "segment_len": segment_len,
    }))


@cli.command()
@click.option("--ref", "ref_dir", required=True, metavar="DIR")
@click.option("--hyp", "hyp_dir", required=True, metavar="DIR")
@click.option("--out", "out_dir", metavar="DIR",
              help="Also write report.json and a manifest here.")
@click.option("--roc", "roc_path", metavar="FILE",
              help="Write a ROC sweep CSV (plus SVG) to this path.")
@click.option("--roc-points", default=101, show_default=True, type=int)
@click.option("--config", "config_path", metavar="FILE",
              help="Postprocessing config (threshold, smoothing, ...).")
@click.pass_obj
def score(client: ServiceClient, ref_dir, hyp_dir, out_dir, roc_path,
          roc_points, config_path):
    """Score hypotheses (posterior or event CSVs) against references."""
    _echo_json(client.call("POST", "/score", {
        "ref_dir": ref_dir, "hyp_dir": hyp_dir, "out_dir": out_dir,
        "roc_path": roc_path, "roc_points": roc_points,
        "postprocess": _load_optional(config_path),
    }))


@cli.command()
@click.option("--presets", required=True, metavar="LIST",
              help="Comma-separated channel presets, e.g. ch22,ch8,ch4.")
@click.option("--train", "train_dir", required=True, metavar="DIR")
@click.option("--test", "test_dir", required=True, metavar="DIR")
@click.option("--montage", default="tcp", show_default=True, metavar="NAME|FILE")
@click.option("--spec", "spec_path", metavar="FILE")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--config", "config_path", metavar="FILE",
              help="Postprocessing config applied when scoring.")
@click.option("--out", "out_dir", required=True, metavar="DIR")
@click.pass_obj
def grid(client: ServiceClient, presets, train_dir, test_dir, montage,
         spec_path, seed, workers, config_path, out_dir):
    """Train and score one detector per preset; writes summary.csv."""
    names = [p.strip() for p in presets.split(",") if p.strip()]
    _echo_json(client.call("POST", "/grid", {
        "presets": names, "train_dir": train_dir, "test_dir": test_dir,
        "out_dir": out_dir, "montage": montage,
        "spec": _load_optional(spec_path), "seed": seed, "workers": workers,
        "postprocess": _load_optional(config_path),
    }))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(service.app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 130
    except EegPipeError as exc:
        click.echo(f"{exc.kind} error: {exc}", err=True)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
