"""Command line interface.

    congait serve [--allow-unverified]
    congait ingest FILE --patient P --session S --cohort {PD,Control} [--date D]
    congait run SESSION
    congait cas RATINGS_FILE [--config CONFIG_FILE]
    congait audit verify
    congait export-audit FROM TO

Configuration comes from --config / CONGAIT_CONFIG (JSON) with CONGAIT_*
environment overrides. Offline commands act as the first admin principal;
`run` acts as the first clinician.
"""

from __future__ import annotations

import json
import sys
from datetime import date
from pathlib import Path

import click

from . import __version__
from .cas import report_to_json
from .contest import Role
from .errors import CongaitError
from .service import AppConfig, Service, load_config
from .store import StoreCorrupt

EXIT_STORE_CORRUPT = 3


def _build_service(config: AppConfig, allow_unverified: bool = False) -> Service:
    try:
        return Service(config, allow_unverified=allow_unverified)
    except StoreCorrupt as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_STORE_CORRUPT)


def _principal(service: Service, role: Role):
    for principal in service.config.principals:
        if principal.role is role:
            return principal
    raise click.ClickException(f"no {role.value} principal configured")


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", envvar="CONGAIT_CONFIG", default=None,
              type=click.Path(), help="Path to the JSON config file.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    ctx.obj = load_config(config_path)


@main.command()
@click.option("--allow-unverified", is_flag=True,
              help="Start even if the audit log fails verification.")
@click.pass_obj
def serve(config: AppConfig, allow_unverified: bool) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .server import create_app

    service = _build_service(config, allow_unverified)
    status = "Ok" if service.startup_verify.ok else (
        f"FAILED at {service.startup_verify.first_bad_index} "
        f"({service.startup_verify.reason}) - continuing unverified")
    click.echo(f"audit verify: {status}")
    model_id = service.model.model_id if service.model else "none"
    click.echo(f"model: {model_id}")
    uvicorn.run(create_app(service), host="127.0.0.1", port=config.port)


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--patient", required=True)
@click.option("--session", required=True)
@click.option("--cohort", required=True,
              type=click.Choice(["PD", "Control"], case_sensitive=False))
@click.option("--date", "session_date", default=None,
              help="Session date (YYYY-MM-DD); defaults to today.")
@click.pass_obj
def ingest(config: AppConfig, file: str, patient: str, session: str,
           cohort: str, session_date: str | None) -> None:
    """Parse and store a VGRF recording."""
    service = _build_service(config)
    principal = _principal(service, Role.ADMIN)
    cohort_value = "PD" if cohort.lower() == "pd" else "Control"
    when = date.fromisoformat(session_date) if session_date else date.today()
    try:
        summary = service.ingest_session(patient, session,
                                         Path(file).read_text("utf-8"),
                                         cohort_value, when, principal)
    except CongaitError as e:
        raise click.ClickException(str(e)) from None
    click.echo(json.dumps(summary, indent=2))


@main.command()
@click.argument("session")
@click.pass_obj
def run(config: AppConfig, session: str) -> None:
    """Predict and explain every window of a session."""
    service = _build_service(config)
    principal = _principal(service, Role.CLINICIAN)
    try:
        result = service.pipeline_run(session, principal)
    except CongaitError as e:
        raise click.ClickException(str(e)) from None
    click.echo(f"session {session}: {len(result['pairs'])} windows "
               f"({result['new_windows']} new) under model {result['model_id'][:12]}")
    for entry in result["pairs"]:
        top = entry["relevance"]["ranking"][0]
        click.echo(f"  window {entry['window_index']}: stage "
                   f"{entry['predicted_stage']:g} "
                   f"(p={max(entry['probabilities']):.3f}, top channel {top}, "
                   f"prediction {entry['prediction_id']})")


@main.command()
@click.argument("ratings_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--config-file", "cas_config", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Criteria config; defaults to the packaged one.")
@click.pass_obj
def cas(config: AppConfig, ratings_file: str, cas_config: str | None) -> None:
    """Compute the contestability score from a ratings file."""
    service = _build_service(config)
    principal = _principal(service, Role.ADMIN)
    ratings_doc = json.loads(Path(ratings_file).read_text("utf-8"))
    ratings = ratings_doc.get("ratings", ratings_doc)
    config_text = Path(cas_config).read_text("utf-8") if cas_config else None
    try:
        report = service.compute_cas_report(ratings, principal,
                                            config_text=config_text)
    except CongaitError as e:
        raise click.ClickException(str(e)) from None
    click.echo(report_to_json(report))
    click.echo(f"total: {report.display_total}")


@main.group()
def audit() -> None:
    """Audit log operations."""


@audit.command("verify")
@click.pass_obj
def audit_verify(config: AppConfig) -> None:
    """Recompute the full hash chain."""
    service = _build_service(config, allow_unverified=True)
    result = service.audit_verify()
    if result.ok:
        click.echo(f"Ok ({len(service.audit)} entries)")
    else:
        click.echo(f"FAILED at index {result.first_bad_index}: {result.reason}")
        sys.exit(1)


@main.command("export-audit")
@click.argument("from_index", type=int)
@click.argument("to_index", type=int)
@click.pass_obj
def export_audit(config: AppConfig, from_index: int, to_index: int) -> None:
    """Print a verifiable slice of the audit log."""
    service = _build_service(config, allow_unverified=True)
    try:
        bundle = service.audit_export(from_index, to_index)
    except CongaitError as e:
        raise click.ClickException(str(e)) from None
    click.echo(json.dumps(bundle, indent=2))


if __name__ == "__main__":
    main()
