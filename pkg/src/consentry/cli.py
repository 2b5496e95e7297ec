"""Command-line surface: serve the gateway or hub, manage rules, run
one-shot decisions against stored state, answer prompts, run simulations.

Exit codes: 0 success, 1 validation problem, 2 I/O problem.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import click

from .model import ActionType, ValidationError, Verdict
from .service import GatewayConfig, GatewayRuntime
from .storage import StorageError, export_rule_set, import_rule_set

EXIT_VALIDATION = 1
EXIT_IO = 2


class CliError(click.ClickException):
    def __init__(self, message: str, exit_code: int) -> None:
        super().__init__(message)
        self.exit_code = exit_code


def _fail_validation(exc: Exception) -> CliError:
    return CliError(str(exc), EXIT_VALIDATION)


def _fail_io(exc: Exception) -> CliError:
    return CliError(str(exc), EXIT_IO)


def _config(ctx: click.Context, require_existing_dir: bool = True) -> GatewayConfig:
    params = ctx.obj
    if params.get("config_file"):
        try:
            config = GatewayConfig.from_file(
                params["config_file"],
                data_dir=params.get("data_dir"),
                hub_url=params.get("hub_url"),
            )
        except (OSError, json.JSONDecodeError) as exc:
            raise _fail_io(exc)
    else:
        config = GatewayConfig(
            data_dir=params.get("data_dir") or Path("./consentry-data"),
            hub_url=params.get("hub_url"),
        )
    if require_existing_dir and not Path(config.data_dir).is_dir():
        raise _fail_io(FileNotFoundError(f"data directory not found: {config.data_dir}"))
    return config


def _runtime(ctx: click.Context, require_existing_dir: bool = True) -> GatewayRuntime:
    config = _config(ctx, require_existing_dir=require_existing_dir)
    try:
        return GatewayRuntime(config)
    except StorageError as exc:
        raise _fail_io(exc)
    except ValidationError as exc:
        raise _fail_validation(exc)


@click.group()
@click.option("--data-dir", type=click.Path(path_type=Path), default=None,
              help="State directory (rules, decision log, prompts).")
@click.option("--hub-url", default=None, help="Community hub base URL.")
@click.option("--config", "config_file", type=click.Path(path_type=Path), default=None,
              help="Gateway config file (JSON).")
@click.pass_context
def main(ctx: click.Context, data_dir: Path | None, hub_url: str | None,
         config_file: Path | None) -> None:
    """Context-aware consent agent for data-operation requests."""
    ctx.obj = {"data_dir": data_dir, "hub_url": hub_url, "config_file": config_file}


# -- serve ---------------------------------------------------------------------

@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8400, type=int)
@click.pass_context
def serve(ctx: click.Context, host: str, port: int) -> None:
    """Run the gateway service (creates the data directory if needed)."""
    from .service import serve as _serve

    config = _config(ctx, require_existing_dir=False)
    Path(config.data_dir).mkdir(parents=True, exist_ok=True)
    _serve(config, host=host, port=port)


@main.group()
def hub() -> None:
    """Community hub commands."""


@hub.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8500, type=int)
@click.option("--data-dir", "hub_data_dir", type=click.Path(path_type=Path), default=None,
              help="Directory for persisted profiles (in-memory if omitted).")
def hub_serve(host: str, port: int, hub_data_dir: Path | None) -> None:
    """Run the community hub service."""
    from .service import serve_hub

    if hub_data_dir is not None:
        hub_data_dir.mkdir(parents=True, exist_ok=True)
    serve_hub(data_dir=hub_data_dir, host=host, port=port)


# -- rules ---------------------------------------------------------------------

@main.group()
def rules() -> None:
    """Inspect and edit the rule set."""


@rules.command("list")
@click.pass_context
def rules_list(ctx: click.Context) -> None:
    runtime = _runtime(ctx)
    rule_set = runtime.agent.rule_set
    if not rule_set.rules:
        click.echo("no rules")
        return
    for rule in rule_set.rules:
        data = rule.data.value if not rule.data.is_wildcard() else "*"
        party = rule.party.value if not rule.party.is_wildcard() else "*"
        context = " [ctx]" if rule.context is not None else ""
        click.echo(
            f"{rule.rule_id}: {rule.verdict.value} {rule.action.value} "
            f"{data} by {party}{context} ({rule.origin.value})"
        )


@rules.command("add")
@click.option("--id", "rule_id", default=None, help="Rule id (generated if omitted).")
@click.option("--verdict", type=click.Choice(["allow", "deny", "prompt"]), required=True)
@click.option("--action", type=click.Choice(["collect", "history", "profile", "transfer", "any"]),
              default="any", show_default=True)
@click.option("--data", "data_value", default=None, help="Exact data category.")
@click.option("--data-group", default=None, help="Data group name.")
@click.option("--party", "party_value", default=None, help="Exact party id.")
@click.option("--party-group", default=None, help="Party group name.")
@click.option("--context-json", default=None, help="Context pattern as JSON.")
@click.pass_context
def rules_add(ctx, rule_id, verdict, action, data_value, data_group,
              party_value, party_group, context_json) -> None:
    """Add one rule; selectors default to wildcards."""
    import uuid

    if data_value and data_group:
        raise _fail_validation(ValueError("--data and --data-group are exclusive"))
    if party_value and party_group:
        raise _fail_validation(ValueError("--party and --party-group are exclusive"))
    runtime = _runtime(ctx)
    payload = {
        "id": rule_id or f"rule-{uuid.uuid4().hex[:12]}",
        "verdict": verdict,
        "action": action,
        "data": {"kind": "exact", "value": data_value} if data_value
        else {"kind": "group", "value": data_group} if data_group
        else {"kind": "any", "value": None},
        "party": {"kind": "exact", "value": party_value} if party_value
        else {"kind": "group", "value": party_group} if party_group
        else {"kind": "any", "value": None},
        "context": json.loads(context_json) if context_json else None,
        "origin": "user",
        "createdAt": runtime.clock().isoformat(),
    }
    from .model import rule_from_dict

    try:
        rule = rule_from_dict(payload)
        runtime.agent.update_rules(lambda rs: rs.add_rule(rule))
    except ValidationError as exc:
        raise _fail_validation(exc)
    click.echo(f"added {rule.rule_id}")


@rules.command("rm")
@click.argument("rule_id")
@click.pass_context
def rules_rm(ctx: click.Context, rule_id: str) -> None:
    runtime = _runtime(ctx)
    try:
        runtime.agent.update_rules(lambda rs: rs.remove_rule(rule_id))
    except ValidationError as exc:
        raise _fail_validation(exc)
    click.echo(f"removed {rule_id}")


@rules.command("export")
@click.argument("target", type=click.Path(path_type=Path), required=False)
@click.pass_context
def rules_export(ctx: click.Context, target: Path | None) -> None:
    """Write the canonical rule-set document to TARGET or stdout."""
    runtime = _runtime(ctx)
    document = export_rule_set(runtime.agent.rule_set)
    if target is None:
        click.echo(document, nl=False)
    else:
        try:
            target.write_text(document, encoding="utf-8")
        except OSError as exc:
            raise _fail_io(exc)
        click.echo(f"exported to {target}")


@rules.command("import")
@click.argument("source", type=click.Path(path_type=Path))
@click.pass_context
def rules_import(ctx: click.Context, source: Path) -> None:
    """Replace the rule set from a document (e.g. the starter pack)."""
    runtime = _runtime(ctx)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as exc:
        raise _fail_io(exc)
    try:
        imported = import_rule_set(text)
        runtime.agent.update_rules(lambda _: imported)
    except (StorageError, ValidationError) as exc:
        raise _fail_validation(exc)
    click.echo(f"imported {len(imported.rules)} rules (revision {imported.revision})")


# -- decide ---------------------------------------------------------------------

@main.command()
@click.argument("party")
@click.argument("action", type=click.Choice(["collect", "history", "profile", "transfer"]))
@click.argument("data")
@click.pass_context
def decide(ctx: click.Context, party: str, action: str, data: str) -> None:
    """One-shot authorization against stored state."""
    import uuid

    from .model import DataCategory, DataOperationRequest, Party

    runtime = _runtime(ctx)
    try:
        request = DataOperationRequest(
            request_id=f"cli-{uuid.uuid4().hex[:12]}",
            party=Party(party),
            action=ActionType(action),
            data=DataCategory(data),
            received_at=runtime.clock(),
        )
    except ValidationError as exc:
        raise _fail_validation(exc)
    runtime.agent.expire_prompts()
    result = runtime.agent.authorize(request)
    if result.prompt_id:
        click.echo(f"pending {result.prompt_id}")
    else:
        click.echo(result.status.value)


# -- prompts ----------------------------------------------------------------------

@main.group()
def prompts() -> None:
    """The prompt inbox."""


@prompts.command("list")
@click.pass_context
def prompts_list(ctx: click.Context) -> None:
    runtime = _runtime(ctx)
    runtime.agent.expire_prompts()
    pending = runtime.agent.pending_prompts()
    if not pending:
        click.echo("no pending prompts")
        return
    for prompt in pending:
        line = (
            f"{prompt.prompt_id}: {prompt.request.party.id} wants to "
            f"{prompt.request.action.value} {prompt.request.data.id}"
        )
        if prompt.attached_hint is not None:
            hint = prompt.attached_hint
            line += (
                f" (hint: {hint.proposed.verdict.value}, {hint.provenance.kind.value},"
                f" support {hint.support}, confidence {hint.confidence:.2f})"
            )
        click.echo(line)


@prompts.command("answer")
@click.argument("prompt_id")
@click.argument("verdict", type=click.Choice(["allow", "deny"]))
@click.option("--remember", is_flag=True, help="Also create a rule for this signature.")
@click.pass_context
def prompts_answer(ctx: click.Context, prompt_id: str, verdict: str, remember: bool) -> None:
    runtime = _runtime(ctx)
    runtime.agent.expire_prompts()
    try:
        record = runtime.agent.answer_prompt(prompt_id, Verdict(verdict), remember)
    except ValidationError as exc:
        raise _fail_validation(exc)
    suffix = " (rule created)" if remember else ""
    click.echo(f"{record.verdict.value}{suffix}")


# -- simulation ---------------------------------------------------------------------

@main.group()
def sim() -> None:
    """Deterministic decision-chain simulations."""


@sim.command("run")
@click.argument("scenario")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("sim-out"),
              show_default=True, help="Report directory (CSV, summary, figures).")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
def sim_run(scenario: str, out_dir: Path, figures: bool, seed: int | None) -> None:
    """Run SCENARIO ('default' or a scenario JSON file) and write a report."""
    from .report import write_report
    from .sim import Scenario, default_scenario, run_scenario

    if scenario == "default":
        spec = default_scenario()
    else:
        path = Path(scenario)
        if not path.exists():
            raise _fail_io(FileNotFoundError(f"scenario file not found: {path}"))
        try:
            spec = Scenario.from_file(path)
        except (json.JSONDecodeError, KeyError) as exc:
            raise _fail_validation(exc)
    if seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=seed)

    started = time.perf_counter()
    try:
        metrics = run_scenario(spec)
    except ValidationError as exc:
        raise _fail_validation(exc)
    elapsed = time.perf_counter() - started

    written = write_report(metrics, out_dir, figures=figures)
    click.echo(metrics.summary(), nl=False)
    click.echo(f"runtime           {elapsed:.2f}s")
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
