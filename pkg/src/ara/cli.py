"""Command-line entry points.

The `session` subcommands are stateless between invocations: each call
replays the session's event log, applies one transition, and appends it to
the log, so a session can be driven from a shell over days without a server.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import model as M
from .discretize import DEFAULT_BINS, DiscretizationResult, discretize_diagram
from .dynamic import Session, open_session, replay_session
from .errors import EngineError
from .export import (
    num9,
    recommendation_document,
    render_tree_dot,
    render_tree_text,
    session_document,
    solution_document,
    tree_document,
    whatif_document,
)
from .infer import expected_utility, posterior_marginal
from .modelio import check_model_text, load_model, model_hash
from .solver import GameSolution, TiePolicy, backward_induct, build_stage_tree


def _tie(tie_eps: float) -> TiePolicy:
    return TiePolicy(relative=tie_eps)


def _parse_evidence(pairs: tuple[str, ...]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        name, sep, state = pair.partition("=")
        if not sep or not name or not state:
            raise click.BadParameter(f"evidence must look like NAME=STATE, got {pair!r}")
        out[name] = state
    return out


def _echo_json(doc) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


@click.group()
def main() -> None:
    """Sequential defend-attack games: validate, solve, query and run them."""


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="machine-readable report")
def validate(path: str, as_json: bool) -> None:
    """Check a model file; exit 1 when it has problems."""
    diagram, problems, warnings = check_model_text(Path(path).read_text(), source=path)
    if as_json:
        doc = {"ok": diagram is not None, "problems": problems, "warnings": warnings}
        if diagram is not None:
            doc["model_hash"] = model_hash(diagram)
        _echo_json(doc)
    else:
        for p in problems:
            click.echo(f"problem: {p}")
        for w in warnings:
            click.echo(f"warning: {w}")
        if diagram is not None:
            click.echo(f"ok: {len(diagram.variables)} variables, hash {model_hash(diagram)[:12]}")
    if diagram is None:
        sys.exit(1)


def _solve_file(
    path: str, bins: int, tie_eps: float, evidence: dict[str, str]
) -> tuple[M.InfluenceDiagram, GameSolution, DiscretizationResult, str]:
    base = load_model(path)
    digest = model_hash(base)
    result = discretize_diagram(base, default_bins=bins)
    # pinned decisions are commitments, not stages left to solve
    stages = tuple(n for n, _ in M.stage_order(result.diagram) if n not in evidence)
    solution = backward_induct(result.diagram, evidence or None, stages, _tie(tie_eps))
    return result.diagram, solution, result, digest


def _print_solution(solution: GameSolution, result: DiscretizationResult, report: bool) -> None:
    if report and result.reports:
        click.echo("discretization:")
        for r in result.reports:
            click.echo(
                f"  {r.name}: {r.n_states} states ({r.n_atoms} atoms), "
                f"clipped mass {num9(r.clipped_mass)}"
            )
    click.echo(f"defender value: {num9(solution.defender_value)}")
    click.echo(f"attacker value: {num9(solution.attacker_value)}")
    for stage in solution.stages:
        given = f" | {', '.join(stage.parents)}" if stage.parents else ""
        click.echo(f"stage {stage.decision} ({stage.owner}{given}), threshold {num9(stage.threshold)}:")
        for entry in stage.entries:
            key = ", ".join(entry.config) if entry.config else "-"
            if not entry.reachable or entry.expected is None:
                click.echo(f"  [{key}] unreachable")
                continue
            scores = ", ".join(f"{o}: {num9(x)}" for o, x in zip(stage.options, entry.expected))
            click.echo(f"  [{key}] -> {'/'.join(entry.maximizers)}  ({scores})")


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--bins", default=DEFAULT_BINS, show_default=True, help="default interval count for continuous nodes")
@click.option("--tie-eps", default=1e-6, show_default=True, help="relative tie tolerance on expected utilities")
@click.option("--evidence", "-e", multiple=True, metavar="NAME=STATE", help="pin a variable before solving")
@click.option("--json", "as_json", is_flag=True, help="emit the solution document")
@click.option("--report", is_flag=True, help="show per-node discretization detail")
def solve(path: str, bins: int, tie_eps: float, evidence: tuple[str, ...], as_json: bool, report: bool) -> None:
    """Solve a game by backward induction and print every stage policy."""
    pinned = _parse_evidence(evidence)
    try:
        _, solution, result, digest = _solve_file(path, bins, tie_eps, pinned)
    except EngineError as exc:
        _fail(exc)
    if as_json:
        _echo_json(solution_document(solution, model_hash=digest, evidence=pinned, bins=bins))
    else:
        _print_solution(solution, result, report)


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--stage", required=True, help="decision stage at the root of the tree")
@click.option("--bins", default=DEFAULT_BINS, show_default=True)
@click.option("--tie-eps", default=1e-6, show_default=True)
@click.option("--evidence", "-e", multiple=True, metavar="NAME=STATE")
@click.option("--format", "form", default="text", type=click.Choice(["text", "dot", "json"]), show_default=True)
def tree(path: str, stage: str, bins: int, tie_eps: float, evidence: tuple[str, ...], form: str) -> None:
    """Render the anticipated play-out tree rooted at one decision stage."""
    pinned = _parse_evidence(evidence)
    try:
        diagram, solution, _, _ = _solve_file(path, bins, tie_eps, pinned)
        node = build_stage_tree(solution.diagram, stage, pinned or None, _tie(tie_eps))
    except EngineError as exc:
        _fail(exc)
    if form == "json":
        _echo_json(tree_document(node))
    elif form == "dot":
        click.echo(render_tree_dot(node), nl=False)
    else:
        click.echo(render_tree_text(node), nl=False)


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--target", required=True, help="variable to query")
@click.option("--bins", default=DEFAULT_BINS, show_default=True)
@click.option("--evidence", "-e", multiple=True, metavar="NAME=STATE")
def query(path: str, target: str, bins: int, evidence: tuple[str, ...]) -> None:
    """Posterior marginal of a chance or decision variable, or a utility's expectation."""
    pinned = _parse_evidence(evidence)
    try:
        base = load_model(path)
        diagram = discretize_diagram(base, default_bins=bins).diagram
        v = diagram.variable(target)
        if v.kind == M.UTILITY:
            click.echo(f"E[{target}] = {num9(expected_utility(diagram, target, pinned or None))}")
            return
        marginal = posterior_marginal(diagram, target, pinned or None)
        for label, p in marginal.items():
            click.echo(f"P({target}={label}) = {num9(p)}")
    except EngineError as exc:
        _fail(exc)


# -- long-running sessions -------------------------------------------------------------


@main.group()
def session() -> None:
    """Open and drive a logged game session from the shell."""


def _load_session(log: str, models: str) -> Session:
    try:
        return replay_session(log, models)
    except EngineError as exc:
        _fail(exc)


def _echo_session(s: Session) -> None:
    _echo_json(session_document(s))


@session.command("open")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--logs", required=True, type=click.Path(file_okay=False), help="directory for the event log")
@click.option("--id", "session_id", default=None, help="session id (defaults to a fresh uuid)")
@click.option("--bins", default=DEFAULT_BINS, show_default=True)
@click.option("--tie-eps", default=1e-6, show_default=True)
def session_open(model_path: str, logs: str, session_id: str | None, bins: int, tie_eps: float) -> None:
    """Start a session; prints its id and log path."""
    try:
        s = open_session(model_path, log_dir=logs, session_id=session_id, bins=bins, tie=_tie(tie_eps))
    except EngineError as exc:
        _fail(exc)
    click.echo(f"session {s.session_id}")
    click.echo(f"log {s.log_path}")


@session.command("show")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@click.option("--models", required=True, type=click.Path(exists=True, file_okay=False))
def session_show(log: str, models: str) -> None:
    """Replay the log and print the session state."""
    _echo_session(_load_session(log, models))


@session.command("commit")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@click.argument("decision")
@click.argument("state")
@click.option("--models", required=True, type=click.Path(exists=True, file_okay=False))
def session_commit(log: str, decision: str, state: str, models: str) -> None:
    """Record the defender's own move at the next stage."""
    s = _load_session(log, models)
    try:
        s.commit(decision, state)
    except EngineError as exc:
        _fail(exc)
    _echo_session(s)


@session.command("observe")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@click.argument("variable")
@click.argument("state")
@click.option("--models", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--consequence", is_flag=True, help="the attack itself stays hidden; only this downstream variable was seen")
def session_observe(log: str, variable: str, state: str, models: str, consequence: bool) -> None:
    """Record what was learned about the attacker's last stage."""
    s = _load_session(log, models)
    try:
        if consequence:
            s.observe_consequence(variable, state)
        else:
            s.observe_attack(variable, state)
    except EngineError as exc:
        _fail(exc)
    _echo_session(s)


@session.command("recommend")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@click.option("--models", required=True, type=click.Path(exists=True, file_okay=False))
def session_recommend(log: str, models: str) -> None:
    """Best action at the next pending stage, with the scores behind it."""
    s = _load_session(log, models)
    try:
        rec = s.recommendation()
    except EngineError as exc:
        _fail(exc)
    _echo_json(recommendation_document(rec))


@session.command("tree")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@click.option("--models", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--stage", default=None, help="pending stage to expand (defaults to the next one)")
@click.option("--format", "form", default="text", type=click.Choice(["text", "dot", "json"]), show_default=True)
def session_tree(log: str, models: str, stage: str | None, form: str) -> None:
    """Anticipated play-out tree from the session's current beliefs."""
    s = _load_session(log, models)
    try:
        node = s.tree(stage)
    except EngineError as exc:
        _fail(exc)
    if form == "json":
        _echo_json(tree_document(node))
    elif form == "dot":
        click.echo(render_tree_dot(node), nl=False)
    else:
        click.echo(render_tree_text(node), nl=False)


@session.command("what-if")
@click.argument("log", type=click.Path(exists=True, dir_okay=False))
@click.argument("assignments", nargs=-1, required=True, metavar="NAME=STATE...")
@click.option("--models", required=True, type=click.Path(exists=True, file_okay=False))
def session_what_if(log: str, assignments: tuple[str, ...], models: str) -> None:
    """Evaluate hypothetical moves at pending stages without recording them."""
    s = _load_session(log, models)
    try:
        result = s.what_if(_parse_evidence(assignments))
    except EngineError as exc:
        _fail(exc)
    _echo_json(whatif_document(result))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", "-p", default=8000, show_default=True, envvar="ARA_PORT")
@click.option("--models-dir", default="models", show_default=True, envvar="ARA_MODELS_DIR", type=click.Path(exists=True, file_okay=False))
@click.option("--logs-dir", default=None, envvar="ARA_LOGS_DIR", type=click.Path(file_okay=False))
@click.option("--ui-dir", default=None, envvar="ARA_UI_DIR", type=click.Path(exists=True, file_okay=False), help="Static console bundle to serve under /ui.")
@click.option("--bins", default=DEFAULT_BINS, show_default=True)
@click.option("--tie-eps", default=1e-6, show_default=True)
def serve(host: str, port: int, models_dir: str, logs_dir: str | None, ui_dir: str | None, bins: int, tie_eps: float) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    app = create_app(models_dir, logs_dir=logs_dir, bins=bins, tie_eps=tie_eps, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
